#include "symptex/synthetic.hpp"

#include <cstdio>
#include <string>

#include "symptex/rng.hpp"
#include "symptex/utf8.hpp"

namespace symptex {
namespace {

const std::vector<std::string> kSymptomSentences{
    "I absolutely hate myself and everything I do.",
    "I have not slept properly in weeks.",
    "Nothing I do feels worth the effort anymore.",
    "I feel numb most of the day and I cannot explain why.",
    "I cry every night before I fall asleep.",
    "I keep thinking everyone would be better off without me.",
    "I lost all interest in the things I used to love.",
    "I am exhausted even after sleeping twelve hours.",
    "I can barely eat anything these days.",
    "I feel like a complete failure at everything I try.",
    "I am so whiny, so disgustingly insensitive to everyone around me.",
    "My future looks completely hopeless to me.",
    "I can't concentrate on anything for more than a minute.",
    "I blame myself for every single thing that goes wrong.",
    "I get irritated by the smallest things lately.",
    "I don't even get excited about things anymore.",
    "I burnt out and I am still unmotivated and feeling like shit.",
    "Every morning I wish I had not woken up.",
    "I feel guilty all the time, even when I did nothing wrong.",
    "I have no energy to get out of bed.",
};

const std::vector<std::string> kFillerSentences{
    "We went hiking last weekend with some friends.",
    "The new update broke my favourite app again.",
    "Does anyone know a good recipe for lentil soup?",
    "My cat keeps knocking things off the table.",
    "I visited the café Müller downtown yesterday.",
    "The match last night was honestly pretty boring.",
    "I started learning the guitar a month ago.",
    "Traffic was terrible on the way to work.",
    "Just finished reading a really long fantasy novel.",
    "Our team shipped the release on Friday.",
    "The weather here has been strange this spring.",
    "I bought a new pair of running shoes.",
    "My sister is moving to another city next month.",
    "Is it worth upgrading my laptop this year?",
    "We are from Germany.",
    "I liked the movie, and this event was fun.",
    "The library closes early on Sundays.",
    "I tried the new ramen place near the station.",
    "Our neighbour's dog barks at every bicycle.",
    "I need to renew my passport before summer.",
};

Post make_post(const std::string& id, Source source, std::size_t n_symptoms, Rng& rng) {
  const std::size_t n_filler = 1 + static_cast<std::size_t>(rng.below(4));
  std::vector<std::pair<std::string, bool>> sentences;
  for (auto i : rng.sample_indices(kFillerSentences.size(), n_filler))
    sentences.emplace_back(kFillerSentences[i], false);
  for (auto i : rng.sample_indices(kSymptomSentences.size(), n_symptoms))
    sentences.emplace_back(kSymptomSentences[i], true);
  rng.shuffle(sentences);

  Post p;
  p.id = id;
  p.source = source;
  p.gold_label = n_symptoms > 0 ? Label::Positive : Label::Negative;
  for (const auto& [s, symptom] : sentences) {
    if (!p.text.empty()) p.text += ' ';
    if (symptom) {
      const auto start = utf8::length(p.text);
      p.gold_explanations.push_back({s, start, start + utf8::length(s)});
    }
    p.text += s;
  }
  return p;
}

std::vector<Post> make_many(const char* prefix, Source source, std::size_t n,
                            std::size_t max_symptoms, std::uint64_t seed) {
  Rng rng(seed, prefix);
  std::vector<Post> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05zu", prefix, i + 1);
    const std::size_t symptoms = max_symptoms == 0 ? 0 : 1 + static_cast<std::size_t>(rng.below(max_symptoms));
    out.push_back(make_post(id, source, symptoms, rng));
  }
  return out;
}

}  // namespace

SyntheticCorpora make_synthetic_corpora(const SyntheticSizes& sizes, std::uint64_t seed) {
  SyntheticCorpora c;
  c.bdi = make_many("bdi", Source::BdiSen, sizes.bdi, 2, seed);
  c.psysym = make_many("psy", Source::PsySym, sizes.psysym, 1, seed);
  c.controls = make_many("ctl", Source::PsySym, sizes.controls, 0, seed);
  c.external = make_many("dep", Source::DepreSym, sizes.external, 1, seed);
  return c;
}

}  // namespace symptex
