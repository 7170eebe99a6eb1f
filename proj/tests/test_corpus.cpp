#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "symptex/corpus.hpp"
#include "symptex/error.hpp"
#include "symptex/synthetic.hpp"

using namespace symptex;
using symptex::testing::temp_dir;

namespace {

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

std::set<std::string> ids(const std::vector<Post>& v) {
  std::set<std::string> out;
  for (const auto& p : v) out.insert(p.id);
  return out;
}

const SyntheticCorpora& reference_corpora() {
  static const auto c = make_synthetic_corpora({}, 7);
  return c;
}

}  // namespace

TEST_CASE("load_dataset keeps file order") {
  const auto dir = temp_dir("corpus");
  write_lines(dir / "d.jsonl",
              {R"({"id":"a","text":"I feel numb today","label":"positive","explanations":[{"text":"I feel numb","start":0,"end":11}]})",
               R"({"id":"b","text":"Nice weather","label":"negative","explanations":[]})"});
  const auto posts = load_dataset(dir / "d.jsonl", Source::BdiSen);
  REQUIRE(posts.size() == 2);
  CHECK(posts[0].id == "a");
  CHECK(posts[1].id == "b");
  CHECK(posts[0].source == Source::BdiSen);
  CHECK(posts[0].gold_explanations[0].char_end == 11);
}

TEST_CASE("load_dataset rejects invariant violations") {
  const auto dir = temp_dir("corpus");
  SUBCASE("positive without explanations") {
    write_lines(dir / "d.jsonl", {R"({"id":"p1","text":"x","label":"positive","explanations":[]})"});
    CHECK_THROWS_AS(load_dataset(dir / "d.jsonl"), ValidationError);
  }
  SUBCASE("explanation not in text names the post") {
    write_lines(dir / "d.jsonl",
                {R"({"id":"p-77","text":"abc","label":"positive","explanations":[{"text":"xyz"}]})"});
    try {
      load_dataset(dir / "d.jsonl");
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("p-77") != std::string::npos);
    }
  }
  SUBCASE("malformed line names the line number") {
    write_lines(dir / "d.jsonl", {R"({"id":"n","text":"ok","label":"negative","explanations":[]})",
                                  R"({"id": oops})"});
    try {
      load_dataset(dir / "d.jsonl");
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("offsets are code points") {
    // "café numb": 'é' is two bytes but one character.
    write_lines(dir / "ok.jsonl",
                {R"({"id":"u","text":"café numb","label":"positive","explanations":[{"text":"numb","start":5,"end":9}]})"});
    CHECK(load_dataset(dir / "ok.jsonl").size() == 1);
    write_lines(dir / "bad.jsonl",
                {R"({"id":"u","text":"café numb","label":"positive","explanations":[{"text":"numb","start":6,"end":10}]})"});
    CHECK_THROWS_AS(load_dataset(dir / "bad.jsonl"), ValidationError);
  }
}

TEST_CASE("save and load round-trip synthetic posts") {
  const auto dir = temp_dir("corpus");
  const auto c = make_synthetic_corpora({20, 20, 40, 5}, 3);
  save_dataset(dir / "bdi.jsonl", c.bdi);
  const auto back = load_dataset(dir / "bdi.jsonl");
  REQUIRE(back.size() == c.bdi.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].text == c.bdi[i].text);
    CHECK(back[i].gold_explanations.size() == c.bdi[i].gold_explanations.size());
  }
}

TEST_CASE("build_setting reproduces the reference split counts") {
  const auto& c = reference_corpora();
  struct Row {
    SettingName name;
    std::size_t train, test_pos, test_neg;
  };
  for (const auto& r : {Row{SettingName::BB, 285, 72, 359}, Row{SettingName::BP, 285, 151, 753},
                        Row{SettingName::PP, 601, 151, 753}, Row{SettingName::PB, 601, 72, 359},
                        Row{SettingName::MM, 886, 223, 1112}}) {
    CAPTURE(to_string(r.name));
    const auto s = build_setting(r.name, c.bdi, c.psysym, c.controls, 11);
    CHECK(s.train_positives() == r.train);
    CHECK(s.train_negatives() == r.train);
    CHECK(s.test_positives() == r.test_pos);
    CHECK(s.test_negatives() == r.test_neg);
  }
}

TEST_CASE("build_setting members are disjoint and deterministic") {
  const auto& c = reference_corpora();
  for (auto name : all_settings()) {
    const auto a = build_setting(name, c.bdi, c.psysym, c.controls, 5);
    const auto b = build_setting(name, c.bdi, c.psysym, c.controls, 5);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].id == b.test[i].id);
    auto train_ids = ids(a.train);
    auto test_ids = ids(a.test);
    CHECK(train_ids.size() == a.train.size());
    CHECK(test_ids.size() == a.test.size());
    for (const auto& id : test_ids) CHECK_FALSE(train_ids.count(id));
  }
  const auto other = build_setting(SettingName::MM, c.bdi, c.psysym, c.controls, 6);
  const auto base = build_setting(SettingName::MM, c.bdi, c.psysym, c.controls, 5);
  CHECK(ids(other.test) != ids(base.test));
}

TEST_CASE("other corpus sizes use the 1:5 rule") {
  const auto c = make_synthetic_corpora({50, 40, 400, 0}, 1);
  const auto s = build_setting(SettingName::BB, c.bdi, c.psysym, c.controls, 1);
  CHECK(s.train_positives() == 40);
  CHECK(s.test_positives() == 10);
  CHECK(s.test_negatives() == 50);
}

TEST_CASE("insufficient controls reports the shortfall") {
  const auto c = make_synthetic_corpora({50, 40, 100, 0}, 1);
  try {
    build_setting(SettingName::BB, c.bdi, c.psysym, c.controls, 1);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    // 40 + 32 train controls, 50 + 40 test controls = 162 needed.
    CHECK(std::string(e.what()).find("short by 62") != std::string::npos);
  }
}

TEST_CASE("subsample_training") {
  const auto& c = reference_corpora();
  const auto mm = build_setting(SettingName::MM, c.bdi, c.psysym, c.controls, 9);

  SUBCASE("full size is the identity") {
    const auto s = subsample_training(mm, 886, 1);
    REQUIRE(s.train.size() == mm.train.size());
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].id == mm.train[i].id);
  }
  SUBCASE("fixed seed gives identical subsets") {
    CHECK(ids(subsample_training(mm, 100, 4).train) == ids(subsample_training(mm, 100, 4).train));
  }
  SUBCASE("subset membership by brute force") {
    const auto s = subsample_training(mm, 400, 2);
    CHECK(s.train.size() == 800);
    CHECK(s.train_positives() == 400);
    CHECK(s.train_negatives() == 400);
    for (const auto& p : s.train) {
      const bool found = std::any_of(mm.train.begin(), mm.train.end(),
                                     [&p](const Post& q) { return q.id == p.id; });
      CHECK(found);
    }
    CHECK(ids(s.test) == ids(mm.test));
  }
  SUBCASE("too large") { CHECK_THROWS_AS(subsample_training(mm, 887, 1), ValidationError); }
}

TEST_CASE("mix_external") {
  const auto& c = reference_corpora();
  const auto mm = build_setting(SettingName::MM, c.bdi, c.psysym, c.controls, 9);

  CHECK(mix_external(mm, {}, 200).empty());

  const auto seq = mix_external(mm, c.external, 200);
  REQUIRE(seq.size() == 10);
  const auto base_ids = ids(mm.train);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const std::size_t added = std::min<std::size_t>((k + 1) * 200, 1956);
    CHECK(seq[k].train.size() == mm.train.size() + added);
    const auto train_ids = ids(seq[k].train);
    for (const auto& id : base_ids) CHECK(train_ids.count(id));
    CHECK(ids(seq[k].test) == ids(mm.test));
  }
  CHECK(seq.back().train.size() - mm.train.size() == 1956);
  CHECK_THROWS_AS(mix_external(mm, c.external, 0), ValidationError);
}

TEST_CASE("manifests resolve back to the same setting") {
  const auto dir = temp_dir("manifest");
  const auto& c = reference_corpora();
  const auto s = build_setting(SettingName::PB, c.bdi, c.psysym, c.controls, 3);
  write_manifest(dir / "P-B.jsonl", s);
  std::vector<Post> pool = c.bdi;
  pool.insert(pool.end(), c.psysym.begin(), c.psysym.end());
  pool.insert(pool.end(), c.controls.begin(), c.controls.end());
  const auto back = read_manifest(dir / "P-B.jsonl", pool);
  CHECK(back.name == SettingName::PB);
  CHECK(back.seed == 3);
  REQUIRE(back.train.size() == s.train.size());
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(back.train[i].id == s.train[i].id);
  REQUIRE(back.test.size() == s.test.size());
}
