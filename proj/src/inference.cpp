#include "symptex/inference.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "symptex/error.hpp"
#include "symptex/rng.hpp"

namespace symptex {

using nlohmann::json;

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::ChatRemote: return "chat_remote";
    case BackendKind::CompletionRemote: return "completion_remote";
    case BackendKind::GoldEcho: return "gold_echo";
    case BackendKind::KeywordRule: return "keyword_rule";
  }
  return "gold_echo";
}

BackendKind parse_backend_kind(std::string_view s) {
  for (auto k : {BackendKind::ChatRemote, BackendKind::CompletionRemote, BackendKind::GoldEcho,
                 BackendKind::KeywordRule}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown backend kind '" + std::string(s) + "'");
}

namespace {

bool is_remote(BackendKind k) {
  return k == BackendKind::ChatRemote || k == BackendKind::CompletionRemote;
}

}  // namespace

void validate(const BackendSpec& spec) {
  if (is_remote(spec.kind) && !spec.endpoint_url)
    throw ValidationError(std::string(to_string(spec.kind)) + " backend requires endpoint_url");
  if (!is_remote(spec.kind) && spec.endpoint_url)
    throw ValidationError(std::string(to_string(spec.kind)) + " backend must not set endpoint_url");
  if (spec.max_concurrency == 0) throw ValidationError("max_concurrency must be positive");
  if (spec.max_retries < 0) throw ValidationError("max_retries must be non-negative");
  if (spec.temperature < 0.0) throw ValidationError("temperature must be non-negative");
  if (spec.kind == BackendKind::KeywordRule && spec.triggers.empty())
    throw ValidationError("keyword_rule backend needs at least one trigger");
}

BackendSpec backend_spec_from_json(const json& j) {
  BackendSpec s;
  try {
    s.kind = parse_backend_kind(j.at("kind").get<std::string>());
    if (j.contains("endpoint_url")) s.endpoint_url = j["endpoint_url"].get<std::string>();
    if (j.contains("model_name")) s.model_name = j["model_name"].get<std::string>();
    s.max_concurrency = j.value("max_concurrency", s.max_concurrency);
    s.timeout = std::chrono::milliseconds(j.value("timeout_ms", s.timeout.count()));
    s.max_retries = j.value("max_retries", s.max_retries);
    s.backoff = std::chrono::milliseconds(j.value("backoff_ms", s.backoff.count()));
    s.temperature = j.value("temperature", s.temperature);
    if (j.contains("max_tokens")) s.max_tokens = j["max_tokens"].get<int>();
    s.auth_env = j.value("auth_env", s.auth_env);
    if (j.contains("triggers")) s.triggers = j["triggers"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed backend spec: ") + e.what());
  }
  validate(s);
  return s;
}

nlohmann::ordered_json to_json(const BackendSpec& s) {
  nlohmann::ordered_json j{{"kind", to_string(s.kind)}};
  if (s.endpoint_url) j["endpoint_url"] = *s.endpoint_url;
  if (s.model_name) j["model_name"] = *s.model_name;
  j["max_concurrency"] = s.max_concurrency;
  j["timeout_ms"] = s.timeout.count();
  j["max_retries"] = s.max_retries;
  j["backoff_ms"] = s.backoff.count();
  j["temperature"] = s.temperature;
  if (s.max_tokens) j["max_tokens"] = *s.max_tokens;
  j["auth_env"] = s.auth_env;
  if (!s.triggers.empty()) j["triggers"] = s.triggers;
  return j;
}

std::string fingerprint(const BackendSpec& s) {
  std::ostringstream out;
  out << to_string(s.kind);
  if (s.model_name) out << ":" << *s.model_name;
  if (s.endpoint_url) out << "@" << *s.endpoint_url;
  if (is_remote(s.kind)) out << ";t=" << s.temperature;
  if (s.kind == BackendKind::KeywordRule) {
    out << "[";
    for (std::size_t i = 0; i < s.triggers.size(); ++i) out << (i ? "|" : "") << s.triggers[i];
    out << "]";
  }
  return out.str();
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::SingleStep: return "single_step";
    case Task::Classify: return "classify";
    case Task::Explain: return "explain";
  }
  return "single_step";
}

const std::string kDefaultFewShotInstructions =
    "You are an expert annotator of mental-health signals in social media. "
    "For each post, decide whether it shows evidence of any depressive symptom. "
    "Answer \"negative\" if it does not. If it does, answer \"positive\" and then justify "
    "the decision by quoting the relevant spans of the post word for word, each introduced "
    "by \"explanation: \". Do not paraphrase and do not add any other text.";

std::vector<ChatMessage> FewShotPrompt::messages() const {
  std::vector<ChatMessage> out;
  if (!system_instructions.empty()) out.push_back({"system", system_instructions});
  for (const auto& [in, target] : shots) {
    out.push_back({"user", in});
    out.push_back({"assistant", target});
  }
  out.push_back({"user", query});
  return out;
}

std::string FewShotPrompt::flatten() const {
  std::string out = system_instructions;
  if (!out.empty()) out += "\n\n";
  for (const auto& [in, target] : shots) out += "Input: " + in + "\nOutput: " + target + "\n\n";
  out += "Input: " + query + "\nOutput:";
  return out;
}

std::size_t FewShotPrompt::char_count() const {
  std::size_t n = system_instructions.size() + query.size();
  for (const auto& [in, target] : shots) n += in.size() + target.size();
  return n;
}

FewShotPrompt build_fewshot_prompt(const FewShotConfig& cfg, const std::vector<Post>& train,
                                   const Post& query, std::size_t input_char_budget) {
  std::vector<const Post*> pos, neg;
  for (const auto& p : train) {
    if (p.id == query.id) continue;
    (p.positive() ? pos : neg).push_back(&p);
  }
  if (pos.size() < cfg.n_pos || neg.size() < cfg.n_neg) {
    throw ValidationError("few-shot prompt needs " + std::to_string(cfg.n_pos) + " positive and " +
                          std::to_string(cfg.n_neg) + " control shots; training split offers " +
                          std::to_string(pos.size()) + " and " + std::to_string(neg.size()));
  }
  std::vector<const Post*> chosen;
  for (auto i : Rng(cfg.seed, "fewshot/pos").sample_indices(pos.size(), cfg.n_pos))
    chosen.push_back(pos[i]);
  for (auto i : Rng(cfg.seed, "fewshot/neg").sample_indices(neg.size(), cfg.n_neg))
    chosen.push_back(neg[i]);
  Rng(cfg.seed, "fewshot/order").shuffle(chosen);

  FewShotPrompt prompt;
  prompt.system_instructions = cfg.instructions;
  prompt.n_positive = cfg.n_pos;
  prompt.n_negative = cfg.n_neg;
  for (const auto* p : chosen) {
    prompt.shots.emplace_back(encode_explain_input(*p, input_char_budget).text,
                              encode_target(p->gold_label, explanation_texts(*p)));
    prompt.shot_ids.push_back(p->id);
  }
  prompt.query = encode_explain_input(query, input_char_budget).text;
  if (prompt.char_count() > cfg.prompt_char_budget) {
    throw ValidationError("few-shot prompt for post " + query.id + " needs " +
                          std::to_string(prompt.char_count()) + " characters, budget is " +
                          std::to_string(cfg.prompt_char_budget));
  }
  return prompt;
}

Request plain_request(const Post& post, Task task, const std::string& input) {
  Request r;
  r.post_id = post.id;
  r.post_text = post.text;
  r.task = task;
  r.messages = {{"user", input}};
  r.prompt_text = input;
  return r;
}

void CallLog::add(CallRecord r) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
}

std::vector<CallRecord> CallLog::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t CallLog::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::size_t CallLog::count(Task t) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(), [t](const CallRecord& r) { return r.task == t; }));
}

nlohmann::ordered_json to_json(const CallRecord& r) {
  nlohmann::ordered_json j{{"post_id", r.post_id},
                           {"task", to_string(r.task)},
                           {"latency_ms", r.latency_ms},
                           {"attempts", r.attempts},
                           {"ok", r.ok}};
  if (r.usage.prompt_tokens) j["prompt_tokens"] = *r.usage.prompt_tokens;
  if (r.usage.completion_tokens) j["completion_tokens"] = *r.usage.completion_tokens;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

GoldEchoBackend::GoldEchoBackend(const std::vector<Post>& gold) {
  for (const auto& p : gold) gold_.emplace(p.id, p);
}

Completion GoldEchoBackend::complete(const Request& req) {
  auto it = gold_.find(req.post_id);
  if (it == gold_.end()) throw BackendError("gold_echo has no gold record for post " + req.post_id);
  const Post& p = it->second;
  Completion c;
  switch (req.task) {
    case Task::SingleStep: c.text = encode_target(p.gold_label, explanation_texts(p)); break;
    case Task::Classify: c.text = std::string(to_string(p.gold_label)); break;
    case Task::Explain:
      c.text = p.positive() ? encode_explanation_clauses(explanation_texts(p)) : "";
      break;
  }
  return c;
}

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool contains_word(std::string_view haystack_lower, std::string_view needle_lower) {
  if (needle_lower.empty()) return false;
  for (auto at = haystack_lower.find(needle_lower); at != std::string_view::npos;
       at = haystack_lower.find(needle_lower, at + 1)) {
    const auto end = at + needle_lower.size();
    const bool left = at == 0 || !word_byte(static_cast<unsigned char>(haystack_lower[at - 1]));
    const bool right =
        end == haystack_lower.size() || !word_byte(static_cast<unsigned char>(haystack_lower[end]));
    if (left && right) return true;
  }
  return false;
}

std::string_view trim_space(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

KeywordRuleBackend::KeywordRuleBackend(std::vector<std::string> triggers)
    : triggers_(std::move(triggers)) {
  for (auto& t : triggers_) t = ascii_lower(t);
}

std::string KeywordRuleBackend::fingerprint() const {
  std::string out = "keyword_rule[";
  for (std::size_t i = 0; i < triggers_.size(); ++i) out += (i ? "|" : "") + triggers_[i];
  return out + "]";
}

std::vector<std::string> KeywordRuleBackend::matching_sentences(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find_first_of(".!?\n", start);
    end = end == std::string_view::npos ? text.size() : end + 1;
    const auto sentence = trim_space(text.substr(start, end - start));
    start = end;
    if (sentence.empty() || sentence.find(kExplanationDelimiter) != std::string_view::npos) continue;
    const auto lowered = ascii_lower(sentence);
    if (std::any_of(triggers_.begin(), triggers_.end(),
                    [&lowered](const std::string& t) { return contains_word(lowered, t); })) {
      out.emplace_back(sentence);
    }
  }
  return out;
}

Completion KeywordRuleBackend::complete(const Request& req) {
  const auto sentences = matching_sentences(req.post_text);
  const Label label = sentences.empty() ? Label::Negative : Label::Positive;
  Completion c;
  switch (req.task) {
    case Task::SingleStep: c.text = encode_target(label, sentences); break;
    case Task::Classify: c.text = std::string(to_string(label)); break;
    case Task::Explain:
      c.text = sentences.empty() ? "" : encode_explanation_clauses(sentences);
      break;
  }
  return c;
}

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient(int status) { return status == 408 || status == 429 || status >= 500; }

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

RemoteBackend::RemoteBackend(BackendSpec spec)
    : spec_(std::move(spec)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(spec_.max_concurrency, 1))) {
  validate(spec_);
  std::tie(origin_, path_) = split_url(*spec_.endpoint_url);
}

std::string RemoteBackend::fingerprint() const { return symptex::fingerprint(spec_); }

json RemoteBackend::request_body(const Request& req) const {
  json body;
  if (spec_.model_name) body["model"] = *spec_.model_name;
  body["temperature"] = spec_.temperature;
  if (spec_.max_tokens) body["max_tokens"] = *spec_.max_tokens;
  if (spec_.kind == BackendKind::ChatRemote) {
    body["messages"] = json::array();
    for (const auto& m : req.messages)
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  } else {
    body["prompt"] = req.prompt_text;
  }
  return body;
}

Completion RemoteBackend::complete(const Request& req) {
  const auto payload = request_body(req).dump();
  httplib::Headers headers;
  if (const char* token = std::getenv(spec_.auth_env.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const auto started = std::chrono::steady_clock::now();
  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(spec_.backoff * (1LL << (attempt - 1)));

    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(spec_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (transient(res->status)) {
      last_error = excerpt(res->body);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                             excerpt(res->body),
                         res->status);
    }

    Completion c;
    c.attempts = attempt + 1;
    c.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             started)
                       .count();
    try {
      const auto j = json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      const auto& content = spec_.kind == BackendKind::ChatRemote
                                ? choice.at("message").at("content")
                                : choice.at("text");
      c.text = content.is_null() ? "" : content.get<std::string>();
      if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        if (u.contains("prompt_tokens")) c.usage.prompt_tokens = u["prompt_tokens"].get<long>();
        if (u.contains("completion_tokens"))
          c.usage.completion_tokens = u["completion_tokens"].get<long>();
      }
    } catch (const json::exception& e) {
      throw BackendError("unreadable completion body: " + excerpt(res->body), res->status);
    }
    return c;
  }
  throw BackendError("retries exhausted after " + std::to_string(spec_.max_retries + 1) +
                         " attempts (last status " + std::to_string(last_status) + ": " +
                         last_error + ")",
                     last_status);
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::vector<Post>& gold) {
  validate(spec);
  switch (spec.kind) {
    case BackendKind::GoldEcho: return std::make_unique<GoldEchoBackend>(gold);
    case BackendKind::KeywordRule: return std::make_unique<KeywordRuleBackend>(spec.triggers);
    case BackendKind::ChatRemote:
    case BackendKind::CompletionRemote: return std::make_unique<RemoteBackend>(spec);
  }
  throw ValidationError("unsupported backend kind");
}

std::vector<Prediction> RunOutput::predictions() const {
  std::vector<Prediction> out;
  out.reserve(outcomes.size());
  for (const auto& o : outcomes) out.push_back(o.prediction);
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  if (workers == 1) {
    body();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
}

struct Timed {
  Completion completion;
  std::optional<std::string> error;
};

Timed timed_call(Backend& backend, const Request& req, CallLog* log) {
  Timed t;
  const auto started = std::chrono::steady_clock::now();
  CallRecord rec;
  rec.post_id = req.post_id;
  rec.task = req.task;
  try {
    t.completion = backend.complete(req);
    rec.attempts = t.completion.attempts;
    rec.usage = t.completion.usage;
  } catch (const std::exception& e) {
    t.error = e.what();
    rec.ok = false;
    rec.error = e.what();
  }
  t.completion.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  rec.latency_ms = t.completion.latency_ms;
  if (log) log->add(std::move(rec));
  return t;
}

PostOutcome failed(const Post& post, std::string error, double latency) {
  PostOutcome o;
  o.prediction.post_id = post.id;
  o.prediction.label = Label::Negative;
  o.prediction.parse_status = ParseStatus::Malformed;
  o.latency_ms = latency;
  o.error = std::move(error);
  return o;
}

}  // namespace

RunOutput run_single_step(Backend& backend, const std::vector<Post>& posts,
                          const PromptConfig& cfg, CallLog* log) {
  if (cfg.fewshot && !cfg.train) throw ValidationError("few-shot run needs a training split");
  // Prompts are built up front so budget violations fail the run before any call.
  std::vector<Request> requests;
  requests.reserve(posts.size());
  for (const auto& p : posts) {
    if (cfg.fewshot) {
      const auto prompt = build_fewshot_prompt(*cfg.fewshot, *cfg.train, p, cfg.input_char_budget);
      Request r;
      r.post_id = p.id;
      r.post_text = p.text;
      r.task = Task::SingleStep;
      r.messages = prompt.messages();
      r.prompt_text = prompt.flatten();
      requests.push_back(std::move(r));
    } else {
      requests.push_back(
          plain_request(p, Task::SingleStep, encode_explain_input(p, cfg.input_char_budget).text));
    }
  }

  RunOutput out;
  out.outcomes.resize(posts.size());
  parallel_for(posts.size(), backend.max_concurrency(), [&](std::size_t i) {
    auto t = timed_call(backend, requests[i], log);
    if (t.error) {
      out.outcomes[i] = failed(posts[i], *t.error, t.completion.latency_ms);
      return;
    }
    PostOutcome o;
    o.prediction = parse_output(t.completion.text);
    o.prediction.post_id = posts[i].id;
    o.latency_ms = t.completion.latency_ms;
    out.outcomes[i] = std::move(o);
  });
  for (const auto& o : out.outcomes) out.failures += o.error ? 1 : 0;
  return out;
}

RunOutput run_two_step(Backend& classifier, Backend& explainer, const std::vector<Post>& posts,
                       std::size_t input_char_budget, CallLog* log) {
  RunOutput out;
  out.outcomes.resize(posts.size());

  parallel_for(posts.size(), classifier.max_concurrency(), [&](std::size_t i) {
    const auto& p = posts[i];
    auto t = timed_call(classifier, plain_request(p, Task::Classify,
                                                  encode_classify_only(p, input_char_budget).input),
                        log);
    if (t.error) {
      out.outcomes[i] = failed(p, *t.error, t.completion.latency_ms);
      return;
    }
    PostOutcome o;
    o.prediction = parse_output(t.completion.text);
    o.prediction.post_id = p.id;
    // A classifier emits a bare label; anything it appends is not used.
    o.prediction.explanations.clear();
    o.latency_ms = t.completion.latency_ms;
    out.outcomes[i] = std::move(o);
  });

  std::vector<std::size_t> to_explain;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (!out.outcomes[i].error && out.outcomes[i].prediction.positive()) to_explain.push_back(i);
  }

  parallel_for(to_explain.size(), explainer.max_concurrency(), [&](std::size_t k) {
    const auto i = to_explain[k];
    const auto& p = posts[i];
    auto& o = out.outcomes[i];
    auto t = timed_call(
        explainer,
        plain_request(p, Task::Explain, encode_explain_positive_input(p, input_char_budget).text),
        log);
    o.latency_ms += t.completion.latency_ms;
    if (t.error) {
      const auto latency = o.latency_ms;
      o = failed(p, *t.error, latency);
      return;
    }
    o.explainer_raw = t.completion.text;
    const auto explained = parse_explainer_output(t.completion.text);
    // The classifier's label stands; an unparseable explanation leaves it unexplained.
    if (explained.parse_status == ParseStatus::Ok) o.prediction.explanations = explained.explanations;
  });

  for (const auto& o : out.outcomes) out.failures += o.error ? 1 : 0;
  return out;
}

}  // namespace symptex
