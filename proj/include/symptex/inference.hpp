#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "symptex/corpus.hpp"
#include "symptex/format.hpp"

namespace symptex {

enum class BackendKind { ChatRemote, CompletionRemote, GoldEcho, KeywordRule };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct BackendSpec {
  BackendKind kind = BackendKind::GoldEcho;
  std::optional<std::string> endpoint_url;
  std::optional<std::string> model_name;
  std::size_t max_concurrency = 1;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};  // first retry delay, doubled per attempt
  double temperature = 0.0;
  std::optional<int> max_tokens;
  std::string auth_env = "OPENAI_API_KEY";  // bearer token source, never stored
  std::vector<std::string> triggers;        // keyword_rule lexemes
};

/// Throws ValidationError if the spec is inconsistent (e.g. a remote kind
/// without an endpoint, or a local kind with one).
void validate(const BackendSpec& spec);
BackendSpec backend_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const BackendSpec& spec);

/// Stable description of a backend for run headers. Excludes secrets.
std::string fingerprint(const BackendSpec& spec);

enum class Task { SingleStep, Classify, Explain };
std::string_view to_string(Task t);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct FewShotPrompt {
  std::string system_instructions;
  std::vector<std::pair<std::string, std::string>> shots;  // (input, target)
  std::vector<std::string> shot_ids;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::string query;

  std::vector<ChatMessage> messages() const;
  /// Plain-text rendering for raw completion endpoints.
  std::string flatten() const;
  std::size_t char_count() const;
};

inline constexpr std::size_t kDefaultPromptCharBudget = 400000;

/// Default instructions for few-shot runs. A paraphrase of the usual
/// annotator-style brief; override it through run config.
extern const std::string kDefaultFewShotInstructions;

struct FewShotConfig {
  std::string instructions = kDefaultFewShotInstructions;
  std::size_t n_pos = 30;
  std::size_t n_neg = 30;
  std::uint64_t seed = 0;
  std::size_t prompt_char_budget = kDefaultPromptCharBudget;
};

/// Samples shots from `train` (never the query itself) and renders each
/// shot target with encode_target. Fails rather than dropping shots when the
/// rendered prompt exceeds the budget.
FewShotPrompt build_fewshot_prompt(const FewShotConfig& cfg, const std::vector<Post>& train,
                                   const Post& query,
                                   std::size_t input_char_budget = kDefaultInputCharBudget);

/// One generation request. Remote backends see only `messages`; local
/// reference backends work from the post and task.
struct Request {
  std::string post_id;
  std::string post_text;
  Task task = Task::SingleStep;
  std::vector<ChatMessage> messages;
  std::string prompt_text;  // flattened form for completion endpoints
};

Request plain_request(const Post& post, Task task, const std::string& input);

struct Usage {
  std::optional<long> prompt_tokens;
  std::optional<long> completion_tokens;
};

struct Completion {
  std::string text;
  double latency_ms = 0.0;
  int attempts = 1;
  Usage usage;
};

struct CallRecord {
  std::string post_id;
  Task task = Task::SingleStep;
  double latency_ms = 0.0;
  int attempts = 0;
  Usage usage;
  bool ok = true;
  std::string error;
};

/// Thread-safe sink for per-call telemetry.
class CallLog {
 public:
  void add(CallRecord r);
  std::vector<CallRecord> snapshot() const;
  std::size_t size() const;
  std::size_t count(Task t) const;

 private:
  mutable std::mutex mu_;
  std::vector<CallRecord> records_;
};

nlohmann::ordered_json to_json(const CallRecord& r);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const Request& req) = 0;
  virtual std::string fingerprint() const = 0;
  virtual std::size_t max_concurrency() const { return 1; }
};

/// Answers with the gold target of the requested post. Serves as the oracle
/// backend for pipeline tests.
class GoldEchoBackend : public Backend {
 public:
  explicit GoldEchoBackend(const std::vector<Post>& gold);
  Completion complete(const Request& req) override;
  std::string fingerprint() const override { return "gold_echo"; }
  std::size_t max_concurrency() const override { return 4; }

 private:
  std::unordered_map<std::string, Post> gold_;
};

/// Labels a post positive when a trigger lexeme occurs in it (ASCII
/// case-insensitive, word-bounded) and explains with every sentence that
/// holds a trigger, copied verbatim.
class KeywordRuleBackend : public Backend {
 public:
  explicit KeywordRuleBackend(std::vector<std::string> triggers);
  Completion complete(const Request& req) override;
  std::string fingerprint() const override;
  std::size_t max_concurrency() const override { return 4; }

  /// Trigger-bearing sentences of `text`, in order.
  std::vector<std::string> matching_sentences(std::string_view text) const;

 private:
  std::vector<std::string> triggers_;
};

/// Chat-completions or raw-completions endpoint over HTTP(S). Transient
/// failures (no response, 408, 429, 5xx) are retried with exponential
/// backoff; at most max_concurrency calls are in flight at once.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendSpec spec);
  Completion complete(const Request& req) override;
  std::string fingerprint() const override;
  std::size_t max_concurrency() const override { return spec_.max_concurrency; }

  nlohmann::json request_body(const Request& req) const;

 private:
  BackendSpec spec_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::counting_semaphore<> in_flight_;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::vector<Post>& gold);

struct PostOutcome {
  Prediction prediction;
  double latency_ms = 0.0;
  std::optional<std::string> explainer_raw;
  std::optional<std::string> error;
};

struct RunOutput {
  std::vector<PostOutcome> outcomes;  // input order
  std::size_t failures = 0;

  std::vector<Prediction> predictions() const;
};

struct PromptConfig {
  std::size_t input_char_budget = kDefaultInputCharBudget;
  // Set for few-shot runs; shots come from `train`.
  std::optional<FewShotConfig> fewshot;
  const std::vector<Post>* train = nullptr;
};

/// One completion per post, parsed with parse_output.
RunOutput run_single_step(Backend& backend, const std::vector<Post>& posts,
                          const PromptConfig& cfg, CallLog* log = nullptr);

/// Classifier first; only posts it labels positive reach the explainer.
RunOutput run_two_step(Backend& classifier, Backend& explainer, const std::vector<Post>& posts,
                       std::size_t input_char_budget = kDefaultInputCharBudget,
                       CallLog* log = nullptr);

}  // namespace symptex
