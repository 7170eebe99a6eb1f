#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "symptex/annotation.hpp"
#include "symptex/corpus.hpp"
#include "symptex/experiment.hpp"
#include "symptex/format.hpp"

namespace symptex::testing {

Post positive_post(const std::string& id, const std::string& text,
                   const std::vector<std::string>& spans);
Post negative_post(const std::string& id, const std::string& text);

/// Counts of each (a, b, c) relevance pattern for a 3-assessor, 209-item
/// session. Found by enumerating all pattern-count vectors with 86
/// unanimous-relevant, 25 unanimous-non-relevant and 154 majority-relevant
/// items, keeping those whose per-assessor fractions round to 73/53/77% and
/// whose pairwise agreements round to 76/66/65% (average 69%).
struct PatternCounts {
  int n111 = 86, n000 = 25;
  int n110 = 10, n101 = 45, n011 = 13;  // two relevant votes
  int n100 = 11, n010 = 2, n001 = 17;   // one relevant vote
};

/// Brute-force search for the pattern counts above. Returns every solution.
std::vector<PatternCounts> search_reference_profile();

/// Expands pattern counts into a [209][3] label matrix.
std::vector<std::array<int, 3>> expand(const PatternCounts& c);

/// Run whose predictions are positive for `n_positive` posts.
RunRecord positive_run(std::size_t n_positive, std::size_t n_negative = 0,
                       const std::string& run_id = "run-fixture");

std::filesystem::path temp_dir(const std::string& tag);

struct CommandResult {
  int exit_code = -1;
  std::string out;  // stdout only; stderr passes through
};

/// Runs a shell command line and captures its standard output.
CommandResult run_command(const std::string& cmd);

/// Single-quotes `s` for /bin/sh.
std::string sh_quote(const std::string& s);

/// Minimal chat/raw completions endpoint on 127.0.0.1. `respond` maps a
/// parsed request body to (status, response body).
class MockEndpoint {
 public:
  using Handler = std::function<std::pair<int, std::string>(const nlohmann::json&)>;

  explicit MockEndpoint(Handler respond);
  ~MockEndpoint();

  std::string url(const std::string& path = "/v1/chat/completions") const;
  int hits() const { return hits_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  std::string last_authorization() const;
  void stop();

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  Handler respond_;
  std::atomic<int> hits_{0}, in_flight_{0}, max_in_flight_{0};
  mutable std::mutex mu_;
  std::string last_auth_;
};

std::string chat_response(const std::string& content, int prompt_tokens = 11,
                          int completion_tokens = 7);

}  // namespace symptex::testing
