#include "fixtures.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>

namespace symptex::testing {

Post positive_post(const std::string& id, const std::string& text,
                   const std::vector<std::string>& spans) {
  Post p;
  p.id = id;
  p.text = text;
  p.gold_label = Label::Positive;
  for (const auto& s : spans) p.gold_explanations.push_back({s, std::nullopt, std::nullopt});
  return p;
}

Post negative_post(const std::string& id, const std::string& text) {
  Post p;
  p.id = id;
  p.text = text;
  p.gold_label = Label::Negative;
  return p;
}

std::vector<PatternCounts> search_reference_profile() {
  constexpr int kItems = 209;
  auto near = [](int count, double target) {
    return std::abs(static_cast<double>(count) / kItems - target) <= 0.005 + 1e-12;
  };
  std::vector<PatternCounts> out;
  for (int n110 = 0; n110 <= 68; ++n110) {
    for (int n101 = 0; n101 <= 68 - n110; ++n101) {
      const int n011 = 68 - n110 - n101;
      for (int n100 = 0; n100 <= 30; ++n100) {
        for (int n010 = 0; n010 <= 30 - n100; ++n010) {
          const int n001 = 30 - n100 - n010;
          const int a = 86 + n110 + n101 + n100;
          const int b = 86 + n110 + n011 + n010;
          const int c = 86 + n101 + n011 + n001;
          const int ab = 111 + n110 + n001, ac = 111 + n101 + n010, bc = 111 + n011 + n100;
          if (!near(a, 0.73) || !near(b, 0.53) || !near(c, 0.77)) continue;
          if (!near(ab, 0.66) || !near(ac, 0.76) || !near(bc, 0.65)) continue;
          if (std::abs((ab + ac + bc) / 3.0 / kItems - 0.69) > 0.005) continue;
          PatternCounts p;
          p.n110 = n110, p.n101 = n101, p.n011 = n011;
          p.n100 = n100, p.n010 = n010, p.n001 = n001;
          out.push_back(p);
        }
      }
    }
  }
  return out;
}

std::vector<std::array<int, 3>> expand(const PatternCounts& c) {
  std::vector<std::array<int, 3>> rows;
  auto add = [&rows](int n, std::array<int, 3> pattern) {
    for (int i = 0; i < n; ++i) rows.push_back(pattern);
  };
  add(c.n111, {1, 1, 1});
  add(c.n000, {0, 0, 0});
  add(c.n110, {1, 1, 0});
  add(c.n101, {1, 0, 1});
  add(c.n011, {0, 1, 1});
  add(c.n100, {1, 0, 0});
  add(c.n010, {0, 1, 0});
  add(c.n001, {0, 0, 1});
  // Interleave deterministically so the matrix is not sorted by pattern.
  std::mt19937 gen(20240531);
  std::shuffle(rows.begin(), rows.end(), gen);
  return rows;
}

RunRecord positive_run(std::size_t n_positive, std::size_t n_negative, const std::string& run_id) {
  RunRecord rec;
  rec.run_id = run_id;
  rec.setting_name = "M-M";
  rec.method_label = "fixture";
  for (std::size_t i = 0; i < n_positive + n_negative; ++i) {
    PostRecord r;
    r.post_id = "p" + std::to_string(i);
    r.post_text = "Post number " + std::to_string(i) + ". I feel numb and tired all the time.";
    r.gold_label = Label::Positive;
    r.gold_explanations = {{"I feel numb and tired all the time.", std::nullopt, std::nullopt}};
    r.prediction.post_id = r.post_id;
    if (i < n_positive) {
      r.prediction.label = Label::Positive;
      r.prediction.explanations = {"I feel numb and tired all the time."};
    }
    rec.records.push_back(std::move(r));
  }
  return rec;
}

namespace {

// Removes every directory handed out by temp_dir when the process exits,
// unless SYMPTEX_KEEP_TMP is set.
struct TempRegistry {
  std::mutex mu;
  std::vector<std::filesystem::path> dirs;
  ~TempRegistry() {
    if (std::getenv("SYMPTEX_KEEP_TMP")) return;
    std::error_code ec;
    for (const auto& d : dirs) std::filesystem::remove_all(d, ec);
  }
};

TempRegistry& temp_registry() {
  static TempRegistry r;
  return r;
}

}  // namespace

std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto& reg = temp_registry();
  auto dir = std::filesystem::temp_directory_path() /
             ("symptex-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::lock_guard lock(reg.mu);
  reg.dirs.push_back(dir);
  return dir;
}

CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string sh_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

MockEndpoint::MockEndpoint(Handler respond) : respond_(std::move(respond)) {
  auto handle = [this](const httplib::Request& req, httplib::Response& res) {
    ++hits_;
    const int now = ++in_flight_;
    int prev = max_in_flight_.load();
    while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
    }
    {
      std::lock_guard lock(mu_);
      last_auth_ = req.get_header_value("Authorization");
    }
    auto [status, body] = respond_(nlohmann::json::parse(req.body));
    res.status = status;
    res.set_content(body, "application/json");
    --in_flight_;
  };
  server_.Post("/v1/chat/completions", handle);
  server_.Post("/v1/completions", handle);
  port_ = server_.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

MockEndpoint::~MockEndpoint() { stop(); }

void MockEndpoint::stop() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockEndpoint::url(const std::string& path) const {
  return "http://127.0.0.1:" + std::to_string(port_) + path;
}

std::string MockEndpoint::last_authorization() const {
  std::lock_guard lock(mu_);
  return last_auth_;
}

std::string chat_response(const std::string& content, int prompt_tokens, int completion_tokens) {
  return nlohmann::json{{"id", "cmpl-test"},
                        {"object", "chat.completion"},
                        {"choices",
                         {{{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", content}}},
                           {"finish_reason", "stop"}}}},
                        {"usage",
                         {{"prompt_tokens", prompt_tokens},
                          {"completion_tokens", completion_tokens},
                          {"total_tokens", prompt_tokens + completion_tokens}}}}
      .dump();
}

}  // namespace symptex::testing
