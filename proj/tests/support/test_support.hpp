#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "safealign/error.hpp"
#include "safealign/gateway.hpp"
#include "safealign/jsonl.hpp"

namespace safealign::testing {

/// Backend whose replies come from a callback. Counts calls.
class ScriptedBackend final : public Backend {
 public:
  using CompleteFn = std::function<std::string(const ChatRequest&)>;
  using ScoreFn = std::function<std::vector<TokenLogprob>(std::string_view)>;

  explicit ScriptedBackend(CompleteFn complete, ScoreFn score = {})
      : complete_(std::move(complete)), score_(std::move(score)) {}

  Completion complete(const ChatRequest& req) override {
    ++calls_;
    Completion c;
    c.text = complete_(req);
    c.backend_id = req.backend_id;
    return c;
  }

  std::vector<TokenLogprob> score(std::string_view text) override {
    if (!score_) throw Error(Errc::unsupported_capability, "scripted backend has no scorer");
    return score_(text);
  }

  int calls() const { return calls_.load(); }

 private:
  CompleteFn complete_;
  ScoreFn score_;
  std::atomic<int> calls_{0};
};

/// Registers a scripted backend and returns a non-owning pointer to it.
inline ScriptedBackend* add_scripted(Gateway& gw, const std::string& id, ScriptedBackend::CompleteFn fn,
                                     ScriptedBackend::ScoreFn score = {}) {
  BackendSpec spec;
  spec.id = id;
  spec.kind = BackendKind::mock_uniform;
  spec.rate_limit = 1e6;
  spec.supports_logprobs = static_cast<bool>(score);
  auto impl = std::make_unique<ScriptedBackend>(std::move(fn), std::move(score));
  ScriptedBackend* raw = impl.get();
  gw.register_backend(spec, std::move(impl));
  return raw;
}

/// Gateway that never sleeps, for retry and rate-limit tests.
inline GatewayOptions fast_options() {
  GatewayOptions o;
  o.sleep = [](std::chrono::nanoseconds) {};
  return o;
}

/// Text of the last user message.
inline const std::string& last_user(const ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::user) return it->text;
  }
  throw Error(Errc::malformed_request, "no user message");
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("safealign-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, std::string_view content) const {
    const auto p = path_ / name;
    std::filesystem::create_directories(p.parent_path());
    jsonl::atomic_write(p, content);
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path fixture_path(const std::string& rel) {
  return std::filesystem::path(SAFEALIGN_FIXTURE_DIR) / rel;
}

}  // namespace safealign::testing
