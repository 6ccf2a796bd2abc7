#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace safealign {

enum class Role { system, user, assistant };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string text;
};

struct ChatRequest {
  std::string backend_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  /// Throws Errc::malformed_request on the first violated invariant.
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct Completion {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string backend_id;
  bool cached = false;
};

enum class BackendKind { http_chat, fixture, mock_uniform };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view s);

struct BackendSpec {
  std::string id;
  BackendKind kind = BackendKind::mock_uniform;
  std::optional<std::string> endpoint;
  std::optional<std::filesystem::path> fixture;
  std::string model;
  double rate_limit = 10.0;  // requests per second
  int max_retries = 3;
  bool supports_logprobs = false;
  int vocab_size = 10;  // mock-uniform only
  double timeout_seconds = 60.0;

  /// Empty when the spec is usable.
  std::vector<std::string> problems() const;
  /// Environment variable holding the API key: SAFEALIGN_API_KEY_<ID>, with
  /// the id uppercased and non-alphanumerics mapped to '_'.
  std::string api_key_env() const;
};

void to_json(nlohmann::json& j, const BackendSpec& spec);
void from_json(const nlohmann::json& j, BackendSpec& spec);

/// Hash over (messages, temperature, top_p, max_tokens, seed) with message
/// text whitespace-normalized. The backend id is excluded so a
/// fixture file can serve any backend id.
std::string request_hash(const ChatRequest& req);
/// Fixture key for score_logprobs lookups.
std::string scoring_hash(std::string_view text);

/// A model backend. Implementations throw safealign::Error; only
/// Errc::backend_unreachable is treated as transient and retried.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const ChatRequest& req) = 0;
  virtual std::vector<TokenLogprob> score(std::string_view text) = 0;
};

/// Replays a JSON Lines file of {"request_hash", "text", "token_logprobs"?}.
class FixtureBackend final : public Backend {
 public:
  explicit FixtureBackend(const std::filesystem::path& path);
  Completion complete(const ChatRequest& req) override;
  std::vector<TokenLogprob> score(std::string_view text) override;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
  };
  std::unordered_map<std::string, Entry> entries_;
};

/// Whitespace tokenizer with a uniform distribution over `vocab_size`
/// tokens: every token scores ln(1/V).
class MockUniformBackend final : public Backend {
 public:
  explicit MockUniformBackend(int vocab_size);
  Completion complete(const ChatRequest& req) override;
  std::vector<TokenLogprob> score(std::string_view text) override;

 private:
  int vocab_size_;
};

/// OpenAI-compatible HTTP backend. complete() posts to {endpoint}/chat/completions;
/// score() posts to {endpoint}/completions with echo=true and max_tokens=0.
class HttpChatBackend final : public Backend {
 public:
  HttpChatBackend(BackendSpec spec, std::optional<std::string> api_key);
  Completion complete(const ChatRequest& req) override;
  std::vector<TokenLogprob> score(std::string_view text) override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  BackendSpec spec_;
  std::optional<std::string> api_key_;
  std::string origin_;     // scheme://host:port
  std::string base_path_;  // e.g. /v1
};

/// Persistent completion cache keyed by (backend id, request hash). Backed
/// by an append-only JSON Lines file when a path is given.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(const std::filesystem::path& path);

  std::optional<Completion> get(std::string_view backend_id, std::string_view hash) const;
  void put(std::string_view backend_id, std::string_view hash, const Completion& completion);
  std::size_t size() const;

 private:
  static std::string key(std::string_view backend_id, std::string_view hash);

  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Completion> entries_;
  std::optional<std::filesystem::path> path_;
  std::mutex file_mu_;
};

struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  std::chrono::milliseconds cap{30000};
};

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_path;
  RetryPolicy retry;
  /// A request whose rate-limit slot lies further out than this fails with
  /// Errc::rate_limit_timeout instead of waiting.
  std::chrono::milliseconds max_rate_wait{120000};
  /// Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::nanoseconds)> sleep;
};

/// Uniform, thread-safe access to all registered backends with caching,
/// global per-backend rate limiting and bounded retries.
class Gateway {
 public:
  struct Stats {
    std::size_t issued = 0;  // backend calls actually attempted
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
    std::size_t failures = 0;
  };

  explicit Gateway(GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Builds the implementation from spec.kind. Throws Errc::invalid_config
  /// if the spec has problems.
  void register_backend(const BackendSpec& spec);
  void register_backend(const BackendSpec& spec, std::unique_ptr<Backend> impl);

  bool has_backend(std::string_view id) const;
  const BackendSpec& spec(std::string_view id) const;

  Completion complete(const ChatRequest& req);
  std::vector<TokenLogprob> score_logprobs(std::string_view backend_id, std::string_view text);

  Stats stats(std::string_view id) const;
  ResponseCache& cache() { return *cache_; }

 private:
  struct Slot;
  Slot& slot(std::string_view id) const;
  template <class Fn>
  auto with_retries(Slot& s, Fn&& fn) -> decltype(fn());
  void wait_for_rate_slot(Slot& s);
  std::chrono::nanoseconds backoff(int attempt);

  GatewayOptions options_;
  std::unique_ptr<ResponseCache> cache_;
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::unique_ptr<Slot>, std::less<>> slots_;
  std::mutex jitter_mu_;
  std::uint64_t jitter_state_;
};

}  // namespace safealign
