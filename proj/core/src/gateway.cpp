#include "safealign/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error(Errc::malformed_request, "unknown role '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
  if (backend_id.empty()) throw Error(Errc::malformed_request, "backend_id is empty");
  if (messages.empty()) throw Error(Errc::malformed_request, "messages is empty");
  if (messages.front().role == Role::assistant) {
    throw Error(Errc::malformed_request, "first message must be system or user");
  }
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw Error(Errc::malformed_request, "temperature must be >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(Errc::malformed_request, "top_p must be in (0, 1]");
  if (max_tokens <= 0) throw Error(Errc::malformed_request, "max_tokens must be positive");
}

std::string_view to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::http_chat: return "http-chat";
    case BackendKind::fixture: return "fixture";
    case BackendKind::mock_uniform: return "mock-uniform";
  }
  return "mock-uniform";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "http-chat") return BackendKind::http_chat;
  if (s == "fixture") return BackendKind::fixture;
  if (s == "mock-uniform") return BackendKind::mock_uniform;
  throw Error(Errc::invalid_config, "unknown backend kind '" + std::string(s) + "'");
}

std::vector<std::string> BackendSpec::problems() const {
  std::vector<std::string> out;
  if (id.empty()) out.emplace_back("backend id is empty");
  if (kind == BackendKind::http_chat && (!endpoint || endpoint->empty())) {
    out.push_back("backend '" + id + "': http-chat requires an endpoint");
  }
  if (kind == BackendKind::fixture && (!fixture || fixture->empty())) {
    out.push_back("backend '" + id + "': fixture requires a fixture file path");
  }
  if (!(rate_limit > 0.0) || !std::isfinite(rate_limit)) {
    out.push_back("backend '" + id + "': rate_limit must be > 0");
  }
  if (max_retries < 0 || max_retries > 10) out.push_back("backend '" + id + "': max_retries must be in [0, 10]");
  if (kind == BackendKind::mock_uniform && vocab_size < 1) {
    out.push_back("backend '" + id + "': vocab_size must be >= 1");
  }
  if (!(timeout_seconds > 0.0)) out.push_back("backend '" + id + "': timeout_seconds must be > 0");
  return out;
}

std::string BackendSpec::api_key_env() const {
  std::string name = "SAFEALIGN_API_KEY_";
  for (char c : id) {
    name.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : '_');
  }
  return name;
}

void to_json(json& j, const BackendSpec& spec) {
  j = json{{"id", spec.id},
           {"kind", to_string(spec.kind)},
           {"model", spec.model},
           {"rate_limit", spec.rate_limit},
           {"max_retries", spec.max_retries},
           {"supports_logprobs", spec.supports_logprobs},
           {"vocab_size", spec.vocab_size},
           {"timeout_seconds", spec.timeout_seconds}};
  if (spec.endpoint) j["endpoint"] = *spec.endpoint;
  if (spec.fixture) j["fixture"] = spec.fixture->string();
}

void from_json(const json& j, BackendSpec& spec) {
  spec = BackendSpec{};
  spec.id = j.at("id").get<std::string>();
  spec.kind = parse_backend_kind(j.at("kind").get<std::string>());
  spec.supports_logprobs = spec.kind == BackendKind::mock_uniform;
  if (j.contains("endpoint")) spec.endpoint = j["endpoint"].get<std::string>();
  if (j.contains("fixture")) spec.fixture = j["fixture"].get<std::string>();
  spec.model = j.value("model", spec.model);
  spec.rate_limit = j.value("rate_limit", spec.rate_limit);
  spec.max_retries = j.value("max_retries", spec.max_retries);
  spec.supports_logprobs = j.value("supports_logprobs", spec.supports_logprobs);
  spec.vocab_size = j.value("vocab_size", spec.vocab_size);
  spec.timeout_seconds = j.value("timeout_seconds", spec.timeout_seconds);
}

std::string request_hash(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back(json::array({to_string(m.role), text::normalize(m.text)}));
  json canon = {{"messages", std::move(messages)},
                {"temperature", req.temperature},
                {"top_p", req.top_p},
                {"max_tokens", req.max_tokens},
                {"seed", req.seed ? json(*req.seed) : json(nullptr)}};
  return text::sha256_hex(jsonl::dump(canon));
}

std::string scoring_hash(std::string_view s) {
  return text::sha256_hex(jsonl::dump(json{{"score_text", text::normalize(s)}}));
}

namespace {

std::vector<TokenLogprob> parse_logprobs(const json& arr) {
  std::vector<TokenLogprob> out;
  for (const auto& item : arr) {
    TokenLogprob t;
    if (item.is_array() && item.size() == 2) {
      t.token = item[0].get<std::string>();
      t.logprob = item[1].get<double>();
    } else {
      t.token = item.at("token").get<std::string>();
      t.logprob = item.at("logprob").get<double>();
    }
    out.push_back(std::move(t));
  }
  return out;
}

json dump_logprobs(const std::vector<TokenLogprob>& lps) {
  json arr = json::array();
  for (const auto& t : lps) arr.push_back({{"token", t.token}, {"logprob", t.logprob}});
  return arr;
}

void check_logprobs(const std::vector<TokenLogprob>& lps, std::string_view who) {
  for (const auto& t : lps) {
    if (!(t.logprob <= 0.0)) {
      throw Error(Errc::malformed_backend_reply, std::string(who) + " returned a positive or NaN logprob");
    }
  }
}

}  // namespace

FixtureBackend::FixtureBackend(const std::filesystem::path& path) {
  jsonl::for_each_line(path, [&](std::size_t number, std::string_view line) {
    try {
      json j = json::parse(line);
      Entry e;
      e.text = j.value("text", std::string());
      if (j.contains("token_logprobs") && !j["token_logprobs"].is_null()) {
        e.token_logprobs = parse_logprobs(j["token_logprobs"]);
        check_logprobs(*e.token_logprobs, "fixture");
      }
      entries_.insert_or_assign(j.at("request_hash").get<std::string>(), std::move(e));
    } catch (const json::exception& ex) {
      throw Error(Errc::invalid_config, path.string() + ":" + std::to_string(number) + ": " + ex.what());
    }
  });
}

Completion FixtureBackend::complete(const ChatRequest& req) {
  std::string hash = request_hash(req);
  auto it = entries_.find(hash);
  if (it == entries_.end()) throw Error(Errc::fixture_miss, "no fixture entry for request " + hash);
  Completion c;
  c.text = it->second.text;
  c.token_logprobs = it->second.token_logprobs;
  return c;
}

std::vector<TokenLogprob> FixtureBackend::score(std::string_view s) {
  std::string hash = scoring_hash(s);
  auto it = entries_.find(hash);
  if (it == entries_.end()) throw Error(Errc::fixture_miss, "no scoring fixture for " + hash);
  if (!it->second.token_logprobs) throw Error(Errc::malformed_backend_reply, "scoring fixture lacks token_logprobs");
  return *it->second.token_logprobs;
}

MockUniformBackend::MockUniformBackend(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 1) throw Error(Errc::invalid_config, "mock-uniform vocab_size must be >= 1");
}

Completion MockUniformBackend::complete(const ChatRequest& req) {
  Completion c;
  c.text = "mock-uniform " + request_hash(req).substr(0, 16);
  return c;
}

std::vector<TokenLogprob> MockUniformBackend::score(std::string_view s) {
  const double lp = -std::log(static_cast<double>(vocab_size_));
  std::vector<TokenLogprob> out;
  for (const auto& piece : text::split_any(text::normalize(s), {" "})) {
    if (!piece.empty()) out.push_back({piece, lp});
  }
  return out;
}

ResponseCache::ResponseCache(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path)) return;
  std::size_t skipped = 0;
  jsonl::for_each_line(path, [&](std::size_t, std::string_view line) {
    try {
      json j = json::parse(line);
      Completion c;
      c.backend_id = j.at("backend_id").get<std::string>();
      c.text = j.at("text").get<std::string>();
      if (j.contains("token_logprobs") && !j["token_logprobs"].is_null()) {
        c.token_logprobs = parse_logprobs(j["token_logprobs"]);
      }
      entries_.insert_or_assign(key(c.backend_id, j.at("request_hash").get<std::string>()), std::move(c));
    } catch (const json::exception&) {
      ++skipped;  // a torn final line after a crash
    }
  });
  if (skipped > 0) log::warn("cache_lines_skipped", {{"path", path.string()}, {"count", skipped}});
}

std::string ResponseCache::key(std::string_view backend_id, std::string_view hash) {
  std::string k(backend_id);
  k += '\0';
  k += hash;
  return k;
}

std::optional<Completion> ResponseCache::get(std::string_view backend_id, std::string_view hash) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key(backend_id, hash));
  if (it == entries_.end()) return std::nullopt;
  Completion c = it->second;
  c.cached = true;
  return c;
}

void ResponseCache::put(std::string_view backend_id, std::string_view hash, const Completion& completion) {
  {
    std::unique_lock lock(mu_);
    Completion stored = completion;
    stored.cached = false;
    stored.backend_id = std::string(backend_id);
    if (!entries_.emplace(key(backend_id, hash), std::move(stored)).second) return;
  }
  if (!path_) return;
  json row = {{"backend_id", backend_id}, {"request_hash", hash}, {"text", completion.text}};
  if (completion.token_logprobs) row["token_logprobs"] = dump_logprobs(*completion.token_logprobs);
  std::string line = jsonl::dump(row) + "\n";
  std::lock_guard lock(file_mu_);
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ofstream out(*path_, std::ios::binary | std::ios::app);
  out << line;
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

struct Gateway::Slot {
  BackendSpec spec;
  std::unique_ptr<Backend> impl;
  std::mutex rate_mu;
  std::chrono::steady_clock::time_point next_free{};
  std::atomic<std::size_t> issued{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<std::size_t> failures{0};
};

Gateway::Gateway(GatewayOptions options)
    : options_(std::move(options)),
      cache_(options_.cache_path ? std::make_unique<ResponseCache>(*options_.cache_path)
                                 : std::make_unique<ResponseCache>()),
      jitter_state_(std::random_device{}()) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); };
  }
}

Gateway::~Gateway() = default;

void Gateway::register_backend(const BackendSpec& spec) {
  auto problems = spec.problems();
  if (!problems.empty()) throw Error(Errc::invalid_config, problems.front());
  std::unique_ptr<Backend> impl;
  switch (spec.kind) {
    case BackendKind::fixture:
      impl = std::make_unique<FixtureBackend>(*spec.fixture);
      break;
    case BackendKind::mock_uniform:
      impl = std::make_unique<MockUniformBackend>(spec.vocab_size);
      break;
    case BackendKind::http_chat: {
      std::optional<std::string> key;
      if (const char* v = std::getenv(spec.api_key_env().c_str())) key = v;
      impl = std::make_unique<HttpChatBackend>(spec, key);
      break;
    }
  }
  register_backend(spec, std::move(impl));
}

void Gateway::register_backend(const BackendSpec& spec, std::unique_ptr<Backend> impl) {
  auto problems = spec.problems();
  if (!problems.empty()) throw Error(Errc::invalid_config, problems.front());
  auto slot = std::make_unique<Slot>();
  slot->spec = spec;
  slot->impl = std::move(impl);
  std::unique_lock lock(registry_mu_);
  slots_.insert_or_assign(spec.id, std::move(slot));
}

bool Gateway::has_backend(std::string_view id) const {
  std::shared_lock lock(registry_mu_);
  return slots_.find(id) != slots_.end();
}

Gateway::Slot& Gateway::slot(std::string_view id) const {
  std::shared_lock lock(registry_mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) throw Error(Errc::unknown_backend, "backend '" + std::string(id) + "' is not registered");
  return *it->second;
}

const BackendSpec& Gateway::spec(std::string_view id) const { return slot(id).spec; }

Gateway::Stats Gateway::stats(std::string_view id) const {
  Slot& s = slot(id);
  return {s.issued.load(), s.cache_hits.load(), s.retries.load(), s.failures.load()};
}

void Gateway::wait_for_rate_slot(Slot& s) {
  using namespace std::chrono;
  const auto interval = duration_cast<steady_clock::duration>(duration<double>(1.0 / s.spec.rate_limit));
  steady_clock::time_point when;
  const auto now = steady_clock::now();
  {
    std::lock_guard lock(s.rate_mu);
    when = std::max(now, s.next_free);
    if (when - now > options_.max_rate_wait) {
      throw Error(Errc::rate_limit_timeout, "backend '" + s.spec.id + "' rate-limit queue exceeds the wait bound");
    }
    s.next_free = when + interval;
  }
  if (when > now) std::this_thread::sleep_until(when);
}

std::chrono::nanoseconds Gateway::backoff(int attempt) {
  using namespace std::chrono;
  const double base = duration<double>(options_.retry.base).count();
  const double cap = duration<double>(options_.retry.cap).count();
  const double full = std::min(cap, base * std::pow(2.0, attempt));
  double u;
  {
    std::lock_guard lock(jitter_mu_);
    // splitmix64 step
    std::uint64_t z = (jitter_state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    u = static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  return duration_cast<nanoseconds>(duration<double>(full * (0.5 + 0.5 * u)));
}

template <class Fn>
auto Gateway::with_retries(Slot& s, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    wait_for_rate_slot(s);
    s.issued.fetch_add(1);
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != Errc::backend_unreachable || attempt >= s.spec.max_retries) {
        s.failures.fetch_add(1);
        throw;
      }
      s.retries.fetch_add(1);
      log::warn("backend_retry", {{"backend", s.spec.id}, {"attempt", attempt + 1}, {"error", e.what()}});
      options_.sleep(backoff(attempt));
    }
  }
}

Completion Gateway::complete(const ChatRequest& req) {
  req.validate();
  Slot& s = slot(req.backend_id);
  const std::string hash = request_hash(req);
  if (auto hit = cache_->get(req.backend_id, hash)) {
    s.cache_hits.fetch_add(1);
    hit->backend_id = req.backend_id;
    return *hit;
  }
  Completion c = with_retries(s, [&] { return s.impl->complete(req); });
  if (c.token_logprobs) check_logprobs(*c.token_logprobs, s.spec.id);
  c.backend_id = req.backend_id;
  c.cached = false;
  cache_->put(req.backend_id, hash, c);
  return c;
}

std::vector<TokenLogprob> Gateway::score_logprobs(std::string_view backend_id, std::string_view s) {
  Slot& sl = slot(backend_id);
  if (!sl.spec.supports_logprobs) {
    throw Error(Errc::unsupported_capability, "backend '" + sl.spec.id + "' does not support logprobs");
  }
  if (text::normalize(s).empty()) return {};
  auto out = with_retries(sl, [&] { return sl.impl->score(s); });
  check_logprobs(out, sl.spec.id);
  return out;
}

}  // namespace safealign
