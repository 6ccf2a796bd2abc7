#include "safealign/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <mutex>
#include <string>

#include "safealign/jsonl.hpp"

namespace safealign::log {
namespace {

Level initial_level() {
  const char* env = std::getenv("SAFEALIGN_LOG");
  if (env == nullptr) return Level::info;
  std::string v(env);
  if (v == "debug") return Level::debug;
  if (v == "warn") return Level::warn;
  if (v == "error") return Level::error;
  if (v == "off") return Level::off;
  return Level::info;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{initial_level()};
  return level;
}

const char* name(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    case Level::off: return "off";
  }
  return "info";
}

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void set_level(Level level) noexcept { current().store(level); }
Level level() noexcept { return current().load(); }

void emit(Level lvl, std::string_view event, const nlohmann::json& fields) {
  if (lvl < current().load() || current().load() == Level::off) return;
  nlohmann::json line = {{"ts", utc_now()}, {"level", name(lvl)}, {"event", event}};
  if (fields.is_object()) {
    for (const auto& [k, v] : fields.items()) line[k] = v;
  }
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << jsonl::dump(line) << '\n';
}

}  // namespace safealign::log
