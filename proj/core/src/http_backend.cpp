#include <httplib.h>

#include "safealign/error.hpp"
#include "safealign/gateway.hpp"

namespace safealign {

using nlohmann::json;

HttpChatBackend::HttpChatBackend(BackendSpec spec, std::optional<std::string> api_key)
    : spec_(std::move(spec)), api_key_(std::move(api_key)) {
  const std::string& url = spec_.endpoint.value();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::invalid_config, "endpoint lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

json HttpChatBackend::post(const std::string& path, const json& body) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(spec_.timeout_seconds);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
  auto res = client.Post(base_path_ + path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::backend_unreachable, spec_.id + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(Errc::backend_unreachable, spec_.id + ": HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(Errc::malformed_request, spec_.id + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_backend_reply, spec_.id + ": " + e.what());
  }
}

Completion HttpChatBackend::complete(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  json body = {{"model", spec_.model},
               {"messages", std::move(messages)},
               {"temperature", req.temperature},
               {"top_p", req.top_p},
               {"max_tokens", req.max_tokens}};
  if (req.seed) body["seed"] = *req.seed;
  json reply = post("/chat/completions", body);
  try {
    Completion c;
    c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_backend_reply, spec_.id + ": " + e.what());
  }
}

std::vector<TokenLogprob> HttpChatBackend::score(std::string_view text) {
  json body = {{"model", spec_.model},
               {"prompt", std::string(text)},
               {"max_tokens", 0},
               {"echo", true},
               {"logprobs", 0}};
  json reply = post("/completions", body);
  try {
    const json& lp = reply.at("choices").at(0).at("logprobs");
    const json& tokens = lp.at("tokens");
    const json& values = lp.at("token_logprobs");
    if (tokens.size() != values.size()) throw Error(Errc::malformed_backend_reply, spec_.id + ": token/logprob length mismatch");
    std::vector<TokenLogprob> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      // The first prompt token has no conditional probability.
      if (values[i].is_null()) continue;
      out.push_back({tokens[i].get<std::string>(), values[i].get<double>()});
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_backend_reply, spec_.id + ": " + e.what());
  }
}

}  // namespace safealign
