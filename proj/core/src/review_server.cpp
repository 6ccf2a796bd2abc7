#include "safealign/review_server.hpp"

#include <thread>

#include <httplib.h>

#include "safealign/error.hpp"
#include "safealign/log.hpp"

namespace safealign {

using nlohmann::json;

struct ReviewServer::Impl {
  VerdictStore& store;
  ReviewServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  Impl(VerdictStore& s, ReviewServerOptions o) : store(s), options(std::move(o)) { routes(); }

  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send(res, status, json{{"error", code}, {"message", message}});
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = options.default_queue_limit;
      if (req.has_param("limit")) {
        try {
          const long long v = std::stoll(req.get_param_value("limit"));
          if (v < 0) throw std::invalid_argument("negative");
          limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          return send_error(res, 400, "invalid-argument", "limit must be a non-negative integer");
        }
      }
      json items = json::array();
      for (const auto& item : store.queue(limit)) {
        items.push_back({{"id", item.id},
                         {"question", item.question},
                         {"model_answer", item.model_answer.value_or("")},
                         {"category", item.category ? code(*item.category) : "none"},
                         {"category_name", item.category ? display_name(*item.category) : ""},
                         {"judge_raw", item.verdict ? item.verdict->judge_raw : ""}});
      }
      send(res, 200, json{{"items", std::move(items)}, {"pending", store.progress().pending}});
    });

    server.Post("/api/verdict", [this](const httplib::Request& req, httplib::Response& res) {
      std::string id;
      VerdictLabel label;
      try {
        const json body = json::parse(req.body);
        id = body.at("item_id").get<std::string>();
        const std::string l = body.at("label").get<std::string>();
        if (l != "safe" && l != "unsafe") return send_error(res, 400, "invalid-argument", "label must be safe or unsafe");
        label = parse_verdict_label(l);
      } catch (const json::exception& e) {
        return send_error(res, 400, "malformed-request", e.what());
      }
      try {
        Verdict v = store.adjudicate(id, label);
        log::info("verdict_adjudicated", {{"item", id}, {"label", to_string(v.label)}});
        send(res, 200, json{{"item_id", id}, {"verdict", v}, {"progress", store.progress()}});
      } catch (const Error& e) {
        const int status = e.code() == Errc::conflict ? 409 : e.code() == Errc::not_found ? 404 : 400;
        json body = {{"error", to_string(e.code())}, {"message", e.what()}};
        if (status == 409) {
          if (auto item = store.find(id); item && item->verdict) body["verdict"] = *item->verdict;
          body["progress"] = store.progress();
        }
        send(res, status, body);
      }
    });

    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, json(store.progress()));
    });

    server.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      ScenarioReport r = store.report();
      json body = r;
      body["table"] = render_table({to_row("current", r)});
      send(res, 200, body);
    });

    if (options.static_dir) {
      if (!server.set_mount_point("/", options.static_dir->string())) {
        throw Error(Errc::unreadable_path, "static directory " + options.static_dir->string() + " not found");
      }
    }
  }

  int bind() {
    if (options.port == 0) {
      port = server.bind_to_any_port(options.host);
    } else {
      port = server.bind_to_port(options.host, options.port) ? options.port : -1;
    }
    if (port <= 0) throw Error(Errc::io_error, "cannot bind " + options.host + ":" + std::to_string(options.port));
    return port;
  }
};

ReviewServer::ReviewServer(VerdictStore& store, ReviewServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  const int port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  log::info("review_server_started", {{"host", impl_->options.host}, {"port", port}});
  return port;
}

void ReviewServer::run() {
  const int port = impl_->bind();
  log::info("review_server_started", {{"host", impl_->options.host}, {"port", port}});
  impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ReviewServer::port() const { return impl_->port; }

}  // namespace safealign
