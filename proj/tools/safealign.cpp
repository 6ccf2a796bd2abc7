// safealign: command-line entry point for the dataset pipeline and the
// evaluation workflow.
//
// Exit codes: 0 success, 2 invalid config or usage, 3 stage or command
// failure.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "safealign/config.hpp"
#include "safealign/error.hpp"
#include "safealign/eval.hpp"
#include "safealign/log.hpp"
#include "safealign/pipeline.hpp"
#include "safealign/review_server.hpp"

namespace {

using nlohmann::json;
using namespace safealign;

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kFailed = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run-config JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--output", c.output, "Override the output directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = RunConfig::load(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.output) cfg.output_dir = std::filesystem::absolute(*c.output);
  return cfg;
}

int report_problems(const std::vector<std::string>& problems) {
  for (const auto& p : problems) std::cerr << "config: " << p << "\n";
  return problems.empty() ? kOk : kInvalid;
}

int run_stages(const Common& c, std::vector<Stage> stages, bool resume) {
  RunConfig cfg = load_config(c);
  if (int rc = report_problems(cfg.validate()); rc != kOk) return rc;
  RunOptions opts;
  opts.stages = std::move(stages);
  opts.resume = resume;
  RunState state = run_pipeline(cfg, opts);
  json out = state.to_json();
  out["executed"] = state.executed;
  out["skipped"] = state.skipped;
  std::cout << out.dump(2) << "\n";
  return state.failed() ? kFailed : kOk;
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg) {
  GatewayOptions go;
  go.cache_path = cfg.cache;
  auto gw = std::make_unique<Gateway>(go);
  register_backends(*gw, cfg);
  return gw;
}

int serve(const RunConfig& cfg, ReviewServerOptions opts) {
  VerdictStore store = VerdictStore::open(eval_dir(cfg));
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  ReviewServer server(store, std::move(opts));
  const int port = server.start();
  std::cout << json{{"listening", port}, {"items", store.size()}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-alignment dataset pipeline and evaluation harness"};
  app.require_subcommand(1);

  Common common;
  bool resume = false;
  std::string stage_list = "all";

  auto* run = app.add_subcommand("run", "Run pipeline stages in dependency order");
  add_common(run, common);
  run->add_option("--stages", stage_list, "Comma-separated stages, or all");
  run->add_flag("--resume", resume, "Skip stages whose checkpoints are current");

  std::map<CLI::App*, Stage> stage_cmds;
  for (Stage s : kStages) {
    auto* cmd = app.add_subcommand(std::string(to_string(s)), "Run only the " + std::string(to_string(s)) + " stage");
    add_common(cmd, common);
    cmd->add_flag("--resume", resume, "Skip the stage if its checkpoint is current");
    stage_cmds[cmd] = s;
  }

  auto* validate = app.add_subcommand("validate", "Check a run config and list every problem");
  add_common(validate, common);

  auto* eval_build_cmd = app.add_subcommand("eval-build", "Draw the stratified eval set");
  add_common(eval_build_cmd, common);
  auto* eval_mc_cmd = app.add_subcommand("eval-mc", "Answer and score multiple-choice items");
  add_common(eval_mc_cmd, common);
  auto* eval_judge_cmd = app.add_subcommand("eval-judge", "Judge open-generation answers");
  add_common(eval_judge_cmd, common);
  auto* eval_report_cmd = app.add_subcommand("eval-report", "Write the per-category report");
  add_common(eval_report_cmd, common);
  std::optional<std::string> baseline;
  eval_report_cmd->add_option("--baseline", baseline, "Earlier report.json to compare against")
      ->check(CLI::ExistingFile);

  auto* serve_cmd = app.add_subcommand("serve-review", "Serve the review API over the verdict store");
  add_common(serve_cmd, common);
  ReviewServerOptions server_opts;
  server_opts.port = 8787;
  std::optional<std::string> static_dir;
  serve_cmd->add_option("--host", server_opts.host, "Bind address");
  serve_cmd->add_option("--port", server_opts.port, "Port, 0 for any free port");
  serve_cmd->add_option("--static", static_dir, "Directory with the review UI")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return run_stages(common, parse_stage_list(stage_list), resume);
    for (const auto& [cmd, stage] : stage_cmds) {
      if (*cmd) return run_stages(common, {stage}, resume);
    }
    RunConfig cfg = load_config(common);
    if (*validate) {
      const auto problems = cfg.validate();
      std::cout << json{{"problems", problems}}.dump(2) << "\n";
      return problems.empty() ? kOk : kInvalid;
    }
    if (int rc = report_problems(cfg.validate()); rc != kOk) return rc;
    if (*eval_build_cmd) {
      EvalSet set = eval_build(cfg);
      std::cout << set.manifest.dump(2) << "\n";
    } else if (*eval_mc_cmd) {
      auto gw = make_gateway(cfg);
      McSummary s = eval_mc(cfg, *gw);
      std::cout << render_table({to_row(cfg.eval.mc_backend, s.mc)});
      if (s.responsibility) std::cout << "responsibility accuracy: " << s.responsibility->mean << "\n";
    } else if (*eval_judge_cmd) {
      auto gw = make_gateway(cfg);
      JudgeSummary s = eval_judge(cfg, *gw);
      std::cout << json{{"judged", s.judged}, {"skipped", s.skipped}, {"failed", s.failed}}.dump() << "\n";
      return s.failed ? kFailed : kOk;
    } else if (*eval_report_cmd) {
      std::optional<std::filesystem::path> base;
      if (baseline) base = *baseline;
      json doc = eval_report(cfg, base);
      std::cout << doc["table"].get<std::string>();
    } else if (*serve_cmd) {
      if (static_dir) server_opts.static_dir = *static_dir;
      return serve(cfg, server_opts);
    }
    return kOk;
  } catch (const Error& e) {
    log::error("command_failed", {{"error", e.what()}});
    std::cerr << e.what() << "\n";
    return e.code() == Errc::invalid_config ? kInvalid : kFailed;
  } catch (const std::exception& e) {
    log::error("command_failed", {{"error", e.what()}});
    std::cerr << e.what() << "\n";
    return kFailed;
  }
}
