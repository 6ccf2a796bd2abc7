#include "safealign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <memory>
#include <unordered_set>

#include "safealign/assembler.hpp"
#include "safealign/corpus.hpp"
#include "safealign/diversity.hpp"
#include "safealign/error.hpp"
#include "safealign/intent.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"
#include "safealign/parallel.hpp"
#include "safealign/regen.hpp"
#include "safealign/reward.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::tag: return "tag";
    case Stage::diversify: return "diversify";
    case Stage::regen: return "regen";
    case Stage::score: return "score";
    case Stage::assemble: return "assemble";
  }
  return "ingest";
}

Stage parse_stage(std::string_view s) {
  for (auto st : kStages) {
    if (to_string(st) == s) return st;
  }
  throw Error(Errc::invalid_argument, "unknown stage '" + std::string(s) + "'");
}

std::vector<Stage> parse_stage_list(std::string_view s) {
  std::vector<Stage> out;
  if (text::trim(s).empty() || text::trim(s) == "all") return out;
  for (const auto& part : text::split_any(s, {","})) {
    const std::string name = text::trim(part);
    if (name.empty()) continue;
    Stage st = parse_stage(name);
    if (std::find(out.begin(), out.end(), st) == out.end()) out.push_back(st);
  }
  return out;
}

bool RunState::failed() const {
  return std::any_of(stages.begin(), stages.end(), [](const auto& kv) { return kv.second.status == "failed"; });
}

json RunState::to_json() const {
  json st = json::object();
  for (const auto& [name, s] : stages) {
    st[name] = {{"status", s.status},
                {"digest", s.digest},
                {"input_digest", s.input_digest},
                {"started_at", s.started_at},
                {"finished_at", s.finished_at},
                {"error", s.error}};
  }
  return json{{"seed", seed}, {"stages", std::move(st)}};
}

RunState RunState::from_json(const json& j) {
  RunState r;
  r.seed = j.value("seed", std::uint64_t{0});
  const json stages = j.value("stages", json::object());
  for (const auto& [name, s] : stages.items()) {
    StageState st;
    st.status = s.value("status", "pending");
    st.digest = s.value("digest", "");
    st.input_digest = s.value("input_digest", "");
    st.started_at = s.value("started_at", "");
    st.finished_at = s.value("finished_at", "");
    st.error = s.value("error", "");
    r.stages[name] = std::move(st);
  }
  return r;
}

RunState RunState::load(const fs::path& path) {
  if (!fs::exists(path)) return {};
  try {
    return from_json(json::parse(jsonl::read_file(path)));
  } catch (const json::exception& e) {
    log::warn("run_state_unreadable", {{"path", path.string()}, {"error", e.what()}});
    return {};
  }
}

fs::path stage_dir(const RunConfig& config, Stage s) { return config.output_dir / std::string(to_string(s)); }
fs::path eval_dir(const RunConfig& config) { return config.output_dir / "eval"; }

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Context {
  const RunConfig& config;
  Gateway& gateway;
};

void write_json(const fs::path& path, const json& doc) { jsonl::atomic_write(path, doc.dump(2) + "\n"); }

void stage_ingest(Context& ctx, const fs::path&, const fs::path& out) {
  std::vector<IngestResult> results = ingest_all(ctx.config.corpora, ctx.config.workers);
  std::vector<AlignmentSample> all;
  json manifests = json::array();
  for (auto& r : results) {
    r.manifest.path = r.manifest.path.lexically_proximate(ctx.config.base_dir);
    manifests.push_back(r.manifest);
    log::info("corpus_ingested", manifests.back());
    for (auto& s : r.samples) all.push_back(std::move(s));
  }
  write_store(out / "samples", all);
  write_json(out / "manifests.json", manifests);
}

void stage_tag(Context& ctx, const fs::path& in, const fs::path& out) {
  std::vector<AlignmentSample> samples = read_store(in / "samples");
  const IntentTaxonomy taxonomy = ctx.config.load_taxonomy();
  IntentTagger tagger(ctx.gateway, ctx.config.tagging_backend, ctx.config.prompt_template("intent"));
  parallel_for(samples.size(), ctx.config.workers, [&](std::size_t i) { tagger.tag(samples[i]); });

  std::vector<AlignmentSample> forwarded;
  std::string review;
  std::size_t uncategorized = 0, held = 0;
  for (auto& s : samples) {
    NormalizeResult r = normalize_labels(s.intent_labels, taxonomy);
    apply_normalization(s, r);
    if (r.needs_review() || !r.unmapped.empty()) {
      review += jsonl::dump(json{{"id", s.id},
                                 {"labels", s.intent_labels},
                                 {"unmapped_labels", r.unmapped},
                                 {"category", r.category ? json(code(*r.category)) : json(nullptr)}});
      review += '\n';
    }
    if (r.needs_review()) {
      ++uncategorized;
      if (taxonomy.unmapped_policy() == UnmappedPolicy::hold_for_review) {
        ++held;
        continue;
      }
    }
    forwarded.push_back(std::move(s));
  }
  LabelHistogram h = histogram(samples, 20);
  write_store(out / "samples", forwarded);
  jsonl::atomic_write(out / "review.jsonl", review);
  write_json(out / "histogram.json", h);
  write_json(out / "summary.json", json{{"tagged", samples.size()},
                                        {"forwarded", forwarded.size()},
                                        {"uncategorized", uncategorized},
                                        {"held_for_review", held},
                                        {"taxonomy_version", taxonomy.version()},
                                        {"unmapped_policy", to_string(taxonomy.unmapped_policy())},
                                        {"template_version", tagger.prompt_template().version}});
  log::info("tag_done", {{"tagged", samples.size()}, {"uncategorized", uncategorized}, {"held", held}});
}

struct AugmentCall {
  Category category;
  bool keyword = true;
  std::size_t n = 0;
  std::size_t round = 0;
  const AlignmentSample* source = nullptr;
};

std::vector<AugmentedPrompt> run_augmentation(Context& ctx, const DiversityPlan& plan,
                                              const std::vector<AlignmentSample>& kept,
                                              std::unordered_set<std::string>& known_ids, json& report) {
  std::map<Category, std::vector<const AlignmentSample*>> by_cat;
  for (const auto& s : kept) by_cat[*s.category].push_back(&s);
  std::map<Category, std::size_t> deficits;
  for (const auto& info : all_categories()) {
    auto cap = plan.cap_for(info.category);
    const std::size_t have = by_cat.count(info.category) ? by_cat[info.category].size() : 0;
    if (cap && *cap > have) deficits[info.category] = *cap - have;
  }
  const auto allocation = allocate_budget(deficits, plan.budget);
  report["deficits"] = json::object();
  report["allocation"] = json::object();
  for (const auto& [c, d] : deficits) report["deficits"][std::string(code(c))] = d;
  for (const auto& [c, a] : allocation) report["allocation"][std::string(code(c))] = a;
  if (plan.budget == 0) return {};
  if (ctx.config.augment_backend.empty()) {
    log::warn("augmentation_skipped", {{"reason", "no diversity backend configured"}, {"budget", plan.budget}});
    report["skipped"] = true;
    return {};
  }

  Augmenter aug(ctx.gateway, ctx.config.augment_backend, plan, ctx.config.prompt_template("augment_keyword"),
                ctx.config.prompt_template("augment_derive"));
  std::vector<AugmentCall> calls;
  std::map<Category, std::vector<std::string>> keywords, shots;
  for (const auto& [cat, amount] : allocation) {
    if (amount == 0) continue;
    const auto& sources = by_cat[cat];
    std::size_t kw = static_cast<std::size_t>(std::llround(static_cast<double>(amount) * plan.keyword_fraction));
    if (sources.empty()) kw = amount;
    const std::size_t derive = amount - kw;
    auto kit = ctx.config.keywords.find(cat);
    keywords[cat] = kit != ctx.config.keywords.end() && !kit->second.empty()
                        ? kit->second
                        : std::vector<std::string>{std::string(display_name(cat))};
    for (std::size_t i = 0; i < sources.size() && i < ctx.config.shots; ++i) shots[cat].push_back(sources[i]->prompt);
    for (std::size_t left = kw, round = 0; left > 0; ++round) {
      const std::size_t n = std::min(left, plan.per_call);
      calls.push_back({cat, true, n, round, nullptr});
      left -= n;
    }
    for (std::size_t left = derive, k = 0; left > 0; ++k) {
      const std::size_t n = std::min(left, plan.per_call);
      calls.push_back({cat, false, n, k / sources.size(), sources[k % sources.size()]});
      left -= n;
    }
  }

  auto request_for = [&](const AugmentCall& c) {
    return c.keyword ? aug.keyword_request(c.category, keywords[c.category], shots[c.category], c.n, c.round)
                     : aug.derive_request(*c.source, c.n, c.round);
  };
  // Requests are fixed up front, so they can be issued in parallel; the
  // ordered pass below then replays them from the cache and dedups in a
  // deterministic order.
  parallel_for(calls.size(), ctx.config.workers, [&](std::size_t i) {
    try {
      ctx.gateway.complete(request_for(calls[i]));
    } catch (const Error&) {
    }
  });

  std::vector<AugmentedPrompt> out;
  std::size_t zero_usable = 0, dropped = 0, failed = 0;
  for (const auto& c : calls) {
    AugmentOutcome o;
    try {
      o = c.keyword ? aug.augment_keyword(c.category, keywords[c.category], shots[c.category], c.n, known_ids, c.round)
                    : aug.augment_derive(*c.source, c.n, known_ids, c.round);
    } catch (const Error& e) {
      if (e.code() == Errc::invalid_argument) throw;
      ++failed;
      log::warn("augment_call_failed", {{"category", code(c.category)}, {"error", e.what()}});
      continue;
    }
    zero_usable += o.zero_usable ? 1 : 0;
    dropped += o.dropped_duplicates;
    for (auto& p : o.prompts) out.push_back(std::move(p));
  }
  report["calls"] = calls.size();
  report["failed_calls"] = failed;
  report["zero_usable_calls"] = zero_usable;
  report["dropped_duplicates"] = dropped;
  report["generated"] = out.size();
  return out;
}

void stage_diversify(Context& ctx, const fs::path& in, const fs::path& out) {
  std::vector<AlignmentSample> samples = read_store(in / "samples");
  std::vector<AlignmentSample> categorized, other;
  std::unordered_set<std::string> known_ids;
  for (auto& s : samples) {
    known_ids.insert(s.id);
    (s.category ? categorized : other).push_back(std::move(s));
  }
  DiversityPlan plan = ctx.config.plan ? *ctx.config.plan : default_plan(categorized, ctx.config.seed);
  plan.seed = ctx.config.seed;
  std::vector<AlignmentSample> kept = rejection_sample(categorized, plan);
  json report = json::object();
  std::vector<AugmentedPrompt> augmented = run_augmentation(ctx, plan, kept, known_ids, report);

  std::sort(other.begin(), other.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::map<std::string, std::size_t> per_category;
  for (const auto& s : kept) ++per_category[std::string(code(*s.category))];
  const std::size_t kept_count = kept.size();
  std::vector<AlignmentSample> result = std::move(kept);
  for (auto& s : other) result.push_back(std::move(s));
  for (const auto& p : augmented) {
    result.push_back(to_sample(p));
    ++per_category[std::string(code(p.category))];
  }
  write_store(out / "samples", result);
  write_json(out / "summary.json", json{{"plan", plan},
                                        {"input", categorized.size() + other.size()},
                                        {"kept", kept_count},
                                        {"other", other.size()},
                                        {"augmented", augmented.size()},
                                        {"per_category", per_category},
                                        {"augmentation", std::move(report)}});
  log::info("diversify_done", {{"kept", kept_count}, {"other", other.size()}, {"augmented", augmented.size()}});
}

void stage_regen(Context& ctx, const fs::path& in, const fs::path& out) {
  std::vector<AlignmentSample> samples = read_store(in / "samples");
  Regenerator regen(ctx.gateway, ctx.config.safe_model, ctx.config.prompt_template("regen"),
                    ctx.config.regen_temperature, ctx.config.regen_top_p);
  std::vector<char> failed(samples.size(), 0), missing(samples.size(), 0);
  parallel_for(samples.size(), ctx.config.workers, [&](std::size_t i) {
    try {
      missing[i] = regen.regenerate(samples[i]).missing_delimiter;
    } catch (const Error& e) {
      if (e.code() != Errc::regeneration_failed) throw;
      failed[i] = 1;
      log::warn("regeneration_failed", {{"sample", samples[i].id}});
    }
  });
  write_store(out / "samples", samples);
  const auto nfailed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  write_json(out / "summary.json", json{{"samples", samples.size()},
                                        {"regenerated", samples.size() - nfailed},
                                        {"failed", nfailed},
                                        {"missing_delimiter", std::count(missing.begin(), missing.end(), 1)},
                                        {"template_version", regen.prompt_template().version}});
}

std::unique_ptr<PerplexityScorer> make_ppl_scorer(Context& ctx) {
  const PplConfig& p = ctx.config.ppl;
  if (p.kind == "backend") return std::make_unique<BackendPerplexity>(ctx.gateway, p.backend);
  auto model = std::make_unique<CharNgramModel>(p.order);
  const fs::path fit = p.fit_corpus ? *p.fit_corpus : *ctx.config.general_corpus;
  std::vector<std::string> texts;
  for (auto& r : load_general(fit)) {
    texts.push_back(std::move(r.instruction));
    texts.push_back(std::move(r.response));
  }
  model->fit(texts);
  return model;
}

void stage_score(Context& ctx, const fs::path& in, const fs::path& out) {
  std::vector<AlignmentSample> samples = read_store(in / "samples");
  auto ppl = make_ppl_scorer(ctx);
  SafetyJudge judge(ctx.gateway, ctx.config.judge_backend, ctx.config.prompt_template("judge_pair"),
                    ctx.config.prompt_template("judge_instruction"));
  RewardScorer scorer(*ppl, judge);
  parallel_for(samples.size(), ctx.config.workers, [&](std::size_t i) { scorer.score(samples[i]); });
  std::map<std::string, std::size_t> failures;
  std::size_t degenerate = 0;
  for (const auto& s : samples) {
    for (const auto& f : s.features->provenance.failures) ++failures[f.substr(0, f.find(':'))];
    degenerate += s.features->provenance.degenerate_pair ? 1 : 0;
  }
  write_store(out / "samples", samples);
  write_json(out / "summary.json", json{{"samples", samples.size()},
                                        {"ppl_scorer", ppl->name()},
                                        {"failures", failures},
                                        {"degenerate_pairs", degenerate}});
}

json template_versions(const RunConfig& config) {
  json out = json::object();
  for (const char* name : {"intent", "augment_keyword", "augment_derive", "regen", "judge_pair", "judge_instruction"}) {
    out[name] = config.prompt_template(name).version;
  }
  return out;
}

void stage_assemble(Context& ctx, const fs::path& in, const fs::path& out) {
  std::vector<AlignmentSample> samples = read_store(in / "samples");
  SelectionResult sel = select(std::move(samples), ctx.config.selection);
  ExportOptions eo;
  eo.format = ctx.config.export_format;
  eo.seed = ctx.config.seed;
  eo.general_corpus = ctx.config.general_corpus;
  eo.template_versions = template_versions(ctx.config);
  ExportResult r = mix_and_export(sel, ctx.config.selection, eo, out);
  std::string rejected;
  for (const auto& s : sel.rejected) {
    rejected += jsonl::dump(json{{"id", s.id}, {"reason", *s.rejection_reason}});
    rejected += '\n';
  }
  jsonl::atomic_write(out / "rejected.jsonl", rejected);
  log::info("assemble_done", {{"selected", sel.selected.size()},
                              {"rejected", sel.rejected.size()},
                              {"general", r.general_count},
                              {"ratio", r.manifest["ratio"]}});
}

using StageFn = void (*)(Context&, const fs::path&, const fs::path&);

StageFn stage_fn(Stage s) {
  switch (s) {
    case Stage::ingest: return stage_ingest;
    case Stage::tag: return stage_tag;
    case Stage::diversify: return stage_diversify;
    case Stage::regen: return stage_regen;
    case Stage::score: return stage_score;
    case Stage::assemble: return stage_assemble;
  }
  return stage_ingest;
}

void save_state(const fs::path& path, const RunState& state) { write_json(path, state.to_json()); }

void commit_dir(const fs::path& tmp, const fs::path& dir) {
  fs::path old = dir;
  old.replace_filename(".old-" + dir.filename().string());
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

std::string joined(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
  return out;
}

}  // namespace

RunState run_pipeline(const RunConfig& config, const RunOptions& options) {
  if (auto problems = config.validate(); !problems.empty()) throw Error(Errc::invalid_config, joined(problems));
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  const fs::path state_path = out / "run_state.json";
  RunState state = (options.resume || !options.stages.empty()) ? RunState::load(state_path) : RunState{};
  state.seed = config.seed;
  state.executed.clear();
  state.skipped.clear();

  std::unique_ptr<Gateway> owned;
  Gateway* gateway = options.gateway;
  if (!gateway) {
    GatewayOptions go;
    go.cache_path = config.cache;
    owned = std::make_unique<Gateway>(go);
    register_backends(*owned, config);
    gateway = owned.get();
  }
  Context ctx{config, *gateway};

  auto requested = [&](Stage s) {
    return options.stages.empty() || std::find(options.stages.begin(), options.stages.end(), s) != options.stages.end();
  };
  std::size_t last = 0;
  for (std::size_t i = 0; i < kStages.size(); ++i) {
    if (requested(kStages[i])) last = i;
  }

  const std::string cfg_digest = config.digest();
  std::string upstream_digest;
  fs::path upstream_dir;
  const char* fault = std::getenv("SAFEALIGN_FAULT_STAGE");
  for (std::size_t i = 0; i <= last; ++i) {
    const Stage s = kStages[i];
    const std::string name(to_string(s));
    const fs::path dir = stage_dir(config, s);
    const std::string expected_input = text::sha256_hex(cfg_digest + ":" + name + ":" + upstream_digest);
    StageState& st = state.stages[name];
    const bool valid = st.status == "done" && fs::is_directory(dir) && st.input_digest == expected_input &&
                       jsonl::digest_dir(dir) == st.digest;
    if (!requested(s) || (options.resume && valid)) {
      if (!valid) {
        throw Error(Errc::invalid_argument, "stage '" + std::string(to_string(kStages[last])) +
                                                "' needs a current '" + name + "' checkpoint; run that stage first");
      }
      if (requested(s)) {
        state.skipped.push_back(name);
        log::info("stage_skipped", {{"stage", name}, {"digest", st.digest}});
      }
      upstream_digest = st.digest;
      upstream_dir = dir;
      continue;
    }

    st = StageState{};
    st.status = "running";
    st.started_at = utc_now();
    save_state(state_path, state);
    log::info("stage_started", {{"stage", name}});
    const fs::path tmp = out / (".tmp-" + name);
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    try {
      stage_fn(s)(ctx, upstream_dir, tmp);
    } catch (const std::exception& e) {
      st.status = "failed";
      st.error = e.what();
      st.finished_at = utc_now();
      save_state(state_path, state);
      fs::remove_all(tmp);
      log::error("stage_failed", {{"stage", name}, {"error", e.what()}});
      break;
    }
    if (fault && name == fault) {
      log::warn("fault_injected", {{"stage", name}});
      std::raise(SIGKILL);
    }
    commit_dir(tmp, dir);
    st.digest = jsonl::digest_dir(dir);
    st.input_digest = expected_input;
    st.status = "done";
    st.finished_at = utc_now();
    save_state(state_path, state);
    state.executed.push_back(name);
    log::info("stage_done", {{"stage", name}, {"digest", st.digest}});
    upstream_digest = st.digest;
    upstream_dir = dir;
  }
  return state;
}

EvalSet eval_build(const RunConfig& config) {
  if (!config.eval.pool) throw Error(Errc::invalid_config, "eval.pool is not configured");
  EvalSet set = build_eval_set(load_eval_items(*config.eval.pool), config.eval.per_category_n, config.seed);
  const fs::path dir = eval_dir(config);
  VerdictStore::create(dir, set.items);
  write_json(dir / "manifest.json", set.manifest);
  return set;
}

McSummary eval_mc(const RunConfig& config, Gateway& gateway) {
  if (config.eval.mc_backend.empty()) throw Error(Errc::invalid_config, "eval.mc_backend is not configured");
  const fs::path dir = eval_dir(config);
  std::vector<EvalItem> items = load_eval_items(dir / "items.jsonl");
  generate_answers(items, gateway, config.eval.mc_backend, config.prompt_template("mc_answer"), config.workers);
  std::vector<EvalItem> answered;
  for (const auto& item : items) {
    if (item.kind != EvalKind::open_generation) answered.push_back(item);
  }
  write_eval_items(dir / "mc_answers.jsonl", answered);
  McSummary out;
  out.mc = score_mc(items);
  json doc = {{"mc", out.mc}, {"table", render_table({to_row(config.eval.mc_backend, out.mc)})}};
  const bool has_rmc = std::any_of(items.begin(), items.end(),
                                   [](const EvalItem& i) { return i.kind == EvalKind::responsibility_mc; });
  if (has_rmc && !config.eval.evaluators.empty()) {
    out.responsibility = evaluate_responsibility(items, gateway, config.eval.evaluators,
                                                 config.prompt_template("mc_extract"), config.workers);
    doc["responsibility"] = {{"per_evaluator", out.responsibility->per_evaluator}, {"mean", out.responsibility->mean}};
  }
  write_json(dir / "mc_report.json", doc);
  return out;
}

JudgeSummary eval_judge(const RunConfig& config, Gateway& gateway) {
  if (config.eval.judge_backend.empty() || config.eval.judged_backend.empty()) {
    throw Error(Errc::invalid_config, "eval.judge_backend and eval.judged_backend must be configured");
  }
  VerdictStore store = VerdictStore::open(eval_dir(config));
  std::vector<EvalItem> todo;
  JudgeSummary summary;
  for (auto& item : store.snapshot()) {
    if (item.verdict) {
      ++summary.skipped;
    } else {
      todo.push_back(std::move(item));
    }
  }
  JudgeSetup setup{config.eval.judged_backend, config.eval.judge_backend, config.prompt_template("judge_generation")};
  std::atomic<std::size_t> judged{0}, failed{0};
  parallel_for(todo.size(), config.workers, [&](std::size_t i) {
    try {
      Verdict v = judge_generation(todo[i], gateway, setup);
      store.record_judge(todo[i].id, v.label, v.judge_raw, todo[i].model_answer);
      ++judged;
    } catch (const Error& e) {
      ++failed;
      log::warn("judge_failed", {{"item", todo[i].id}, {"error", e.what()}});
    }
  });
  summary.judged = judged;
  summary.failed = failed;
  return summary;
}

json eval_report(const RunConfig& config, const std::optional<fs::path>& baseline) {
  VerdictStore store = VerdictStore::open(eval_dir(config));
  ScenarioReport report = store.report();
  json doc = report;
  std::vector<ScoreRow> rows;
  if (baseline) {
    ScenarioReport base;
    try {
      base = json::parse(jsonl::read_file(*baseline)).get<ScenarioReport>();
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_request, baseline->string() + ": " + e.what());
    }
    json deltas = json::array();
    for (const auto& d : compare_reports(base, report)) {
      auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
      deltas.push_back({{"category", d.category}, {"baseline", opt(d.a)}, {"current", opt(d.b)}, {"delta", opt(d.delta)}});
    }
    doc["deltas"] = std::move(deltas);
    rows.push_back(to_row("baseline", base));
  }
  rows.push_back(to_row("current", report));
  const std::string table = render_table(rows);
  doc["table"] = table;
  write_json(eval_dir(config) / "report.json", doc);
  jsonl::atomic_write(eval_dir(config) / "report.txt", table);
  return doc;
}

}  // namespace safealign
