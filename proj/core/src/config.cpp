#include "safealign/config.hpp"

#include <set>

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string>& template_names() {
  static const std::set<std::string> names = {"intent",     "augment_keyword",   "augment_derive",
                                              "regen",      "judge_pair",        "judge_instruction",
                                              "judge_generation", "mc_answer",   "mc_extract"};
  return names;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return resolve(base, j[key].get<std::string>());
}

std::string rel(const fs::path& p, const fs::path& base) { return p.lexically_proximate(base).generic_string(); }

}  // namespace

RunConfig RunConfig::parse(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    c.seed = doc.value("seed", c.seed);
    c.output_dir = resolve(base_dir, doc.value("output_dir", std::string("out")));
    c.workers = doc.value("workers", c.workers);
    c.cache = opt_path(doc, "cache", base_dir);

    for (const auto& b : doc.value("backends", json::array())) {
      BackendSpec spec = b.get<BackendSpec>();
      if (spec.fixture) spec.fixture = resolve(base_dir, spec.fixture->string());
      c.backends.push_back(std::move(spec));
    }
    for (const auto& m : doc.value("corpora", json::array())) {
      CorpusManifest cm;
      cm.path = resolve(base_dir, m.at("path").get<std::string>());
      cm.adapter = parse_adapter(m.value("adapter", "generic-chat"));
      cm.source = m.value("source", cm.path.stem().string());
      c.corpora.push_back(std::move(cm));
    }
    c.taxonomy = opt_path(doc, "taxonomy", base_dir);
    if (doc.contains("unmapped_policy") && !doc["unmapped_policy"].is_null()) {
      const std::string p = doc["unmapped_policy"].get<std::string>();
      if (p == "bucket-other") {
        c.unmapped_policy = UnmappedPolicy::bucket_other;
      } else if (p == "hold-for-review") {
        c.unmapped_policy = UnmappedPolicy::hold_for_review;
      } else {
        throw Error(Errc::invalid_config, "unknown unmapped_policy '" + p + "'");
      }
    }
    const json templates = doc.value("templates", json::object());
    for (const auto& [name, p] : templates.items()) {
      c.templates[name] = resolve(base_dir, p.get<std::string>());
    }

    const json tagging = doc.value("tagging", json::object());
    c.tagging_backend = tagging.value("backend", "");

    const json diversity = doc.value("diversity", json::object());
    if (diversity.contains("plan") && !(diversity["plan"].is_string() && diversity["plan"] == "auto")) {
      c.plan = diversity["plan"].get<DiversityPlan>();
    }
    c.augment_backend = diversity.value("backend", "");
    c.shots = diversity.value("shots", c.shots);
    const json keywords = diversity.value("keywords", json::object());
    for (const auto& [k, v] : keywords.items()) {
      auto cat = parse_category(k);
      if (!cat) throw Error(Errc::invalid_config, "diversity.keywords: unknown category '" + k + "'");
      c.keywords[*cat] = v.get<std::vector<std::string>>();
    }

    const json regen = doc.value("regen", json::object());
    c.safe_model = regen.value("safe_model", "");
    c.regen_temperature = regen.value("temperature", c.regen_temperature);
    c.regen_top_p = regen.value("top_p", c.regen_top_p);

    const json reward = doc.value("reward", json::object());
    c.judge_backend = reward.value("judge", "");
    const json ppl = reward.value("ppl", json::object());
    c.ppl.kind = ppl.value("kind", c.ppl.kind);
    c.ppl.backend = ppl.value("backend", "");
    c.ppl.order = ppl.value("order", c.ppl.order);
    c.ppl.fit_corpus = opt_path(ppl, "fit_corpus", base_dir);

    if (doc.contains("selection")) c.selection = doc["selection"].get<SelectionPolicy>();
    c.general_corpus = opt_path(doc, "general_corpus", base_dir);
    if (doc.contains("export")) c.export_format = parse_export_format(doc["export"].value("format", "instruction"));

    const json eval = doc.value("eval", json::object());
    c.eval.pool = opt_path(eval, "pool", base_dir);
    c.eval.per_category_n = eval.value("per_category_n", c.eval.per_category_n);
    c.eval.judged_backend = eval.value("judged_backend", "");
    c.eval.judge_backend = eval.value("judge_backend", "");
    c.eval.mc_backend = eval.value("mc_backend", "");
    c.eval.evaluators = eval.value("evaluators", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::invalid_config) throw;
    throw Error(Errc::invalid_config, e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(jsonl::read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, path.string() + ": " + e.what());
  }
  return parse(doc, fs::absolute(path).parent_path());
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> out;
  std::set<std::string> ids;
  for (const auto& b : backends) {
    for (auto& p : b.problems()) out.push_back(std::move(p));
    if (!ids.insert(b.id).second) out.push_back("backend '" + b.id + "' is defined twice");
    if (b.kind == BackendKind::fixture && b.fixture && !b.fixture->empty() && !fs::is_regular_file(*b.fixture)) {
      out.push_back("backend '" + b.id + "': fixture file " + b.fixture->string() + " does not exist");
    }
  }
  auto need_backend = [&](const std::string& role, const std::string& id) {
    if (id.empty()) {
      out.push_back(role + ": no backend configured");
    } else if (!ids.count(id)) {
      out.push_back(role + ": backend '" + id + "' is not defined");
    }
  };
  auto need_file = [&](const std::string& role, const fs::path& p) {
    if (!fs::is_regular_file(p)) out.push_back(role + ": " + p.string() + " does not exist");
  };

  if (corpora.empty()) out.emplace_back("corpora: at least one corpus is required");
  for (const auto& m : corpora) need_file("corpus '" + m.source + "'", m.path);
  if (taxonomy) need_file("taxonomy", *taxonomy);
  for (const auto& [name, p] : templates) {
    if (!template_names().count(name)) out.push_back("templates: unknown template '" + name + "'");
    need_file("template '" + name + "'", p);
  }
  need_backend("tagging", tagging_backend);
  if (plan) {
    for (auto& p : plan->problems()) out.push_back(std::move(p));
    if (plan->budget > 0) need_backend("diversity", augment_backend);
  } else if (!augment_backend.empty() && !ids.count(augment_backend)) {
    out.push_back("diversity: backend '" + augment_backend + "' is not defined");
  }
  need_backend("regen.safe_model", safe_model);
  if (!(regen_temperature >= 0.0)) out.emplace_back("regen: temperature must be >= 0");
  if (!(regen_top_p > 0.0 && regen_top_p <= 1.0)) out.emplace_back("regen: top_p must be in (0, 1]");
  need_backend("reward.judge", judge_backend);
  if (ppl.kind == "backend") {
    need_backend("reward.ppl", ppl.backend);
    for (const auto& b : backends) {
      if (b.id == ppl.backend && !b.supports_logprobs) out.push_back("reward.ppl: backend '" + b.id + "' has no logprobs");
    }
  } else if (ppl.kind == "ngram") {
    if (ppl.order == 0) out.emplace_back("reward.ppl: order must be >= 1");
    if (ppl.fit_corpus) {
      need_file("reward.ppl.fit_corpus", *ppl.fit_corpus);
    } else if (!general_corpus) {
      out.emplace_back("reward.ppl: the n-gram scorer needs fit_corpus or general_corpus");
    }
  } else {
    out.push_back("reward.ppl: unknown kind '" + ppl.kind + "'");
  }
  for (auto& p : selection.problems()) out.push_back("selection: " + p);
  if (general_corpus) {
    need_file("general_corpus", *general_corpus);
  } else if (selection.general_count.value_or(selection.general_ratio > 0.0 ? 1 : 0) > 0) {
    out.emplace_back("general_corpus: required when general_mix > 0");
  }
  if (eval.pool) need_file("eval.pool", *eval.pool);
  if (eval.per_category_n == 0) out.emplace_back("eval: per_category_n must be >= 1");
  for (const auto* role : {&eval.judged_backend, &eval.judge_backend, &eval.mc_backend}) {
    if (!role->empty() && !ids.count(*role)) out.push_back("eval: backend '" + *role + "' is not defined");
  }
  for (const auto& e : eval.evaluators) {
    if (!ids.count(e)) out.push_back("eval.evaluators: backend '" + e + "' is not defined");
  }
  if (workers == 0) out.emplace_back("workers must be >= 1");
  return out;
}

PromptTemplate RunConfig::prompt_template(const std::string& name) const {
  if (auto it = templates.find(name); it != templates.end()) return PromptTemplate::load(name, it->second);
  return PromptTemplate::builtin(name);
}

IntentTaxonomy RunConfig::load_taxonomy() const {
  IntentTaxonomy t = taxonomy ? IntentTaxonomy::load(*taxonomy) : IntentTaxonomy::builtin();
  if (unmapped_policy) t.set_unmapped_policy(*unmapped_policy);
  return t;
}

json RunConfig::to_json() const {
  json backends_j = json::array();
  for (auto b : backends) {
    if (b.fixture) b.fixture = rel(*b.fixture, base_dir);
    backends_j.push_back(b);
  }
  json corpora_j = json::array();
  for (const auto& m : corpora) {
    corpora_j.push_back({{"source", m.source}, {"adapter", to_string(m.adapter)}, {"path", rel(m.path, base_dir)}});
  }
  json templates_j = json::object();
  for (const auto& [k, p] : templates) templates_j[k] = rel(p, base_dir);
  json keywords_j = json::object();
  for (const auto& [cat, words] : keywords) keywords_j[std::string(code(cat))] = words;
  auto opt_rel = [&](const std::optional<fs::path>& p) { return p ? json(rel(*p, base_dir)) : json(nullptr); };
  return json{{"seed", seed},
              {"output_dir", rel(output_dir, base_dir)},
              {"workers", workers},
              {"cache", opt_rel(cache)},
              {"backends", std::move(backends_j)},
              {"corpora", std::move(corpora_j)},
              {"taxonomy", opt_rel(taxonomy)},
              {"unmapped_policy", unmapped_policy ? json(to_string(*unmapped_policy)) : json(nullptr)},
              {"templates", std::move(templates_j)},
              {"tagging", {{"backend", tagging_backend}}},
              {"diversity",
               {{"plan", plan ? json(*plan) : json("auto")},
                {"backend", augment_backend},
                {"keywords", std::move(keywords_j)},
                {"shots", shots}}},
              {"regen", {{"safe_model", safe_model}, {"temperature", regen_temperature}, {"top_p", regen_top_p}}},
              {"reward",
               {{"judge", judge_backend},
                {"ppl", {{"kind", ppl.kind}, {"backend", ppl.backend}, {"order", ppl.order}, {"fit_corpus", opt_rel(ppl.fit_corpus)}}}}},
              {"selection", selection},
              {"general_corpus", opt_rel(general_corpus)},
              {"export", {{"format", to_string(export_format)}}},
              {"eval",
               {{"pool", opt_rel(eval.pool)},
                {"per_category_n", eval.per_category_n},
                {"judged_backend", eval.judged_backend},
                {"judge_backend", eval.judge_backend},
                {"mc_backend", eval.mc_backend},
                {"evaluators", eval.evaluators}}}};
}

std::string RunConfig::digest() const {
  json doc = to_json();
  doc.erase("output_dir");
  doc.erase("workers");
  doc.erase("cache");
  doc.erase("eval");
  json files = json::object();
  auto add = [&](const std::string& key, const std::optional<fs::path>& p) {
    if (p && fs::is_regular_file(*p)) files[key] = jsonl::digest_file(*p);
  };
  for (const auto& b : backends) add("backend:" + b.id, b.fixture);
  for (const auto& m : corpora) add("corpus:" + m.source, m.path);
  add("taxonomy", taxonomy);
  for (const auto& [k, p] : templates) add("template:" + k, p);
  add("general_corpus", general_corpus);
  add("fit_corpus", ppl.fit_corpus);
  doc["files"] = std::move(files);
  return text::sha256_hex(jsonl::dump(doc));
}

void register_backends(Gateway& gateway, const RunConfig& config) {
  for (const auto& spec : config.backends) gateway.register_backend(spec);
}

}  // namespace safealign
