#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/judge.hpp"
#include "tessa/pipeline.hpp"
#include "tessa/synthetic.hpp"
#include "tessa/text_util.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tessa;

namespace {

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> backend;
  std::optional<std::string> script;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<int> k;
  std::optional<double> tau;
  std::optional<int> episodes;
  std::optional<int> period;
  std::vector<std::string> sources;
  std::optional<std::string> target;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)");
  cmd->add_option("--backend", o.backend, "LLM backend")->check(CLI::IsMember({"scripted", "echo", "http-chat"}));
  cmd->add_option("--script", o.script, "Scripted backend responses (JSONL)");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
}

void add_selection(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--mode", o.mode, "Selection path")->check(CLI::IsMember({"offline", "rl"}));
  cmd->add_option("--k", o.k, "Features to keep");
  cmd->add_option("--tau", o.tau, "Reward threshold");
  cmd->add_option("--episodes", o.episodes, "RL training episodes");
}

void add_sources(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--source", o.sources, "Source-domain manifest (repeatable)");
}

void add_target(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--target", o.target, "Target-domain manifest");
  cmd->add_option("--period", o.period, "Seasonal period for series without a known frequency");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  if (o.backend) c.backend.kind = *o.backend;
  if (o.script) c.backend.script = *o.script;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.mode) c.mode = selection_path_from_string(*o.mode);
  if (o.k) c.selection.k = *o.k;
  if (o.tau) c.selection.tau = *o.tau;
  if (o.episodes) c.rl_episodes = *o.episodes;
  if (o.period) c.extraction.seasonal_period = *o.period;
  if (!o.sources.empty()) c.source_manifests.assign(o.sources.begin(), o.sources.end());
  if (o.target) c.target_manifest = *o.target;
  return c;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::IoError, "cannot create directory '" + dir.string() + "'");
  return dir;
}

/// Runs `body` with a gateway built from the config; the transcript lands in
/// <dir>/transcripts/<stage>.jsonl whatever the outcome.
template <typename Body>
void with_gateway(const RunConfig& c, const fs::path& dir, const std::string& stage, Body body) {
  auto gateway = make_gateway(c.backend);
  const TemplateStore templates = load_templates(c.templates_dir);
  try {
    body(*gateway, templates);
  } catch (...) {
    try {
      gateway->transcript().write_jsonl(dir / "transcripts" / (stage + ".jsonl"));
    } catch (const Error&) {
    }
    throw;
  }
  gateway->transcript().write_jsonl(dir / "transcripts" / (stage + ".jsonl"));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : split(s, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

int cmd_generate_synthetic(int n, const Overrides& o) {
  const std::uint64_t seed = o.seed.value_or(0);
  const fs::path out = o.out.value_or("synthetic");
  const auto items = generate_dataset(n, seed);
  write_synthetic_corpus(out, items, seed);
  std::cout << "generated " << items.size() << " series\n";
  return 0;
}

int cmd_extract_features(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  const std::size_t n = run_feature_stage(c, dir);
  std::cout << "extracted features for " << n << " series into " << (dir / "features").string() << "\n";
  return 0;
}

int cmd_decontextualize(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  if (c.source_manifests.empty()) throw Error(Errc::InvalidConfig, "source_manifests: at least one source manifest is required");
  const fs::path dir = ensure_dir(c.output_dir);
  std::size_t n = 0;
  with_gateway(c, dir, "decontextualize",
               [&](Gateway& gw, const TemplateStore& t) { n = run_decontextualize_stage(c, gw, t, dir); });
  std::cout << "decontextualized " << n << " annotations\n";
  return 0;
}

int cmd_select_features(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  with_gateway(c, dir, "select-features", [&](Gateway& gw, const TemplateStore& t) { run_selection_stage(c, gw, t, dir); });
  std::cout << read_json(dir / "selection.json").dump() << "\n";
  return 0;
}

int cmd_annotate_general(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  std::size_t n = 0;
  with_gateway(c, dir, "annotate-general",
               [&](Gateway& gw, const TemplateStore& t) { n = run_general_stage(c, gw, t, dir); });
  std::cout << "wrote " << n << " general annotations\n";
  return 0;
}

int cmd_annotate_domain(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  std::map<std::string, int> rounds;
  with_gateway(c, dir, "annotate-domain",
               [&](Gateway& gw, const TemplateStore& t) { rounds = run_domain_stage(c, gw, t, dir); });
  std::cout << "wrote " << rounds.size() << " target-specific annotations\n";
  return 0;
}

int cmd_run_pipeline(const Overrides& o) {
  const RunConfig c = resolve_config(o);
  validate_run_config(c, true);
  auto gateway = make_gateway(c.backend);
  const TemplateStore templates = load_templates(c.templates_dir);
  const fs::path run_dir = make_run_dir(ensure_dir(c.output_dir), std::chrono::system_clock::now());
  const RunSummary s = run_pipeline(c, *gateway, templates, run_dir);
  std::cout << "run " << s.run_dir.string() << ": " << s.series << " series, " << s.backend_calls << " backend calls\n";
  return 0;
}

struct EvaluateArgs {
  std::string t_path;
  std::string d_path;
  std::string metrics = "clarity,comprehensiveness,domain_relevance";
  int judges = 2;
  std::string method_t = "T";
  std::string method_d = "D";
  std::optional<std::string> from_raw;
};

void write_report(const fs::path& dir, const JudgeReport& report) {
  write_json(dir / "report.json", report_to_json(report));
  const std::string table = render_table(report);
  std::ofstream(dir / "report.txt") << table;
  std::cout << table;
}

int cmd_evaluate(const EvaluateArgs& a, const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  if (a.from_raw) {
    const auto [t, d] = read_raw_scores(*a.from_raw, a.method_t, a.method_d);
    write_report(dir, aggregate(t, d, a.method_t, a.method_d));
    return 0;
  }
  const auto metrics = parse_metric_list(a.metrics);
  const auto records_t = load_annotations(a.t_path);
  const auto records_d = load_annotations(a.d_path);
  JudgeSetup setup;
  setup.judge_count = a.judges;
  with_gateway(c, dir, "evaluate", [&](Gateway& gw, const TemplateStore& t) {
    const Comparison cmp = compare_methods(records_t, records_d, metrics, setup, gw, t, a.method_t, a.method_d);
    write_raw_scores(dir / "scores.jsonl", cmp);
    write_report(dir, cmp.report);
  });
  return 0;
}

struct PolicyArgs {
  std::string annotations;
  std::string candidates;
  std::optional<std::string> checkpoint;
  std::string template_kind = "ts";
};

TemplateId scoring_template(const std::string& kind) {
  if (kind == "ts") return TemplateId::p_score_ts;
  if (kind == "text") return TemplateId::p_score_text;
  throw Error(Errc::InvalidConfig, "--kind must be ts or text");
}

void write_policy_outputs(const fs::path& dir, const PolicyNetwork& net, const TrainingLog& log,
                          const std::vector<std::string>& selected) {
  write_json(dir / "policy.json", net.checkpoint());
  log.write_jsonl(dir / "training.jsonl");
  write_json(dir / "selection.json", {{"selected", selected}});
  std::cout << "selected: " << join(selected, ", ") << "\n";
}

int cmd_train_policy(const PolicyArgs& a, const Overrides& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = ensure_dir(c.output_dir);
  const auto annotations = load_annotations(a.annotations);
  const auto names = split_list(a.candidates);
  const SeedTree seeds = SeedTree::from(c.seed);
  auto backbone = std::make_shared<HashBackbone>(seeds.backbone);
  PolicyConfig pc;
  pc.init_seed = seeds.ts_policy_init;
  PolicyNetwork net(backbone, backbone->make_vocab_head(), pc);
  const auto tokens = tokenize_all(*backbone, names);
  with_gateway(c, dir, "train-policy", [&](Gateway& gw, const TemplateStore& t) {
    LlmBatchScorer llm(gw, t, scoring_template(a.template_kind));
    CorpusScorer env(llm, annotations, names, c.selection);
    Rng rng(seeds.ts_policy_episodes);
    const TrainingLog log = train_policy(net, tokens, env, c.selection, c.rl_episodes, rng);
    write_policy_outputs(dir, net, log, greedy_selection(net, tokens, c.selection.k));
  });
  return 0;
}

int cmd_update_policy(const PolicyArgs& a, const Overrides& o) {
  const RunConfig c = resolve_config(o);
  if (!a.checkpoint) throw Error(Errc::InvalidConfig, "--checkpoint: required");
  const fs::path dir = ensure_dir(c.output_dir);
  const nlohmann::json ckpt = read_json(*a.checkpoint);
  if (!ckpt.contains("backbone") || !ckpt["backbone"].is_string()) {
    throw Error(Errc::InvalidConfig, "checkpoint: missing backbone id");
  }
  auto backbone = HashBackbone::from_id(ckpt["backbone"].get<std::string>());
  PolicyNetwork net = PolicyNetwork::from_checkpoint(ckpt, backbone, backbone->make_vocab_head());
  const auto annotations = load_annotations(a.annotations);
  const auto new_names = split_list(a.candidates);
  std::vector<std::string> all = net.known_candidates();
  for (const auto& n : new_names) {
    if (std::find(all.begin(), all.end(), normalize_name(n)) == all.end()) all.push_back(normalize_name(n));
  }
  const auto new_tokens = tokenize_all(*backbone, new_names);
  with_gateway(c, dir, "update-policy", [&](Gateway& gw, const TemplateStore& t) {
    LlmBatchScorer llm(gw, t, scoring_template(a.template_kind));
    CorpusScorer env(llm, annotations, all, c.selection);
    Rng rng(derive_seed(c.seed, static_cast<std::uint64_t>(net.step_count())));
    const TrainingLog log = incremental_update(net, new_tokens, env, c.selection, c.rl_episodes, rng);
    write_policy_outputs(dir, net, log, greedy_selection(net, tokenize_all(*backbone, all), c.selection.k));
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain time-series annotation"};
  app.require_subcommand(1);

  Overrides o;
  int n = 0;
  EvaluateArgs eval;
  PolicyArgs policy;

  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic corpus with ground-truth annotations");
  gen->add_option("--n", n, "Number of series")->required();
  gen->add_option("--seed", o.seed, "Master seed");
  gen->add_option("--out", o.out, "Output directory");

  auto* feat = app.add_subcommand("extract-features", "Time-series features of the target series");
  add_common(feat, o);
  add_target(feat, o);

  auto* decon = app.add_subcommand("decontextualize", "Decontextualize source annotations and mine text features");
  add_common(decon, o);
  add_sources(decon, o);

  auto* select = app.add_subcommand("select-features", "Score and select features from a work directory");
  add_common(select, o);
  add_selection(select, o);

  auto* general = app.add_subcommand("annotate-general", "General annotation per target series");
  add_common(general, o);
  add_target(general, o);

  auto* domain = app.add_subcommand("annotate-domain", "Domain-specific refinement of general annotations");
  add_common(domain, o);
  add_target(domain, o);

  auto* run = app.add_subcommand("run-pipeline", "Full pipeline into <out>/run-<timestamp>/");
  add_common(run, o);
  add_selection(run, o);
  add_sources(run, o);
  add_target(run, o);

  auto* evaluate = app.add_subcommand("evaluate", "LLM-as-judge comparison of two annotation sets");
  add_common(evaluate, o);
  evaluate->add_option("--t", eval.t_path, "Annotations of the evaluated method (JSONL)");
  evaluate->add_option("--d", eval.d_path, "Annotations of the baseline (JSONL)");
  evaluate->add_option("--metrics", eval.metrics, "Comma-separated metric list");
  evaluate->add_option("--judges", eval.judges, "Judges per item")->check(CLI::PositiveNumber);
  evaluate->add_option("--name-t", eval.method_t, "Label of the evaluated method");
  evaluate->add_option("--name-d", eval.method_d, "Label of the baseline");
  evaluate->add_option("--from-raw", eval.from_raw, "Recompute the report from a raw score JSONL");

  auto* train = app.add_subcommand("train-policy", "Train a selection policy against an annotation corpus");
  add_common(train, o);
  add_selection(train, o);
  train->add_option("--annotations", policy.annotations, "Annotation corpus (JSONL)")->required();
  train->add_option("--candidates", policy.candidates, "Comma-separated feature names")->required();
  train->add_option("--kind", policy.template_kind, "Scoring prompt: ts or text");

  auto* update = app.add_subcommand("update-policy", "Continue training a policy on new annotations only");
  add_common(update, o);
  add_selection(update, o);
  update->add_option("--checkpoint", policy.checkpoint, "Policy checkpoint (JSON)")->required();
  update->add_option("--annotations", policy.annotations, "New annotations (JSONL)")->required();
  update->add_option("--candidates", policy.candidates, "Comma-separated new feature names");
  update->add_option("--kind", policy.template_kind, "Scoring prompt: ts or text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate_synthetic(n, o);
    if (*feat) return cmd_extract_features(o);
    if (*decon) return cmd_decontextualize(o);
    if (*select) return cmd_select_features(o);
    if (*general) return cmd_annotate_general(o);
    if (*domain) return cmd_annotate_domain(o);
    if (*run) return cmd_run_pipeline(o);
    if (*evaluate) {
      if (!eval.from_raw && (eval.t_path.empty() || eval.d_path.empty())) {
        throw Error(Errc::InvalidConfig, "--t and --d are required unless --from-raw is given");
      }
      return cmd_evaluate(eval, o);
    }
    if (*train) return cmd_train_policy(policy, o);
    if (*update) return cmd_update_policy(policy, o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.detail().empty()) std::cerr << "response: " << e.detail() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
