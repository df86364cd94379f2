#include "tessa/pipeline.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/text_util.hpp"

#include <algorithm>
#include <ctime>
#include <set>

namespace tessa {

namespace fs = std::filesystem;

namespace {

template <typename T>
std::optional<T> get_opt(const nlohmann::json& j, const std::string& key, const std::string& field) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::InvalidConfig, field + ": wrong type");
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& prefix) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, (prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(Errc::InvalidConfig, prefix + key + ": unknown key");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

const std::string kMainBackend = "main";

}  // namespace

std::string to_string(SelectionPath p) { return p == SelectionPath::rl ? "rl" : "offline"; }

SelectionPath selection_path_from_string(const std::string& s) {
  if (s == "offline") return SelectionPath::offline;
  if (s == "rl") return SelectionPath::rl;
  throw Error(Errc::InvalidConfig, "mode must be 'offline' or 'rl', got '" + s + "'");
}

ExtractionConfig ExtractionOverrides::resolve(Frequency frequency) const {
  ExtractionConfig c = ExtractionConfig::defaults_for(frequency, seasonal_period);
  if (ma_window) c.ma_window = *ma_window;
  if (rolling_window) c.rolling_window = *rolling_window;
  if (lag) c.lag = *lag;
  if (fourier_top_m) c.fourier_top_m = *fourier_top_m;
  if (mi_bins) c.mi_bins = *mi_bins;
  if (cca_embed_dim) c.cca_embed_dim = *cca_embed_dim;
  if (rolling_extrema) c.rolling_extrema = *rolling_extrema;
  return c;
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"source_manifests", "target_manifest", "target_exemplars", "selection", "extraction", "backend",
                  "templates_dir", "output_dir", "seed", "max_rounds"},
                 "");
  RunConfig c;
  if (auto v = get_opt<std::vector<std::string>>(j, "source_manifests", "source_manifests")) {
    for (const auto& p : *v) c.source_manifests.push_back(resolve(base_dir, p));
  }
  if (auto v = get_opt<std::string>(j, "target_manifest", "target_manifest")) c.target_manifest = resolve(base_dir, *v);
  if (auto v = get_opt<int>(j, "target_exemplars", "target_exemplars")) c.target_exemplars = *v;
  if (auto v = get_opt<std::string>(j, "templates_dir", "templates_dir")) c.templates_dir = resolve(base_dir, *v);
  if (auto v = get_opt<std::string>(j, "output_dir", "output_dir")) c.output_dir = resolve(base_dir, *v);
  if (auto v = get_opt<std::uint64_t>(j, "seed", "seed")) c.seed = *v;
  if (auto v = get_opt<int>(j, "max_rounds", "max_rounds")) c.max_rounds = *v;

  if (j.contains("selection")) {
    const auto& s = j["selection"];
    reject_unknown(s, {"k", "tau", "batch_size", "normalize", "mode", "episodes"}, "selection.");
    if (auto v = get_opt<int>(s, "k", "selection.k")) c.selection.k = *v;
    if (auto v = get_opt<double>(s, "tau", "selection.tau")) c.selection.tau = *v;
    if (auto v = get_opt<int>(s, "batch_size", "selection.batch_size")) c.selection.batch_size = *v;
    if (auto v = get_opt<bool>(s, "normalize", "selection.normalize")) c.selection.normalize = *v;
    if (auto v = get_opt<std::string>(s, "mode", "selection.mode")) c.mode = selection_path_from_string(*v);
    if (auto v = get_opt<int>(s, "episodes", "selection.episodes")) c.rl_episodes = *v;
  }
  if (j.contains("extraction")) {
    const auto& e = j["extraction"];
    reject_unknown(e,
                   {"seasonal_period", "ma_window", "rolling_window", "lag", "fourier_top_m", "mi_bins", "cca_embed_dim",
                    "rolling_extrema"},
                   "extraction.");
    c.extraction.seasonal_period = get_opt<int>(e, "seasonal_period", "extraction.seasonal_period");
    c.extraction.ma_window = get_opt<int>(e, "ma_window", "extraction.ma_window");
    c.extraction.rolling_window = get_opt<int>(e, "rolling_window", "extraction.rolling_window");
    c.extraction.lag = get_opt<int>(e, "lag", "extraction.lag");
    c.extraction.fourier_top_m = get_opt<int>(e, "fourier_top_m", "extraction.fourier_top_m");
    c.extraction.mi_bins = get_opt<int>(e, "mi_bins", "extraction.mi_bins");
    c.extraction.cca_embed_dim = get_opt<int>(e, "cca_embed_dim", "extraction.cca_embed_dim");
    c.extraction.rolling_extrema = get_opt<bool>(e, "rolling_extrema", "extraction.rolling_extrema");
  }
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    reject_unknown(b,
                   {"kind", "script", "base_url", "api_key_env", "timeout_seconds", "model", "temperature", "max_tokens",
                    "concurrency", "retries"},
                   "backend.");
    if (auto v = get_opt<std::string>(b, "kind", "backend.kind")) c.backend.kind = *v;
    if (auto v = get_opt<std::string>(b, "script", "backend.script")) c.backend.script = resolve(base_dir, *v);
    if (auto v = get_opt<std::string>(b, "base_url", "backend.base_url")) c.backend.http.base_url = *v;
    if (auto v = get_opt<std::string>(b, "api_key_env", "backend.api_key_env")) c.backend.http.api_key_env = *v;
    if (auto v = get_opt<int>(b, "timeout_seconds", "backend.timeout_seconds")) c.backend.http.timeout_seconds = *v;
    if (auto v = get_opt<std::string>(b, "model", "backend.model")) c.backend.model = *v;
    if (auto v = get_opt<double>(b, "temperature", "backend.temperature")) c.backend.temperature = *v;
    if (auto v = get_opt<int>(b, "max_tokens", "backend.max_tokens")) c.backend.max_tokens = *v;
    if (auto v = get_opt<int>(b, "concurrency", "backend.concurrency")) c.backend.concurrency = *v;
    if (auto v = get_opt<int>(b, "retries", "backend.retries")) c.backend.retries = *v;
  }
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& p : c.source_manifests) sources.push_back(p.string());
  nlohmann::json extraction = nlohmann::json::object();
  auto put = [&](const char* key, const auto& v) {
    if (v) extraction[key] = *v;
  };
  put("seasonal_period", c.extraction.seasonal_period);
  put("ma_window", c.extraction.ma_window);
  put("rolling_window", c.extraction.rolling_window);
  put("lag", c.extraction.lag);
  put("fourier_top_m", c.extraction.fourier_top_m);
  put("mi_bins", c.extraction.mi_bins);
  put("cca_embed_dim", c.extraction.cca_embed_dim);
  put("rolling_extrema", c.extraction.rolling_extrema);
  nlohmann::json backend = {{"kind", c.backend.kind},
                            {"base_url", c.backend.http.base_url},
                            {"api_key_env", c.backend.http.api_key_env},
                            {"timeout_seconds", c.backend.http.timeout_seconds},
                            {"model", c.backend.model},
                            {"temperature", c.backend.temperature},
                            {"max_tokens", c.backend.max_tokens},
                            {"concurrency", c.backend.concurrency},
                            {"retries", c.backend.retries}};
  if (c.backend.script) backend["script"] = c.backend.script->string();
  nlohmann::json j = {{"source_manifests", sources},
                      {"target_exemplars", c.target_exemplars},
                      {"selection",
                       {{"k", c.selection.k},
                        {"tau", c.selection.tau},
                        {"batch_size", c.selection.batch_size},
                        {"normalize", c.selection.normalize},
                        {"mode", to_string(c.mode)},
                        {"episodes", c.rl_episodes}}},
                      {"extraction", extraction},
                      {"backend", backend},
                      {"output_dir", c.output_dir.string()},
                      {"seed", c.seed},
                      {"max_rounds", c.max_rounds}};
  if (c.target_manifest) j["target_manifest"] = c.target_manifest->string();
  if (c.templates_dir) j["templates_dir"] = c.templates_dir->string();
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::InvalidConfig, "config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw Error(Errc::InvalidConfig, "config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

void validate_run_config(const RunConfig& c, bool require_target) {
  if (c.source_manifests.empty()) throw Error(Errc::InvalidConfig, "source_manifests: at least one source manifest is required");
  for (std::size_t i = 0; i < c.source_manifests.size(); ++i) {
    if (!fs::exists(c.source_manifests[i])) {
      throw Error(Errc::InvalidConfig,
                  "source_manifests[" + std::to_string(i) + "]: file not found: " + c.source_manifests[i].string());
    }
  }
  if (require_target) {
    if (!c.target_manifest) throw Error(Errc::InvalidConfig, "target_manifest: required");
    if (!fs::exists(*c.target_manifest)) {
      throw Error(Errc::InvalidConfig, "target_manifest: file not found: " + c.target_manifest->string());
    }
  }
  if (c.target_exemplars < 1) throw Error(Errc::InvalidConfig, "target_exemplars: must be >= 1");
  if (c.selection.k < 1) throw Error(Errc::InvalidConfig, "selection.k: must be >= 1");
  if (!(c.selection.tau >= 0 && c.selection.tau <= 1)) throw Error(Errc::InvalidConfig, "selection.tau: must be in [0, 1]");
  if (c.selection.batch_size < 1) throw Error(Errc::InvalidConfig, "selection.batch_size: must be >= 1");
  if (c.rl_episodes < 1) throw Error(Errc::InvalidConfig, "selection.episodes: must be >= 1");
  if (c.max_rounds < 1) throw Error(Errc::InvalidConfig, "max_rounds: must be >= 1");
  if (c.backend.kind != "scripted" && c.backend.kind != "echo" && c.backend.kind != "http-chat") {
    throw Error(Errc::InvalidConfig, "backend.kind: expected scripted, echo or http-chat, got '" + c.backend.kind + "'");
  }
  if (c.backend.kind == "scripted" && !c.backend.script) {
    throw Error(Errc::InvalidConfig, "backend.script: required for the scripted backend");
  }
}

SeedTree SeedTree::from(std::uint64_t seed) {
  return {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4), derive_seed(seed, 5)};
}

std::unique_ptr<Gateway> make_gateway(const BackendSettings& s) {
  GatewayConfig gc;
  gc.default_backend = kMainBackend;
  gc.model = s.model;
  gc.temperature = s.temperature;
  gc.max_tokens = s.max_tokens;
  gc.concurrency = s.concurrency;
  gc.retry.attempts = s.retries;
  auto gateway = std::make_unique<Gateway>(gc);
  if (s.kind == "scripted") {
    if (!s.script) throw Error(Errc::InvalidConfig, "backend.script: required for the scripted backend");
    gateway->register_backend(kMainBackend, std::make_shared<ScriptedBackend>(ScriptedBackend::load_script(*s.script)));
  } else if (s.kind == "echo") {
    gateway->register_backend(kMainBackend, std::make_shared<EchoBackend>());
  } else if (s.kind == "http-chat") {
    gateway->register_backend(kMainBackend, std::make_shared<HttpChatBackend>(s.http));
  } else {
    throw Error(Errc::InvalidConfig, "backend.kind: unknown backend '" + s.kind + "'");
  }
  return gateway;
}

TemplateStore load_templates(const std::optional<fs::path>& dir) {
  return dir ? TemplateStore::load(*dir) : TemplateStore::defaults();
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::InvalidSpec:
    case Errc::UnpairedItem:
    case Errc::MetricMismatch:
    case Errc::MissingSlot:
    case Errc::UnknownSlot:
    case Errc::PreconditionFailed:
    case Errc::EmptyInput:
    case Errc::NoFeaturesSelected:
    case Errc::SeriesTooShort:
    case Errc::PeriodTooSmall:
    case Errc::WindowTooLarge:
    case Errc::LagTooLarge:
    case Errc::EmbedDimTooLarge:
    case Errc::UnknownToken:
      return 2;
    case Errc::MissingFile:
    case Errc::IoError:
    case Errc::SchemaViolation:
    case Errc::ChannelMismatch:
    case Errc::NonFiniteValue:
    case Errc::InvariantViolation:
      return 3;
    case Errc::BackendUnavailable:
    case Errc::AuthMissing:
    case Errc::ResponseEmpty:
    case Errc::InvalidRequest:
      return 4;
    case Errc::ParseFailure:
    case Errc::NegativeScore:
    case Errc::ScoreOutOfRange:
    case Errc::EmptyTermSet:
    case Errc::EmptyAnnotation:
      return 5;
    default:
      return 1;
  }
}

fs::path make_run_dir(const fs::path& out, std::chrono::system_clock::time_point now) {
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  const std::string base = std::string("run-") + stamp;
  fs::path dir = out / base;
  for (int n = 2; fs::exists(dir); ++n) dir = out / (base + "-" + std::to_string(n));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::vector<AnnotationRecord> stage_decontextualize(const std::vector<AnnotationRecord>& source, Gateway& gateway,
                                                    const TemplateStore& templates) {
  std::vector<AnnotationRecord> out;
  for (const auto& a : source) {
    if (a.kind == AnnotationKind::source_specific) out.push_back(decontextualize(a, gateway, templates));
  }
  return out;
}

std::map<std::string, FeatureSet> stage_extract_features(const std::vector<TimeSeries>& series,
                                                         const ExtractionOverrides& extraction) {
  std::map<std::string, FeatureSet> out;
  for (const auto& s : series) out[s.id] = extract_all(s, extraction.resolve(s.frequency));
  return out;
}

std::vector<std::string> ts_candidate_names(const std::map<std::string, FeatureSet>& sets) {
  std::set<std::string> present;
  for (const auto& [_, set] : sets) {
    for (const auto& f : set.features) present.insert(to_string(f.name));
  }
  std::vector<std::string> out;
  for (const auto& name : feature_vocabulary()) {
    if (present.count(name)) out.push_back(name);
  }
  return out;
}

SelectionOutcome stage_select(const std::vector<std::string>& candidates,
                              const std::vector<AnnotationRecord>& annotations, TemplateId scoring_template,
                              const SelectionRequest& request, Gateway& gateway, const TemplateStore& templates) {
  LlmBatchScorer scorer(gateway, templates, scoring_template);
  SelectionOutcome out;
  if (request.mode == SelectionPath::offline) {
    out.scores = score_features_offline(candidates, annotations, request.config, scorer);
    out.selected = select_top_k(out.scores, request.config.k);
    return out;
  }
  if (candidates.empty()) throw Error(Errc::EmptyInput, "no candidate features");
  auto backbone = std::make_shared<HashBackbone>(request.backbone_seed);
  PolicyConfig pc;
  pc.init_seed = request.init_seed;
  PolicyNetwork net(backbone, backbone->make_vocab_head(), pc);
  const auto tokens = tokenize_all(*backbone, candidates);
  CorpusScorer env(scorer, annotations, candidates, request.config);
  Rng rng(request.episode_seed);
  out.training = train_policy(net, tokens, env, request.config, request.episodes, rng);
  out.selected = greedy_selection(net, tokens, request.config.k);
  out.scores = env.scores();
  out.checkpoint = net.checkpoint();
  return out;
}

std::vector<TsFeature> filter_features(const FeatureSet& set, const std::vector<std::string>& selected) {
  std::vector<TsFeature> out;
  for (const auto& f : set.features) {
    if (std::find(selected.begin(), selected.end(), to_string(f.name)) != selected.end()) out.push_back(f);
  }
  return out;
}

std::vector<TextFeature> filter_text_features(const std::vector<TextFeature>& features,
                                              const std::vector<std::string>& selected) {
  std::vector<TextFeature> out;
  for (const auto& name : selected) {
    auto it = std::find_if(features.begin(), features.end(), [&](const TextFeature& f) { return f.name == name; });
    if (it != features.end()) out.push_back(*it);
  }
  return out;
}

nlohmann::json text_features_to_json(const std::vector<TextFeature>& features) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : features) out.push_back({{"name", f.name}, {"evidence_count", f.evidence_count}});
  return out;
}

std::vector<TextFeature> text_features_from_json(const nlohmann::json& j) {
  try {
    std::vector<TextFeature> out;
    for (const auto& row : j) out.push_back({row.at("name").get<std::string>(), row.value("evidence_count", 1)});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("text features: ") + e.what());
  }
}

nlohmann::json scores_to_json(const ImportanceScores& scores) {
  return {{"source", to_string(scores.source)}, {"scores", scores.scores}};
}

namespace {

void write_selection(const fs::path& dir, const std::string& kind, const SelectionOutcome& s) {
  write_json(dir / "scores" / (kind + ".json"), scores_to_json(s.scores));
  if (s.checkpoint) {
    write_json(dir / "checkpoints" / (kind + "_policy.json"), *s.checkpoint);
    s.training.write_jsonl(dir / "checkpoints" / (kind + "_training.jsonl"));
  }
}

void require(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) throw Error(Errc::MissingFile, stage + " needs " + path.string());
}

Dataset load_target(const RunConfig& config) {
  if (!config.target_manifest) throw Error(Errc::InvalidConfig, "target_manifest: required");
  return load_dataset(load_manifest(*config.target_manifest));
}

std::vector<std::string> read_string_list(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("selection.json: ") + e.what());
  }
}

}  // namespace

std::size_t run_decontextualize_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                                      const fs::path& dir) {
  std::vector<AnnotationRecord> source_annotations;
  for (const auto& path : config.source_manifests) {
    const Dataset d = load_dataset(load_manifest(path));
    source_annotations.insert(source_annotations.end(), d.annotations.begin(), d.annotations.end());
  }
  const auto decontextualized = stage_decontextualize(source_annotations, gateway, templates);
  write_annotations(dir / "decontextualized.jsonl", decontextualized);
  const auto text_features = extract_text_features(decontextualized, gateway, templates);
  write_json(dir / "text_features.json", text_features_to_json(text_features));
  return decontextualized.size();
}

std::size_t run_feature_stage(const RunConfig& config, const fs::path& dir) {
  const Dataset target = load_target(config);
  const auto feature_sets = stage_extract_features(target.series, config.extraction);
  for (const auto& [sid, set] : feature_sets) write_json(dir / "features" / (sid + ".json"), feature_set_to_json(set));
  return feature_sets.size();
}

std::map<std::string, FeatureSet> read_feature_sets(const fs::path& dir) {
  require(dir / "features", "this stage");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir / "features")) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, FeatureSet> out;
  for (const auto& f : files) {
    FeatureSet set = feature_set_from_json(read_json(f));
    out[set.series_id] = std::move(set);
  }
  return out;
}

void run_selection_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates, const fs::path& dir) {
  require(dir / "decontextualized.jsonl", "selection");
  require(dir / "text_features.json", "selection");
  const auto decontextualized = load_annotations(dir / "decontextualized.jsonl");
  const auto text_features = text_features_from_json(read_json(dir / "text_features.json"));
  const auto feature_sets = read_feature_sets(dir);

  const SeedTree seeds = SeedTree::from(config.seed);
  const SelectionRequest ts_request{config.selection, config.mode, config.rl_episodes, seeds.backbone,
                                    seeds.ts_policy_init, seeds.ts_policy_episodes};
  const SelectionRequest text_request{config.selection, config.mode, config.rl_episodes, seeds.backbone,
                                      seeds.text_policy_init, seeds.text_policy_episodes};
  const auto ts_selection = stage_select(ts_candidate_names(feature_sets), decontextualized, TemplateId::p_score_ts,
                                         ts_request, gateway, templates);
  write_selection(dir, "ts", ts_selection);
  std::vector<std::string> text_names;
  for (const auto& f : text_features) text_names.push_back(f.name);
  SelectionOutcome text_selection;
  if (!text_names.empty()) {
    text_selection =
        stage_select(text_names, decontextualized, TemplateId::p_score_text, text_request, gateway, templates);
    write_selection(dir, "text", text_selection);
  }
  write_json(dir / "selection.json",
             {{"mode", to_string(config.mode)}, {"ts", ts_selection.selected}, {"text", text_selection.selected}});
}

std::size_t run_general_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                              const fs::path& dir) {
  require(dir / "selection.json", "general annotation");
  require(dir / "text_features.json", "general annotation");
  const Dataset target = load_target(config);
  const auto feature_sets = read_feature_sets(dir);
  const auto selection = read_json(dir / "selection.json");
  const auto ts_selected = read_string_list(selection, "ts");
  const auto text_selected = filter_text_features(text_features_from_json(read_json(dir / "text_features.json")),
                                                  read_string_list(selection, "text"));
  std::vector<AnnotationRecord> generals;
  for (const auto& series : target.series) {
    auto it = feature_sets.find(series.id);
    if (it == feature_sets.end()) throw Error(Errc::MissingFile, "no feature set for series '" + series.id + "'");
    generals.push_back(generate_general_annotation(series, filter_features(it->second, ts_selected), text_selected,
                                                   gateway, templates));
  }
  write_annotations(dir / "general.jsonl", generals);
  return generals.size();
}

std::map<std::string, int> run_domain_stage(const RunConfig& config, Gateway& gateway, const TemplateStore& templates,
                                            const fs::path& dir) {
  require(dir / "general.jsonl", "domain annotation");
  const Dataset target = load_target(config);
  const auto generals = load_annotations(dir / "general.jsonl");
  std::vector<AnnotationRecord> exemplars;
  for (const auto& a : target.annotations) {
    if (a.kind == AnnotationKind::target_specific && static_cast<int>(exemplars.size()) < config.target_exemplars) {
      exemplars.push_back(a);
    }
  }

  std::map<std::string, int> rounds_per_series;
  std::vector<AnnotationRecord> specialized;
  nlohmann::json terms = nlohmann::json::object();
  nlohmann::json refine = nlohmann::json::object();
  for (const auto& general : generals) {
    const std::string sid = general.series_id.value_or(general.id);
    const RefineResult r = refine_loop(general, exemplars, config.max_rounds, gateway, templates);
    std::vector<nlohmann::json> rows;
    for (const auto& round : r.rounds) rows.push_back(round_log_to_json(round));
    write_jsonl(dir / "rounds" / (sid + ".jsonl"), rows);
    if (r.aborted) throw *r.aborted;
    specialized.push_back(*r.final_record);
    terms[sid] = term_set_to_json(*r.terms);
    refine[sid] = {{"rounds", r.rounds.size()}, {"approved", r.approved}};
    rounds_per_series[sid] = static_cast<int>(r.rounds.size());
  }
  write_annotations(dir / "target_specific.jsonl", specialized);
  write_json(dir / "terms.json", terms);
  write_json(dir / "refine.json", refine);
  return rounds_per_series;
}

RunSummary run_pipeline(const RunConfig& config, Gateway& gateway, const TemplateStore& templates, const fs::path& run_dir) {
  validate_run_config(config, true);
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create run directory " + run_dir.string() + ": " + ec.message());
  const fs::path transcript = run_dir / "transcript.jsonl";
  try {
    RunSummary summary;
    summary.run_dir = run_dir;
    write_json(run_dir / "config.json", run_config_to_json(config));
    run_decontextualize_stage(config, gateway, templates, run_dir);
    summary.series = run_feature_stage(config, run_dir);
    run_selection_stage(config, gateway, templates, run_dir);
    run_general_stage(config, gateway, templates, run_dir);
    summary.refine_rounds = run_domain_stage(config, gateway, templates, run_dir);
    gateway.transcript().write_jsonl(transcript);
    summary.backend_calls = gateway.call_count();
    return summary;
  } catch (const Error& e) {
    try {
      gateway.transcript().write_jsonl(transcript);
    } catch (const Error&) {
    }
    throw Error(e.code(), e.message() + " [artifacts: " + run_dir.string() + ", transcript: " +
                              transcript.string() + "]",
                e.detail());
  }
}

}  // namespace tessa
