#include "fixtures.hpp"
#include "judge_oracle.hpp"
#include "oracles.hpp"

#include "tessa/feature_select.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/judge.hpp"
#include "tessa/random.hpp"
#include "tessa/rl_selection.hpp"
#include "tessa/synthetic.hpp"
#include "tessa/text_util.hpp"
#include "tessa/ts_features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace tessa;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

/// Counts failed checks and keeps the first one for the report line.
struct Checks {
  int failed = 0;
  std::string first;
  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (failed++ == 0) first = what;
  }
  Outcome done(const std::string& summary) const {
    if (failed == 0) return {true, summary};
    return {false, std::to_string(failed) + " failed check(s), first: " + first};
  }
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs >= budget_s) {
    out.ok = false;
    out.detail += " (over the " + std::to_string(static_cast<int>(budget_s)) + " s budget)";
  }
  if (!out.ok) ++failures;
  std::printf("%s %2d %-28s %8.2fs  %s\n", out.ok ? "PASS" : "FAIL", id, name, secs, out.detail.c_str());
  std::fflush(stdout);
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd sines(int L, const std::vector<std::pair<double, double>>& parts) {
  VectorXd x = VectorXd::Zero(L);
  for (int t = 0; t < L; ++t)
    for (auto [amp, period] : parts) x(t) += amp * std::sin(2.0 * std::numbers::pi * t / period);
  return x;
}

std::string spaced(std::string w) {
  std::replace(w.begin(), w.end(), '_', ' ');
  return w;
}

const std::vector<std::string>& names() { return testing::rl_names(); }

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

PolicyNetwork fresh_net(std::uint64_t init_seed) {
  auto backbone = std::make_shared<HashBackbone>(7);
  return PolicyNetwork(backbone, backbone->make_vocab_head(), {.init_seed = init_seed});
}

Outcome decomposition() {
  Checks c;
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 24 + static_cast<int>(rng.below(489));
    const int period = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(L / 2 - 1)));
    VectorXd x(L);
    const double slope = rng.uniform(-1, 1);
    for (int t = 0; t < L; ++t) x(t) = slope * t + 3 * std::sin(2 * std::numbers::pi * t / period) + rng.normal(0, 5);
    const auto d = decompose(x, period);
    const double err = (x - d.trend - d.seasonal - d.residual).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    c.expect(err < 1e-9, "L=" + std::to_string(L) + " p=" + std::to_string(period));
  }

  const double base[] = {4.0, -1.0, 2.5, 0.0, 7.0, -3.5};
  VectorXd x(60);
  for (int t = 0; t < 60; ++t) x(t) = base[t % 6];
  double mean = 0;
  for (double b : base) mean += b;
  mean /= 6;
  const auto d = decompose(x, 6);
  double pattern_err = 0;
  for (int t = 0; t < 60; ++t) pattern_err = std::max(pattern_err, std::abs(d.seasonal(t) - (base[t % 6] - mean)));
  c.expect(pattern_err < 1e-6, "repeating pattern off by " + std::to_string(pattern_err));

  char buf[96];
  std::snprintf(buf, sizeof buf, "200 series, max err %.1e; pattern err %.1e", worst, pattern_err);
  return c.done(buf);
}

Outcome spectral() {
  Checks c;
  auto agree = [&](const VectorXd& x, std::size_t m, const std::string& label) {
    const auto peaks = fourier_top_frequencies(x, static_cast<Eigen::Index>(m));
    const auto ref = oracle::dft_top(to_std(x), m);
    c.expect(peaks.size() == m && ref.size() == m, label + ": peak count");
    for (std::size_t i = 0; i < std::min({m, peaks.size(), ref.size()}); ++i) {
      c.expect(peaks[i].frequency == ref[i].first, label + ": bin");
      c.expect(std::abs(peaks[i].amplitude - ref[i].second) < 1e-9, label + ": amplitude");
    }
  };
  agree(sines(120, {{1.0, 12.0}}), 1, "single sine");
  agree(sines(120, {{2.0, 10.0}, {1.0, 4.0}}), 2, "two sines");
  agree(sines(97, {{1.5, 97.0 / 5}}), 1, "odd length");
  const auto two = fourier_top_frequencies(sines(120, {{2.0, 10.0}, {1.0, 4.0}}), 2);
  c.expect(two.size() == 2 && std::abs(two[0].amplitude - 2.0) < 1e-9 && std::abs(two[1].amplitude - 1.0) < 1e-9,
           "two sines: true amplitudes");
  c.expect(fourier_top_frequencies(VectorXd::Constant(64, 3.0), 3).empty(), "constant series has a peak");
  return c.done("sines match the direct DFT; constant has no peak");
}

Outcome correlation() {
  Checks c;
  Rng rng(303);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(191));
    VectorXd a(n), b(n);
    const double mix = rng.uniform(-1, 1);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.normal();
      b(i) = mix * a(i) + rng.normal();
    }
    const std::string at = "pair " + std::to_string(trial);
    const double p = pearson(a, b);
    c.expect(p >= -1.0 && p <= 1.0, at + ": pearson out of range");
    c.expect(std::abs(p - pearson(b, a)) < 1e-12, at + ": pearson asymmetric");
    const double s1 = rng.uniform(0.1, 10), s2 = rng.uniform(0.1, 10);
    const VectorXd a2 = (s1 * a.array() + rng.uniform(-5, 5)).matrix();
    const VectorXd b2 = (s2 * b.array() + rng.uniform(-5, 5)).matrix();
    c.expect(std::abs(pearson(a2, b2) - p) < 1e-9, at + ": not affine invariant");

    const int bins = 2 + static_cast<int>(rng.below(9));
    c.expect(std::abs(mutual_information(a, a, bins) - oracle::entropy(to_std(a), bins)) < 1e-9, at + ": MI(x,x) != H(x)");
    c.expect(mutual_information(a, b, bins) >= 0.0, at + ": negative MI");
    c.expect(std::abs(canonical_correlation(a, b, 1) - std::abs(oracle::pearson(to_std(a), to_std(b)))) < 1e-9,
             at + ": CCA(1) != |pearson|");
  }
  return c.done("500 pairs");
}

Outcome batching() {
  Checks c;
  const std::vector<std::string> words = {"trend", "seasonality", "residual", "lag", "moving_average", "fourier_frequency"};
  Rng rng(404);
  std::vector<AnnotationRecord> corpus;
  for (int i = 0; i < 50; ++i) {
    std::string text = "note " + std::to_string(i);
    for (const auto& w : words) {
      const auto repeats = rng.below(3);
      for (std::uint64_t r = 0; r < repeats; ++r) text += " " + spaced(w);
    }
    corpus.push_back({"a" + std::to_string(i), std::nullopt, "d", AnnotationKind::decontextualized, text, Provenance::llm,
                      std::nullopt});
  }
  SubstringMentionScorer mock;
  std::optional<ImportanceScores> reference;
  std::optional<std::vector<std::string>> top;
  for (int b : {1, 5, 50}) {
    const auto s = score_features_offline(words, corpus, {.batch_size = b}, mock);
    const auto k = select_top_k(s, 3);
    if (!reference) {
      reference = s;
      top = k;
      continue;
    }
    c.expect(s.scores == reference->scores, "scores differ at batch " + std::to_string(b));
    c.expect(k == *top, "top-k differs at batch " + std::to_string(b));
  }
  return c.done("top-3 " + join(*top, ","));
}

Outcome reward() {
  Checks c;
  const std::vector<double> a = {0.8, 0.7, 0.6}, b = {0.8, 0.4, 0.9}, z = {0.0, 0.0, 0.0};
  const double ra = compute_reward(a, 0.5), rb = compute_reward(b, 0.5), rz = compute_reward(z, 0.0);
  c.expect(ra == 2.1, "first case");
  c.expect(rb == -0.5, "second case");
  c.expect(rz == 0.0, "third case");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.15g, %.15g, %.15g", ra, rb, rz);
  return c.done(buf);
}

Outcome convergence() {
  int ok = 0;
  for (int s = 0; s < 20; ++s) {
    Rng pick(1000 + s);
    std::vector<std::string> pool = names(), top;
    for (int i = 0; i < 3; ++i) {
      const auto j = pick.below(pool.size());
      top.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    std::map<std::string, double> table;
    for (const auto& n : names()) table[n] = std::count(top.begin(), top.end(), n) ? 1.0 : 0.0;
    TableScorer scorer(table);
    auto net = fresh_net(static_cast<std::uint64_t>(s) + 1);
    const auto candidates = tokenize_all(net.backbone(), names());
    Rng rng(static_cast<std::uint64_t>(s));
    train_policy(net, candidates, scorer, {.k = 3, .tau = 0.3}, 2000, rng);
    ok += sorted(greedy_selection(net, candidates, 3)) == sorted(top);
  }
  return {ok >= 19, std::to_string(ok) + "/20 seeds"};
}

Outcome agreement() {
  Checks c;
  int ok = 0;
  double min_gap = 1.0;
  for (int s = 0; s < 20; ++s) {
    Rng pick(500 + s);
    std::vector<std::string> pool = names();
    std::map<std::string, double> table;
    for (int i = 0; i < 3; ++i) {
      const auto j = pick.below(pool.size());
      table[pool[j]] = pick.uniform(0.8, 1.0);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    for (const auto& n : pool) table[n] = pick.uniform(0.0, 0.5);

    const auto corpus = testing::mention_corpus("agree" + std::to_string(s), {"trend"}, 12);
    testing::TableBatchScorer batch(table);
    const SelectionConfig config{.k = 3, .tau = 0.3, .batch_size = 5};
    const auto offline = score_features_offline(names(), corpus, config, batch);
    std::vector<double> ranked;
    for (const auto& [n, v] : offline.scores) ranked.push_back(v);
    std::sort(ranked.rbegin(), ranked.rend());
    min_gap = std::min(min_gap, ranked[2] - ranked[3]);
    c.expect(ranked[2] - ranked[3] >= 0.3, "trial " + std::to_string(s) + " separation below 0.3");
    c.expect(ranked[2] >= config.tau, "trial " + std::to_string(s) + " top-k below tau");
    const auto offline_top = select_top_k(offline, 3);

    CorpusScorer env(batch, corpus, names(), config);
    auto net = fresh_net(static_cast<std::uint64_t>(s) + 1);
    const auto candidates = tokenize_all(net.backbone(), names());
    Rng rng(static_cast<std::uint64_t>(s));
    train_policy(net, candidates, env, config, 6000, rng);
    ok += sorted(greedy_selection(net, candidates, 3)) == sorted(offline_top);
  }
  c.expect(ok >= 19, std::to_string(ok) + "/20 trials agree");
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d/20 trials agree, min separation %.3f", ok, min_gap);
  return c.done(buf);
}

Outcome incremental(bool frozen_only) {
  Checks c;
  const std::vector<std::string> new_top = {"lag", "seasonality", "trend"};
  int converged = 0;
  const int trials = frozen_only ? 1 : 5;
  for (int s = 0; s < trials; ++s) {
    const auto old_corpus = testing::mention_corpus("old", {"trend", "seasonality", "residual"}, 20);
    const auto new_corpus = testing::mention_corpus("new", {"trend", "seasonality", "lag"}, 20);
    std::set<std::string> old_ids;
    for (const auto& a : old_corpus) old_ids.insert(a.id);

    SubstringMentionScorer mock;
    const SelectionConfig config{.k = 3, .tau = 0.3, .batch_size = 8};
    CorpusScorer old_env(mock, old_corpus, names(), config);
    CorpusScorer new_env(mock, new_corpus, names(), config);

    auto net = fresh_net(static_cast<std::uint64_t>(s) + 1);
    const std::string backbone0 = net.backbone().parameter_bytes();
    const std::string vocab0 = net.vocab_head().parameter_bytes();
    const std::string head0 = net.head_parameter_bytes();
    const auto candidates = tokenize_all(net.backbone(), names());
    Rng rng(static_cast<std::uint64_t>(s));
    train_policy(net, candidates, old_env, config, 2000, rng);
    const auto before = sorted(greedy_selection(net, candidates, 3));
    c.expect(net.backbone().parameter_bytes() == backbone0, "backbone changed in training");
    c.expect(net.vocab_head().parameter_bytes() == vocab0, "vocab head changed in training");
    c.expect(net.head_parameter_bytes() != head0, "attention head did not train");

    const std::size_t old_calls = old_env.call_log().size();
    incremental_update(net, {}, new_env, config, 2000, rng);
    c.expect(net.backbone().parameter_bytes() == backbone0, "backbone changed in incremental update");
    c.expect(net.vocab_head().parameter_bytes() == vocab0, "vocab head changed in incremental update");
    if (frozen_only) continue;

    c.expect(before == std::vector<std::string>{"residual", "seasonality", "trend"}, "did not learn the old top-3");
    c.expect(old_env.call_log().size() == old_calls, "old corpus queried during the update");
    c.expect(!new_env.call_log().empty(), "new corpus never scored");
    for (const auto& call : new_env.call_log()) {
      for (const auto& id : call.annotation_ids) c.expect(!old_ids.count(id), "update referenced old id " + id);
    }
    converged += sorted(greedy_selection(net, candidates, 3)) == new_top;
  }
  if (frozen_only) return c.done("parameter bytes unchanged");
  c.expect(converged == trials, "converged in " + std::to_string(converged) + "/" + std::to_string(trials));
  return c.done(std::to_string(converged) + "/" + std::to_string(trials) + " seeds reach " + join(new_top, ","));
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TESSA_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
  Checks c;
  const auto dir = testing::scratch_dir("accept-e2e");
  const auto fx = testing::write_pipeline_fixture(dir);
  c.expect(fx.series_ids.size() == 10, "fixture is not 10 series");
  const int first = run_cli("run-pipeline --config '" + fx.config.string() + "'", dir / "log1.txt");
  const int second = run_cli("run-pipeline --config '" + fx.config.string() + "'", dir / "log2.txt");
  c.expect(first == 0 && second == 0, "exit codes " + std::to_string(first) + ", " + std::to_string(second));

  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(dir / "out")) runs.push_back(e.path());
  std::sort(runs.begin(), runs.end());
  if (runs.size() != 2) {
    c.expect(false, std::to_string(runs.size()) + " run directories");
    return c.done("");
  }
  const auto a = testing::snapshot_tree(runs[0]);
  const auto b = testing::snapshot_tree(runs[1]);
  c.expect(!a.empty() && a == b, "artifact trees differ");

  const auto transcript = read_jsonl(runs[0] / "transcript.jsonl");
  c.expect(transcript.size() == fx.expected_calls, "transcript has " + std::to_string(transcript.size()) + " calls");
  std::size_t pos = 0;
  while (pos < transcript.size() &&
         !transcript[pos]["request"]["messages"].back()["content"].get<std::string>().starts_with(
             "Task: domain term extraction.")) {
    ++pos;
  }
  const auto refine = read_json(runs[0] / "refine.json");
  const char* cycle[] = {"Task: domain term extraction.", "Task: domain-specific annotation.", "Task: annotation review."};
  std::size_t total_rounds = 0;
  for (std::size_t i = 0; i < fx.series_ids.size(); ++i) {
    const auto& sid = fx.series_ids[i];
    const int logged = static_cast<int>(read_jsonl(runs[0] / "rounds" / (sid + ".jsonl")).size());
    const int rounds = refine[sid]["rounds"].get<int>();
    c.expect(rounds == fx.rounds[i] && logged == rounds, sid + ": rounds mismatch");
    total_rounds += static_cast<std::size_t>(rounds);
    for (int call = 0; call < 3 * rounds; ++call, ++pos) {
      if (pos >= transcript.size()) {
        c.expect(false, sid + ": transcript ends early");
        break;
      }
      const auto prompt = transcript[pos]["request"]["messages"].back()["content"].get<std::string>();
      c.expect(prompt.starts_with(cycle[call % 3]), sid + ": call " + std::to_string(call) + " out of order");
      if (call % 3 != 0) c.expect(contains_ci(prompt, sid), sid + ": call " + std::to_string(call) + " for another series");
    }
  }
  c.expect(pos == transcript.size(), "calls after the last refine loop");
  return c.done("2 runs identical, " + std::to_string(a.size()) + " files, " + std::to_string(3 * total_rounds) +
                " refine calls over " + std::to_string(total_rounds) + " rounds");
}

std::vector<JudgeScore> column(const std::vector<int>& values) {
  std::vector<JudgeScore> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({"item" + std::to_string(i), Metric::clarity, values[i], "j1"});
  return out;
}

Outcome judging() {
  Checks c;
  const auto hand = aggregate(column({5, 4, 3}), column({3, 4, 2}));
  c.expect(hand.per_metric.size() == 1, "metric rows");
  const auto& row = hand.per_metric.at(0);
  c.expect(std::abs(row.mean_t - 4.0) < 1e-12 && std::abs(row.mean_d - 3.0) < 1e-12, "hand means");
  c.expect(std::abs(row.p_t_gt_d - 2.0 / 3) < 1e-12, "hand P(T>D)");

  const std::vector<Metric> metrics = {Metric::clarity, Metric::comprehensiveness, Metric::domain_relevance};
  Rng rng(1111);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<JudgeScore> t, d;
    const int items = 1 + static_cast<int>(rng.below(12));
    const int judges = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < items; ++i) {
      for (Metric m : metrics) {
        for (int j = 0; j < judges; ++j) {
          t.push_back({"s" + std::to_string(i), m, 1 + static_cast<int>(rng.below(5)), "j" + std::to_string(j)});
          d.push_back({"s" + std::to_string(i), m, 1 + static_cast<int>(rng.below(5)), "j" + std::to_string(j)});
        }
      }
    }
    const auto r = aggregate(t, d);
    const auto expected = oracle::judge_summary(t, d, metrics);
    std::vector<const MetricComparison*> rows;
    for (const auto& pm : r.per_metric) rows.push_back(&pm);
    rows.push_back(&r.overall);
    for (const auto* x : rows) {
      const std::string at = "table " + std::to_string(trial) + " " + x->label;
      c.expect(std::abs(x->p_t_gt_d + x->p_d_gt_t + x->p_tie - 1.0) < 1e-12, at + ": probabilities do not sum to 1");
      const auto& e = expected.at(x->label);
      c.expect(std::abs(x->mean_t - e.mean_t) < 1e-12 && std::abs(x->mean_d - e.mean_d) < 1e-12, at + ": means");
      c.expect(std::abs(x->p_t_gt_d - e.win) < 1e-12 && std::abs(x->p_d_gt_t - e.loss) < 1e-12, at + ": win/loss");
    }
  }

  std::vector<AnnotationRecord> ta, da;
  for (int i = 0; i < 8; ++i) {
    const std::string sid = "s" + std::to_string(i);
    ta.push_back({sid + ":t", sid, "stock", AnnotationKind::target_specific, "tessa " + sid, Provenance::llm, std::nullopt});
    da.push_back({sid + ":d", sid, "stock", AnnotationKind::general, "direct " + sid, Provenance::llm, std::nullopt});
  }
  Rng judge_rng(2222);
  testing::LocalGateway gw(std::make_shared<FunctionBackend>([&](const ChatRequest&) {
    std::ostringstream o;
    o << "Clarity: " << 1 + judge_rng.below(5) << "\nComprehensiveness: " << 1 + judge_rng.below(5)
      << "\nDomain-relevance: " << 1 + judge_rng.below(5) << "\n";
    return o.str();
  }));
  const auto cmp = compare_methods(ta, da, metrics, {.judge_count = 3}, gw, TemplateStore::defaults(), "TESSA", "Direct");
  const auto dir = testing::scratch_dir("accept-judge");
  write_raw_scores(dir / "scores.jsonl", cmp);
  const auto [rt, rd] = read_raw_scores(dir / "scores.jsonl", "TESSA", "Direct");
  const auto again = aggregate(rt, rd, "TESSA", "Direct");
  c.expect(report_to_json(again).dump() == report_to_json(cmp.report).dump(), "report does not recompute from raw JSONL");
  return c.done("hand table 4.00/3.00, P(T>D) 0.667; 100 random tables; report recomputes");
}

Outcome synthetic() {
  Checks c;
  std::map<int, int> seen;
  const auto items = generate_dataset(100, 2024);
  const auto again = generate_dataset(100, 2024);
  c.expect(items.size() == 100 && again.size() == 100, "dataset size");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& spec = items[i].spec;
    const std::string& text = items[i].truth.text;
    const std::string at = items[i].series.id;
    const std::map<std::string, bool> expect = {
        {"upward trend", spec.trend.kind == TrendKind::up},
        {"downward trend", spec.trend.kind == TrendKind::down},
        {"mixed trend", spec.trend.kind == TrendKind::mixed},
        {"seasonal pattern with period", spec.seasonality.has_value()},
        {"periodic Fourier components", !spec.fourier.empty()},
        {"random fluctuations (noise)", spec.noise_sigma > 0},
    };
    int present = 0;
    for (const auto& [phrase, on] : expect) {
      c.expect(contains_ci(text, phrase) == on, at + ": '" + phrase + "'");
      present += on;
    }
    ++seen[present];
    c.expect(items[i].series == again[i].series && items[i].truth.text == again[i].truth.text, at + ": not reproducible");
  }
  c.expect(!(generate_dataset(5, 2025)[0].series == items[0].series), "different seeds give the same series");
  std::string spread;
  for (const auto& [k, v] : seen) spread += (spread.empty() ? "" : " ") + std::to_string(k) + ":" + std::to_string(v);
  return c.done("100 series agree; component counts " + spread);
}

}  // namespace

int main() {
  criterion(1, "decomposition additivity", 5, decomposition);
  criterion(2, "spectral recovery", 2, spectral);
  criterion(3, "correlation suite", 5, correlation);
  criterion(4, "offline scoring batching", 1, batching);
  criterion(5, "reward function", 0, reward);
  criterion(6, "rl convergence", 60, convergence);
  criterion(7, "offline/rl agreement", 0, agreement);
  criterion(8, "incremental update", 60, [] { return incremental(false); });
  criterion(9, "frozen parameters", 0, [] { return incremental(true); });
  criterion(10, "end-to-end determinism", 0, end_to_end);
  criterion(11, "judge aggregation", 0, judging);
  criterion(12, "synthetic ground truth", 0, synthetic);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
