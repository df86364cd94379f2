#pragma once

#include "tessa/dataset_io.hpp"
#include "tessa/error.hpp"
#include "tessa/feature_select.hpp"
#include "tessa/llm_gateway.hpp"
#include "tessa/pipeline.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tessa::testing {

/// A fresh, empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

/// Code of the tessa::Error thrown by `fn`, or nullopt when it returns.
inline std::optional<Errc> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Gateway with `backend` registered as the default "main".
struct LocalGateway : Gateway {
  explicit LocalGateway(std::shared_ptr<Backend> backend, GatewayConfig config = {}) : Gateway(std::move(config)) {
    register_backend("main", std::move(backend));
  }
};

inline std::shared_ptr<Backend> queue(const std::vector<std::string>& responses) {
  return ScriptedBackend::from_queue(responses);
}

/// Every regular file below `root`, relative path -> bytes.
std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& root);

struct PipelineFixture {
  std::filesystem::path root;
  std::filesystem::path config;
  std::vector<std::string> series_ids;
  std::vector<int> rounds;  // refine rounds expected per target series
  std::size_t source_annotations = 0;
  std::size_t expected_calls = 0;
};

struct PipelineFixtureOptions {
  int series = 10;
  /// Reviewer verdicts per series: 0 approves at once, r > 0 revises r times
  /// first. Missing entries approve at once.
  std::vector<int> revisions = {1, 3};
  int max_rounds = 3;
  SelectionPath mode = SelectionPath::offline;
  int episodes = 2000;
  std::uint64_t seed = 11;
};

/// Source corpus (energy annotations), target = synthetic corpus plus five
/// target-domain exemplars, a scripted backend script covering every call in
/// pipeline order, and config.json tying them together.
PipelineFixture write_pipeline_fixture(const std::filesystem::path& root, const PipelineFixtureOptions& options = {});

/// Additive batch scorer: each annotation in the batch adds table[name].
class TableBatchScorer : public BatchScorer {
public:
  explicit TableBatchScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
  std::map<std::string, double> score(std::span<const std::string> features,
                                      std::span<const AnnotationRecord> batch) override;
  ScoreSource source() const override { return ScoreSource::mock; }

private:
  std::map<std::string, double> table_;
};

/// Ten registered feature names used by the RL fixtures.
const std::vector<std::string>& rl_names();

std::vector<AnnotationRecord> mention_corpus(const std::string& prefix, const std::vector<std::string>& mentioned, int n);

}  // namespace tessa::testing
