#pragma once

// Simulated interactive runs: sample, query, answer from a target tree,
// repeat; plus the unconstrained-sampler and average-linkage baselines.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibhc/dataset.hpp"
#include "ibhc/querying.hpp"
#include "ibhc/sampler.hpp"

namespace ibhc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::filesystem::path dataset;
  LoadOptions load;
  // Exactly one of these names the target.
  std::optional<std::string> target_labels;        // label column
  std::optional<std::filesystem::path> target_newick;

  std::vector<SchemeKind> schemes{SchemeKind::kInterleaved};
  std::size_t iterations_per_query = 100;
  std::size_t total_queries = 30;
  std::size_t subset_size = 10;
  std::size_t candidates = 20;
  std::size_t runs = 4;
  std::uint64_t seed = 0;
  std::optional<double> sigma2;  // unset: estimated from the data
  double c = 1.0;
  std::size_t trace_capacity = 20;
  std::size_t snapshot_stride = 5;
  bool baselines = true;
  SamplerOptions sampler;
};

// Relative paths in the JSON resolve against `base_dir`. Throws ConfigError.
ExperimentConfig ParseExperimentConfig(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

struct MetricRow {
  std::string scheme;
  std::size_t run = 0;
  std::size_t query_index = 0;
  double triplet_distance = 0.0;
  double log_posterior = 0.0;
  std::size_t constraints = 0;
};

// Means over runs at one query index.
struct SummaryRow {
  std::string scheme;
  std::size_t runs = 0;
  std::size_t query_index = 0;
  double triplet_distance = 0.0;
  double log_posterior = 0.0;
  double constraints = 0.0;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<SummaryRow> summary;
};

struct ExperimentHooks {
  // After every sampler iteration of a querying run.
  std::function<void(SchemeKind, std::size_t run, const Chain&)> on_iteration;
  std::function<void(SchemeKind, std::size_t run, const QueryRecord&)> on_query;
};

// With `out_dir`, writes per-run query logs and tree traces under it.
ExperimentResult RunExperiment(const ExperimentConfig& config, const Dataset& data,
                               const Tree& target, const ExperimentHooks& hooks = {},
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Loads the dataset and target named by the config.
std::pair<Dataset, Tree> LoadExperimentInputs(const ExperimentConfig& config);

DdtParams ResolveParams(const ExperimentConfig& config, const Dataset& data);

void WriteMetricsCsv(std::ostream& out, const std::vector<MetricRow>& rows);
void WriteSummaryCsv(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace ibhc
