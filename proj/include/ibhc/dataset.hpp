#pragma once

// Loading vector data from CSV, target hierarchies, and the average-linkage
// baseline.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ibhc/matrix.hpp"
#include "ibhc/tree.hpp"

namespace ibhc {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Matrix features;                  // centered unless loaded with center = false
  std::vector<std::string> labels;  // one per row, empty without a label column
  std::vector<std::string> columns; // feature column names (header or "x<j>")
  std::filesystem::path source;
  std::vector<std::size_t> source_rows;  // 0-based data row in the file for each row
  std::optional<std::uint64_t> subsample_seed;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

enum class HeaderMode { kAuto, kPresent, kAbsent };

struct LoadOptions {
  // Column holding class labels: a header name, or a 0-based index written
  // as digits. Unset means every column is a feature.
  std::optional<std::string> label_column;
  HeaderMode header = HeaderMode::kAuto;
  // Keep this many rows chosen at random (0 keeps everything).
  std::size_t subsample = 0;
  std::uint64_t seed = 0;
  bool center = true;
};

// Errors (DataError) name the file line and column of the offending cell.
Dataset LoadDataset(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset ParseDataset(std::istream& in, const LoadOptions& options = {});

// Root with one child per class; each class of two or more points is an
// unresolved cluster. Classes are ordered by first appearance.
Tree TargetFromLabels(const std::vector<std::string>& labels);

// Target tree from a Newick file whose labels are dataset indices or, given
// `names`, entries of that table.
Tree TargetFromNewick(const std::filesystem::path& path, std::size_t n,
                      const std::unordered_map<std::string, int>* names = nullptr);

// Agglomerative clustering with average linkage on Euclidean distance. Ties
// go to the pair whose smallest members are lexicographically first; merge k
// (1-based) of n - 1 sits at time 1 - k/n.
Tree AverageLinkage(const Matrix& data);

}  // namespace ibhc
