#pragma once

// Newick reading and writing. Divergence times travel as branch lengths:
// length(u -> v) = t(v) - t(u), with the root's length measured from the stem
// at time 0. Trees without usable lengths (for example target hierarchies)
// get depth-based times instead.

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

#include "ibhc/tree.hpp"

namespace ibhc {

class NewickError : public std::runtime_error {
 public:
  NewickError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct NewickOptions {
  // Maps leaf labels to dataset indices. Without it labels must be integers.
  const std::unordered_map<std::string, int>* labels = nullptr;
  // Leaf id universe; 0 means one past the largest leaf id.
  std::size_t universe = 0;
  // Latent value dimension of the returned tree.
  std::size_t dim = 0;
};

Tree ParseNewick(std::string_view text, const NewickOptions& options = {});

// Serializes with times as branch lengths. `names`, when given, label leaf i
// with names[i]; otherwise leaves are labeled by index. No trailing newline.
std::string ToNewick(const Tree& tree, std::span<const std::string> names = {});

Tree ReadNewickFile(const std::filesystem::path& path, const NewickOptions& options = {});
void WriteNewickFile(const std::filesystem::path& path, const Tree& tree,
                     std::span<const std::string> names = {});

}  // namespace ibhc
