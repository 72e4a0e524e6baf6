#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ddgen/ad/graph.hpp"
#include "ddgen/ad/matrix.hpp"

namespace ddgen::ad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named tensors plus string metadata.
///
/// On disk:
///   DDGEN-CHECKPOINT 1
///   meta <count>
///   <key>=<value>            (one line each, sorted by key)
///   tensors <count>
///   <name> <rows> <cols>     followed by rows*cols little-endian float64
///                            values and a newline
/// Tensors keep insertion order, so parameter stores round-trip in a stable
/// order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void put(std::string name, Matrix value);
  const Matrix* find(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  const std::string& meta_at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter value as "<prefix><name>".
void store_parameters(Checkpoint& ckpt, const ParameterStore& params,
                      std::string_view prefix = "param/");
/// Overwrites parameter values from "<prefix><name>"; every parameter must be
/// present with a matching shape.
void restore_parameters(const Checkpoint& ckpt, ParameterStore& params,
                        std::string_view prefix = "param/");

}  // namespace ddgen::ad
