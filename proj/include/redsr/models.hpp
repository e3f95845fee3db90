#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "redsr/adam.hpp"
#include "redsr/tensor.hpp"

namespace redsr {

/// Shape descriptor for the three networks. Uniquely determines every
/// parameter shape.
struct Architecture {
  std::size_t repr_dim = 16;
  std::size_t scale = 2;
  /// Hidden widths of the five-layer 5x5 encoder; the last layer emits repr_dim.
  std::vector<std::size_t> encoder_channels{32, 32, 64, 64};
  std::vector<std::size_t> encoder_strides{1, 2, 1, 2, 1};
  std::size_t degrader_width = 32;
  std::size_t degrader_blocks = 4;
  std::size_t generator_width = 32;
  std::size_t generator_blocks = 4;
  std::size_t mlp_width = 64;
  /// Second encoder head emitting a log-variance (KL variant).
  bool logvar_head = false;
  double slope = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
  bool operator==(const Architecture&) const = default;
};

struct Model {
  Architecture arch;
  ParamMap params;

  /// Fan-in scaled normal conv/linear weights, zero biases, zero modulation
  /// heads (identity modulation).
  static Model init(const Architecture& arch, std::uint64_t seed);

  const Tensor& param(const std::string& name) const;
  /// Parameters whose names start with `prefix` ("enc.", "deg.", "gen.").
  ParamMap subset(const std::string& prefix) const;
};

struct Encoding {
  Tensor f;                      // [N, repr_dim]
  std::optional<Tensor> logvar;  // [N, repr_dim] when arch.logvar_head
};

/// lr [N,3,h,w], h,w >= 16.
Encoding encode(const Model& model, const Tensor& lr);
/// hr [N,3,H,W], f [N,repr_dim] -> [N,3,H/s,W/s].
Tensor degrade_net(const Model& model, const Tensor& hr, const Tensor& f);
/// lr [N,3,h,w], f [N,repr_dim] -> [N,3,s*h,s*w].
Tensor generate(const Model& model, const Tensor& lr, const Tensor& f);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<Adam> optimizer;
  std::uint64_t step = 0;
};

// Layout: "RDCK", u32 version, u32 length + JSON header (architecture,
// optimizer scalars, step), u32 block count, then per block u32 name length,
// name bytes, RDT1 tensor.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optimizer,
                     std::uint64_t step);
/// Throws FormatError on a bad magic, a version mismatch (naming both
/// versions) or, when `expected` is given, an architecture mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Architecture>& expected = std::nullopt);

}  // namespace redsr
