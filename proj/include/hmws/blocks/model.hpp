#pragma once

#include <array>
#include <vector>

#include "hmws/blocks/scene.hpp"
#include "hmws/model.hpp"
#include "hmws/nn.hpp"

namespace hmws::blocks {

/// Scenes of block towers on a grid of cells. z_d is the flat parse (see
/// Parse), z_c one raw horizontal offset per placed block. theta is the
/// primitive set; the discrete prior is uniform and has no parameters.
///
/// Recognition embeds the image with a small CNN and reads four linear heads:
/// tower heights, primitive indices, and the mean and log-std of the block
/// offsets, the latter two also fed a one-hot code of z_d.
class BlocksModel : public HybridModel {
 public:
  explicit BlocksModel(BlocksConfig config);

  std::string_view domain() const override { return "blocks2d"; }
  const BlocksConfig& config() const { return config_; }

  // Side lengths in cell units and RGB colors of the primitives.
  std::vector<double> primitive_sides() const;
  std::vector<std::array<double, 3>> primitive_colors() const;
  void set_primitives(const std::vector<double>& sides, const std::vector<std::array<double, 3>>& colors);

  // Noise-free rendering of a scene under the current primitives.
  Tensor render_scene(const Discrete& z_d, std::span<const double> z_c) const;

  std::string describe(const Discrete& z_d) const override;

 protected:
  Var prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const override;
  GaussianVar prior_continuous(Tape& tape, const Discrete& z_d) const override;
  Var log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const override;
  Observation sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const override;
  Var recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const override;
  GaussianVar recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const override;

 private:
  Var sides(Tape& tape) const;
  Var block_colors(Tape& tape, const Parse& parse) const;
  Var embedding(Tape& tape, const Observation& x) const;
  void check_image(const Observation& x) const;

  BlocksConfig config_;
  SlotId side_raw_;
  SlotId color_raw_;  // colored mode only
  nn::ImageEmbedding embed_;
  nn::Linear height_head_;    // cells * (B_max + 1)
  nn::Linear index_head_;     // cells * B_max * P
  nn::Linear mean_head_;      // cells * B_max
  nn::Linear log_std_head_;   // cells * B_max
};

// Primitive set used to generate synthetic scenes.
std::vector<double> reference_sides(std::size_t primitives);
std::vector<std::array<double, 3>> reference_colors(std::size_t primitives);

}  // namespace hmws::blocks
