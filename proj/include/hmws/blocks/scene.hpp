#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hmws/tape.hpp"

namespace hmws::blocks {

enum class ColorMode { kColored, kUnicolor };

struct BlocksConfig {
  std::size_t grid = 2;        // cells per side
  std::size_t max_blocks = 3;  // per tower
  std::size_t primitives = 5;
  std::size_t height = 64;
  std::size_t width = 64;
  double sigma_pix = 0.1;
  double tau = 1.5;  // edge softness, pixels
  ColorMode color_mode = ColorMode::kColored;
  std::size_t embed = 64;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t cells() const { return grid * grid; }
  std::size_t pixels() const { return height * width * 3; }
  double px_per_unit() const { return static_cast<double>(width) / static_cast<double>(grid); }
};

inline constexpr std::array<double, 3> kBackground = {0.95, 0.95, 0.95};
inline constexpr std::array<double, 3> kUnicolor = {0.35, 0.45, 0.8};
// Back rows stand this much higher in the frame, in cell units.
inline constexpr double kRowLift = 0.25;

/// A parse decoded from its flat form: per-cell tower heights, then the
/// primitive index of every placed block, cell by cell from the ground up.
/// Cells are numbered row-major with row 0 at the back.
struct Parse {
  std::vector<int> heights;
  std::vector<int> indices;
  std::vector<std::size_t> cell_of;  // per block
  std::vector<std::size_t> level;    // per block, 0 = on the ground
};

// Throws DataError on malformed input.
Parse decode(const BlocksConfig& config, const std::vector<int>& z_d);
std::vector<int> encode(const std::vector<int>& heights, const std::vector<int>& indices);

/// Block geometry in pixels as a [n, 3] Var of (center x, center y, half side).
/// `side` holds the per-primitive side lengths in cell units.
Var place_blocks(const BlocksConfig& config, const Parse& parse, Var raw_positions, Var side);

struct Rect {
  double cx, cy, half;
};
// Plain-value wrapper over the above.
std::vector<Rect> place_blocks(const BlocksConfig& config, const Parse& parse, const std::vector<double>& raw_positions,
                               const std::vector<double>& side);

/// Soft painter-order rasterizer. geometry [n, 3], colors [n, 3]; returns an
/// [H, W, 3] image. Differentiable in both inputs.
Var render(const BlocksConfig& config, Var geometry, Var colors);
Tensor render(const BlocksConfig& config, const std::vector<Rect>& rects, const std::vector<std::array<double, 3>>& colors);

// Sum of independent Normal(observed; image, sigma^2) log densities.
double pixel_loglik(const Tensor& image, const Tensor& observed, double sigma);
Var pixel_loglik(Var image, const Tensor& observed, double sigma);

}  // namespace hmws::blocks
