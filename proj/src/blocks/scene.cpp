#include "hmws/blocks/scene.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <utility>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws::blocks {

using namespace hmws::ad;

void BlocksConfig::validate() const {
  if (grid < 1) throw ConfigError("blocks grid must be at least 1");
  if (max_blocks < 1) throw ConfigError("max_blocks must be at least 1");
  if (primitives < 1) throw ConfigError("need at least one primitive");
  if (height < 1 || width < 1) throw ConfigError("image size must be positive");
  if (!(sigma_pix > 0)) throw ConfigError("sigma_pix must be positive");
  if (!(tau > 0)) throw ConfigError("tau must be positive");
}

Parse decode(const BlocksConfig& config, const std::vector<int>& z_d) {
  const std::size_t cells = config.cells();
  if (z_d.size() < cells) throw DataError("scene parse shorter than the cell count");
  Parse p;
  p.heights.assign(z_d.begin(), z_d.begin() + static_cast<std::ptrdiff_t>(cells));
  std::size_t total = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    const int h = p.heights[c];
    if (h < 0 || h > static_cast<int>(config.max_blocks)) {
      throw DataError("tower height " + std::to_string(h) + " out of range in cell " + std::to_string(c));
    }
    for (int l = 0; l < h; ++l) {
      p.cell_of.push_back(c);
      p.level.push_back(static_cast<std::size_t>(l));
    }
    total += static_cast<std::size_t>(h);
  }
  if (z_d.size() != cells + total) {
    throw DataError("scene parse has " + std::to_string(z_d.size() - cells) + " primitive indices for " +
                    std::to_string(total) + " blocks");
  }
  p.indices.assign(z_d.begin() + static_cast<std::ptrdiff_t>(cells), z_d.end());
  for (int idx : p.indices) {
    if (idx < 0 || idx >= static_cast<int>(config.primitives)) {
      throw DataError("primitive index " + std::to_string(idx) + " out of range");
    }
  }
  return p;
}

std::vector<int> encode(const std::vector<int>& heights, const std::vector<int>& indices) {
  std::vector<int> out = heights;
  out.insert(out.end(), indices.begin(), indices.end());
  return out;
}

Var place_blocks(const BlocksConfig& config, const Parse& parse, Var raw_positions, Var side) {
  Tape& tape = *side.tape();
  const std::size_t n = parse.indices.size();
  if (raw_positions.size() != n) {
    throw ShapeError("expected " + std::to_string(n) + " block positions, got " + shape_string(raw_positions.shape()));
  }
  if (n == 0) return tape.constant(Tensor(Shape{0, 3}));
  const double scale = config.px_per_unit();
  std::vector<Var> out;
  out.reserve(3 * n);
  // Left edge, width and top of the block below, per cell.
  std::vector<Var> left(config.cells()), width(config.cells()), top(config.cells());
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t c = parse.cell_of[b];
    const std::size_t row = c / config.grid, col = c % config.grid;
    Var w = mul(index(side, static_cast<std::size_t>(parse.indices[b])), scale);
    Var base_left, span, bottom;
    if (parse.level[b] == 0) {
      base_left = tape.constant(static_cast<double>(col) * scale);
      span = tape.constant(scale);
      bottom = tape.constant(static_cast<double>(config.height) -
                             kRowLift * scale * static_cast<double>(config.grid - 1 - row));
    } else {
      base_left = left[c];
      span = width[c];
      bottom = top[c];
    }
    Var my_left = add(base_left, mul(sigmoid(index(raw_positions, b)), sub(span, w)));
    Var half = mul(w, 0.5);
    out.push_back(add(my_left, half));
    out.push_back(sub(bottom, half));
    out.push_back(half);
    left[c] = my_left;
    width[c] = w;
    top[c] = sub(bottom, w);
  }
  return reshape(concat(out), Shape{n, 3});
}

std::vector<Rect> place_blocks(const BlocksConfig& config, const Parse& parse, const std::vector<double>& raw_positions,
                               const std::vector<double>& side) {
  Tape tape;
  const Tensor g =
      place_blocks(config, parse, tape.constant(Tensor::vector(raw_positions)), tape.constant(Tensor::vector(side)))
          .value();
  std::vector<Rect> out(parse.indices.size());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = {g[3 * b], g[3 * b + 1], g[3 * b + 2]};
  return out;
}

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Separable soft occupancy of one block along each axis.
void masks(const BlocksConfig& config, const double* geo, std::vector<double>& ax, std::vector<double>& ay) {
  ax.resize(config.width);
  ay.resize(config.height);
  for (std::size_t j = 0; j < config.width; ++j) ax[j] = sig((geo[2] - std::abs(j + 0.5 - geo[0])) / config.tau);
  for (std::size_t i = 0; i < config.height; ++i) ay[i] = sig((geo[2] - std::abs(i + 0.5 - geo[1])) / config.tau);
}

Tensor background(const BlocksConfig& config) {
  Tensor img(Shape{config.height, config.width, 3});
  auto v = img.values();
  for (std::size_t p = 0; p < config.height * config.width; ++p)
    for (int c = 0; c < 3; ++c) v[3 * p + c] = kBackground[c];
  return img;
}

// Composites block b over `img` in place.
void composite(const BlocksConfig& config, std::span<double> img, const double* color, const std::vector<double>& ax,
               const std::vector<double>& ay) {
  for (std::size_t i = 0; i < config.height; ++i) {
    for (std::size_t j = 0; j < config.width; ++j) {
      const double a = ay[i] * ax[j];
      double* px = &img[3 * (i * config.width + j)];
      for (int c = 0; c < 3; ++c) px[c] += a * (color[c] - px[c]);
    }
  }
}

}  // namespace

Tensor render(const BlocksConfig& config, const std::vector<Rect>& rects, const std::vector<std::array<double, 3>>& colors) {
  if (rects.size() != colors.size()) throw ShapeError("render: one color per block is required");
  Tensor img = background(config);
  std::vector<double> ax, ay;
  for (std::size_t b = 0; b < rects.size(); ++b) {
    const double geo[3] = {rects[b].cx, rects[b].cy, rects[b].half};
    masks(config, geo, ax, ay);
    composite(config, img.values(), colors[b].data(), ax, ay);
  }
  return img;
}

Var render(const BlocksConfig& config, Var geometry, Var colors) {
  const std::size_t n = geometry.size() / 3;
  if (geometry.size() != 3 * n || colors.size() != 3 * n) {
    throw ShapeError("render: geometry " + shape_string(geometry.shape()) + " and colors " +
                     shape_string(colors.shape()) + " must both be [n, 3]");
  }
  Tape& tape = *geometry.tape();
  if (n == 0) return tape.constant(background(config));
  // Keep the image under each layer for the backward pass.
  auto layers = std::make_shared<std::vector<Tensor>>();
  Tensor img = background(config);
  const auto geo = geometry.value().values();
  const auto col = colors.value().values();
  std::vector<double> ax, ay;
  for (std::size_t b = 0; b < n; ++b) {
    layers->push_back(img);
    masks(config, &geo[3 * b], ax, ay);
    composite(config, img.values(), &col[3 * b], ax, ay);
  }
  Var g_keep = geometry, c_keep = colors;
  auto backward = [config, layers, g_keep, c_keep, n](const Tensor& grad, std::span<Tensor* const> gin) {
    const auto geo = g_keep.value().values();
    const auto col = c_keep.value().values();
    std::vector<double> g(grad.values().begin(), grad.values().end());
    std::vector<double> ax, ay, dax(config.width), day(config.height);
    for (std::size_t b = n; b-- > 0;) {
      masks(config, &geo[3 * b], ax, ay);
      std::fill(dax.begin(), dax.end(), 0.0);
      std::fill(day.begin(), day.end(), 0.0);
      double dcol[3] = {0, 0, 0};
      const auto prev = (*layers)[b].values();
      for (std::size_t i = 0; i < config.height; ++i) {
        for (std::size_t j = 0; j < config.width; ++j) {
          const double a = ay[i] * ax[j];
          const std::size_t o = 3 * (i * config.width + j);
          double da = 0.0;
          for (int c = 0; c < 3; ++c) {
            da += g[o + c] * (col[3 * b + c] - prev[o + c]);
            dcol[c] += g[o + c] * a;
            g[o + c] *= 1.0 - a;
          }
          dax[j] += da * ay[i];
          day[i] += da * ax[j];
        }
      }
      if (gin[1])
        for (int c = 0; c < 3; ++c) (*gin[1])[3 * b + c] += dcol[c];
      if (gin[0]) {
        // d sigma((h - |p - c|) / tau) = s (1 - s) / tau * (dh + sign(p - c) dc)
        double dcx = 0, dcy = 0, dh = 0;
        for (std::size_t j = 0; j < config.width; ++j) {
          const double d = dax[j] * ax[j] * (1 - ax[j]) / config.tau;
          const double off = j + 0.5 - geo[3 * b];
          dh += d;
          dcx += off > 0 ? d : (off < 0 ? -d : 0.0);
        }
        for (std::size_t i = 0; i < config.height; ++i) {
          const double d = day[i] * ay[i] * (1 - ay[i]) / config.tau;
          const double off = i + 0.5 - geo[3 * b + 1];
          dh += d;
          dcy += off > 0 ? d : (off < 0 ? -d : 0.0);
        }
        (*gin[0])[3 * b] += dcx;
        (*gin[0])[3 * b + 1] += dcy;
        (*gin[0])[3 * b + 2] += dh;
      }
    }
  };
  return tape.record("render", {geometry, colors}, std::move(img), std::move(backward));
}

double pixel_loglik(const Tensor& image, const Tensor& observed, double sigma) {
  if (image.shape() != observed.shape()) {
    throw ShapeError("pixel likelihood: image " + shape_string(image.shape()) + " vs observed " +
                     shape_string(observed.shape()));
  }
  const double norm = -0.5 * std::log(2 * std::numbers::pi) - std::log(sigma);
  const auto a = image.values(), b = observed.values();
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(a.size()) * norm - 0.5 * ss / (sigma * sigma);
}

Var pixel_loglik(Var image, const Tensor& observed, double sigma) {
  const double value = pixel_loglik(image.value(), observed, sigma);
  Var keep = image;
  auto obs = std::make_shared<Tensor>(observed);
  auto backward = [keep, obs, sigma](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const auto a = keep.value().values();
    const auto b = std::as_const(*obs).values();
    const double s = g.item() / (sigma * sigma);
    for (std::size_t i = 0; i < a.size(); ++i) (*gin[0])[i] += s * (b[i] - a[i]);
  };
  return image.tape()->record("pixel_loglik", {image}, Tensor::scalar(value), std::move(backward));
}

}  // namespace hmws::blocks
