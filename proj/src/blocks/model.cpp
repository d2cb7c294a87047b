#include "hmws/blocks/model.hpp"

#include <algorithm>
#include <cmath>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws::blocks {

using namespace hmws::ad;

std::vector<double> reference_sides(std::size_t primitives) {
  const double base[] = {0.3, 0.45, 0.6, 0.38, 0.52};
  std::vector<double> out(primitives);
  for (std::size_t p = 0; p < primitives; ++p) out[p] = base[p % 5] * (1.0 - 0.04 * static_cast<double>(p / 5));
  return out;
}

std::vector<std::array<double, 3>> reference_colors(std::size_t primitives) {
  const std::array<double, 3> base[] = {
      {0.85, 0.2, 0.15}, {0.15, 0.6, 0.25}, {0.2, 0.3, 0.85}, {0.9, 0.75, 0.1}, {0.55, 0.2, 0.65}};
  std::vector<std::array<double, 3>> out(primitives);
  for (std::size_t p = 0; p < primitives; ++p) out[p] = base[p % 5];
  return out;
}

BlocksModel::BlocksModel(BlocksConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng = derive_stream(config_.seed, 0, kInitStream);
  const std::size_t P = config_.primitives, cells = config_.cells(), B = config_.max_blocks;
  Tensor side(Shape{P});
  for (std::size_t p = 0; p < P; ++p) side[p] = softplus_inverse(0.35 + 0.2 * uniform01(rng));
  side_raw_ = params_.add("blocks/side_raw", Role::kGenerative, std::move(side));
  if (config_.color_mode == ColorMode::kColored) {
    Tensor color(Shape{P, 3});
    for (auto& v : color.values()) v = 0.5 * standard_normal(rng);
    color_raw_ = params_.add("blocks/color_raw", Role::kGenerative, std::move(color));
  }
  embed_ = nn::ImageEmbedding::create(params_, "blocks/q/embed", Role::kRecognition, config_.height, config_.width, 3,
                                      config_.embed, rng);
  const std::size_t onehot = cells * (B + 1) + cells * B * (P + 1);
  height_head_ = nn::Linear::create(params_, "blocks/q/height", Role::kRecognition, config_.embed, cells * (B + 1), rng, 0.1);
  index_head_ = nn::Linear::create(params_, "blocks/q/index", Role::kRecognition, config_.embed, cells * B * P, rng, 0.1);
  mean_head_ = nn::Linear::create(params_, "blocks/q/pos_mean", Role::kRecognition, config_.embed + onehot, cells * B, rng, 0.1);
  log_std_head_ =
      nn::Linear::create(params_, "blocks/q/pos_log_std", Role::kRecognition, config_.embed + onehot, cells * B, rng, 0.1);
}

std::vector<double> BlocksModel::primitive_sides() const {
  std::vector<double> out;
  for (double r : params_.value(side_raw_).values()) out.push_back(softplus(r));
  return out;
}

std::vector<std::array<double, 3>> BlocksModel::primitive_colors() const {
  std::vector<std::array<double, 3>> out(config_.primitives, kUnicolor);
  if (config_.color_mode == ColorMode::kColored) {
    const Tensor& raw = params_.value(color_raw_);
    for (std::size_t p = 0; p < out.size(); ++p)
      for (int c = 0; c < 3; ++c) out[p][c] = sigmoid(raw[3 * p + c]);
  }
  return out;
}

void BlocksModel::set_primitives(const std::vector<double>& sides, const std::vector<std::array<double, 3>>& colors) {
  if (sides.size() != config_.primitives) throw ConfigError("one side length per primitive is required");
  Tensor side(Shape{config_.primitives});
  for (std::size_t p = 0; p < sides.size(); ++p) side[p] = softplus_inverse(sides[p]);
  params_.mutable_value(side_raw_) = std::move(side);
  if (config_.color_mode == ColorMode::kColored) {
    if (colors.size() != config_.primitives) throw ConfigError("one color per primitive is required");
    Tensor raw(Shape{config_.primitives, 3});
    for (std::size_t p = 0; p < colors.size(); ++p)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(colors[p][c], 1e-6, 1 - 1e-6);
        raw[3 * p + c] = std::log(v / (1 - v));
      }
    params_.mutable_value(color_raw_) = std::move(raw);
  }
}

Var BlocksModel::sides(Tape& tape) const { return softplus(tape.param(side_raw_)); }

Var BlocksModel::block_colors(Tape& tape, const Parse& parse) const {
  const std::size_t n = parse.indices.size();
  if (n == 0) return tape.constant(Tensor(Shape{0, 3}));
  if (config_.color_mode == ColorMode::kUnicolor) {
    Tensor t(Shape{n, 3});
    for (std::size_t b = 0; b < n; ++b)
      for (int c = 0; c < 3; ++c) t[3 * b + c] = kUnicolor[c];
    return tape.constant(std::move(t));
  }
  std::vector<std::size_t> idx;
  for (int p : parse.indices)
    for (std::size_t c = 0; c < 3; ++c) idx.push_back(3 * static_cast<std::size_t>(p) + c);
  return gather(sigmoid(tape.param(color_raw_)), std::move(idx), Shape{n, 3});
}

Tensor BlocksModel::render_scene(const Discrete& z_d, std::span<const double> z_c) const {
  const Parse parse = decode(config_, z_d);
  Tape tape(&params_);
  Var geo = place_blocks(config_, parse, tape.constant(Tensor::vector(std::vector<double>(z_c.begin(), z_c.end()))),
                         sides(tape));
  return render(config_, geo, block_colors(tape, parse)).value();
}

std::string BlocksModel::describe(const Discrete& z_d) const {
  const Parse parse = decode(config_, z_d);
  std::string out;
  std::size_t b = 0;
  for (std::size_t c = 0; c < config_.cells(); ++c) {
    if (c) out += " | ";
    out += "cell" + std::to_string(c) + ":";
    for (int l = 0; l < parse.heights[c]; ++l) out += " P" + std::to_string(parse.indices[b++] + 1);
  }
  return out;
}

void BlocksModel::check_image(const Observation& x) const {
  if (x.size() != config_.pixels()) {
    throw ShapeError("expected a " + std::to_string(config_.height) + "x" + std::to_string(config_.width) +
                     "x3 image, got " + shape_string(x.shape()));
  }
}

Var BlocksModel::prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const {
  const std::size_t cells = config_.cells();
  const int B = static_cast<int>(config_.max_blocks), P = static_cast<int>(config_.primitives);
  if (rng) {
    std::vector<int> heights(cells), indices;
    for (auto& h : heights) h = static_cast<int>(uniform01(*rng) * (B + 1));
    for (int h : heights)
      for (int l = 0; l < h; ++l) indices.push_back(static_cast<int>(uniform01(*rng) * P));
    z_d = encode(heights, indices);
  }
  const Parse parse = decode(config_, z_d);
  const double lp = -static_cast<double>(cells) * std::log(B + 1.0) -
                    static_cast<double>(parse.indices.size()) * std::log(static_cast<double>(P));
  return tape.constant(lp);
}

GaussianVar BlocksModel::prior_continuous(Tape& tape, const Discrete& z_d) const {
  const std::size_t n = decode(config_, z_d).indices.size();
  return GaussianVar{tape.constant(Tensor(Shape{n})), tape.constant(Tensor(Shape{n}))};
}

Var BlocksModel::log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const {
  check_image(x);
  const Parse parse = decode(config_, z_d);
  Var geo = place_blocks(config_, parse, z_c, sides(tape));
  return pixel_loglik(render(config_, geo, block_colors(tape, parse)), x, config_.sigma_pix);
}

Observation BlocksModel::sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const {
  Tensor img = render_scene(z_d, z_c);
  for (auto& v : img.values()) v += config_.sigma_pix * standard_normal(rng);
  return img;
}

Var BlocksModel::embedding(Tape& tape, const Observation& x) const {
  check_image(x);
  return tape.memo("blocks/embed", [&] { return std::vector<Var>{embed_(tape, tape.constant(x))}; })[0];
}

Var BlocksModel::recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const {
  const std::size_t cells = config_.cells(), B = config_.max_blocks, P = config_.primitives;
  const auto& heads = tape.memo("blocks/q_heads", [&] {
    Var e = embedding(tape, x);
    return std::vector<Var>{height_head_(tape, e), index_head_(tape, e)};
  });
  auto draw = [&](Var lp) {
    const Tensor& v = lp.value();
    std::vector<double> probs(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) probs[k] = std::exp(v[k]);
    return static_cast<int>(sample_index(probs, *rng));
  };
  std::vector<Var> terms;
  std::vector<int> heights(cells);
  if (!rng) heights = decode(config_, z_d).heights;
  for (std::size_t c = 0; c < cells; ++c) {
    Var lp = log_softmax(slice(heads[0], c * (B + 1), (c + 1) * (B + 1)));
    if (rng) heights[c] = draw(lp);
    terms.push_back(index(lp, static_cast<std::size_t>(heights[c])));
  }
  std::vector<int> indices;
  if (!rng) indices = decode(config_, z_d).indices;
  std::size_t b = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (int l = 0; l < heights[c]; ++l, ++b) {
      const std::size_t slot = c * B + static_cast<std::size_t>(l);
      Var lp = log_softmax(slice(heads[1], slot * P, (slot + 1) * P));
      if (rng) indices.push_back(draw(lp));
      terms.push_back(index(lp, static_cast<std::size_t>(indices[b])));
    }
  }
  if (rng) z_d = encode(heights, indices);
  return sum(concat(terms));
}

GaussianVar BlocksModel::recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const {
  const Parse parse = decode(config_, z_d);
  const std::size_t cells = config_.cells(), B = config_.max_blocks, P = config_.primitives;
  const std::size_t n = parse.indices.size();
  if (n == 0) return GaussianVar{tape.constant(Tensor(Shape{0})), tape.constant(Tensor(Shape{0}))};
  Tensor code(Shape{cells * (B + 1) + cells * B * (P + 1)});
  for (std::size_t c = 0; c < cells; ++c) code[c * (B + 1) + static_cast<std::size_t>(parse.heights[c])] = 1.0;
  const std::size_t off = cells * (B + 1);
  std::vector<std::size_t> slots(n);
  std::vector<bool> used(cells * B, false);
  for (std::size_t b = 0; b < n; ++b) {
    slots[b] = parse.cell_of[b] * B + parse.level[b];
    used[slots[b]] = true;
    code[off + slots[b] * (P + 1) + static_cast<std::size_t>(parse.indices[b])] = 1.0;
  }
  for (std::size_t s = 0; s < cells * B; ++s)
    if (!used[s]) code[off + s * (P + 1) + P] = 1.0;
  Var input = concat({embedding(tape, x), tape.constant(std::move(code))});
  return GaussianVar{gather(mean_head_(tape, input), slots), gather(log_std_head_(tape, input), slots)};
}

}  // namespace hmws::blocks
