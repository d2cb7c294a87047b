#include "hmws/nn.hpp"

#include <cmath>

#include "hmws/error.hpp"

namespace hmws::nn {

using namespace hmws::ad;

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  const double a = scale / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = a * (2.0 * uniform01(rng) - 1.0);
  return t;
}

Linear Linear::create(ParamStore& store, const std::string& name, Role role, std::size_t in, std::size_t out,
                      Rng& rng, double scale) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".w", role, uniform_init(Shape{in, out}, in, rng, scale));
  l.bias = store.add(name + ".b", role, Tensor(Shape{out}));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add(matmul(x, tape.param(weight)), tape.param(bias));
}

GruCell GruCell::create(ParamStore& store, const std::string& name, Role role, std::size_t in, std::size_t hidden,
                        Rng& rng) {
  GruCell c;
  c.size = hidden;
  c.input = Linear::create(store, name + ".ih", role, in, 3 * hidden, rng);
  c.hidden = Linear::create(store, name + ".hh", role, hidden, 3 * hidden, rng);
  return c;
}

Var GruCell::step(Tape& tape, Var x, Var h) const {
  const std::size_t n = size;
  Var gi = input(tape, x);
  Var gh = hidden(tape, h);
  Var r = sigmoid(add(slice(gi, 0, n), slice(gh, 0, n)));
  Var z = sigmoid(add(slice(gi, n, 2 * n), slice(gh, n, 2 * n)));
  Var cand = tanh(add(slice(gi, 2 * n, 3 * n), mul(r, slice(gh, 2 * n, 3 * n))));
  // (1 - z) * cand + z * h
  return add(cand, mul(z, sub(h, cand)));
}

ConvEmbedding ConvEmbedding::create(ParamStore& store, const std::string& name, Role role, std::size_t length,
                                    std::size_t dim, Rng& rng) {
  ConvEmbedding e;
  e.length = length;
  if (length < e.width || e.len1() < e.width) throw ConfigError("signal too short for the convolutional embedding");
  const std::size_t k1 = e.width, k2 = e.width * e.channels1;
  e.conv1_w = store.add(name + ".conv1.w", role, uniform_init(Shape{k1, e.channels1}, k1, rng));
  e.conv1_b = store.add(name + ".conv1.b", role, Tensor(Shape{e.channels1}));
  e.conv2_w = store.add(name + ".conv2.w", role, uniform_init(Shape{k2, e.channels2}, k2, rng));
  e.conv2_b = store.add(name + ".conv2.b", role, Tensor(Shape{e.channels2}));
  e.out = Linear::create(store, name + ".out", role, e.len2() * e.channels2, dim, rng);
  return e;
}

Var ConvEmbedding::operator()(Tape& tape, Var signal) const {
  if (signal.size() != length) {
    throw ShapeError("embedding expects a signal of length " + std::to_string(length) + ", got " +
                     shape_string(signal.shape()));
  }
  // im2col by gather, then one matmul per layer.
  const std::size_t l1 = len1(), l2 = len2();
  std::vector<std::size_t> idx1;
  idx1.reserve(l1 * width);
  for (std::size_t o = 0; o < l1; ++o)
    for (std::size_t k = 0; k < width; ++k) idx1.push_back(2 * o + k);
  Var cols1 = gather(signal, std::move(idx1), Shape{l1, width});
  Var h1 = tanh(add(matmul(cols1, tape.param(conv1_w)), tape.param(conv1_b)));  // [l1, c1]

  std::vector<std::size_t> idx2;
  idx2.reserve(l2 * width * channels1);
  for (std::size_t o = 0; o < l2; ++o)
    for (std::size_t k = 0; k < width; ++k)
      for (std::size_t c = 0; c < channels1; ++c) idx2.push_back((2 * o + k) * channels1 + c);
  Var cols2 = gather(h1, std::move(idx2), Shape{l2, width * channels1});
  Var h2 = tanh(add(matmul(cols2, tape.param(conv2_w)), tape.param(conv2_b)));  // [l2, c2]
  return out(tape, reshape(h2, Shape{l2 * channels2}));
}

ImageEmbedding ImageEmbedding::create(ParamStore& store, const std::string& name, Role role, std::size_t height,
                                      std::size_t width, std::size_t channels, std::size_t dim, Rng& rng) {
  ImageEmbedding e;
  e.height = height;
  e.width = width;
  e.channels = channels;
  const std::size_t k = e.kernel;
  if (height < k || width < k || reduce(height, k) < k || reduce(width, k) < k) {
    throw ConfigError("image too small for the convolutional embedding");
  }
  const std::size_t k1 = k * k * channels, k2 = k * k * e.channels1;
  e.conv1_w = store.add(name + ".conv1.w", role, uniform_init(Shape{k1, e.channels1}, k1, rng));
  e.conv1_b = store.add(name + ".conv1.b", role, Tensor(Shape{e.channels1}));
  e.conv2_w = store.add(name + ".conv2.w", role, uniform_init(Shape{k2, e.channels2}, k2, rng));
  e.conv2_b = store.add(name + ".conv2.b", role, Tensor(Shape{e.channels2}));
  const std::size_t h2 = reduce(reduce(height, k), k), w2 = reduce(reduce(width, k), k);
  e.out = Linear::create(store, name + ".out", role, h2 * w2 * e.channels2, dim, rng);
  return e;
}

namespace {

// Row-major [h, w, c] input -> [oh * ow, k * k * c] patch matrix indices.
std::vector<std::size_t> patches(std::size_t h, std::size_t w, std::size_t c, std::size_t k) {
  const std::size_t oh = ImageEmbedding::reduce(h, k), ow = ImageEmbedding::reduce(w, k);
  std::vector<std::size_t> idx;
  idx.reserve(oh * ow * k * k * c);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t di = 0; di < k; ++di)
        for (std::size_t dj = 0; dj < k; ++dj)
          for (std::size_t ch = 0; ch < c; ++ch) idx.push_back(((2 * i + di) * w + (2 * j + dj)) * c + ch);
  return idx;
}

}  // namespace

Var ImageEmbedding::operator()(Tape& tape, Var image) const {
  if (image.size() != height * width * channels) {
    throw ShapeError("embedding expects an image of " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                     std::to_string(channels) + ", got " + shape_string(image.shape()));
  }
  const std::size_t h1 = reduce(height, kernel), w1 = reduce(width, kernel);
  const std::size_t h2 = reduce(h1, kernel), w2 = reduce(w1, kernel);
  Var cols1 = gather(image, patches(height, width, channels, kernel), Shape{h1 * w1, kernel * kernel * channels});
  Var a1 = tanh(add(matmul(cols1, tape.param(conv1_w)), tape.param(conv1_b)));
  Var cols2 = gather(a1, patches(h1, w1, channels1, kernel), Shape{h2 * w2, kernel * kernel * channels1});
  Var a2 = tanh(add(matmul(cols2, tape.param(conv2_w)), tape.param(conv2_b)));
  return out(tape, reshape(a2, Shape{h2 * w2 * channels2}));
}

}  // namespace hmws::nn
