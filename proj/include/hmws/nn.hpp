#pragma once

#include <string>

#include "hmws/ops.hpp"
#include "hmws/param_store.hpp"
#include "hmws/rng.hpp"

// Small network building blocks whose weights live in a ParamStore.
namespace hmws::nn {

// Uniform(-a, a) with a = scale / sqrt(fan_in).
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng, double scale = 1.0);

/// y = x W + b. x is a rank-1 vector of length `in` (or an [m, in] matrix).
struct Linear {
  SlotId weight;
  SlotId bias;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParamStore& store, const std::string& name, Role role, std::size_t in, std::size_t out,
                       Rng& rng, double scale = 1.0);
  Var operator()(Tape& tape, Var x) const;
};

/// Gated recurrent cell over rank-1 vectors.
struct GruCell {
  Linear input;   // in -> 3H
  Linear hidden;  // H -> 3H
  std::size_t size = 0;

  static GruCell create(ParamStore& store, const std::string& name, Role role, std::size_t in, std::size_t hidden,
                        Rng& rng);
  Var step(Tape& tape, Var x, Var h) const;
};

/// Two stride-2 convolutions with tanh, then a linear map, from a length-n
/// signal to a fixed-size embedding.
struct ConvEmbedding {
  SlotId conv1_w, conv1_b, conv2_w, conv2_b;
  Linear out;
  std::size_t length = 0;
  std::size_t channels1 = 8, channels2 = 16, width = 5;

  static ConvEmbedding create(ParamStore& store, const std::string& name, Role role, std::size_t length,
                              std::size_t dim, Rng& rng);
  std::size_t len1() const { return (length - width) / 2 + 1; }
  std::size_t len2() const { return (len1() - width) / 2 + 1; }
  Var operator()(Tape& tape, Var signal) const;
};

/// The same over an [H, W, C] image: two stride-2 square convolutions with
/// tanh, then a linear map.
struct ImageEmbedding {
  SlotId conv1_w, conv1_b, conv2_w, conv2_b;
  Linear out;
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t channels1 = 8, channels2 = 16, kernel = 5;

  static ImageEmbedding create(ParamStore& store, const std::string& name, Role role, std::size_t height,
                               std::size_t width, std::size_t channels, std::size_t dim, Rng& rng);
  static std::size_t reduce(std::size_t n, std::size_t k) { return (n - k) / 2 + 1; }
  Var operator()(Tape& tape, Var image) const;
};

}  // namespace hmws::nn
