#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmws/tensor.hpp"

namespace hmws::harness {

/// Observations of one domain. `info` carries per-item diagnostics (labels,
/// ground-truth latents) that training never reads.
struct Dataset {
  std::string domain;
  std::vector<Tensor> items;
  nlohmann::json info = nlohmann::json::array();
  nlohmann::json model = nlohmann::json::object();  // model overrides the data was made for

  std::size_t size() const { return items.size(); }
};

// data.bin holds the items as little-endian f64, back to back; index.json the
// domain, item shape, count and info.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

// Mean 0, variance 1. Throws DataError for a constant series.
std::vector<double> standardize(std::vector<double> x);

/// GP draws from a fixed set of reference kernels, standardized.
Dataset synth_timeseries(std::uint64_t seed, std::size_t count, std::size_t length = 128);

struct IngestReport {
  Dataset data;
  std::vector<std::string> warnings;
};
/// Rows of "label,v1,v2,...". Rows are cropped (centered) or linearly resampled
/// to `length`, standardized, and at most `per_class` rows are kept per label
/// in a seeded shuffle order.
IngestReport ingest_timeseries(const std::filesystem::path& csv, std::uint64_t seed, std::size_t length = 128,
                               std::size_t per_class = 5);

/// Scenes rendered from the reference primitive set.
Dataset synth_blocks(std::uint64_t seed, std::size_t count, const nlohmann::json& model = nlohmann::json::object());

/// Scalar observations from the conjugate testbed.
Dataset synth_testbed(std::uint64_t seed, std::size_t count, const nlohmann::json& model = nlohmann::json::object());

Dataset generate(const std::string& domain, std::uint64_t seed, std::size_t count,
                 const nlohmann::json& model = nlohmann::json::object());

}  // namespace hmws::harness
