#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hmws/adam.hpp"
#include "hmws/param_store.hpp"

namespace hmws {

// Checkpoint directory layout:
//   manifest.json  slot names/shapes/roles/offsets, optimizer hyperparameters
//                  and step, plus a free-form "state" object
//   params.bin     little-endian f64 slot values, concatenated in manifest order
//   adam.bin       first moments of every slot, then second moments, same order
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params, const AdamState& adam,
                     const nlohmann::json& state = nlohmann::json::object());

// Loads into a store whose slots were already declared by the model. Throws
// DataError listing every manifest/store mismatch.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params, AdamState& adam);

nlohmann::json read_manifest(const std::filesystem::path& dir);

void write_f64_le(std::ostream& os, std::span<const double> values);
std::vector<double> read_f64_le(std::istream& is, std::size_t count);

}  // namespace hmws
