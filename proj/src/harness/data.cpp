#include "hmws/harness/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "hmws/blocks/model.hpp"
#include "hmws/checkpoint.hpp"
#include "hmws/error.hpp"
#include "hmws/gp/gp.hpp"
#include "hmws/gp/kernel.hpp"
#include "hmws/harness/config.hpp"
#include "hmws/ops.hpp"
#include "hmws/rng.hpp"

namespace hmws::harness {

using nlohmann::json;
namespace fs = std::filesystem;

void save_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  Shape shape = data.items.empty() ? Shape{} : data.items.front().shape();
  std::ofstream bin(dir / "data.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + (dir / "data.bin").string());
  for (const Tensor& t : data.items) {
    if (t.shape() != shape) throw ShapeError("dataset items must share one shape");
    write_f64_le(bin, t.values());
  }
  json index{{"domain", data.domain}, {"count", data.items.size()}, {"shape", shape},
             {"info", data.info},     {"model", data.model}};
  std::ofstream(dir / "index.json") << index.dump(1) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream idx(dir / "index.json");
  if (!idx) throw DataError("no dataset index at " + (dir / "index.json").string());
  json index;
  try {
    idx >> index;
  } catch (const json::exception& e) {
    throw DataError("dataset index is not valid JSON: " + std::string(e.what()));
  }
  Dataset d;
  d.domain = index.at("domain").get<std::string>();
  d.info = index.value("info", json::array());
  d.model = index.value("model", json::object());
  const Shape shape = index.at("shape").get<Shape>();
  const std::size_t count = index.at("count").get<std::size_t>();
  std::ifstream bin(dir / "data.bin", std::ios::binary);
  if (!bin) throw DataError("missing " + (dir / "data.bin").string());
  std::size_t per = 1;
  for (auto s : shape) per *= s;
  for (std::size_t i = 0; i < count; ++i) d.items.emplace_back(shape, read_f64_le(bin, per));
  return d;
}

std::vector<double> standardize(std::vector<double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 1e-24)) throw DataError("constant series cannot be standardized");
  const double sd = std::sqrt(var);
  for (double& v : x) v = (v - mean) / sd;
  return x;
}

namespace {

struct Reference {
  const char* name;
  std::vector<int> tokens;
  std::vector<double> natural;
};

// Ground-truth kernels, natural parameters in token order.
std::vector<Reference> reference_kernels() {
  using namespace gp;
  return {
      {"SE", {kSquaredExp}, {0.08, 1.0}},
      {"PER+WN", {kPlus, kPer1 + 4, kWhiteNoise}, {0.2, 0.8, 1.0, 0.3}},
      {"SE*PER", {kTimes, kSquaredExp, kPer1 + 2}, {0.4, 1.0, 0.12, 0.9, 1.0}},
      {"LIN+PER", {kPlus, kLinear, kPer1 + 6}, {0.5, 0.8, 0.33, 1.0, 0.8}},
      {"SE+SE", {kPlus, kSquaredExp, kSquaredExp}, {0.3, 1.0, 0.03, 0.4}},
  };
}

std::vector<double> resample(const std::vector<double>& x, std::size_t length) {
  std::vector<double> out(length);
  const double scale = static_cast<double>(x.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = i * scale;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), x.size() - 2);
    const double f = pos - static_cast<double>(lo);
    out[i] = (1 - f) * x[lo] + f * x[lo + 1];
  }
  return out;
}

}  // namespace

Dataset synth_timeseries(std::uint64_t seed, std::size_t count, std::size_t length) {
  Dataset d;
  d.domain = "timeseries";
  d.model = json{{"length", length}};
  const auto refs = reference_kernels();
  const auto grid = gp::unit_grid(length);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_stream(seed, i, kDataStream);
    const Reference& r = refs[i % refs.size()];
    const auto raw = gp::raw_params(r.tokens, r.natural);
    const auto y = standardize(gp::gp_sample(r.tokens, raw, 0.05, grid, rng));
    d.items.push_back(Tensor::vector(y));
    d.info.push_back(json{{"label", r.name}, {"kernel", gp::describe(r.tokens, raw)}});
  }
  return d;
}

IngestReport ingest_timeseries(const fs::path& csv, std::uint64_t seed, std::size_t length, std::size_t per_class) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open " + csv.string());
  IngestReport report;
  std::map<std::string, std::vector<std::vector<double>>> by_class;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell, label;
    std::getline(ss, label, ',');
    std::vector<double> values;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t"), e = cell.find_last_not_of(" \t");
      double v = 0;
      const char* first = b == std::string::npos ? cell.data() : cell.data() + b;
      const char* last = b == std::string::npos ? first : cell.data() + e + 1;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) {
        report.warnings.push_back("line " + std::to_string(lineno) + ": non-numeric cell '" + cell + "', row rejected");
        ok = false;
        break;
      }
      values.push_back(v);
    }
    if (!ok) continue;
    if (values.size() < 2) {
      report.warnings.push_back("line " + std::to_string(lineno) + ": fewer than two values, row rejected");
      continue;
    }
    if (values.size() < length) {
      report.warnings.push_back("line " + std::to_string(lineno) + ": " + std::to_string(values.size()) +
                                " values, resampled to " + std::to_string(length));
      values = resample(values, length);
    } else if (values.size() > length) {
      const std::size_t start = (values.size() - length) / 2;
      values = std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(start),
                                   values.begin() + static_cast<std::ptrdiff_t>(start + length));
    }
    try {
      by_class[label].push_back(standardize(std::move(values)));
    } catch (const DataError&) {
      report.warnings.push_back("line " + std::to_string(lineno) + ": constant series, row rejected");
    }
  }
  report.data.domain = "timeseries";
  report.data.model = json{{"length", length}};
  std::uint64_t class_index = 0;
  for (auto& [label, rows] : by_class) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = derive_stream(seed, class_index++, kDataStream);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < std::min(per_class, rows.size()); ++k) {
      report.data.items.push_back(Tensor::vector(rows[order[k]]));
      report.data.info.push_back(json{{"label", label}});
    }
  }
  return report;
}

Dataset synth_blocks(std::uint64_t seed, std::size_t count, const json& model) {
  auto m = make_model("blocks2d", model, seed);
  auto& bm = static_cast<blocks::BlocksModel&>(*m);
  const auto& c = bm.config();
  bm.set_primitives(blocks::reference_sides(c.primitives), blocks::reference_colors(c.primitives));
  Dataset d;
  d.domain = "blocks2d";
  d.model = model;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_stream(seed, i, kDataStream);
    JointSample s = bm.sample_joint(rng);
    d.items.push_back(std::move(s.x));
    d.info.push_back(json{{"parse", s.z_d}, {"positions", s.z_c}});
  }
  return d;
}

Dataset synth_testbed(std::uint64_t seed, std::size_t count, const json& model) {
  auto m = make_model("testbed", model, seed);
  Dataset d;
  d.domain = "testbed";
  d.model = model;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_stream(seed, i, kDataStream);
    JointSample s = m->sample_joint(rng);
    d.items.push_back(std::move(s.x));
    d.info.push_back(json{{"component", s.z_d[0]}});
  }
  return d;
}

Dataset generate(const std::string& domain, std::uint64_t seed, std::size_t count, const json& model) {
  if (domain == "timeseries") return synth_timeseries(seed, count, model.value("length", std::size_t{128}));
  if (domain == "blocks2d") return synth_blocks(seed, count, model);
  if (domain == "testbed") return synth_testbed(seed, count, model);
  throw ConfigError("gen-data: unknown domain '" + domain + "'");
}

}  // namespace hmws::harness
