#include "hmws/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "hmws/error.hpp"

namespace hmws {

namespace fs = std::filesystem;
using nlohmann::json;

void write_f64_le(std::ostream& os, std::span<const double> values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f64_le(std::istream& is, std::size_t count) {
  std::vector<char> buf(count * 8);
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw DataError("binary blob truncated");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void save_checkpoint(const fs::path& dir, const ParamStore& params, const AdamState& adam, const json& state) {
  fs::create_directories(dir);
  json manifest;
  json slots = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Slot& s = params.slot(i);
    slots.push_back({{"name", s.name},
                     {"shape", s.value.shape()},
                     {"role", std::string(role_name(s.role))},
                     {"offset", offset}});
    offset += s.value.size();
  }
  manifest["format"] = "hmws-checkpoint-1";
  manifest["slots"] = std::move(slots);
  manifest["total_values"] = offset;
  manifest["optimizer"] = {{"lr", adam.hyper.lr},
                           {"beta1", adam.hyper.beta1},
                           {"beta2", adam.hyper.beta2},
                           {"epsilon", adam.hyper.epsilon},
                           {"step", adam.step}};
  manifest["state"] = state;

  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "params.bin", std::ios::binary);
    for (std::size_t i = 0; i < params.size(); ++i) write_f64_le(f, params.slot(i).value.values());
  }
  {
    std::ofstream f(dir / "adam.bin", std::ios::binary);
    for (const auto& m : adam.m) write_f64_le(f, m.values());
    for (const auto& v : adam.v) write_f64_le(f, v.values());
  }
}

json read_manifest(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot open " + (dir / "manifest.json").string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

json load_checkpoint(const fs::path& dir, ParamStore& params, AdamState& adam) {
  const json manifest = read_manifest(dir);
  std::ostringstream diff;
  const auto& slots = manifest.at("slots");
  if (slots.size() != params.size()) {
    diff << "  slot count: checkpoint " << slots.size() << ", model " << params.size() << '\n';
  }
  const std::size_t n = std::min<std::size_t>(slots.size(), params.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& js = slots[i];
    const Slot& s = params.slot(i);
    const auto name = js.at("name").get<std::string>();
    const auto shape = js.at("shape").get<Shape>();
    const auto role = js.at("role").get<std::string>();
    if (name != s.name) diff << "  slot " << i << " name: checkpoint '" << name << "', model '" << s.name << "'\n";
    if (shape != s.value.shape()) {
      diff << "  slot '" << s.name << "' shape: checkpoint " << shape_string(shape) << ", model "
           << shape_string(s.value.shape()) << '\n';
    }
    if (role != role_name(s.role)) diff << "  slot '" << s.name << "' role: checkpoint " << role << '\n';
  }
  if (!diff.str().empty()) throw DataError("checkpoint " + dir.string() + " does not match model:\n" + diff.str());

  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) total += params.slot(i).value.size();
  std::vector<double> values, moments;
  {
    std::ifstream f(dir / "params.bin", std::ios::binary);
    if (!f) throw DataError("missing params.bin in " + dir.string());
    values = read_f64_le(f, total);
  }
  {
    std::ifstream f(dir / "adam.bin", std::ios::binary);
    if (!f) throw DataError("missing adam.bin in " + dir.string());
    moments = read_f64_le(f, 2 * total);
  }
  const auto& opt = manifest.at("optimizer");
  adam.hyper.lr = opt.at("lr").get<double>();
  adam.hyper.beta1 = opt.at("beta1").get<double>();
  adam.hyper.beta2 = opt.at("beta2").get<double>();
  adam.hyper.epsilon = opt.at("epsilon").get<double>();
  adam.step = opt.at("step").get<std::int64_t>();
  adam.m.clear();
  adam.v.clear();
  std::size_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape shape = params.slot(i).value.shape();
    const std::size_t sz = params.slot(i).value.size();
    std::vector<double> p(values.begin() + off, values.begin() + off + sz);
    std::vector<double> m(moments.begin() + off, moments.begin() + off + sz);
    std::vector<double> v(moments.begin() + total + off, moments.begin() + total + off + sz);
    params.mutable_value(SlotId{i}) = Tensor(shape, std::move(p));
    adam.m.emplace_back(shape, std::move(m));
    adam.v.emplace_back(shape, std::move(v));
    off += sz;
  }
  return manifest.value("state", json::object());
}

}  // namespace hmws
