#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stratus/gridstore.hpp"

namespace stratus::grid {

namespace {

constexpr char kMagic[8] = {'Z', 'G', 'R', 'I', 'D', '\0', '\0', '\1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  put_u32(out, bits);
}

}  // namespace

std::string encode_dataset(const GridDataset& ds) {
  const auto& spec = ds.spec();
  nlohmann::json header;
  header["spec"] = {{"lat_points", spec.lat_points},
                    {"lon_points", spec.lon_points},
                    {"step_hours", spec.step_hours}};
  header["start_time"] = ds.start_time();
  header["variables"] = nlohmann::json::array();
  for (const auto& name : ds.variable_names())
    header["variables"].push_back(
        {{"name", name}, {"units", ds.units(name)}, {"shape", {ds.n_times(), spec.n_lat(), spec.n_lon()}}});
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + ds.variable_names().size() * ds.n_times() * spec.n_cells() * 4);
  for (const auto& name : ds.variable_names())
    for (std::size_t t = 0; t < ds.n_times(); ++t)
      for (double v : ds.slice(name, t)) put_f32(out, v);
  return out;
}

GridDataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error("bad_magic", "not a .zgrid container");
  const std::uint32_t header_len = get_u32(bytes, sizeof kMagic);
  const std::size_t payload_at = sizeof kMagic + 4 + header_len;
  if (payload_at > bytes.size()) throw Error("malformed_header", "header length exceeds file size");

  nlohmann::json header;
  GridSpec spec;
  std::int64_t start = 0;
  struct Block {
    std::string name, units;
    std::size_t n_times;
  };
  std::vector<Block> blocks;
  try {
    header = nlohmann::json::parse(bytes.substr(sizeof kMagic + 4, header_len));
    spec.lat_points = header.at("spec").at("lat_points").get<std::vector<double>>();
    spec.lon_points = header.at("spec").at("lon_points").get<std::vector<double>>();
    spec.step_hours = header.at("spec").at("step_hours").get<int>();
    start = parse_iso8601(header.at("start_time").get<std::string>());
    for (const auto& v : header.at("variables")) {
      auto shape = v.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3 || shape[1] != spec.n_lat() || shape[2] != spec.n_lon())
        throw Error("dimension_mismatch",
                    "variable '" + v.at("name").get<std::string>() + "' shape does not match grid");
      blocks.push_back({v.at("name").get<std::string>(), v.at("units").get<std::string>(), shape[0]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed_header", std::string("bad .zgrid header: ") + e.what());
  }
  spec.validate();
  if (blocks.empty()) throw Error("malformed_header", "header lists no variables");
  const std::size_t n_times = blocks.front().n_times;
  for (const auto& b : blocks)
    if (b.n_times != n_times)
      throw Error("dimension_mismatch", "variables disagree on time length");

  const std::size_t block_values = n_times * spec.n_cells();
  const std::size_t needed = blocks.size() * block_values * 4;
  const std::size_t have = bytes.size() - payload_at;
  if (have < needed)
    throw Error("payload_short", "payload short: " + std::to_string(have) + " bytes, header needs " +
                                     std::to_string(needed));
  if (have > needed)
    throw Error("payload_long", "payload has " + std::to_string(have - needed) +
                                    " trailing bytes beyond the declared variables");

  GridDataset ds(spec, start, n_times);
  std::size_t pos = payload_at;
  for (const auto& b : blocks) {
    std::vector<double> values(block_values);
    for (auto& v : values) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
      pos += 4;
    }
    ds.add_variable(b.name, b.units, std::move(values));
  }
  return ds;
}

void save_dataset(const GridDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_dataset(ds);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io_error", "short write to '" + path.string() + "'");
}

GridDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_dataset(buf.str());
}

}  // namespace stratus::grid
