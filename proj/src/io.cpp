#include "msf/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msf/error.hpp"

namespace msf {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

json read_json(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

fs::path payload_path(const fs::path& header, const char* suffix) {
  return fs::path(header).replace_extension(suffix);
}

fs::path resolve_payload(const fs::path& header, const std::string& named, const char* suffix) {
  if (named.empty()) return payload_path(header, suffix);
  return header.parent_path() / named;
}

void append_f32(std::ostream& out, std::span<const double> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    std::memcpy(buf.data() + 4 * i, &bits, 4);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_f32(const fs::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  append_f32(out, values);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_f32(const fs::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * 4)
    throw IoError("payload " + path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                  std::to_string(expected_count * 4));
  in.seekg(0);
  std::vector<char> buf(bytes);
  in.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("failed reading " + path.string());
  std::vector<double> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, buf.data() + 4 * i, 4);
    values[i] = std::bit_cast<float>(to_little(bits));
  }
  return values;
}

void write_volume(const Volume4D& vol, const fs::path& header) {
  const auto payload = payload_path(header);
  const Dims4& d = vol.dims();
  json j;
  j["dims"] = {d.t, d.z, d.y, d.x};
  j["voxel_pitch"] = vol.voxel_pitch();
  j["dtype"] = "f32le";
  j["payload"] = payload.filename().string();
  write_json(header, j);
  write_f32(payload, vol.data());
}

Volume4D read_volume(const fs::path& header) {
  const json j = read_json(header, "volume header");
  Dims4 d;
  double pitch = 1.0;
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw InvalidInput("volume header dims must have 4 entries");
    d = {dims[0], dims[1], dims[2], dims[3]};
    pitch = j.value("voxel_pitch", 1.0);
    if (j.value("dtype", std::string("f32le")) != "f32le")
      throw InvalidInput("unsupported volume dtype in " + header.string());
  } catch (const json::exception& e) {
    throw IoError("volume header " + header.string() + " is malformed: " + e.what());
  }
  if (d.degenerate()) throw InvalidInput("volume header " + header.string() + " has a zero dimension");
  auto data = read_f32(resolve_payload(header, j.value("payload", std::string{})), d.size());
  return Volume4D(d, pitch, std::move(data));
}

void write_sinogram(const SinogramSet& sino, const ScanGeometry& geom, const fs::path& header) {
  sino.validate();
  const auto y_path = payload_path(header, ".y.bin");
  const auto l_path = payload_path(header, ".lambda.bin");
  json j;
  j["n_t"] = sino.n_t();
  j["n_views"] = sino.n_views;
  j["n_det_rows"] = sino.n_det_rows;
  j["n_channels"] = sino.n_channels;
  j["angles"] = geom.view_angles;
  j["channel_pitch"] = geom.channel_pitch;
  j["n_y"] = geom.n_y;
  j["n_x"] = geom.n_x;
  j["voxel_pitch"] = geom.voxel_pitch;
  j["dtype"] = "f32le";
  j["payload_y"] = y_path.filename().string();
  j["payload_lambda"] = l_path.filename().string();
  write_json(header, j);

  std::ofstream y(y_path, std::ios::binary), l(l_path, std::ios::binary);
  if (!y || !l) throw IoError("cannot write sinogram payloads next to " + header.string());
  for (std::size_t t = 0; t < sino.n_t(); ++t) {
    append_f32(y, sino.y[t]);
    append_f32(l, sino.lambda[t]);
  }
  if (!y || !l) throw IoError("failed writing sinogram payloads next to " + header.string());
}

SinogramFile read_sinogram(const fs::path& header) {
  const json j = read_json(header, "sinogram header");
  SinogramFile f;
  std::size_t n_t = 0;
  try {
    n_t = j.at("n_t").get<std::size_t>();
    f.sino.n_views = j.at("n_views").get<std::size_t>();
    f.sino.n_det_rows = j.at("n_det_rows").get<std::size_t>();
    f.sino.n_channels = j.at("n_channels").get<std::size_t>();
    f.geom.view_angles = j.at("angles").get<std::vector<double>>();
    f.geom.n_z = f.sino.n_det_rows;
    f.geom.n_channels = f.sino.n_channels;
    f.geom.channel_pitch = j.value("channel_pitch", 1.0);
    f.geom.voxel_pitch = j.value("voxel_pitch", 1.0);
    f.geom.n_y = j.value("n_y", std::size_t{0});
    f.geom.n_x = j.value("n_x", std::size_t{0});
  } catch (const json::exception& e) {
    throw IoError("sinogram header " + header.string() + " is malformed: " + e.what());
  }
  if (f.geom.view_angles.size() != f.sino.n_views)
    throw InvalidInput("sinogram header angle count does not match n_views");

  const std::size_t frame = f.sino.frame_size();
  const auto y = read_f32(resolve_payload(header, j.value("payload_y", std::string{}), ".y.bin"), n_t * frame);
  const auto l = read_f32(resolve_payload(header, j.value("payload_lambda", std::string{}), ".lambda.bin"),
                          n_t * frame);
  for (std::size_t t = 0; t < n_t; ++t) {
    f.sino.y.emplace_back(y.begin() + t * frame, y.begin() + (t + 1) * frame);
    f.sino.lambda.emplace_back(l.begin() + t * frame, l.begin() + (t + 1) * frame);
  }
  f.sino.validate();
  return f;
}

}  // namespace msf
