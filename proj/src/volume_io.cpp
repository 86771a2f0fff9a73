#include "pathco/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pathco/error.hpp"

namespace pathco {
namespace {

using nlohmann::json;

std::string_view kind_name(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Image: return "image";
    case VolumeKind::Mask: return "mask";
    case VolumeKind::Prob: return "prob";
  }
  return "image";
}

int expected_channels(VolumeKind kind) { return kind == VolumeKind::Prob ? kNumClasses : 1; }

std::size_t element_size(VolumeKind kind) { return kind == VolumeKind::Mask ? 1 : 4; }

void write_header(const std::filesystem::path& path, const VolumeHeader& h) {
  const auto& d = h.geometry.dims;
  const auto& s = h.geometry.spacing;
  json j;
  j["magic"] = "PLV1";
  j["kind"] = kind_name(h.kind);
  j["dims"] = {d.nx, d.ny, d.nz};
  j["spacing_mm"] = {s.sx, s.sy, s.sz};
  j["channels"] = h.channels;
  j["dtype"] = h.kind == VolumeKind::Mask ? "u8" : "f32";
  j["byte_order"] = "little";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(header_path(path), std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure,
          fmt::format("cannot write {}", header_path(path).string()));
  out << j.dump(2) << '\n';
}

void write_payload(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure,
          fmt::format("cannot write {}", path.string()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  require(static_cast<bool>(out), ErrorCode::IoFailure,
          fmt::format("short write to {}", path.string()));
}

std::vector<float> to_little_endian(std::span<const float> values) {
  std::vector<float> out(values.begin(), values.end());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : out) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(&v, &bits, 4);
    }
  }
  return out;
}

std::vector<char> read_payload(const std::filesystem::path& path, std::size_t expected_bytes) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure,
          fmt::format("cannot open {}", path.string()));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= expected_bytes, ErrorCode::TruncatedPayload,
          fmt::format("{}: {} bytes, expected {}", path.string(), bytes.size(), expected_bytes));
  require(bytes.size() == expected_bytes, ErrorCode::DimensionMismatch,
          fmt::format("{}: {} bytes, expected {}", path.string(), bytes.size(), expected_bytes));
  return bytes;
}

std::vector<float> decode_floats(const std::vector<char>& bytes) {
  std::vector<float> values(bytes.size() / 4);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return to_little_endian(values);  // symmetric swap on big-endian hosts
}

[[noreturn]] void malformed(const std::filesystem::path& hp, const std::string& what) {
  fail(ErrorCode::MalformedHeader, fmt::format("{}: {}", hp.string(), what));
}

VolumeHeader load_expected(const std::filesystem::path& path, VolumeKind kind) {
  VolumeHeader h = load_header(path);
  require(h.kind == kind, ErrorCode::MalformedHeader,
          fmt::format("{}: expected kind '{}', found '{}'", path.string(), kind_name(kind),
                      kind_name(h.kind)));
  return h;
}

}  // namespace

std::filesystem::path header_path(const std::filesystem::path& payload) {
  return std::filesystem::path(payload.string() + ".json");
}

void store_volume(const std::filesystem::path& path, const VoxelGrid& image) {
  write_header(path, {VolumeKind::Image, image.geometry(), 1});
  const auto le = to_little_endian(image.values());
  write_payload(path, le.data(), le.size() * sizeof(float));
}

void store_volume(const std::filesystem::path& path, const LabelMask& mask) {
  write_header(path, {VolumeKind::Mask, mask.geometry(), 1});
  write_payload(path, mask.labels().data(), mask.labels().size());
}

void store_volume(const std::filesystem::path& path, const ProbabilityMap& pm) {
  write_header(path, {VolumeKind::Prob, pm.geometry(), kNumClasses});
  const auto le = to_little_endian(pm.data());
  write_payload(path, le.data(), le.size() * sizeof(float));
}

VolumeHeader load_header(const std::filesystem::path& path) {
  const auto hp = header_path(path);
  std::ifstream in(hp);
  require(static_cast<bool>(in), ErrorCode::IoFailure, fmt::format("cannot open {}", hp.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedHeader, fmt::format("{}: {}", hp.string(), e.what()));
  }
  auto bad = [&hp](const std::string& what) { malformed(hp, what); };
  try {
    if (!j.is_object() || j.value("magic", "") != "PLV1") bad("missing PLV1 magic");
    const std::string kind = j.at("kind").get<std::string>();
    VolumeHeader h;
    if (kind == "image") h.kind = VolumeKind::Image;
    else if (kind == "mask") h.kind = VolumeKind::Mask;
    else if (kind == "prob") h.kind = VolumeKind::Prob;
    else bad("unknown kind '" + kind + "'");

    const auto dims = j.at("dims").get<std::vector<long long>>();
    const auto spacing = j.at("spacing_mm").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3) bad("dims and spacing_mm need 3 entries");
    for (auto d : dims) {
      if (d <= 0 || d > (1 << 20)) bad(fmt::format("invalid dimension {}", d));
    }
    for (auto s : spacing) {
      if (!(s > 0.0) || !std::isfinite(s)) bad(fmt::format("invalid spacing {}", s));
    }
    h.geometry = {{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])},
                  {spacing[0], spacing[1], spacing[2]}};
    h.channels = j.at("channels").get<int>();
    const std::string dtype = j.at("dtype").get<std::string>();
    if (dtype != (h.kind == VolumeKind::Mask ? "u8" : "f32")) bad("dtype '" + dtype + "' invalid for " + kind);
    if (j.at("byte_order").get<std::string>() != "little") bad("byte_order must be little");
    require(h.channels == expected_channels(h.kind), ErrorCode::DimensionMismatch,
            fmt::format("{}: {} channels for kind {}", hp.string(), h.channels, kind));
    return h;
  } catch (const json::exception& e) {
    malformed(hp, e.what());
  }
}

VoxelGrid load_image(const std::filesystem::path& path) {
  const auto h = load_expected(path, VolumeKind::Image);
  const auto bytes = read_payload(path, h.geometry.voxel_count() * element_size(h.kind));
  return VoxelGrid(h.geometry, decode_floats(bytes));
}

LabelMask load_mask(const std::filesystem::path& path) {
  const auto h = load_expected(path, VolumeKind::Mask);
  const auto bytes = read_payload(path, h.geometry.voxel_count());
  return LabelMask(h.geometry, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

ProbabilityMap load_probability_map(const std::filesystem::path& path) {
  const auto h = load_expected(path, VolumeKind::Prob);
  const auto bytes =
      read_payload(path, h.geometry.voxel_count() * kNumClasses * element_size(h.kind));
  return ProbabilityMap(h.geometry, decode_floats(bytes));
}

}  // namespace pathco
