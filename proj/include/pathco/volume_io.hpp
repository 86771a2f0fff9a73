#pragma once

#include <filesystem>
#include <string>

#include "pathco/volume.hpp"

namespace pathco {

/// PLV1 volume files: a raw little-endian payload at `path` plus a JSON
/// sidecar header at `path + ".json"`:
///   {"magic":"PLV1","kind":"image"|"mask"|"prob","dims":[nx,ny,nz],
///    "spacing_mm":[sx,sy,sz],"channels":c,"dtype":"f32"|"u8","byte_order":"little"}
/// Payload holds channels*nx*ny*nz elements, x-fastest, channels planar.
enum class VolumeKind { Image, Mask, Prob };

struct VolumeHeader {
  VolumeKind kind = VolumeKind::Image;
  Geometry geometry;
  int channels = 1;
};

std::filesystem::path header_path(const std::filesystem::path& payload);

void store_volume(const std::filesystem::path& path, const VoxelGrid& image);
void store_volume(const std::filesystem::path& path, const LabelMask& mask);
void store_volume(const std::filesystem::path& path, const ProbabilityMap& pm);

/// Parses and validates the sidecar. Throws MalformedHeader / DimensionMismatch.
VolumeHeader load_header(const std::filesystem::path& path);

VoxelGrid load_image(const std::filesystem::path& path);
LabelMask load_mask(const std::filesystem::path& path);
ProbabilityMap load_probability_map(const std::filesystem::path& path);

}  // namespace pathco
