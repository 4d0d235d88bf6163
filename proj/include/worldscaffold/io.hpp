#pragma once

// Artifact file formats: binary PLY, 8-bit mask PNG, raw float32 maps with a
// JSON sidecar, JSON documents and atomic writes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldscaffold/cloud.hpp"

namespace worldscaffold::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using Face = std::array<std::int32_t, 3>;

struct PlyData {
  cloud::PointCloud cloud;
  std::vector<Face> faces;
};

/// Binary little-endian PLY with a vertex element (x, y, z and optional
/// red/green/blue, confidence) and an optional triangle face element. Any
/// scalar property type is accepted on read; unknown properties are skipped.
/// Truncation or malformed headers raise ParseError with the byte offset.
PlyData read_ply(const fs::path& path);
void write_ply(const fs::path& path, const cloud::PointCloud& c, const std::vector<Face>& faces = {});

/// 8-bit single-channel PNG, nonzero = set. Other PNG colour types are
/// converted to 8-bit gray before thresholding.
cloud::BinaryMask read_mask_png(const fs::path& path);
void write_mask_png(const fs::path& path, const cloud::BinaryMask& m);

struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major
};

/// Raw float32 little-endian map; `<stem>.json` next to it gives width/height.
RawImage read_raw_f32(const fs::path& path);
void write_raw_f32(const fs::path& path, const RawImage& img);

std::string read_file(const fs::path& path);
/// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);

/// Parsed JSON; syntax errors become ParseError with the byte position.
Json read_json(const fs::path& path);
/// Pretty-printed (2-space indent), trailing newline, atomic.
void write_json(const fs::path& path, const Json& doc);

/// Throws MissingDependency when `path` does not exist.
void require_file(const fs::path& path);

}  // namespace worldscaffold::io
