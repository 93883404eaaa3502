#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dposelets/detector.hpp"
#include "dposelets/poselets.hpp"

namespace dposelets::harness {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
double parse_number(std::string_view s);

/// Tab-separated table with a header line.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string to_tsv() const;
  void write(const fs::path& path) const;
};

// Dataset manifest: one JSON object per line,
//   {"image": "images/0001.ppm", "id": "0001",
//    "persons": [{"bounds": [x, y, w, h], "keypoints": {"nose": [x, y, 1], ...}}]}
// Image paths are relative to the manifest's directory; "id" defaults to the path.

/// Parses one record; `line` is used in MalformedRecord messages only.
poselets::AnnotatedImage parse_manifest_record(std::string_view text, std::size_t line, const fs::path& base_dir,
                                               bool load_pixels = true);
poselets::Corpus read_manifest(const fs::path& path, bool load_pixels = true);
/// Writes every image as a PPM under `image_dir` (relative to the manifest).
void write_manifest(const poselets::Corpus& corpus, const fs::path& path, const std::string& image_dir = "images");

// Model container "DPSL1": text header (metadata and a blob directory with
// offset, byte length and CRC-32 per blob) followed by the concatenated
// little-endian float32 blobs. Values held as double in memory come back
// rounded to float. A network-only file carries zero poselets.

std::string serialize_model(const detector::PoseletModel& model);
/// Throws VersionMismatch, MalformedRecord (with header line) or
/// ChecksumMismatch (naming the blob).
detector::PoseletModel deserialize_model(const std::string& bytes);
void write_model(const detector::PoseletModel& model, const fs::path& path);
detector::PoseletModel read_model(const fs::path& path);

/// Detections as TSV: image_id x y w h score.
void write_detections(std::ostream& os, std::span<const detector::Detection> dets);
void write_detections(const fs::path& path, std::span<const detector::Detection> dets);
std::vector<detector::Detection> read_detections(const fs::path& path);

std::string_view to_string(poselets::Provenance p);

/// Patch store: patches/<n>.ppm plus index.tsv with label, provenance,
/// source image, source transform and optional person bounds.
void write_patch_store(const fs::path& dir, std::span<const poselets::PatchSample> samples);
std::vector<poselets::PatchSample> read_patch_store(const fs::path& dir);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& bytes);

}  // namespace dposelets::harness
