#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"
#include "panoslam/image.hpp"

namespace panoslam {

/// Thrown for any malformed or missing on-disk data. Readers reject, never
/// repair.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- raster containers -----------------------------------------------------
// color: binary PPM (P6), 8-bit; depth: raw little-endian f32, row-major;
// panoptic: raw little-endian u32 encoding class * 2^16 + instance with
// 0xFFFFFFFF = void; tensors: 16-byte header (magic "PTSR", u32 d0, d1, d2)
// followed by f32 data, row-major d0-major.

void write_ppm(const std::filesystem::path& path, const ColorImage& img);
ColorImage read_ppm(const std::filesystem::path& path);

void write_f32_raster(const std::filesystem::path& path, const DepthImage& img);
DepthImage read_f32_raster(const std::filesystem::path& path, int width, int height);

constexpr uint32_t kVoidLabel = 0xFFFFFFFFu;
void write_panoptic_raster(const std::filesystem::path& path, const PanopticLabels& labels);
PanopticLabels read_panoptic_raster(const std::filesystem::path& path, int width, int height);

struct Tensor3 {
  uint32_t d0 = 0, d1 = 0, d2 = 0;
  std::vector<float> data;  // d0-major
  float& at(uint32_t i, uint32_t j, uint32_t k) { return data[(size_t(i) * d1 + j) * d2 + k]; }
  float at(uint32_t i, uint32_t j, uint32_t k) const { return data[(size_t(i) * d1 + j) * d2 + k]; }
};

void write_tensor(const std::filesystem::path& path, const Tensor3& t);
Tensor3 read_tensor(const std::filesystem::path& path);

// ---- trajectories ----------------------------------------------------------
// One line per pose: "<index> tx ty tz qx qy qz qw" in camera-to-world
// convention, %.17g so the round trip is exact.

void write_trajectory(const std::filesystem::path& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> read_trajectory(const std::filesystem::path& path);

// ---- sequences -------------------------------------------------------------

struct SequenceData {
  Intrinsics intr;
  double depth_scale = 1.0;  // stored depth * scale = meters
  std::vector<Frame> frames;
  std::optional<std::vector<CameraPose>> gt_poses;  // world-to-camera
};

/// Writes manifest.txt plus per-frame rasters under frames/; byte
/// deterministic for identical inputs.
void write_sequence(const SequenceData& seq, const std::filesystem::path& dir);

/// Validates and loads a sequence directory; errors name the frame index.
SequenceData read_sequence(const std::filesystem::path& dir);

// ---- binary checkpoint primitives ------------------------------------------

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);
  ~BinaryWriter();
  void u32(uint32_t v);
  void i64(int64_t v);
  void f64(double v);
  void bytes(const void* p, size_t n);
  void doubles(const double* p, size_t n);
  void close();

 private:
  std::string path_;
  std::vector<char> buf_;
  bool closed_ = false;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);
  uint32_t u32();
  int64_t i64();
  double f64();
  void doubles(double* p, size_t n);
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::string path_;
  std::vector<char> buf_;
  size_t pos_ = 0;
  void need(size_t n);
};

}  // namespace panoslam
