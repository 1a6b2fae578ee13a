#pragma once

// Heat-map representation of a quantum node and its decoding.
//
// Rows index A_par (y axis), columns index A_perp (x axis). The effective
// 200 x 100 grid places pixel centres on the endpoints of the coupling
// ranges, and a 2-pixel border on every side gives the full 204 x 104 image.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "nvmap/shard.hpp"
#include "nvmap/signal_model.hpp"

namespace nvmap {

struct GridSpec {
  int rows = 200;  // effective A_par pixels
  int cols = 100;  // effective A_perp pixels
  int border = 2;
  double a_par_min = -100e3;  // Hz, centre of effective row 0
  double a_par_max = 100e3;   // Hz, centre of effective row rows-1
  double a_perp_min = 2e3;
  double a_perp_max = 102e3;

  int full_rows() const noexcept { return rows + 2 * border; }
  int full_cols() const noexcept { return cols + 2 * border; }
  double pitch_par() const noexcept { return (a_par_max - a_par_min) / (rows - 1); }
  double pitch_perp() const noexcept { return (a_perp_max - a_perp_min) / (cols - 1); }
};

/// Real-valued position of a coupling on the full image, and its nearest pixel.
struct PixelPosition {
  double row = 0.0;
  double col = 0.0;
  int nearest_row = 0;
  int nearest_col = 0;
};

PixelPosition coupling_to_pixel(const Nucleus& coupling, const GridSpec& grid);

/// Coupling at a (possibly fractional) full-image position. Integer
/// arguments outside the full image throw std::out_of_range.
Nucleus pixel_to_coupling(double row, double col, const GridSpec& grid);
Nucleus pixel_to_coupling(int row, int col, const GridSpec& grid);

/// Inclusive pixel rectangle.
struct PixelBox {
  int r0 = 0;
  int c0 = 0;
  int r1 = -1;
  int c1 = -1;

  int height() const noexcept { return r1 - r0 + 1; }
  int width() const noexcept { return c1 - c0 + 1; }
  long area() const noexcept {
    return empty() ? 0 : static_cast<long>(height()) * width();
  }
  bool empty() const noexcept { return r1 < r0 || c1 < c0; }

  /// Square of side 2*half+1 around (row, col), clipped to rows x cols.
  static PixelBox around(int row, int col, int half, int rows, int cols);

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

class HeatImage {
 public:
  HeatImage() = default;
  HeatImage(int rows, int cols, float fill = 0.0f);
  explicit HeatImage(const GridSpec& grid) : HeatImage(grid.full_rows(), grid.full_cols()) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool contains(int r, int c) const noexcept { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

  float& at(int r, int c) { return data_[index(r, c)]; }
  float at(int r, int c) const { return data_[index(r, c)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float max_value() const;

  friend bool operator==(const HeatImage&, const HeatImage&) = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

/// Gaussian exp(-d^2 / 2) (pixel units) on the 5 x 5 block around the
/// nearest pixel of every nucleus; overlaps add, then everything is clamped
/// to 1. Throws std::out_of_range if a block would leave the full image.
HeatImage render_target(std::span<const Nucleus> nuclei, const GridSpec& grid);

struct PostProcessConfig {
  int erosion_passes = 1;   // 3 x 3 flat element
  int dilation_passes = 1;  // 3 x 3 flat element
  float threshold = 0.08f;
  int min_area = 4;         // pixels, 8-connected
  int min_separation = 3;   // Chebyshev pixels between distinct maxima

  void validate() const;
};

struct Detection {
  Nucleus coupling;  // Hz, clamped to the grid's coupling ranges
  double row = 0.0;  // centroid on the full image
  double col = 0.0;
  PixelBox box;
  float peak = 0.0f;
};

/// Grey-scale erosion / dilation with a 3 x 3 flat element; pixels outside
/// the image are ignored.
HeatImage erode3x3(const HeatImage& img);
HeatImage dilate3x3(const HeatImage& img);

struct Labels {
  std::vector<int> label;  // -1 for background, else 0..count-1 in raster order
  int count = 0;
};

/// 8-connected component labelling of `mask` (rows x cols, row-major).
Labels label_components(std::span<const std::uint8_t> mask, int rows, int cols);

/// Erosion, dilation, threshold, labelling, area filter, per-region maxima
/// with the separation rule, centroids.
std::vector<Detection> post_process(const HeatImage& img, const PostProcessConfig& cfg,
                                    const GridSpec& grid);

/// Batch kernels, parallel over images.
std::vector<HeatImage> render_targets(std::span<const std::vector<Nucleus>> nodes,
                                      const GridSpec& grid);
std::vector<std::vector<Detection>> post_process_batch(std::span<const HeatImage> images,
                                                       const PostProcessConfig& cfg,
                                                       const GridSpec& grid);

namespace serial {
std::vector<HeatImage> render_targets(std::span<const std::vector<Nucleus>> nodes,
                                      const GridSpec& grid);
std::vector<std::vector<Detection>> post_process_batch(std::span<const HeatImage> images,
                                                       const PostProcessConfig& cfg,
                                                       const GridSpec& grid);
}  // namespace serial

// SIMG image file: "SIMG" | u32 version = 1 | u32 height | u32 width |
// height * width f32, row-major, little-endian.
inline constexpr std::uint32_t kSimgVersion = 1;

std::vector<std::uint8_t> encode_simg(const HeatImage& img);
/// Throws ShardFormatError on a bad magic, version or length.
HeatImage decode_simg(std::span<const std::uint8_t> bytes);
void write_simg(const std::filesystem::path& path, const HeatImage& img);
HeatImage read_simg(const std::filesystem::path& path);

/// CSV with header sample_id,a_par_hz,a_perp_hz,peak,box_r0,box_c0,box_r1,box_c1
void write_detections_header(std::ostream& out);
void write_detections(std::ostream& out, std::uint64_t sample_id,
                      std::span<const Detection> detections);

struct DetectionRow {
  std::uint64_t sample_id = 0;
  Detection detection;
};
std::vector<DetectionRow> read_detections_csv(std::istream& in);

}  // namespace nvmap
