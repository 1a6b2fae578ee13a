#include "nvmap/heatmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "byte_io.hpp"

namespace nvmap {

namespace {
constexpr std::array<char, 4> kSimgMagic{'S', 'I', 'M', 'G'};
constexpr int kSpotHalf = 2;  // 5 x 5 spot
}  // namespace

PixelPosition coupling_to_pixel(const Nucleus& coupling, const GridSpec& grid) {
  PixelPosition p;
  p.row = (coupling.a_par - grid.a_par_min) / grid.pitch_par() + grid.border;
  p.col = (coupling.a_perp - grid.a_perp_min) / grid.pitch_perp() + grid.border;
  p.nearest_row = static_cast<int>(std::lround(p.row));
  p.nearest_col = static_cast<int>(std::lround(p.col));
  return p;
}

Nucleus pixel_to_coupling(double row, double col, const GridSpec& grid) {
  return {grid.a_par_min + (row - grid.border) * grid.pitch_par(),
          grid.a_perp_min + (col - grid.border) * grid.pitch_perp()};
}

Nucleus pixel_to_coupling(int row, int col, const GridSpec& grid) {
  if (row < 0 || row >= grid.full_rows() || col < 0 || col >= grid.full_cols())
    throw std::out_of_range("pixel_to_coupling: index outside the full image");
  return pixel_to_coupling(static_cast<double>(row), static_cast<double>(col), grid);
}

PixelBox PixelBox::around(int row, int col, int half, int rows, int cols) {
  return {std::max(0, row - half), std::max(0, col - half), std::min(rows - 1, row + half),
          std::min(cols - 1, col + half)};
}

HeatImage::HeatImage(int rows, int cols, float fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("heat image: empty shape");
}

float HeatImage::max_value() const {
  return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end());
}

HeatImage render_target(std::span<const Nucleus> nuclei, const GridSpec& grid) {
  HeatImage img(grid);
  // Accumulate in double so the clamp sees the exact sum.
  std::vector<double> acc(img.data().size(), 0.0);
  for (const auto& nuc : nuclei) {
    const auto p = coupling_to_pixel(nuc, grid);
    if (p.nearest_row - kSpotHalf < 0 || p.nearest_row + kSpotHalf >= img.rows() ||
        p.nearest_col - kSpotHalf < 0 || p.nearest_col + kSpotHalf >= img.cols())
      throw std::out_of_range("render_target: coupling outside grid coverage");
    for (int r = p.nearest_row - kSpotHalf; r <= p.nearest_row + kSpotHalf; ++r) {
      for (int c = p.nearest_col - kSpotHalf; c <= p.nearest_col + kSpotHalf; ++c) {
        const double dy = r - p.row;
        const double dx = c - p.col;
        acc[static_cast<std::size_t>(r) * img.cols() + c] += std::exp(-0.5 * (dx * dx + dy * dy));
      }
    }
  }
  auto out = img.data();
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(std::min(acc[i], 1.0));
  return img;
}

void PostProcessConfig::validate() const {
  if (!(threshold > 0.0f && threshold < 1.0f))
    throw std::invalid_argument("post-process: threshold must lie in (0, 1)");
  if (min_separation < 1) throw std::invalid_argument("post-process: min separation must be >= 1");
  if (erosion_passes < 0 || dilation_passes < 0 || min_area < 1)
    throw std::invalid_argument("post-process: invalid morphology parameters");
}

namespace {

template <typename Pick>
HeatImage morph3x3(const HeatImage& img, Pick pick) {
  HeatImage out(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      float v = img.at(r, c);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          if (img.contains(r + dr, c + dc)) v = pick(v, img.at(r + dr, c + dc));
      out.at(r, c) = v;
    }
  }
  return out;
}

bool is_local_maximum(const HeatImage& img, int r, int c) {
  const float v = img.at(r, c);
  bool strictly_above_one = false;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if ((dr == 0 && dc == 0) || !img.contains(r + dr, c + dc)) continue;
      const float n = img.at(r + dr, c + dc);
      if (n > v) return false;
      if (v > n) strictly_above_one = true;
    }
  }
  return strictly_above_one;
}

struct Region {
  std::vector<std::pair<int, int>> pixels;
  PixelBox box{INT32_MAX, INT32_MAX, -1, -1};
};

Detection centroid_detection(const Region& region, const PixelBox& window,
                             const HeatImage& smoothed, const HeatImage& original,
                             const GridSpec& grid) {
  double w_sum = 0.0, r_sum = 0.0, c_sum = 0.0;
  float peak = 0.0f;
  for (auto [r, c] : region.pixels) {
    if (r < window.r0 || r > window.r1 || c < window.c0 || c > window.c1) continue;
    const double w = smoothed.at(r, c);
    w_sum += w;
    r_sum += w * r;
    c_sum += w * c;
    peak = std::max(peak, original.at(r, c));
  }
  Detection d;
  d.row = r_sum / w_sum;
  d.col = c_sum / w_sum;
  d.peak = peak;
  const Nucleus raw = pixel_to_coupling(d.row, d.col, grid);
  d.coupling = {std::clamp(raw.a_par, grid.a_par_min, grid.a_par_max),
                std::clamp(raw.a_perp, grid.a_perp_min, grid.a_perp_max)};
  return d;
}

}  // namespace

HeatImage erode3x3(const HeatImage& img) {
  return morph3x3(img, [](float a, float b) { return std::min(a, b); });
}

HeatImage dilate3x3(const HeatImage& img) {
  return morph3x3(img, [](float a, float b) { return std::max(a, b); });
}

Labels label_components(std::span<const std::uint8_t> mask, int rows, int cols) {
  if (mask.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::invalid_argument("label_components: mask size mismatch");
  Labels out;
  out.label.assign(mask.size(), -1);
  std::vector<int> stack;
  for (int start = 0; start < rows * cols; ++start) {
    if (!mask[start] || out.label[start] >= 0) continue;
    const int id = out.count++;
    out.label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int r = p / cols, c = p % cols;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          const int q = rr * cols + cc;
          if (mask[q] && out.label[q] < 0) {
            out.label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Detection> post_process(const HeatImage& img, const PostProcessConfig& cfg,
                                    const GridSpec& grid) {
  cfg.validate();
  HeatImage smoothed = img;
  for (int i = 0; i < cfg.erosion_passes; ++i) smoothed = erode3x3(smoothed);
  for (int i = 0; i < cfg.dilation_passes; ++i) smoothed = dilate3x3(smoothed);

  const int rows = img.rows(), cols = img.cols();
  std::vector<std::uint8_t> mask(smoothed.data().size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = smoothed.data()[i] > cfg.threshold;
  const Labels labels = label_components(mask, rows, cols);

  std::vector<Region> regions(static_cast<std::size_t>(labels.count));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int id = labels.label[static_cast<std::size_t>(r) * cols + c];
      if (id < 0) continue;
      auto& reg = regions[static_cast<std::size_t>(id)];
      reg.pixels.emplace_back(r, c);
      reg.box.r0 = std::min(reg.box.r0, r);
      reg.box.c0 = std::min(reg.box.c0, c);
      reg.box.r1 = std::max(reg.box.r1, r);
      reg.box.c1 = std::max(reg.box.c1, c);
    }
  }

  std::vector<Detection> detections;
  for (const auto& region : regions) {
    if (static_cast<int>(region.pixels.size()) < cfg.min_area) continue;

    struct Peak {
      float value;
      int r, c;
    };
    std::vector<Peak> candidates;
    for (auto [r, c] : region.pixels) {
      const float v = img.at(r, c);
      if (v >= cfg.threshold && is_local_maximum(img, r, c)) candidates.push_back({v, r, c});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.r != b.r) return a.r < b.r;
      return a.c < b.c;
    });
    std::vector<Peak> maxima;
    for (const auto& p : candidates) {
      const bool separated = std::all_of(maxima.begin(), maxima.end(), [&](const Peak& q) {
        return std::max(std::abs(p.r - q.r), std::abs(p.c - q.c)) >= cfg.min_separation;
      });
      if (separated) maxima.push_back(p);
    }

    if (maxima.size() <= 1) {
      Detection d = centroid_detection(region, region.box, smoothed, img, grid);
      d.box = region.box;
      detections.push_back(d);
      continue;
    }
    for (const auto& m : maxima) {
      const PixelBox box = PixelBox::around(m.r, m.c, kSpotHalf, rows, cols);
      Detection d = centroid_detection(region, box, smoothed, img, grid);
      d.box = box;
      d.peak = m.value;
      detections.push_back(d);
    }
  }
  return detections;
}

namespace {

std::vector<HeatImage> render_range(std::span<const std::vector<Nucleus>> nodes,
                                    const GridSpec& grid, bool parallel) {
  std::vector<HeatImage> out(nodes.size());
  const auto n = static_cast<std::int64_t>(nodes.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = render_target(nodes[static_cast<std::size_t>(i)], grid);
  return out;
}

std::vector<std::vector<Detection>> decode_range(std::span<const HeatImage> images,
                                                 const PostProcessConfig& cfg,
                                                 const GridSpec& grid, bool parallel) {
  cfg.validate();
  std::vector<std::vector<Detection>> out(images.size());
  const auto n = static_cast<std::int64_t>(images.size());
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = post_process(images[static_cast<std::size_t>(i)], cfg, grid);
  return out;
}

}  // namespace

std::vector<HeatImage> render_targets(std::span<const std::vector<Nucleus>> nodes,
                                      const GridSpec& grid) {
  return render_range(nodes, grid, true);
}

std::vector<std::vector<Detection>> post_process_batch(std::span<const HeatImage> images,
                                                       const PostProcessConfig& cfg,
                                                       const GridSpec& grid) {
  return decode_range(images, cfg, grid, true);
}

namespace serial {
std::vector<HeatImage> render_targets(std::span<const std::vector<Nucleus>> nodes,
                                      const GridSpec& grid) {
  return render_range(nodes, grid, false);
}
std::vector<std::vector<Detection>> post_process_batch(std::span<const HeatImage> images,
                                                       const PostProcessConfig& cfg,
                                                       const GridSpec& grid) {
  return decode_range(images, cfg, grid, false);
}
}  // namespace serial

std::vector<std::uint8_t> encode_simg(const HeatImage& img) {
  std::vector<std::uint8_t> bytes;
  detail::ByteWriter w(bytes);
  w.raw(kSimgMagic.data(), kSimgMagic.size());
  w.le(kSimgVersion);
  w.le(static_cast<std::uint32_t>(img.rows()));
  w.le(static_cast<std::uint32_t>(img.cols()));
  for (float v : img.data()) w.le(v);
  return bytes;
}

HeatImage decode_simg(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  std::array<char, 4> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kSimgMagic) throw ShardFormatError("simg: bad magic");
  if (const auto v = r.le<std::uint32_t>(); v != kSimgVersion)
    throw ShardFormatError("simg: unsupported version " + std::to_string(v));
  const auto h = r.le<std::uint32_t>();
  const auto w = r.le<std::uint32_t>();
  if (h == 0 || w == 0 || h > 1u << 16 || w > 1u << 16)
    throw ShardFormatError("simg: implausible shape");
  HeatImage img(static_cast<int>(h), static_cast<int>(w));
  for (auto& v : img.data()) v = r.le<float>();
  if (!r.done()) throw ShardFormatError("simg: trailing bytes");
  return img;
}

void write_simg(const std::filesystem::path& path, const HeatImage& img) {
  detail::write_file(path, encode_simg(img));
}

HeatImage read_simg(const std::filesystem::path& path) {
  return decode_simg(detail::read_file(path));
}

void write_detections_header(std::ostream& out) {
  out << "sample_id,a_par_hz,a_perp_hz,peak,box_r0,box_c0,box_r1,box_c1\n";
}

void write_detections(std::ostream& out, std::uint64_t sample_id,
                      std::span<const Detection> detections) {
  char buf[64];
  for (const auto& d : detections) {
    out << sample_id;
    std::snprintf(buf, sizeof buf, ",%.6f", d.coupling.a_par);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.6f", d.coupling.a_perp);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(d.peak));
    out << buf << ',' << d.box.r0 << ',' << d.box.c0 << ',' << d.box.r1 << ',' << d.box.c1
        << '\n';
  }
}

std::vector<DetectionRow> read_detections_csv(std::istream& in) {
  std::vector<DetectionRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,", 0) != 0)
    throw std::runtime_error("detections csv: missing header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    DetectionRow row;
    auto& d = row.detection;
    if (!(fields >> row.sample_id >> d.coupling.a_par >> d.coupling.a_perp >> d.peak >>
          d.box.r0 >> d.box.c0 >> d.box.r1 >> d.box.c1))
      throw std::runtime_error("detections csv line " + std::to_string(lineno) + ": malformed");
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nvmap
