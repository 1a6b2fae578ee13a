#pragma once

// Binary containers shared with the training component.
//
// Shard (little-endian):
//   "SALI" | u32 version = 1 | u32 record count | 32-byte spec digest
//   record: u64 sample_id | u8 n | n x (f64 a_par Hz, f64 a_perp Hz)
//           | 1000 x f32 trace (N = 32) | 1000 x f32 trace (N = 256)
//
// Manifest: one shard per line, "path<TAB>count<TAB>sha256-hex"; paths are
// relative to the manifest's directory. Lines starting with '#' are ignored.
//
// Normalization stats (little-endian):
//   "SALS" | u32 version = 1 | u32 sequences (= 2) | u32 points | u64 samples
//   | f64 epsilon | per sequence: points x f64 mean, points x f64 variance

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvmap/digest.hpp"
#include "nvmap/signal_model.hpp"

namespace nvmap {

inline constexpr std::array<char, 4> kShardMagic{'S', 'A', 'L', 'I'};
inline constexpr std::array<char, 4> kStatsMagic{'S', 'A', 'L', 'S'};
inline constexpr std::uint32_t kShardVersion = 1;
inline constexpr std::uint32_t kStatsVersion = 1;
inline constexpr std::size_t kTracePoints = 1000;
inline constexpr std::size_t kSequenceCount = 2;

class ShardFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleRecord {
  std::uint64_t sample_id = 0;
  std::vector<Nucleus> nuclei;
  std::array<std::vector<float>, kSequenceCount> traces;  // N = 32, N = 256

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Shard {
  Digest spec_digest{};
  std::vector<SampleRecord> records;
};

std::vector<std::uint8_t> encode_shard(const Digest& spec_digest,
                                       std::span<const SampleRecord> records);
Shard decode_shard(std::span<const std::uint8_t> bytes);

void write_shard(const std::filesystem::path& path, const Digest& spec_digest,
                 std::span<const SampleRecord> records);
Shard read_shard(const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path path;  // absolute once read
  std::uint64_t count = 0;
  Digest digest{};             // sha256 of the shard file
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::uint64_t total() const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Reads every shard, checking file digests, record counts and that all
/// shards carry the same spec digest. Records are returned in manifest order.
Shard load_manifest(const Manifest& manifest);

/// Streams records shard by shard with the same checks as load_manifest.
void for_each_record(const Manifest& manifest,
                     const std::function<void(const SampleRecord&)>& fn);

struct NormalizationStats {
  double epsilon = 1e-3;
  std::uint64_t n_samples = 0;
  std::array<std::vector<double>, kSequenceCount> mean;
  std::array<std::vector<double>, kSequenceCount> variance;

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

void write_stats(const std::filesystem::path& path, const NormalizationStats& stats);
NormalizationStats read_stats(const std::filesystem::path& path);

}  // namespace nvmap
