#pragma once

// Supervised dataset generation: random quantum nodes, their noisy CPMG
// traces for the two acquisition sequences, train/val/test splitting and
// training-set normalization statistics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nvmap/digest.hpp"
#include "nvmap/shard.hpp"
#include "nvmap/signal_model.hpp"

namespace nvmap {

enum class FieldRegime { high, low };

/// 0.056 T (resolved resonances) or 0.0056 T.
double field_tesla(FieldRegime regime);
std::string_view to_string(FieldRegime regime);
FieldRegime parse_field_regime(std::string_view text);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

struct GenerationSpec {
  FieldRegime regime = FieldRegime::high;
  double b_z = 0.056;
  std::uint64_t n_samples = 0;
  int n_min = 1;
  int n_max = 20;
  Interval a_par{-100e3, 100e3};  // Hz
  Interval a_perp{2e3, 102e3};    // Hz
  std::array<PulseSequence, kSequenceCount> sequences{
      PulseSequence{32, 6e-6, 50e-6, 1000}, PulseSequence{256, 10e-6, 40e-6, 1000}};
  double t2 = 200e-6;
  int n_measurements = 1000;
  std::uint64_t seed = 0;
  /// 0 for the original draw; renoised datasets use a fresh realisation id.
  std::uint64_t noise_realisation = 0;

  static GenerationSpec for_regime(FieldRegime regime, std::uint64_t n_samples,
                                   std::uint64_t seed);

  AcquisitionNoise noise() const { return {t2, n_measurements, seed}; }

  /// Throws std::invalid_argument when a field is outside its contract.
  void validate() const;

  /// Canonical "key = value" text; the digest is SHA-256 of this text.
  std::string to_text() const;
  static GenerationSpec from_text(std::string_view text);
  Digest digest() const;

  friend bool operator==(const GenerationSpec&, const GenerationSpec&) = default;
};

/// Node for `sample_id`: n uniform on [n_min, n_max], couplings uniform on
/// the declared intervals. Depends only on (spec.seed, sample_id).
QuantumNode sample_node(const GenerationSpec& spec, std::uint64_t sample_id);

/// Noiseless traces with decoherence, then shot noise, stored as f32.
SampleRecord simulate_record(const GenerationSpec& spec, std::uint64_t sample_id,
                             std::vector<Nucleus> nuclei);

/// Records [first, first + count), parallel over samples. Bitwise identical
/// to serial::generate_records for any thread count.
std::vector<SampleRecord> generate_records(const GenerationSpec& spec, std::uint64_t first,
                                           std::uint64_t count);

struct GenerationOutput {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path spec_path;
};

/// Writes <stem>-NNNNN.shard files of at most `shard_size` records, the
/// sidecar <stem>.spec and <stem>.manifest into `out_dir`.
GenerationOutput generate(const GenerationSpec& spec, const std::filesystem::path& out_dir,
                          std::string_view stem = "dataset",
                          std::uint64_t shard_size = 100000);

/// Sidecar spec path that accompanies a manifest (same stem, ".spec").
std::filesystem::path spec_path_for(const std::filesystem::path& manifest_path);
GenerationSpec read_spec(const std::filesystem::path& path);
void write_spec(const std::filesystem::path& path, const GenerationSpec& spec);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

/// Largest-remainder apportionment of n records; ties go to the earlier split.
std::array<std::uint64_t, 3> split_counts(std::uint64_t n, const SplitRatios& ratios);

/// Record positions assigned to train / validation / test, each sorted.
/// A seeded permutation decides membership.
std::array<std::vector<std::uint64_t>, 3> assign_split(std::uint64_t n,
                                                       const SplitRatios& ratios,
                                                       std::uint64_t seed);

struct SplitOutput {
  std::array<GenerationOutput, 3> parts;  // train, validation, test
};

/// Materialises the three splits as shards under `out_dir` (train.manifest,
/// validation.manifest, test.manifest with spec sidecars).
SplitOutput split(const std::filesystem::path& manifest_path, const SplitRatios& ratios,
                  std::uint64_t seed, const std::filesystem::path& out_dir);

/// Per-time-index mean and population variance over the given records.
NormalizationStats compute_normalization(std::span<const SampleRecord> training);
NormalizationStats compute_normalization(const Manifest& training);

/// (x - mean) / sqrt(var + epsilon), elementwise.
std::vector<double> apply_normalization(std::span<const float> trace,
                                        const NormalizationStats& stats,
                                        std::size_t sequence_index);

/// Same nodes, traces re-simulated with `n_measurements` shots and a fresh
/// noise realisation. Writes <stem>.manifest/.spec/shards into out_dir.
GenerationOutput renoise(const std::filesystem::path& manifest_path, int n_measurements,
                         const std::filesystem::path& out_dir, std::string_view stem,
                         std::uint64_t realisation = 1);

namespace serial {
std::vector<SampleRecord> generate_records(const GenerationSpec& spec, std::uint64_t first,
                                           std::uint64_t count);
}

}  // namespace nvmap
