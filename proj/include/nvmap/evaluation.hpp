#pragma once

// Detection quality: IoU matching of predicted against true nuclei,
// precision / recall, coupling and signal-reconstruction errors, and the
// noise-robustness and spectral-selectivity studies.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nvmap/heatmap.hpp"
#include "nvmap/shard.hpp"
#include "nvmap/signal_model.hpp"

namespace nvmap {

/// Overlap area over union area, in pixels. Empty boxes give 0.
double iou(const PixelBox& a, const PixelBox& b);

/// 5 x 5 box on the nearest pixel of a true coupling, clipped to the image.
PixelBox truth_box(const Nucleus& nucleus, const GridSpec& grid);

struct MatchedPair {
  std::size_t prediction = 0;  // index into the prediction list
  std::size_t truth = 0;       // index into the truth list
  double iou = 0.0;
  double err_par = 0.0;   // |predicted - true| A_par, Hz
  double err_perp = 0.0;  // |predicted - true| A_perp, Hz
};

struct MatchReport {
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> false_positives;  // prediction indices
  std::vector<std::size_t> false_negatives;  // truth indices

  std::size_t tp() const noexcept { return pairs.size(); }
  std::size_t fp() const noexcept { return false_positives.size(); }
  std::size_t fn() const noexcept { return false_negatives.size(); }
  /// Absent when there are no predictions.
  std::optional<double> precision() const;
  /// Absent when there are no truths.
  std::optional<double> recall() const;
};

struct Candidate {
  Nucleus coupling;
  PixelBox box;
};

/// Greedy matching in descending IoU; each truth and prediction is used at
/// most once and only IoU > 0 counts. Ties in IoU go to the lower predicted
/// A_perp, then lower predicted A_par, then lower true A_perp, A_par.
MatchReport match(std::span<const Candidate> predictions, std::span<const Candidate> truths);

/// Predictions from decoded detections; truths from couplings with truth_box.
std::vector<Candidate> candidates(std::span<const Detection> detections);
std::vector<Candidate> truth_candidates(std::span<const Nucleus> nuclei, const GridSpec& grid);

struct CouplingMae {
  double a_par = 0.0;
  double a_perp = 0.0;
};

/// Mean absolute coupling error over true positives; absent without any.
std::optional<CouplingMae> coupling_mae(const MatchReport& report);
std::optional<CouplingMae> coupling_mae(std::span<const Nucleus> predicted,
                                        std::span<const Nucleus> truth);

/// Mean |original - reconstructed| where the reconstruction is the noiseless,
/// decohered trace of the predicted nuclei at the true field.
double signal_mae(double b_z, std::span<const Nucleus> predicted, const PulseSequence& seq,
                  std::span<const float> original, double t2);

struct SampleEvaluation {
  std::uint64_t sample_id = 0;
  int n_true = 0;
  std::size_t n_predicted = 0;
  MatchReport report;
  std::optional<CouplingMae> mae;
  std::array<double, kSequenceCount> signal_mae{};
};

struct EvaluationSettings {
  GridSpec grid;
  double b_z = 0.056;
  std::array<PulseSequence, kSequenceCount> sequences{
      PulseSequence{32, 6e-6, 50e-6, 1000}, PulseSequence{256, 10e-6, 40e-6, 1000}};
  double t2 = 200e-6;
  bool with_signal_mae = true;
};

SampleEvaluation evaluate_sample(const SampleRecord& record,
                                 std::span<const Detection> detections,
                                 const EvaluationSettings& settings);

/// Per-sample evaluation, parallel over records. detections[i] belongs to
/// records[i].
std::vector<SampleEvaluation> evaluate_samples(
    std::span<const SampleRecord> records,
    std::span<const std::vector<Detection>> detections, const EvaluationSettings& settings);

struct MetricsRow {
  int n_true = 0;
  std::size_t samples = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> precision;  // mean over samples with predictions
  std::optional<double> recall;     // mean over samples
  std::optional<double> mae_par;    // mean of per-sample MAE over samples with a TP
  std::optional<double> mae_perp;
  std::optional<double> mae_sig32;  // mean over samples
  std::optional<double> mae_sig256;
};

struct MetricsSummary {
  std::vector<MetricsRow> rows;  // ascending n_true, only populated buckets
  MetricsRow overall;            // n_true = 0, all samples pooled the same way

  const MetricsRow* row(int n_true) const;
};

/// Buckets by true nucleus count and averages per-sample metrics.
/// Throws std::invalid_argument on an empty set.
MetricsSummary aggregate(std::span<const SampleEvaluation> samples);

/// n_true,precision,recall,mae_apar_hz,mae_aperp_hz,mae_sig32,mae_sig256
/// Absent values are written as empty fields.
void write_metrics_csv(std::ostream& out, const MetricsSummary& summary);

/// One JSON object per sample: sample_id, n_true, tp/fp/fn lists and IoUs.
void write_audit_jsonl(std::ostream& out, std::span<const SampleEvaluation> samples);

struct RobustnessLevel {
  int n_measurements = 0;
  std::vector<SampleEvaluation> samples;
};

struct RobustnessResult {
  int n_measurements = 0;
  MetricsSummary summary;
};

/// Aggregates every level; throws std::invalid_argument unless all levels
/// hold the same sample ids in the same order.
std::vector<RobustnessResult> robustness_sweep(std::span<const RobustnessLevel> levels);

struct SelectivityPoint {
  Nucleus offset;  // Hz added to the base nucleus for the second one
  std::size_t detections = 0;
};

/// Renders {base, base + offset} and counts the decoded detections.
std::vector<SelectivityPoint> selectivity_scan(const Nucleus& base,
                                               std::span<const Nucleus> offsets,
                                               const GridSpec& grid,
                                               const PostProcessConfig& cfg);

}  // namespace nvmap
