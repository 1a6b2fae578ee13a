#include "nvmap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace nvmap {

double iou(const PixelBox& a, const PixelBox& b) {
  const PixelBox overlap{std::max(a.r0, b.r0), std::max(a.c0, b.c0), std::min(a.r1, b.r1),
                         std::min(a.c1, b.c1)};
  const long inter = overlap.area();
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

PixelBox truth_box(const Nucleus& nucleus, const GridSpec& grid) {
  const auto p = coupling_to_pixel(nucleus, grid);
  return PixelBox::around(p.nearest_row, p.nearest_col, 2, grid.full_rows(), grid.full_cols());
}

std::optional<double> MatchReport::precision() const {
  const auto n = tp() + fp();
  if (n == 0) return std::nullopt;
  return static_cast<double>(tp()) / static_cast<double>(n);
}

std::optional<double> MatchReport::recall() const {
  const auto n = tp() + fn();
  if (n == 0) return std::nullopt;
  return static_cast<double>(tp()) / static_cast<double>(n);
}

MatchReport match(std::span<const Candidate> predictions, std::span<const Candidate> truths) {
  struct Edge {
    double iou;
    std::size_t p, t;
  };
  std::vector<Edge> edges;
  for (std::size_t p = 0; p < predictions.size(); ++p)
    for (std::size_t t = 0; t < truths.size(); ++t)
      if (const double v = iou(predictions[p].box, truths[t].box); v > 0.0)
        edges.push_back({v, p, t});

  auto key = [&](const Edge& e) {
    const auto& pc = predictions[e.p].coupling;
    const auto& tc = truths[e.t].coupling;
    return std::make_tuple(-e.iou, pc.a_perp, pc.a_par, tc.a_perp, tc.a_par, e.p, e.t);
  };
  std::sort(edges.begin(), edges.end(),
            [&](const Edge& a, const Edge& b) { return key(a) < key(b); });

  MatchReport report;
  std::vector<bool> p_used(predictions.size()), t_used(truths.size());
  for (const auto& e : edges) {
    if (p_used[e.p] || t_used[e.t]) continue;
    p_used[e.p] = t_used[e.t] = true;
    const auto& pc = predictions[e.p].coupling;
    const auto& tc = truths[e.t].coupling;
    report.pairs.push_back(
        {e.p, e.t, e.iou, std::abs(pc.a_par - tc.a_par), std::abs(pc.a_perp - tc.a_perp)});
  }
  for (std::size_t p = 0; p < predictions.size(); ++p)
    if (!p_used[p]) report.false_positives.push_back(p);
  for (std::size_t t = 0; t < truths.size(); ++t)
    if (!t_used[t]) report.false_negatives.push_back(t);
  return report;
}

std::vector<Candidate> candidates(std::span<const Detection> detections) {
  std::vector<Candidate> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back({d.coupling, d.box});
  return out;
}

std::vector<Candidate> truth_candidates(std::span<const Nucleus> nuclei, const GridSpec& grid) {
  std::vector<Candidate> out;
  out.reserve(nuclei.size());
  for (const auto& n : nuclei) out.push_back({n, truth_box(n, grid)});
  return out;
}

std::optional<CouplingMae> coupling_mae(const MatchReport& report) {
  if (report.pairs.empty()) return std::nullopt;
  CouplingMae m;
  for (const auto& p : report.pairs) {
    m.a_par += p.err_par;
    m.a_perp += p.err_perp;
  }
  const auto n = static_cast<double>(report.pairs.size());
  m.a_par /= n;
  m.a_perp /= n;
  return m;
}

std::optional<CouplingMae> coupling_mae(std::span<const Nucleus> predicted,
                                        std::span<const Nucleus> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("coupling_mae: pair lists differ in length");
  MatchReport r;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    r.pairs.push_back({i, i, 1.0, std::abs(predicted[i].a_par - truth[i].a_par),
                       std::abs(predicted[i].a_perp - truth[i].a_perp)});
  return coupling_mae(r);
}

double signal_mae(double b_z, std::span<const Nucleus> predicted, const PulseSequence& seq,
                  std::span<const float> original, double t2) {
  if (original.size() != static_cast<std::size_t>(seq.n_points))
    throw std::invalid_argument("signal_mae: trace length differs from the sequence");
  QuantumNode node{{predicted.begin(), predicted.end()}, b_z};
  SignalTrace trace{seq, std::vector<double>(original.size())};
  survival_probability_into(node, seq, trace.values);
  trace = apply_decoherence(std::move(trace), t2);
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i)
    sum += std::abs(static_cast<double>(original[i]) - trace.values[i]);
  return sum / static_cast<double>(original.size());
}

SampleEvaluation evaluate_sample(const SampleRecord& record,
                                 std::span<const Detection> detections,
                                 const EvaluationSettings& settings) {
  SampleEvaluation ev;
  ev.sample_id = record.sample_id;
  ev.n_true = static_cast<int>(record.nuclei.size());
  ev.n_predicted = detections.size();
  const auto preds = candidates(detections);
  const auto truths = truth_candidates(record.nuclei, settings.grid);
  ev.report = match(preds, truths);
  ev.mae = coupling_mae(ev.report);
  if (settings.with_signal_mae) {
    std::vector<Nucleus> predicted;
    predicted.reserve(detections.size());
    for (const auto& d : detections) predicted.push_back(d.coupling);
    for (std::size_t s = 0; s < kSequenceCount; ++s)
      ev.signal_mae[s] = signal_mae(settings.b_z, predicted, settings.sequences[s],
                                    record.traces[s], settings.t2);
  }
  return ev;
}

std::vector<SampleEvaluation> evaluate_samples(
    std::span<const SampleRecord> records,
    std::span<const std::vector<Detection>> detections, const EvaluationSettings& settings) {
  if (records.size() != detections.size())
    throw std::invalid_argument("evaluate_samples: records and detections differ in length");
  std::vector<SampleEvaluation> out(records.size());
  const auto n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = evaluate_sample(records[k], detections[k], settings);
  }
  return out;
}

namespace {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> get() const {
    return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  }
};

struct Bucket {
  std::size_t samples = 0, tp = 0, fp = 0, fn = 0;
  Mean p, r, par, perp, s32, s256;

  void add(const SampleEvaluation& e) {
    ++samples;
    tp += e.report.tp();
    fp += e.report.fp();
    fn += e.report.fn();
    if (auto v = e.report.precision()) p.add(*v);
    if (auto v = e.report.recall()) r.add(*v);
    if (e.mae) {
      par.add(e.mae->a_par);
      perp.add(e.mae->a_perp);
    }
    s32.add(e.signal_mae[0]);
    s256.add(e.signal_mae[1]);
  }

  MetricsRow row(int n_true) const {
    return {n_true, samples, tp, fp, fn, p.get(), r.get(), par.get(), perp.get(), s32.get(),
            s256.get()};
  }
};

void put(std::ostream& out, const std::optional<double>& v) {
  out << ',';
  if (v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    out << buf;
  }
}

}  // namespace

const MetricsRow* MetricsSummary::row(int n_true) const {
  for (const auto& r : rows)
    if (r.n_true == n_true) return &r;
  return nullptr;
}

MetricsSummary aggregate(std::span<const SampleEvaluation> samples) {
  if (samples.empty()) throw std::invalid_argument("aggregate: empty evaluation set");
  std::map<int, Bucket> buckets;
  Bucket all;
  for (const auto& s : samples) {
    buckets[s.n_true].add(s);
    all.add(s);
  }
  MetricsSummary summary;
  for (const auto& [n, b] : buckets) summary.rows.push_back(b.row(n));
  summary.overall = all.row(0);
  return summary;
}

void write_metrics_csv(std::ostream& out, const MetricsSummary& summary) {
  out << "n_true,precision,recall,mae_apar_hz,mae_aperp_hz,mae_sig32,mae_sig256\n";
  for (const auto& r : summary.rows) {
    out << r.n_true;
    put(out, r.precision);
    put(out, r.recall);
    put(out, r.mae_par);
    put(out, r.mae_perp);
    put(out, r.mae_sig32);
    put(out, r.mae_sig256);
    out << '\n';
  }
}

void write_audit_jsonl(std::ostream& out, std::span<const SampleEvaluation> samples) {
  for (const auto& s : samples) {
    nlohmann::json j;
    j["sample_id"] = s.sample_id;
    j["n_true"] = s.n_true;
    j["n_predicted"] = s.n_predicted;
    auto tp = nlohmann::json::array();
    for (const auto& p : s.report.pairs)
      tp.push_back({{"prediction", p.prediction},
                    {"truth", p.truth},
                    {"iou", p.iou},
                    {"err_apar_hz", p.err_par},
                    {"err_aperp_hz", p.err_perp}});
    j["tp"] = std::move(tp);
    j["fp"] = s.report.false_positives;
    j["fn"] = s.report.false_negatives;
    j["signal_mae"] = s.signal_mae;
    out << j.dump() << '\n';
  }
}

std::vector<RobustnessResult> robustness_sweep(std::span<const RobustnessLevel> levels) {
  std::vector<RobustnessResult> out;
  for (const auto& level : levels) {
    const auto& ref = levels.front().samples;
    if (level.samples.size() != ref.size())
      throw std::invalid_argument("robustness_sweep: levels hold different sample counts");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (level.samples[i].sample_id != ref[i].sample_id ||
          level.samples[i].n_true != ref[i].n_true)
        throw std::invalid_argument("robustness_sweep: sample sets are not aligned");
    out.push_back({level.n_measurements, aggregate(level.samples)});
  }
  return out;
}

std::vector<SelectivityPoint> selectivity_scan(const Nucleus& base,
                                               std::span<const Nucleus> offsets,
                                               const GridSpec& grid,
                                               const PostProcessConfig& cfg) {
  std::vector<SelectivityPoint> out;
  out.reserve(offsets.size());
  for (const auto& off : offsets) {
    const std::array<Nucleus, 2> pair{base, {base.a_par + off.a_par, base.a_perp + off.a_perp}};
    const auto img = render_target(pair, grid);
    out.push_back({off, post_process(img, cfg, grid).size()});
  }
  return out;
}

}  // namespace nvmap
