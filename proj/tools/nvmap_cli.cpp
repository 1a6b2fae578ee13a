// nvmap command line: dataset generation, heat-map rendering and decoding,
// evaluation, oracle verification and the selectivity / robustness studies.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvmap/dataset.hpp"
#include "nvmap/dynamics_oracle.hpp"
#include "nvmap/evaluation.hpp"
#include "nvmap/heatmap.hpp"
#include "nvmap/rng.hpp"
#include "nvmap/shard.hpp"
#include "nvmap/signal_model.hpp"

namespace fs = std::filesystem;
using namespace nvmap;

namespace {

struct Options {
  std::string field = "high";
  double bz = 0.0;  // 0 = use the regime's field
  std::uint64_t samples = 1000;
  std::uint64_t seed = 0;
  int nm = 1000;
  double t2_us = 200.0;
  std::uint64_t shard_size = 100000;
  float threshold = PostProcessConfig{}.threshold;
  int min_area = PostProcessConfig{}.min_area;
  std::string out = "out";
  std::string manifest;
  std::string images;
  std::string detections;
  bool no_signal_mae = false;

  int n_nuclei = 1;
  int trials = 100;
  double tolerance = 1e-9;

  std::uint64_t sample_index = 0;
  int sequence = 0;
  double depth = 0.5;
  double window_khz = 150.0;

  std::vector<int> levels{1000, 500, 100, 10};

  double base_par_khz = 50.0;
  double base_perp_khz = 59.77;
  std::vector<std::string> offsets{"0:0", "1:1", "2:2", "3:3", "4:4", "5:5", "6:6", "7:7"};

  std::string node;
  std::uint64_t limit = 0;
};

double field_of(const Options& o) {
  return o.bz > 0.0 ? o.bz : field_tesla(parse_field_regime(o.field));
}

PostProcessConfig post_config(const Options& o) {
  PostProcessConfig cfg;
  cfg.threshold = o.threshold;
  cfg.min_area = o.min_area;
  cfg.validate();
  return cfg;
}

void write_effective_config(const CLI::App& app, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "effective_config.ini", std::ios::trunc);
  log << app.config_to_str(true, false);
}

std::pair<double, double> parse_pair(const std::string& text) {
  const auto sep = text.find(':');
  if (sep == std::string::npos) throw std::invalid_argument("expected a:b, got " + text);
  return {std::stod(text.substr(0, sep)), std::stod(text.substr(sep + 1))};
}

// "3:75,-45:42" in kHz.
std::vector<Nucleus> parse_node(const std::string& text) {
  std::vector<Nucleus> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) {
      auto [a, b] = parse_pair(item);
      out.push_back({a * 1e3, b * 1e3});
    }
  return out;
}

GenerationSpec spec_for(const fs::path& manifest) {
  const auto path = spec_path_for(manifest);
  if (!fs::exists(path)) throw std::runtime_error("missing spec sidecar " + path.string());
  return read_spec(path);
}

std::map<std::uint64_t, std::vector<Detection>> group_detections(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open " + csv.string());
  std::map<std::uint64_t, std::vector<Detection>> out;
  for (const auto& row : read_detections_csv(in)) out[row.sample_id].push_back(row.detection);
  return out;
}

std::vector<std::vector<Detection>> oracle_detections(std::span<const SampleRecord> records,
                                                      const PostProcessConfig& cfg) {
  std::vector<std::vector<Nucleus>> nodes;
  nodes.reserve(records.size());
  for (const auto& r : records) nodes.push_back(r.nuclei);
  const GridSpec grid;
  const auto images = render_targets(nodes, grid);
  return post_process_batch(images, cfg, grid);
}

EvaluationSettings settings_for(const GenerationSpec& spec, bool signal) {
  EvaluationSettings s;
  s.b_z = spec.b_z;
  s.sequences = spec.sequences;
  s.t2 = spec.t2;
  s.with_signal_mae = signal;
  return s;
}

void print_overall(const std::string& label, const MetricsRow& r) {
  std::printf("%s samples=%zu tp=%zu fp=%zu fn=%zu precision=%.4f recall=%.4f\n", label.c_str(),
              r.samples, r.tp, r.fp, r.fn, r.precision.value_or(NAN), r.recall.value_or(NAN));
}

int cmd_generate(const Options& o) {
  auto spec = GenerationSpec::for_regime(parse_field_regime(o.field), o.samples, o.seed);
  if (o.bz > 0.0) spec.b_z = o.bz;
  spec.n_measurements = o.nm;
  spec.t2 = o.t2_us * 1e-6;
  spec.validate();
  const fs::path out(o.out);
  const auto full = generate(spec, out, "dataset", o.shard_size);
  for (const auto& e : full.manifest.entries)
    std::printf("%s\t%llu\t%s\n", e.path.filename().string().c_str(),
                static_cast<unsigned long long>(e.count), to_hex(e.digest).c_str());
  const auto parts = split(full.manifest_path, SplitRatios{}, o.seed, out);
  const auto train = read_manifest(parts.parts[0].manifest_path);
  write_stats(out / "train.stats", compute_normalization(train));
  std::printf("spec %s\nsplit train=%llu validation=%llu test=%llu\n",
              to_hex(spec.digest()).c_str(),
              static_cast<unsigned long long>(parts.parts[0].manifest.total()),
              static_cast<unsigned long long>(parts.parts[1].manifest.total()),
              static_cast<unsigned long long>(parts.parts[2].manifest.total()));
  return 0;
}

int cmd_render(const Options& o) {
  const auto shard = load_manifest(read_manifest(o.manifest));
  const fs::path out(o.out);
  fs::create_directories(out);
  const GridSpec grid;
  std::size_t n = shard.records.size();
  if (o.limit) n = std::min<std::size_t>(n, o.limit);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = shard.records[i];
    char name[32];
    std::snprintf(name, sizeof name, "%010llu.simg", static_cast<unsigned long long>(rec.sample_id));
    write_simg(out / name, render_target(rec.nuclei, grid));
  }
  std::printf("rendered %zu images into %s\n", n, out.string().c_str());
  return 0;
}

int cmd_detect(const Options& o) {
  const auto cfg = post_config(o);
  std::vector<std::pair<std::uint64_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(o.images)) {
    if (entry.path().extension() != ".simg") continue;
    const auto stem = entry.path().stem().string();
    std::uint64_t id = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
    if (ec != std::errc() || ptr != stem.data() + stem.size())
      throw std::runtime_error("image name is not a sample id: " + entry.path().string());
    files.emplace_back(id, entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<HeatImage> images;
  images.reserve(files.size());
  for (const auto& [id, path] : files) images.push_back(read_simg(path));
  const GridSpec grid;
  for (const auto& img : images)
    if (img.rows() != grid.full_rows() || img.cols() != grid.full_cols())
      throw std::runtime_error("image shape differs from the 204 x 104 grid");
  const auto decoded = post_process_batch(images, cfg, grid);

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out, std::ios::trunc);
  write_detections_header(csv);
  std::size_t total = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    write_detections(csv, files[i].first, decoded[i]);
    total += decoded[i].size();
  }
  if (!csv) throw std::runtime_error("write failed: " + out.string());
  std::printf("%zu images, %zu detections -> %s\n", files.size(), total, out.string().c_str());
  return 0;
}

void write_metrics(const fs::path& dir, const std::string& stem,
                   std::span<const SampleEvaluation> evals, const MetricsSummary& summary) {
  fs::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"), std::ios::trunc);
  write_metrics_csv(csv, summary);
  std::ofstream audit(dir / (stem + ".audit.jsonl"), std::ios::trunc);
  write_audit_jsonl(audit, evals);
  if (!csv || !audit) throw std::runtime_error("cannot write metrics into " + dir.string());
}

int cmd_evaluate(const Options& o) {
  const auto spec = spec_for(o.manifest);
  const auto shard = load_manifest(read_manifest(o.manifest));
  std::vector<std::vector<Detection>> dets;
  if (o.detections.empty()) {
    dets = oracle_detections(shard.records, post_config(o));
  } else {
    auto grouped = group_detections(o.detections);
    for (const auto& r : shard.records) dets.push_back(grouped[r.sample_id]);
  }
  const auto evals = evaluate_samples(shard.records, dets, settings_for(spec, !o.no_signal_mae));
  const auto summary = aggregate(evals);
  write_metrics(o.out, "metrics", evals, summary);
  print_overall("overall", summary.overall);
  return 0;
}

int cmd_oracle_check(const Options& o) {
  if (o.n_nuclei < 0 || static_cast<std::size_t>(o.n_nuclei) > kOracleMaxNuclei)
    throw std::invalid_argument("--n must lie in [0, 6]");
  auto spec = GenerationSpec::for_regime(parse_field_regime(o.field), 1, o.seed);
  if (o.bz > 0.0) spec.b_z = o.bz;
  double worst = 0.0;
  for (int t = 0; t < o.trials; ++t) {
    CounterRng rng(o.seed, static_cast<std::uint64_t>(t), streams::kNodeSampling);
    QuantumNode node{{}, spec.b_z};
    for (int j = 0; j < o.n_nuclei; ++j)
      node.nuclei.push_back({rng.uniform(spec.a_par.lo, spec.a_par.hi),
                             rng.uniform(spec.a_perp.lo, spec.a_perp.hi)});
    for (const auto& seq : spec.sequences) {
      const auto a = survival_probability(node, seq);
      const auto b = oracle_survival(node, seq);
      for (std::size_t i = 0; i < a.values.size(); ++i)
        worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    }
  }
  std::printf("max |dP_x| = %.3e over %d nodes (n = %d, B_z = %g T)\n", worst, o.trials,
              o.n_nuclei, spec.b_z);
  return worst <= o.tolerance ? 0 : 1;
}

std::vector<double> trace_values(const SampleRecord& rec, int s) {
  return {rec.traces[s].begin(), rec.traces[s].end()};
}

int cmd_baseline_peaks(const Options& o) {
  if (o.sequence < 0 || o.sequence >= static_cast<int>(kSequenceCount))
    throw std::invalid_argument("--sequence must be 0 (N=32) or 1 (N=256)");
  SignalTrace trace;
  double b_z = field_of(o);
  std::vector<Nucleus> truth;
  if (!o.node.empty()) {
    truth = parse_node(o.node);
    trace = survival_probability(QuantumNode{truth, b_z},
                                 GenerationSpec{}.sequences[o.sequence]);
  } else {
    const auto spec = spec_for(o.manifest);
    const auto shard = load_manifest(read_manifest(o.manifest));
    if (o.sample_index >= shard.records.size())
      throw std::out_of_range("--sample is past the end of the manifest");
    const auto& rec = shard.records[o.sample_index];
    b_z = spec.b_z;
    truth = rec.nuclei;
    trace = {spec.sequences[o.sequence], trace_values(rec, o.sequence)};
  }
  const double omega_l = kGamma13C * b_z;
  std::printf("tau_us,p_x,omega_tilde_candidates_khz\n");
  for (const auto& dip : find_dips(trace, o.depth)) {
    std::printf("%.6f,%.6f,", dip.tau * 1e6, dip.value);
    const auto cands = omega_tilde_candidates(dip.tau, omega_l, kTwoPi * o.window_khz * 1e3);
    for (std::size_t i = 0; i < cands.size(); ++i)
      std::printf("%s%.3f", i ? " " : "", cands[i] / kTwoPi * 1e-3);
    std::printf("\n");
  }
  for (const auto& n : truth)
    std::printf("# true omega_tilde %.3f kHz for (%.1f, %.1f) Hz\n",
                spin_response(n, omega_l, 1e-6, 1).omega_tilde / kTwoPi * 1e-3, n.a_par,
                n.a_perp);
  return 0;
}

int cmd_robustness(const Options& o) {
  const fs::path out(o.out);
  const auto base = load_manifest(read_manifest(o.manifest));
  std::vector<std::vector<Detection>> dets;
  if (o.detections.empty()) {
    dets = oracle_detections(base.records, post_config(o));
  } else {
    auto grouped = group_detections(o.detections);
    for (const auto& r : base.records) dets.push_back(grouped[r.sample_id]);
  }
  std::vector<RobustnessLevel> levels;
  for (int nm : o.levels) {
    const std::string stem = "nm" + std::to_string(nm);
    const auto noisy = renoise(o.manifest, nm, out, stem);
    const auto spec = read_spec(noisy.spec_path);
    const auto shard = load_manifest(noisy.manifest);
    levels.push_back({nm, evaluate_samples(shard.records, dets, settings_for(spec, true))});
  }
  const auto results = robustness_sweep(levels);
  std::ofstream csv(out / "robustness.csv", std::ios::trunc);
  csv << "n_measurements,precision,recall,mae_apar_hz,mae_aperp_hz,mae_sig32,mae_sig256\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    write_metrics(out, "metrics_nm" + std::to_string(results[i].n_measurements),
                  levels[i].samples, results[i].summary);
    const auto& r = results[i].summary.overall;
    auto f = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    csv << results[i].n_measurements << ',' << f(r.precision) << ',' << f(r.recall) << ','
        << f(r.mae_par) << ',' << f(r.mae_perp) << ',' << f(r.mae_sig32) << ','
        << f(r.mae_sig256) << '\n';
    print_overall("N_m=" + std::to_string(results[i].n_measurements), r);
  }
  return 0;
}

int cmd_selectivity(const Options& o) {
  std::vector<Nucleus> offsets;
  for (const auto& s : o.offsets) {
    auto [a, b] = parse_pair(s);
    offsets.push_back({a * 1e3, b * 1e3});
  }
  const Nucleus base{o.base_par_khz * 1e3, o.base_perp_khz * 1e3};
  const auto points = selectivity_scan(base, offsets, GridSpec{}, post_config(o));
  std::printf("offset_par_khz,offset_perp_khz,detections\n");
  for (const auto& p : points)
    std::printf("%g,%g,%zu\n", p.offset.a_par * 1e-3, p.offset.a_perp * 1e-3, p.detections);
  return 0;
}

int cmd_export_traces(const Options& o) {
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out, std::ios::trunc);
  csv << "sample_id,n_pulses,tau_s,p_x\n";
  auto emit = [&](std::uint64_t id, const PulseSequence& seq, std::span<const double> v) {
    char buf[96];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%llu,%d,%.9e,%.9f\n", static_cast<unsigned long long>(id),
                    seq.n_pulses, seq.tau(i), v[i]);
      csv << buf;
    }
  };
  if (!o.node.empty()) {
    const QuantumNode node{parse_node(o.node), field_of(o)};
    for (const auto& seq : GenerationSpec{}.sequences) {
      const auto t = survival_probability(node, seq);
      emit(0, seq, t.values);
    }
  } else {
    const auto spec = spec_for(o.manifest);
    const auto shard = load_manifest(read_manifest(o.manifest));
    std::size_t n = shard.records.size();
    if (o.limit) n = std::min<std::size_t>(n, o.limit);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < kSequenceCount; ++s) {
        const auto v = trace_values(shard.records[i], static_cast<int>(s));
        emit(shard.records[i].sample_id, spec.sequences[s], v);
      }
  }
  if (!csv) throw std::runtime_error("write failed: " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-centre CPMG simulator, dataset forge and heat-map evaluation"};
  app.set_config("--config", "", "key = value configuration file");
  app.require_subcommand(1);
  Options o;

  auto add_field = [&](CLI::App* c) {
    c->add_option("--field", o.field, "Field regime: high (0.056 T) or low (0.0056 T)")
        ->check(CLI::IsMember({"high", "low"}))
        ->capture_default_str();
    c->add_option("--bz", o.bz, "Override B_z in tesla");
  };
  auto add_post = [&](CLI::App* c) {
    c->add_option("--threshold", o.threshold, "Detection threshold")->capture_default_str();
    c->add_option("--min-area", o.min_area, "Minimum region area (pixels)")->capture_default_str();
  };

  auto* gen = app.add_subcommand("generate", "Generate, split and normalise a dataset");
  add_field(gen);
  gen->add_option("--samples", o.samples)->capture_default_str();
  gen->add_option("--seed", o.seed)->capture_default_str();
  gen->add_option("--nm", o.nm, "Measurements per point")->capture_default_str();
  gen->add_option("--t2-us", o.t2_us)->capture_default_str();
  gen->add_option("--shard-size", o.shard_size)->capture_default_str();
  gen->add_option("--out", o.out)->capture_default_str();

  auto* ren = app.add_subcommand("render-targets", "Write true heat maps (SIMG) for a manifest");
  ren->add_option("--manifest", o.manifest)->required();
  ren->add_option("--out", o.out)->capture_default_str();
  ren->add_option("--limit", o.limit, "Render at most this many samples (0 = all)");

  auto* det = app.add_subcommand("detect", "Decode SIMG heat maps into detections");
  det->add_option("--images", o.images)->required();
  det->add_option("--out", o.out, "Detections CSV")->required();
  add_post(det);

  auto* ev = app.add_subcommand("evaluate", "Match detections and write per-n metrics");
  ev->add_option("--manifest", o.manifest)->required();
  ev->add_option("--detections", o.detections, "Detections CSV (default: decoded true maps)");
  ev->add_option("--out", o.out)->capture_default_str();
  ev->add_flag("--no-signal-mae", o.no_signal_mae);
  add_post(ev);

  auto* orc = app.add_subcommand("oracle-check", "Closed form against explicit propagation");
  add_field(orc);
  orc->add_option("--n", o.n_nuclei)->capture_default_str();
  orc->add_option("--trials", o.trials)->capture_default_str();
  orc->add_option("--seed", o.seed)->capture_default_str();
  orc->add_option("--tol", o.tolerance)->capture_default_str();

  auto* bp = app.add_subcommand("baseline-peaks", "Classical dip finder on one trace");
  add_field(bp);
  bp->add_option("--manifest", o.manifest);
  bp->add_option("--node", o.node, "Couplings in kHz, e.g. 3:75,-45:42");
  bp->add_option("--sample", o.sample_index)->capture_default_str();
  bp->add_option("--sequence", o.sequence, "0 = N 32, 1 = N 256")->capture_default_str();
  bp->add_option("--depth", o.depth)->capture_default_str();
  bp->add_option("--window-khz", o.window_khz, "Candidate band around the Larmor frequency")
      ->capture_default_str();

  auto* rob = app.add_subcommand("robustness", "Renoise and evaluate per N_m level");
  rob->add_option("--manifest", o.manifest)->required();
  rob->add_option("--levels", o.levels)->delimiter(',')->capture_default_str();
  rob->add_option("--detections", o.detections);
  rob->add_option("--out", o.out)->capture_default_str();
  add_post(rob);

  auto* sel = app.add_subcommand("selectivity", "Two-nucleus separation scan");
  sel->add_option("--base-par-khz", o.base_par_khz)->capture_default_str();
  sel->add_option("--base-perp-khz", o.base_perp_khz)->capture_default_str();
  sel->add_option("--offsets", o.offsets, "par:perp offsets in kHz")
      ->delimiter(',')
      ->capture_default_str();
  add_post(sel);

  auto* ex = app.add_subcommand("export-traces", "Traces as CSV");
  add_field(ex);
  ex->add_option("--manifest", o.manifest);
  ex->add_option("--node", o.node, "Couplings in kHz, noiseless traces");
  ex->add_option("--limit", o.limit);
  ex->add_option("--out", o.out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "generate" || name == "evaluate" || name == "robustness" ||
        name == "render-targets")
      write_effective_config(app, o.out);
    if (name == "generate") return cmd_generate(o);
    if (name == "render-targets") return cmd_render(o);
    if (name == "detect") return cmd_detect(o);
    if (name == "evaluate") return cmd_evaluate(o);
    if (name == "oracle-check") return cmd_oracle_check(o);
    if (name == "baseline-peaks") {
      if (o.node.empty() == o.manifest.empty())
        throw std::invalid_argument("give exactly one of --manifest or --node");
      return cmd_baseline_peaks(o);
    }
    if (name == "robustness") return cmd_robustness(o);
    if (name == "selectivity") return cmd_selectivity(o);
    if (name == "export-traces") {
      if (o.node.empty() == o.manifest.empty())
        throw std::invalid_argument("give exactly one of --manifest or --node");
      return cmd_export_traces(o);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
