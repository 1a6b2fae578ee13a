#include "nvmap/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nvmap/rng.hpp"

namespace nvmap {

namespace fs = std::filesystem;

double field_tesla(FieldRegime regime) {
  return regime == FieldRegime::high ? 0.056 : 0.0056;
}

std::string_view to_string(FieldRegime regime) {
  return regime == FieldRegime::high ? "high" : "low";
}

FieldRegime parse_field_regime(std::string_view text) {
  if (text == "high") return FieldRegime::high;
  if (text == "low") return FieldRegime::low;
  throw std::invalid_argument("field regime must be 'high' or 'low', got '" +
                              std::string(text) + "'");
}

GenerationSpec GenerationSpec::for_regime(FieldRegime regime, std::uint64_t n_samples,
                                          std::uint64_t seed) {
  GenerationSpec spec;
  spec.regime = regime;
  spec.b_z = field_tesla(regime);
  spec.n_samples = n_samples;
  spec.seed = seed;
  return spec;
}

void GenerationSpec::validate() const {
  if (!(b_z > 0.0)) throw std::invalid_argument("generation spec: b_z must be positive");
  if (n_min < 1 || n_max < n_min || n_max > static_cast<int>(kMaxNuclei))
    throw std::invalid_argument("generation spec: nucleus count range must lie in [1, 20]");
  if (!(a_par.lo < a_par.hi) || !(a_perp.lo < a_perp.hi))
    throw std::invalid_argument("generation spec: empty coupling interval");
  if (!(a_perp.lo > 0.0))
    throw std::invalid_argument("generation spec: a_perp range must be positive");
  for (const auto& seq : sequences) {
    seq.validate();
    if (seq.n_points != static_cast<int>(kTracePoints))
      throw std::invalid_argument("generation spec: both sequences need 1000 points");
  }
  noise().validate();
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw std::invalid_argument("spec key '" + key + "': bad number '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw std::invalid_argument("spec key '" + key + "': bad integer '" + v + "'");
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string GenerationSpec::to_text() const {
  std::ostringstream out;
  out << "field_regime = " << to_string(regime) << '\n'
      << "b_z = " << format_double(b_z) << '\n'
      << "n_samples = " << n_samples << '\n'
      << "n_min = " << n_min << '\n'
      << "n_max = " << n_max << '\n'
      << "a_par_lo = " << format_double(a_par.lo) << '\n'
      << "a_par_hi = " << format_double(a_par.hi) << '\n'
      << "a_perp_lo = " << format_double(a_perp.lo) << '\n'
      << "a_perp_hi = " << format_double(a_perp.hi) << '\n';
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& q = sequences[s];
    out << "seq" << s << "_n_pulses = " << q.n_pulses << '\n'
        << "seq" << s << "_tau_min = " << format_double(q.tau_min) << '\n'
        << "seq" << s << "_tau_max = " << format_double(q.tau_max) << '\n'
        << "seq" << s << "_n_points = " << q.n_points << '\n';
  }
  out << "t2 = " << format_double(t2) << '\n'
      << "n_measurements = " << n_measurements << '\n'
      << "seed = " << seed << '\n'
      << "noise_realisation = " << noise_realisation << '\n';
  return out.str();
}

GenerationSpec GenerationSpec::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("spec line without '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("spec text missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  GenerationSpec spec;
  spec.regime = parse_field_regime(take("field_regime"));
  spec.b_z = parse_double("b_z", take("b_z"));
  spec.n_samples = parse_u64("n_samples", take("n_samples"));
  spec.n_min = static_cast<int>(parse_u64("n_min", take("n_min")));
  spec.n_max = static_cast<int>(parse_u64("n_max", take("n_max")));
  spec.a_par = {parse_double("a_par_lo", take("a_par_lo")),
                parse_double("a_par_hi", take("a_par_hi"))};
  spec.a_perp = {parse_double("a_perp_lo", take("a_perp_lo")),
                 parse_double("a_perp_hi", take("a_perp_hi"))};
  for (std::size_t s = 0; s < spec.sequences.size(); ++s) {
    const std::string p = "seq" + std::to_string(s) + "_";
    auto& q = spec.sequences[s];
    q.n_pulses = static_cast<int>(parse_u64(p + "n_pulses", take(p + "n_pulses")));
    q.tau_min = parse_double(p + "tau_min", take(p + "tau_min"));
    q.tau_max = parse_double(p + "tau_max", take(p + "tau_max"));
    q.n_points = static_cast<int>(parse_u64(p + "n_points", take(p + "n_points")));
  }
  spec.t2 = parse_double("t2", take("t2"));
  spec.n_measurements = static_cast<int>(parse_u64("n_measurements", take("n_measurements")));
  spec.seed = parse_u64("seed", take("seed"));
  spec.noise_realisation = parse_u64("noise_realisation", take("noise_realisation"));
  if (!kv.empty()) throw std::invalid_argument("spec text has unknown key '" + kv.begin()->first + "'");
  return spec;
}

Digest GenerationSpec::digest() const { return sha256(to_text()); }

QuantumNode sample_node(const GenerationSpec& spec, std::uint64_t sample_id) {
  CounterRng rng(spec.seed, sample_id, streams::kNodeSampling);
  QuantumNode node;
  node.b_z = spec.b_z;
  const auto n = static_cast<std::size_t>(rng.uniform_int(spec.n_min, spec.n_max));
  node.nuclei.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double a_par = rng.uniform(spec.a_par.lo, spec.a_par.hi);
    const double a_perp = rng.uniform(spec.a_perp.lo, spec.a_perp.hi);
    node.nuclei.push_back({a_par, a_perp});
  }
  return node;
}

SampleRecord simulate_record(const GenerationSpec& spec, std::uint64_t sample_id,
                             std::vector<Nucleus> nuclei) {
  SampleRecord rec;
  rec.sample_id = sample_id;
  const QuantumNode node{std::move(nuclei), spec.b_z};
  const auto noise = spec.noise();
  for (std::size_t s = 0; s < kSequenceCount; ++s) {
    const auto& seq = spec.sequences[s];
    SignalTrace trace{seq, std::vector<double>(static_cast<std::size_t>(seq.n_points))};
    survival_probability_into(node, seq, trace.values);
    trace = apply_decoherence(std::move(trace), spec.t2);
    trace = apply_shot_noise(std::move(trace), noise, sample_id,
                             (spec.noise_realisation << 1) | s);
    rec.traces[s].assign(trace.values.begin(), trace.values.end());
  }
  rec.nuclei = node.nuclei;
  return rec;
}

namespace {

std::vector<SampleRecord> generate_range(const GenerationSpec& spec, std::uint64_t first,
                                         std::uint64_t count, bool parallel) {
  spec.validate();
  std::vector<SampleRecord> records(count);
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint64_t id = first + static_cast<std::uint64_t>(i);
    records[static_cast<std::size_t>(i)] =
        simulate_record(spec, id, sample_node(spec, id).nuclei);
  }
  return records;
}

std::string shard_name(std::string_view stem, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-%05zu.shard", index);
  return std::string(stem) + buf;
}

// Writes records in chunks of shard_size plus manifest and spec sidecar.
GenerationOutput write_dataset(const GenerationSpec& spec, std::span<const SampleRecord> records,
                               const fs::path& out_dir, std::string_view stem,
                               std::uint64_t shard_size) {
  fs::create_directories(out_dir);
  GenerationOutput out;
  out.manifest_path = out_dir / (std::string(stem) + ".manifest");
  out.spec_path = spec_path_for(out.manifest_path);
  const Digest digest = spec.digest();
  std::size_t start = 0, index = 0;
  do {
    const std::size_t len = std::min<std::size_t>(shard_size, records.size() - start);
    const fs::path path = out_dir / shard_name(stem, index++);
    write_shard(path, digest, records.subspan(start, len));
    out.manifest.entries.push_back({path, len, sha256_file(path)});
    start += len;
  } while (start < records.size());
  write_spec(out.spec_path, spec);
  write_manifest(out.manifest_path, out.manifest);
  return out;
}

}  // namespace

std::vector<SampleRecord> generate_records(const GenerationSpec& spec, std::uint64_t first,
                                           std::uint64_t count) {
  return generate_range(spec, first, count, true);
}

namespace serial {
std::vector<SampleRecord> generate_records(const GenerationSpec& spec, std::uint64_t first,
                                           std::uint64_t count) {
  return generate_range(spec, first, count, false);
}
}  // namespace serial

GenerationOutput generate(const GenerationSpec& spec, const fs::path& out_dir,
                          std::string_view stem, std::uint64_t shard_size) {
  spec.validate();
  if (shard_size == 0) throw std::invalid_argument("generate: shard size must be positive");
  fs::create_directories(out_dir);
  GenerationOutput out;
  out.manifest_path = out_dir / (std::string(stem) + ".manifest");
  out.spec_path = spec_path_for(out.manifest_path);
  const Digest digest = spec.digest();
  // One shard at a time keeps memory bounded; shard contents depend only on
  // the spec and the id range, never on the thread count.
  std::uint64_t first = 0;
  std::size_t index = 0;
  do {
    const std::uint64_t count = std::min(shard_size, spec.n_samples - first);
    const auto records = generate_records(spec, first, count);
    const fs::path path = out_dir / shard_name(stem, index++);
    write_shard(path, digest, records);
    out.manifest.entries.push_back({path, count, sha256_file(path)});
    first += count;
  } while (first < spec.n_samples);
  write_spec(out.spec_path, spec);
  write_manifest(out.manifest_path, out.manifest);
  return out;
}

fs::path spec_path_for(const fs::path& manifest_path) {
  fs::path p = manifest_path;
  return p.replace_extension(".spec");
}

GenerationSpec read_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return GenerationSpec::from_text(buf.str());
}

void write_spec(const fs::path& path, const GenerationSpec& spec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << spec.to_text();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::array<std::uint64_t, 3> split_counts(std::uint64_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  const double sum = r[0] + r[1] + r[2];
  if (std::abs(sum - 1.0) > 1e-9 || r[0] < 0 || r[1] < 0 || r[2] < 0)
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  std::array<std::uint64_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::uint64_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = r[k] * static_cast<double>(n);
    // Guard against 0.7 * 100 = 70.00000000000001 style rounding.
    const double floored = std::floor(quota + 1e-9);
    counts[k] = static_cast<std::uint64_t>(floored);
    remainder[k] = std::max(0.0, quota - floored);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

std::array<std::vector<std::uint64_t>, 3> assign_split(std::uint64_t n,
                                                       const SplitRatios& ratios,
                                                       std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("split: empty dataset");
  const auto counts = split_counts(n, ratios);
  std::vector<std::uint64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng(seed, streams::kSplit, n);
  for (std::uint64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  std::array<std::vector<std::uint64_t>, 3> parts;
  auto it = perm.begin();
  for (std::size_t k = 0; k < 3; ++k) {
    parts[k].assign(it, it + static_cast<std::ptrdiff_t>(counts[k]));
    std::sort(parts[k].begin(), parts[k].end());
    it += static_cast<std::ptrdiff_t>(counts[k]);
  }
  return parts;
}

SplitOutput split(const fs::path& manifest_path, const SplitRatios& ratios, std::uint64_t seed,
                  const fs::path& out_dir) {
  const Manifest manifest = read_manifest(manifest_path);
  const GenerationSpec spec = read_spec(spec_path_for(manifest_path));
  Shard all = load_manifest(manifest);
  if (all.spec_digest != spec.digest())
    throw ShardFormatError("split: shard spec digest does not match " +
                           spec_path_for(manifest_path).string());
  const auto parts = assign_split(all.records.size(), ratios, seed);
  static constexpr std::array<std::string_view, 3> kNames{"train", "validation", "test"};
  SplitOutput out;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<SampleRecord> subset;
    subset.reserve(parts[k].size());
    for (auto pos : parts[k]) subset.push_back(all.records[pos]);
    out.parts[k] = write_dataset(spec, subset, out_dir, kNames[k], 100000);
  }
  return out;
}

namespace {

// Two-pass mean/variance over a record source, in double precision.
template <typename ForEach>
NormalizationStats normalization_from(ForEach&& for_each) {
  NormalizationStats stats;
  for (std::size_t s = 0; s < kSequenceCount; ++s) {
    stats.mean[s].assign(kTracePoints, 0.0);
    stats.variance[s].assign(kTracePoints, 0.0);
  }
  for_each([&](const SampleRecord& rec) {
    ++stats.n_samples;
    for (std::size_t s = 0; s < kSequenceCount; ++s)
      for (std::size_t i = 0; i < kTracePoints; ++i) stats.mean[s][i] += rec.traces[s][i];
  });
  if (stats.n_samples == 0) throw std::invalid_argument("normalization: empty training split");
  const auto count = static_cast<double>(stats.n_samples);
  for (auto& m : stats.mean)
    for (auto& v : m) v /= count;
  for_each([&](const SampleRecord& rec) {
    for (std::size_t s = 0; s < kSequenceCount; ++s)
      for (std::size_t i = 0; i < kTracePoints; ++i) {
        const double d = rec.traces[s][i] - stats.mean[s][i];
        stats.variance[s][i] += d * d;
      }
  });
  for (auto& var : stats.variance)
    for (auto& v : var) v /= count;
  return stats;
}

}  // namespace

NormalizationStats compute_normalization(std::span<const SampleRecord> training) {
  return normalization_from([&](auto&& fn) {
    for (const auto& rec : training) fn(rec);
  });
}

NormalizationStats compute_normalization(const Manifest& training) {
  return normalization_from([&](auto&& fn) { for_each_record(training, fn); });
}

std::vector<double> apply_normalization(std::span<const float> trace,
                                        const NormalizationStats& stats,
                                        std::size_t sequence_index) {
  if (sequence_index >= kSequenceCount)
    throw std::invalid_argument("apply_normalization: bad sequence index");
  const auto& mean = stats.mean[sequence_index];
  const auto& var = stats.variance[sequence_index];
  if (trace.size() != mean.size())
    throw std::invalid_argument("apply_normalization: trace length does not match stats");
  std::vector<double> out(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i)
    out[i] = (trace[i] - mean[i]) / std::sqrt(var[i] + stats.epsilon);
  return out;
}

GenerationOutput renoise(const fs::path& manifest_path, int n_measurements,
                         const fs::path& out_dir, std::string_view stem,
                         std::uint64_t realisation) {
  if (n_measurements < 1) throw std::invalid_argument("renoise: n_measurements must be >= 1");
  const Manifest manifest = read_manifest(manifest_path);
  const GenerationSpec source = read_spec(spec_path_for(manifest_path));
  Shard all = load_manifest(manifest);
  if (all.spec_digest != source.digest())
    throw ShardFormatError("renoise: shard spec digest does not match its sidecar");

  GenerationSpec spec = source;
  spec.n_measurements = n_measurements;
  spec.noise_realisation = realisation;
  spec.validate();

  std::vector<SampleRecord> records(all.records.size());
  const auto n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& src = all.records[static_cast<std::size_t>(i)];
    records[static_cast<std::size_t>(i)] = simulate_record(spec, src.sample_id, src.nuclei);
  }
  return write_dataset(spec, records, out_dir, stem, 100000);
}

}  // namespace nvmap
