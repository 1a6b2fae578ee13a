#include "nvmap/shard.hpp"

#include "byte_io.hpp"

#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace nvmap {

namespace {

using detail::ByteReader;
using detail::ByteWriter;
using detail::read_file;
using detail::write_file;

void check_magic(ByteReader& r, const std::array<char, 4>& magic, std::uint32_t version,
                 const char* what) {
  std::array<char, 4> got{};
  r.raw(got.data(), got.size());
  if (got != magic) throw ShardFormatError(std::string(what) + ": bad magic");
  const auto v = r.le<std::uint32_t>();
  if (v != version)
    throw ShardFormatError(std::string(what) + ": unsupported version " + std::to_string(v));
}

}  // namespace

std::vector<std::uint8_t> encode_shard(const Digest& spec_digest,
                                       std::span<const SampleRecord> records) {
  if (records.size() > UINT32_MAX) throw std::invalid_argument("shard: too many records");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(44 + records.size() * (9 + 20 * 16 + kSequenceCount * kTracePoints * 4));
  ByteWriter w(bytes);
  w.raw(kShardMagic.data(), kShardMagic.size());
  w.le(kShardVersion);
  w.le(static_cast<std::uint32_t>(records.size()));
  w.raw(spec_digest.data(), spec_digest.size());
  for (const auto& rec : records) {
    if (rec.nuclei.size() > 255) throw std::invalid_argument("shard: more than 255 nuclei");
    w.le(rec.sample_id);
    w.le(static_cast<std::uint8_t>(rec.nuclei.size()));
    for (const auto& nuc : rec.nuclei) {
      w.le(nuc.a_par);
      w.le(nuc.a_perp);
    }
    for (const auto& trace : rec.traces) {
      if (trace.size() != kTracePoints)
        throw std::invalid_argument("shard: traces must have 1000 points");
      for (float v : trace) w.le(v);
    }
  }
  return bytes;
}

Shard decode_shard(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_magic(r, kShardMagic, kShardVersion, "shard");
  const auto count = r.le<std::uint32_t>();
  Shard shard;
  r.raw(shard.spec_digest.data(), shard.spec_digest.size());
  shard.records.resize(count);
  for (auto& rec : shard.records) {
    rec.sample_id = r.le<std::uint64_t>();
    rec.nuclei.resize(r.le<std::uint8_t>());
    for (auto& nuc : rec.nuclei) {
      nuc.a_par = r.le<double>();
      nuc.a_perp = r.le<double>();
    }
    for (auto& trace : rec.traces) {
      trace.resize(kTracePoints);
      for (auto& v : trace) v = r.le<float>();
    }
  }
  if (!r.done()) throw ShardFormatError("shard: trailing bytes after last record");
  return shard;
}

void write_shard(const std::filesystem::path& path, const Digest& spec_digest,
                 std::span<const SampleRecord> records) {
  write_file(path, encode_shard(spec_digest, records));
}

Shard read_shard(const std::filesystem::path& path) { return decode_shard(read_file(path)); }

std::uint64_t Manifest::total() const {
  std::uint64_t n = 0;
  for (const auto& e : entries) n += e.count;
  return n;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    const auto rel = std::filesystem::relative(e.path, base);
    out << rel.generic_string() << '\t' << e.count << '\t' << to_hex(e.digest) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string p, hex;
    ManifestEntry e;
    if (!std::getline(fields, p, '\t') || !(fields >> e.count >> hex))
      throw ShardFormatError("manifest line " + std::to_string(lineno) + ": malformed");
    e.path = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
    e.digest = digest_from_hex(hex);
    m.entries.push_back(std::move(e));
  }
  return m;
}

namespace {

Shard checked_shard(const ManifestEntry& e) {
  const auto bytes = read_file(e.path);
  if (sha256(bytes) != e.digest)
    throw ShardFormatError("shard digest mismatch: " + e.path.string());
  Shard s = decode_shard(bytes);
  if (s.records.size() != e.count)
    throw ShardFormatError("shard record count differs from manifest: " + e.path.string());
  return s;
}

}  // namespace

void for_each_record(const Manifest& manifest,
                     const std::function<void(const SampleRecord&)>& fn) {
  std::optional<Digest> spec;
  for (const auto& e : manifest.entries) {
    const Shard s = checked_shard(e);
    if (spec && *spec != s.spec_digest)
      throw ShardFormatError("manifest mixes shards generated from different specs");
    spec = s.spec_digest;
    for (const auto& rec : s.records) fn(rec);
  }
}

Shard load_manifest(const Manifest& manifest) {
  Shard all;
  bool first = true;
  for (const auto& e : manifest.entries) {
    Shard s = checked_shard(e);
    if (!first && all.spec_digest != s.spec_digest)
      throw ShardFormatError("manifest mixes shards generated from different specs");
    all.spec_digest = s.spec_digest;
    first = false;
    std::move(s.records.begin(), s.records.end(), std::back_inserter(all.records));
  }
  return all;
}

void write_stats(const std::filesystem::path& path, const NormalizationStats& stats) {
  const std::size_t points = stats.mean[0].size();
  for (std::size_t s = 0; s < kSequenceCount; ++s) {
    if (stats.mean[s].size() != points || stats.variance[s].size() != points)
      throw std::invalid_argument("normalization stats: inconsistent lengths");
  }
  std::vector<std::uint8_t> bytes;
  ByteWriter w(bytes);
  w.raw(kStatsMagic.data(), kStatsMagic.size());
  w.le(kStatsVersion);
  w.le(static_cast<std::uint32_t>(kSequenceCount));
  w.le(static_cast<std::uint32_t>(points));
  w.le(stats.n_samples);
  w.le(stats.epsilon);
  for (std::size_t s = 0; s < kSequenceCount; ++s) {
    for (double v : stats.mean[s]) w.le(v);
    for (double v : stats.variance[s]) w.le(v);
  }
  write_file(path, bytes);
}

NormalizationStats read_stats(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  check_magic(r, kStatsMagic, kStatsVersion, "normalization stats");
  if (r.le<std::uint32_t>() != kSequenceCount)
    throw ShardFormatError("normalization stats: unexpected sequence count");
  const auto points = r.le<std::uint32_t>();
  NormalizationStats stats;
  stats.n_samples = r.le<std::uint64_t>();
  stats.epsilon = r.le<double>();
  for (std::size_t s = 0; s < kSequenceCount; ++s) {
    stats.mean[s].resize(points);
    stats.variance[s].resize(points);
    for (auto& v : stats.mean[s]) v = r.le<double>();
    for (auto& v : stats.variance[s]) v = r.le<double>();
  }
  if (!r.done()) throw ShardFormatError("normalization stats: trailing bytes");
  return stats;
}

}  // namespace nvmap
