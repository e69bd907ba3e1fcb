#include "ecrl/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ecrl/augment.hpp"
#include "ecrl/errors.hpp"

namespace ecrl::data {

namespace fs = std::filesystem;

void FeatureSequence::validate() const {
  if (length() < 4) throw InputError("feature sequence needs T >= 4, got " + std::to_string(length()));
  if (dim() < 2) throw InputError("feature sequence needs D >= 2, got " + std::to_string(dim()));
  if (!frames.all_finite()) throw InputError("feature sequence contains non-finite values");
}

void SyntheticConfig::validate() const {
  if (T < 4) throw ConfigError("T", "must be >= 4");
  if (D < 2) throw ConfigError("D", "must be >= 2");
  if (prototypes < 1) throw ConfigError("prototypes", "must be >= 1");
  if (backgrounds < 1) throw ConfigError("backgrounds", "must be >= 1");
  if (vocab <= prototypes) throw ConfigError("vocab", "must exceed the number of prototypes");
  if (!(seg_min > 0.0 && seg_min < 1.0)) throw ConfigError("seg_min", "must lie in (0, 1)");
  if (!(seg_max > 0.0 && seg_max < 1.0)) throw ConfigError("seg_max", "must lie in (0, 1)");
  if (seg_min > seg_max) throw ConfigError("seg_min", "must not exceed seg_max");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise", "must be >= 0");
  if (!(signal > 0.0) || !std::isfinite(signal)) throw ConfigError("signal", "must be > 0");
  if (query_min < 1) throw ConfigError("query_min", "must be >= 1");
  if (query_max < query_min) throw ConfigError("query_max", "must be >= query_min");
}

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Matrix prototype_bank(const SyntheticConfig& cfg) {
  Rng rng = make_rng(cfg.seed, {0xBA4CULL});
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix bank(cfg.prototypes + cfg.backgrounds, cfg.D);
  for (auto& v : bank.data()) v = f32(nd(rng) * cfg.signal);
  return bank;
}

GeneratedPair generate_synthetic_pair(const SyntheticConfig& cfg, Rng& rng) {
  return generate_synthetic_pair(cfg, prototype_bank(cfg), rng);
}

GeneratedPair generate_synthetic_pair(const SyntheticConfig& cfg, const Matrix& bank, Rng& rng) {
  cfg.validate();
  const std::size_t T = cfg.T;
  GeneratedPair out;

  std::uniform_real_distribution<double> frac(cfg.seg_min, cfg.seg_max);
  auto len = static_cast<std::size_t>(std::llround(frac(rng) * static_cast<double>(T)));
  len = std::clamp<std::size_t>(len, 1, T);
  out.annotation.tau_s = std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
  out.annotation.tau_e = out.annotation.tau_s + len - 1;

  out.prototype = std::uniform_int_distribution<std::size_t>(0, cfg.prototypes - 1)(rng);
  std::uniform_int_distribution<std::size_t> bg(0, cfg.backgrounds - 1);
  const std::size_t bg_left = cfg.prototypes + bg(rng);
  const std::size_t bg_right = cfg.prototypes + bg(rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  out.features.frames = Matrix(T, cfg.D);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t src = t < out.annotation.tau_s   ? bg_left
                            : t <= out.annotation.tau_e ? out.prototype
                                                        : bg_right;
    for (std::size_t d = 0; d < cfg.D; ++d) {
      const double n = noise(rng);
      out.features.frames(t, d) = f32(bank(src, d) + cfg.noise * n);
    }
  }

  const std::size_t N = std::uniform_int_distribution<std::size_t>(cfg.query_min, cfg.query_max)(rng);
  const std::size_t content_pos = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
  std::uniform_int_distribution<std::size_t> filler(cfg.prototypes, cfg.vocab - 1);
  out.query.ids.resize(N);
  for (std::size_t n = 0; n < N; ++n) out.query.ids[n] = n == content_pos ? out.prototype : filler(rng);
  return out;
}

std::size_t recover_prototype(const QueryTokens& q, const SyntheticConfig& cfg) {
  for (std::size_t id : q.ids)
    if (id < cfg.prototypes) return id;
  throw InputError("query carries no prototype token");
}

// ---- feature files ---------------------------------------------------------

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 4;

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<std::size_t, std::size_t> parse_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < 8) throw FormatError(path.string() + ": truncated magic", bytes.size());
  if (std::memcmp(bytes.data(), kFeatureMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad magic, expected \"ECRLFEAT\"", 0);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(path.string() + ": truncated header", bytes.size());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = get_u32(p + 8);
  if (version != kFeatureVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version), 8);
  }
  return {get_u32(p + 12), get_u32(p + 16)};
}

}  // namespace

void write_features(const fs::path& path, const FeatureSequence& seq) {
  if (!seq.frames.all_finite()) throw InputError("write_features: non-finite values");
  std::string buf(kFeatureMagic, 8);
  put_u32(buf, kFeatureVersion);
  put_u32(buf, static_cast<std::uint32_t>(seq.length()));
  put_u32(buf, static_cast<std::uint32_t>(seq.dim()));
  buf.reserve(buf.size() + seq.frames.size() * 4);
  for (double v : seq.frames.data()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureSequence read_features(const fs::path& path) {
  const std::string bytes = read_all(path);
  const auto [T, D] = parse_header(bytes, path);
  const std::size_t need = kHeaderBytes + T * D * 4;
  if (bytes.size() < need) {
    throw FormatError(path.string() + ": truncated payload, expected " + std::to_string(need) +
                          " bytes, found " + std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > need) throw FormatError(path.string() + ": trailing bytes after payload", need);
  FeatureSequence seq;
  seq.frames = Matrix(T, D);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  for (std::size_t i = 0; i < T * D; ++i) {
    seq.frames[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
    if (!std::isfinite(seq.frames[i])) {
      throw FormatError(path.string() + ": non-finite feature value", kHeaderBytes + 4 * i);
    }
  }
  return seq;
}

std::pair<std::size_t, std::size_t> read_feature_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string head(kHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(kHeaderBytes));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head, path);
}

// ---- manifests ------------------------------------------------------------

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# id\tpath\ttokens\ttau_s\ttau_e\tT\n";
  for (const auto& r : m.records) {
    out << r.id << '\t' << r.path << '\t';
    for (std::size_t i = 0; i < r.tokens.ids.size(); ++i) out << (i ? " " : "") << r.tokens.ids[i];
    out << '\t' << r.annotation.tau_s << '\t' << r.annotation.tau_e << '\t' << r.T << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::size_t parse_index(const std::string& s, const std::string& what, std::size_t line_no) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ManifestError("line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
  }
  if (pos != s.size()) {
    throw ManifestError("line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.split = path.stem().string();
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 6) {
      throw ManifestError("line " + std::to_string(line_no) + ": expected 6 tab-separated fields, got " +
                          std::to_string(cols.size()));
    }
    ManifestRecord r;
    r.id = cols[0];
    r.path = cols[1];
    if (r.id.empty() || r.path.empty()) {
      throw ManifestError("line " + std::to_string(line_no) + ": empty id or path");
    }
    std::istringstream toks(cols[2]);
    std::string tok;
    while (toks >> tok) r.tokens.ids.push_back(parse_index(tok, "token id", line_no));
    if (r.tokens.ids.empty()) throw ManifestError("line " + std::to_string(line_no) + ": empty query");
    r.annotation.tau_s = parse_index(cols[3], "tau_s", line_no);
    r.annotation.tau_e = parse_index(cols[4], "tau_e", line_no);
    r.T = parse_index(cols[5], "T", line_no);
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) {
    std::cerr << "warning: manifest " << path.string() << " has no records\n";
  }
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (!r.annotation.valid_for(r.T)) {
      throw ManifestError("record " + std::to_string(i) + " (" + r.id + "): annotation [" +
                          std::to_string(r.annotation.tau_s) + ", " + std::to_string(r.annotation.tau_e) +
                          "] invalid for T=" + std::to_string(r.T));
    }
    const fs::path fp = m.feature_path(r);
    if (!fs::exists(fp)) {
      throw ManifestError("record " + std::to_string(i) + " (" + r.id + "): dangling path " + fp.string());
    }
    const auto [T, D] = read_feature_shape(fp);
    (void)D;
    if (T != r.T) {
      throw ManifestError("record " + std::to_string(i) + " (" + r.id + "): manifest T=" +
                          std::to_string(r.T) + " but file holds T=" + std::to_string(T));
    }
  }
  return m;
}

SplitCounts split_counts(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split", "fractions must be nonnegative and sum to 1");
  }
  SplitCounts c;
  const double dn = static_cast<double>(n);
  c.train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(dn * f.train)));
  c.val = std::min<std::size_t>(n - c.train, static_cast<std::size_t>(std::llround(dn * f.val)));
  c.test = n - c.train - c.val;
  return c;
}

GeneratedDataset generate_dataset(const SyntheticConfig& cfg, std::size_t n_samples,
                                  const SplitFractions& fracs, const fs::path& out_dir,
                                  const TestShift& shift) {
  cfg.validate();
  const SplitCounts counts = split_counts(n_samples, fracs);
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());

  GeneratedDataset ds;
  ds.train.split = "train";
  ds.val.split = "val";
  ds.test.split = "test";
  ds.train.root = ds.val.root = ds.test.root = out_dir;

  const Matrix bank = prototype_bank(cfg);
  augment::AugmentConfig shift_cfg;
  shift_cfg.override_bounds = true;
  shift_cfg.ratio_lo = shift.lo;
  shift_cfg.ratio_hi = shift.hi;

  char id[32];
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng rng = make_rng(cfg.seed, {k});
    GeneratedPair pair = generate_synthetic_pair(cfg, bank, rng);
    DatasetManifest* target = k < counts.train ? &ds.train : (k < counts.train + counts.val ? &ds.val : &ds.test);
    if (target == &ds.test && shift.enabled) {
      const auto aug = augment::augment(pair.features, pair.annotation, shift_cfg, rng);
      pair.features = aug.features;
      pair.annotation = aug.annotation;
    }
    std::snprintf(id, sizeof(id), "s%05zu", k);
    ManifestRecord r;
    r.id = id;
    r.path = "features/" + r.id + ".feat";
    r.tokens = pair.query;
    r.annotation = pair.annotation;
    r.T = pair.features.length();
    write_features(out_dir / r.path, pair.features);
    target->records.push_back(std::move(r));
  }
  write_manifest(out_dir / "train.tsv", ds.train);
  write_manifest(out_dir / "val.tsv", ds.val);
  write_manifest(out_dir / "test.tsv", ds.test);
  return ds;
}

std::vector<Sample> load_samples(const DatasetManifest& m) {
  std::vector<Sample> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    Sample s;
    s.id = r.id;
    s.features = read_features(m.feature_path(r));
    s.query = r.tokens;
    s.annotation = r.annotation;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ecrl::data
