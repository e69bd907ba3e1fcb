#include "ecrl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ecrl/errors.hpp"

namespace ecrl {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
  model.validate();
  consistency.validate();
  augment::ratio_bounds(augment.alpha, augment.range);
  if (augment.spatial_noise < 0.0) throw ConfigError("spatial_noise", "must be >= 0");
  if (!(augment.spatial_drop >= 0.0 && augment.spatial_drop < 1.0)) {
    throw ConfigError("spatial_drop", "must lie in [0, 1)");
  }
  if (augment.pad_frames < 1) throw ConfigError("pad_frames", "must be >= 1");
  if (augment.max_retries < 0) throw ConfigError("max_retries", "must be >= 0");
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(key, "cannot parse '" + s + "' as a number");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + s + "'");
}

template <typename Get>
Field real(std::string key, Get member) {
  return {key, [member](const RunConfig& c) { return fmt(static_cast<double>(member(const_cast<RunConfig&>(c)))); },
          [member, key](RunConfig& c, const std::string& s) { member(c) = parse_number<double>(key, s); }};
}

template <typename Get>
Field count(std::string key, Get member) {
  return {key,
          [member](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(member(const_cast<RunConfig&>(c)))); },
          [member, key](RunConfig& c, const std::string& s) {
            using V = std::remove_reference_t<decltype(member(c))>;
            member(c) = static_cast<V>(parse_number<std::uint64_t>(key, s));
          }};
}

template <typename Get>
Field flag(std::string key, Get member) {
  return {key, [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& s) { member(c) = parse_bool(key, s); }};
}

template <typename E, typename Get>
Field choice(std::string key, Get member, std::vector<std::pair<std::string, E>> names) {
  return {key,
          [member, names](const RunConfig& c) {
            for (const auto& [n, v] : names)
              if (v == member(const_cast<RunConfig&>(c))) return n;
            return std::string("?");
          },
          [member, names, key](RunConfig& c, const std::string& s) {
            for (const auto& [n, v] : names) {
              if (n == s) {
                member(c) = v;
                return;
              }
            }
            std::string allowed;
            for (const auto& [n, v] : names) allowed += (allowed.empty() ? "" : ", ") + n;
            throw ConfigError(key, "expected one of {" + allowed + "}, got '" + s + "'");
          }};
}

#define M(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      // data
      count("T", M(data.T)),
      count("D", M(data.D)),
      count("vocab", M(data.vocab)),
      count("prototypes", M(data.prototypes)),
      count("backgrounds", M(data.backgrounds)),
      real("seg_min", M(data.seg_min)),
      real("seg_max", M(data.seg_max)),
      real("noise", M(data.noise)),
      real("signal", M(data.signal)),
      count("query_min", M(data.query_min)),
      count("query_max", M(data.query_max)),
      count("data_seed", M(data.seed)),
      count("n_samples", M(n_samples)),
      real("split_train", M(split.train)),
      real("split_val", M(split.val)),
      real("split_test", M(split.test)),
      flag("test_shift", M(test_shift.enabled)),
      real("test_shift_lo", M(test_shift.lo)),
      real("test_shift_hi", M(test_shift.hi)),
      // training
      count("epochs", M(train.epochs)),
      count("batch", M(train.batch)),
      real("lr", M(train.lr)),
      real("lambda", M(train.lambda)),
      count("seed", M(train.seed)),
      choice<AugmentMode>("augment_mode", M(train.augment_mode),
                          {{"fresh", AugmentMode::kFresh}, {"fixed", AugmentMode::kFixed}}),
      choice<ModelKind>("model_kind", M(train.model_kind), {{"ecrl", ModelKind::kEcrl}, {"oracle", ModelKind::kOracle}}),
      // model
      count("model_dim", M(train.model.dim)),
      count("H", M(train.model.hidden)),
      flag("self_refine", M(train.model.use_self_refine)),
      real("refine_sigma", M(train.model.refine.sigma)),
      count("refine_iterations", M(train.model.refine.iterations)),
      flag("refine_normalize", M(train.model.refine.row_normalize)),
      // losses
      real("sigma_prior", M(train.consistency.sigma_prior)),
      real("downweight", M(train.consistency.downweight)),
      flag("cons_aug_to_orig", M(train.consistency.aug_to_orig)),
      flag("cons_orig_to_aug", M(train.consistency.orig_to_aug)),
      choice<losses::PriorKind>("prior", M(train.consistency.prior),
                                {{"gaussian", losses::PriorKind::kGaussian}, {"onehot", losses::PriorKind::kOneHot}}),
      flag("label_smoothing", M(train.grounding.smooth_labels)),
      flag("binary_ce", M(train.grounding.binary)),
      // augmentation
      real("alpha", M(train.augment.alpha)),
      choice<augment::RatioRange>("ratio_range", M(train.augment.range),
                                  {{"symmetric", augment::RatioRange::kSymmetric},
                                   {"literal", augment::RatioRange::kLiteral}}),
      real("spatial_noise", M(train.augment.spatial_noise)),
      real("spatial_drop", M(train.augment.spatial_drop)),
      count("pad_frames", M(train.augment.pad_frames)),
      count("max_retries", M(train.augment.max_retries)),
  };
  return table;
}

#undef M

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::sync() {
  train.model.input_dim = data.D;
  train.model.vocab = data.vocab;
}

void RunConfig::validate() const {
  data.validate();
  if (n_samples < 1) throw ConfigError("n_samples", "must be >= 1");
  split_counts(n_samples, split);
  if (test_shift.enabled && !(test_shift.lo > 0.0 && test_shift.lo <= test_shift.hi)) {
    throw ConfigError("test_shift_lo", "must satisfy 0 < lo <= hi");
  }
  if (train.model.input_dim != data.D || train.model.vocab != data.vocab) {
    throw ConfigError("D", "model input width / vocabulary out of sync with the data settings");
  }
  train.validate();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, trim(value));
      sync();
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  const std::string t = to_text();
  return fnv1a64(t.data(), t.size());
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  cfg.sync();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(lineno) + ": expected key=value");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace ecrl
