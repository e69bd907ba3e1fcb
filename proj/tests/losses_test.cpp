#include <doctest.h>

#include <cmath>

#include "ecrl/errors.hpp"
#include "ecrl/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ecrl;
using namespace ecrl::losses;
using namespace ecrl::tensor;
using augment::SubLabel;
using ecrl::testing::max_abs_diff;
using ecrl::testing::random_matrix;

namespace {

Matrix random_orthogonal(std::size_t d, std::mt19937_64& rng) {
  Matrix q = random_matrix(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double p = 0;
      for (std::size_t k = 0; k < d; ++k) p += q(k, i) * q(k, j);
      for (std::size_t k = 0; k < d; ++k) q(k, i) -= p * q(k, j);
    }
    double n = 0;
    for (std::size_t k = 0; k < d; ++k) n += q(k, i) * q(k, i);
    for (std::size_t k = 0; k < d; ++k) q(k, i) /= std::sqrt(n);
  }
  return q;
}

// Direct double sum over both directions using the oracle prior.
double sscl_oracle(const Matrix& aug, const Matrix& orig, const augment::TimestampMap& tm,
                   const data::SegmentAnnotation& ann, double sigma, double down) {
  const std::size_t Ta = aug.rows(), To = orig.rows();
  const auto label_of = [&](std::size_t t) {
    return t < ann.tau_s ? SubLabel::kLeft : (t <= ann.tau_e ? SubLabel::kSeg : SubLabel::kRight);
  };
  double l1 = 0, l2 = 0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < Ta; ++i) {
    if (tm.sub_label[i] == SubLabel::kPad) continue;
    std::vector<double> pos(To);
    std::vector<bool> same(To);
    for (std::size_t j = 0; j < To; ++j) pos[j] = double(j), same[j] = label_of(j) == tm.sub_label[i];
    l1 += oracle::frame_ce(aug, i, orig, oracle::prior(double(tm.map[i]), pos, same, sigma, down));
    ++n1;
  }
  for (std::size_t i = 0; i < To; ++i) {
    std::vector<double> pos(Ta);
    std::vector<bool> same(Ta);
    for (std::size_t j = 0; j < Ta; ++j) pos[j] = double(tm.map[j]), same[j] = tm.sub_label[j] == label_of(i);
    l2 += oracle::frame_ce(orig, i, aug, oracle::prior(double(i), pos, same, sigma, down));
  }
  return l1 / double(n1) + l2 / double(To);
}

}  // namespace

TEST_CASE("gaussian_prior_weights worked examples") {
  ConsistencyConfig cfg;
  const std::vector<SubLabel> same(3, SubLabel::kSeg);
  const auto w = gaussian_prior_weights(1, SubLabel::kSeg, same, cfg);
  const double g = std::exp(-0.02);
  CHECK(w[0] == doctest::Approx(g / (1 + 2 * g)).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(1 / (1 + 2 * g)).epsilon(1e-15));
  CHECK(w[0] == w[2]);
  // Frozen from the closed form above.
  CHECK(std::abs(w[0] - 0.33110375346) < 1e-10);
  CHECK(std::abs(w[1] - 0.33779249307) < 1e-10);
  // The commonly quoted rounding (0.33112, 0.33777) agrees to ~2e-5.
  CHECK(std::abs(w[0] - 0.33112) < 5e-5);
  CHECK(std::abs(w[1] - 0.33777) < 5e-5);

  const std::vector<SubLabel> split{SubLabel::kLeft, SubLabel::kSeg};
  const auto w2 = gaussian_prior_weights(0, SubLabel::kLeft, split, cfg);
  const double z = 1 + 0.5 * g;
  CHECK(w2[0] == doctest::Approx(1 / z).epsilon(1e-15));
  CHECK(w2[1] == doctest::Approx(0.5 * g / z).epsilon(1e-15));

  // PAD frames take the down-weight even next to the anchor.
  const std::vector<SubLabel> pads{SubLabel::kPad, SubLabel::kSeg, SubLabel::kSeg};
  const auto wp = gaussian_prior_weights(0, SubLabel::kSeg, pads, cfg);
  CHECK(wp[0] < wp[1]);
  CHECK_THROWS_AS(gaussian_prior_weights(3, SubLabel::kSeg, same, cfg), InputError);
}

TEST_CASE("gaussian_prior_weights property sweep") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 1 + rng() % 40;
    ConsistencyConfig cfg;
    cfg.sigma_prior = 0.5 + 10.0 * std::uniform_real_distribution<double>()(rng);
    std::vector<SubLabel> labels(T);
    for (auto& l : labels) l = static_cast<SubLabel>(rng() % 4);
    const std::size_t ip = rng() % T;
    const auto sub = static_cast<SubLabel>(rng() % 3);
    const auto w = gaussian_prior_weights(ip, sub, labels, cfg);
    std::vector<double> pos(T);
    std::vector<bool> same(T);
    for (std::size_t j = 0; j < T; ++j) pos[j] = double(j), same[j] = labels[j] == sub;
    const auto o = oracle::prior(double(ip), pos, same, cfg.sigma_prior, 0.5);
    double s = 0;
    for (std::size_t j = 0; j < T; ++j) {
      CHECK(w[j] >= 0.0);
      CHECK(std::abs(w[j] - o[j]) < 1e-12);
      s += w[j];
    }
    CHECK(std::abs(s - 1.0) < 1e-9);

    const std::size_t To = 2 * (T / 2) + 1;
    const std::vector<SubLabel> uni(To, SubLabel::kSeg);
    const auto ws = gaussian_prior_weights(To / 2, SubLabel::kSeg, uni, cfg);
    for (std::size_t j = 0; j < To; ++j) CHECK(std::abs(ws[j] - ws[To - 1 - j]) < 1e-15);
  }
}

TEST_CASE("one-hot prior puts all mass on the nearest timestamps") {
  ConsistencyConfig cfg;
  cfg.prior = PriorKind::kOneHot;
  const std::vector<SubLabel> labels(5, SubLabel::kSeg);
  const auto w = gaussian_prior_weights(3, SubLabel::kSeg, labels, cfg);
  CHECK(w == std::vector<double>{0, 0, 0, 1, 0});
  const std::vector<std::size_t> pos{0, 2, 2, 4};
  const std::vector<SubLabel> l4(4, SubLabel::kSeg);
  CHECK(prior_weights(2.0, SubLabel::kSeg, pos, l4, cfg) == std::vector<double>{0, 0.5, 0.5, 0});
}

TEST_CASE("sscl_frame_loss: entropy floor, Gibbs bound, oracle") {
  std::mt19937_64 rng(12);
  const Matrix other = random_matrix(4, 3, rng);
  const Matrix anchor = random_matrix(1, 3, rng);

  // w = p gives exactly H(w).
  std::vector<double> p(4);
  double z = 0;
  for (std::size_t j = 0; j < 4; ++j) z += std::exp(p[j] = oracle::cos_rows(anchor, 0, other, j));
  for (auto& x : p) x = std::exp(x) / z;
  CHECK(sscl_frame_loss(Tensor(anchor), Tensor(other), p).item() == doctest::Approx(oracle::entropy(p)).epsilon(1e-13));

  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 2 + rng() % 10, D = 2 + rng() % 5;
    const Matrix o = random_matrix(T, D, rng), a = random_matrix(1, D, rng);
    std::vector<double> w(T);
    double s = 0;
    for (auto& x : w) s += x = std::uniform_real_distribution<double>()(rng);
    for (auto& x : w) x /= s;
    const double l = sscl_frame_loss(Tensor(a), Tensor(o), w).item();
    CHECK(std::abs(l - oracle::frame_ce(a, 0, o, w)) < 1e-12);
    CHECK(l - oracle::entropy(w) >= -1e-9);
    CHECK(l <= std::log(double(T)) + 2.0);
  }
}

TEST_CASE("consistency_targets skips PAD anchors and normalises every row") {
  augment::TimestampMap tm;
  tm.map = {0, 0, 1, 2, 3, 5};
  tm.sub_label = {SubLabel::kPad, SubLabel::kPad, SubLabel::kSeg, SubLabel::kSeg, SubLabel::kRight, SubLabel::kRight};
  const data::SegmentAnnotation ann{0, 2};
  const auto t = consistency_targets(tm, ann, 6, ConsistencyConfig{});
  CHECK(t.n_aug_anchors == 4);
  CHECK(t.n_orig_anchors == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    double s1 = 0, s2 = 0;
    for (double x : t.aug_to_orig.row(i)) s1 += x;
    for (double x : t.orig_to_aug.row(i)) s2 += x;
    CHECK(std::abs(s1 - (i < 2 ? 0.0 : 1.0)) < 1e-12);
    CHECK(std::abs(s2 - 1.0) < 1e-12);
  }
}

TEST_CASE("sscl_total") {
  std::mt19937_64 rng(13);
  Rng arng(14);
  const std::size_t T = 10, D = 4;
  const Matrix orig = random_matrix(T, D, rng);
  const data::SegmentAnnotation ann{3, 6};
  data::FeatureSequence fs{orig};
  const auto aug = augment::apply_temporal(fs, ann, {1.6, 0.7, 1.3}, T);
  const Matrix augf = random_matrix(T, D, rng);
  ConsistencyConfig cfg;

  const double got = sscl_total(Tensor(augf), Tensor(orig), aug.tmap, ann, cfg).item();
  CHECK(std::abs(got - sscl_oracle(augf, orig, aug.tmap, ann, 5.0, 0.5)) < 1e-12);

  const Matrix rot = random_orthogonal(D, rng);
  const double rotated =
      sscl_total(Tensor(oracle::mat_mul(augf, rot)), Tensor(oracle::mat_mul(orig, rot)), aug.tmap, ann, cfg).item();
  CHECK(std::abs(rotated - got) < 1e-9);

  ConsistencyConfig off;
  off.aug_to_orig = off.orig_to_aug = false;
  CHECK(sscl_total(Tensor(augf), Tensor(orig), aug.tmap, ann, off).item() == 0.0);

  // Identity transform, identical clustered streams: close to the entropy
  // baseline. Frozen value from the direct-summation oracle.
  Matrix clustered(T, D);
  for (std::size_t t = 0; t < T; ++t) clustered(t, t < ann.tau_s ? 0 : (t <= ann.tau_e ? 1 : 2)) = 1.0;
  const auto ident = augment::apply_temporal(data::FeatureSequence{clustered}, ann, {}, T);
  const double base = sscl_total(Tensor(clustered), Tensor(clustered), ident.tmap, ann, cfg).item();
  CHECK(std::abs(base - sscl_oracle(clustered, clustered, ident.tmap, ann, 5.0, 0.5)) < 1e-12);
  CHECK(std::abs(base - 4.3249366907902189) < 1e-12);

  // Gradient through both streams.
  Tensor pa = Tensor::parameter(augf), po = Tensor::parameter(orig);
  std::vector<NamedTensor> params{{"aug", pa}, {"orig", po}};
  const auto r = grad_check([&] { return sscl_total(pa, po, aug.tmap, ann, cfg); }, params);
  CHECK_MESSAGE(r.passed(), r.failures().front());
}

TEST_CASE("grounding_labels and grounding_loss") {
  const auto [ys, ye] = grounding_labels({3, 4}, 6);
  CHECK(ys == std::vector<double>{0, 0, 0, 1, 0, 0});
  CHECK(ye == std::vector<double>{0, 0, 0, 0, 1, 0});
  const auto [ss, se] = grounding_labels({0, 5}, 6, true);
  CHECK(ss[0] == doctest::Approx(0.8 / 0.9));
  CHECK(ss[1] == doctest::Approx(0.1 / 0.9));
  CHECK(se[5] == doctest::Approx(0.8 / 0.9));
  const auto [sm, em] = grounding_labels({2, 2}, 6, true);
  CHECK(sm == std::vector<double>{0, 0.1, 0.8, 0.1, 0, 0});
  (void)em;

  model::GroundingScores flat{Tensor(Matrix(7, 1, 0.4)), Tensor(Matrix(7, 1, -2.0))};
  CHECK(grounding_loss(flat, {1, 3}).item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));

  Matrix cs(7, 1, -50.0), ce(7, 1, -50.0);
  cs(1, 0) = 50.0;
  ce(3, 0) = 50.0;
  CHECK(grounding_loss({Tensor(cs), Tensor(ce)}, {1, 3}).item() < 1e-30);

  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng() % 8;
    const Matrix a = random_matrix(T, 1, rng, 2.0), b = random_matrix(T, 1, rng, 2.0);
    const std::size_t s = rng() % T, e = s + rng() % (T - s);
    const double l = grounding_loss({Tensor(a), Tensor(b)}, {s, e}).item();
    CHECK(std::abs(l - oracle::grounding_ce(a.data(), b.data(), s, e)) < 1e-12);
    CHECK(l >= 0.0);
  }

  // Binary variant: direct per-frame sum.
  const Matrix a = random_matrix(5, 1, rng), b = random_matrix(5, 1, rng);
  double bce = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    const double ps = oracle::sigm(a(t, 0)), pe = oracle::sigm(b(t, 0));
    bce -= t == 1 ? std::log(ps) : std::log(1 - ps);
    bce -= t == 3 ? std::log(pe) : std::log(1 - pe);
  }
  GroundingLossConfig bin;
  bin.binary = true;
  CHECK(grounding_loss({Tensor(a), Tensor(b)}, {1, 3}, bin).item() == doctest::Approx(bce / 10.0).epsilon(1e-12));

  Tensor pa = Tensor::parameter(a), pb = Tensor::parameter(b);
  std::vector<NamedTensor> params{{"start", pa}, {"end", pb}};
  for (const auto& c : {GroundingLossConfig{}, GroundingLossConfig{true, false}, bin}) {
    const auto r = grad_check([&] { return grounding_loss({pa, pb}, {1, 3}, c); }, params);
    CHECK_MESSAGE(r.passed(), r.failures().front());
  }
}

TEST_CASE("overall_loss") {
  const auto b = overall_loss(1.0, 2.0, 0.5, 5.0);
  CHECK(b.l_overall == 5.5);
  CHECK(overall_loss(1.0, 2.0, 0.5, 0.0).l_overall == 3.0);
  CHECK_THROWS_AS(overall_loss(std::nan(""), 1.0, 1.0, 5.0), TrainingAbort);
  CHECK_THROWS_AS(overall_loss(1.0, 1.0, INFINITY, 5.0), TrainingAbort);
}
