#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "avuseg/metrics.hpp"
#include "test_util.hpp"

using namespace avuseg;

namespace {

InaccuracyDecomposition random_decomp(const Dims3& d, double density,
                                      Rng& rng) {
  std::bernoulli_distribution coin(density);
  InaccuracyDecomposition dec;
  dec.failures = BinaryMask{d, std::vector<std::uint8_t>(d.voxels())};
  for (auto& v : dec.failures.data) v = coin(rng);
  return dec;
}

ScalarVolume random_unc(const Dims3& d, Rng& rng, double hi = 1.0) {
  std::uniform_real_distribution<double> u(0.0, hi);
  std::vector<double> data(d.voxels());
  for (auto& v : data) v = u(rng);
  return ScalarVolume(d, std::move(data));
}

// Brute-force per-voxel counting oracle.
AvuCounts oracle_counts(const ScalarVolume& unc,
                        const InaccuracyDecomposition& dec, double t) {
  AvuCounts c;
  for (std::size_t i = 0; i < unc.data().size(); ++i) {
    const bool acc = dec.failures.data[i] == 0;
    const bool cert = unc.data()[i] <= t;
    if (acc && cert) ++c.n_ac;
    if (acc && !cert) ++c.n_au;
    if (!acc && cert) ++c.n_ic;
    if (!acc && !cert) ++c.n_iu;
  }
  return c;
}

// Rank-based Mann-Whitney AUC: P(U_fail > U_acc) + 0.5 P(equal).
double mann_whitney_auc(const ScalarVolume& unc,
                        const InaccuracyDecomposition& dec) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  const auto& u = unc.data();
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!dec.failures.data[i]) continue;
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (dec.failures.data[j]) continue;
      ++pairs;
      if (u[i] > u[j]) wins += 1.0;
      else if (u[i] == u[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("entropy oracles") {
  for (const std::int64_t C : {2, 3, 6}) {
    std::vector<double> uniform(C, 1.0 / static_cast<double>(C));
    const ProbVolume pu({1, 1, 1}, C, uniform);
    CHECK(entropy_map(pu).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> onehot(C, 0.0);
    onehot[0] = 1.0;
    const ProbVolume po({1, 1, 1}, C, onehot);
    CHECK(entropy_map(po).at(0, 0, 0) <= 1e-6);
  }
  // Independent 64-bit computation for p = [0.9, 0.1].
  const double expect =
      -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)) / std::log(2.0);
  const ProbVolume p({1, 1, 1}, 2, {0.9, 0.1});
  CHECK(entropy_map(p).at(0, 0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dice oracles") {
  const Dims3 d{4, 1, 1};
  const LabelVolume a(d, 2, {0, 1, 1, 0});
  const LabelVolume b(d, 2, {0, 1, 0, 0});
  CHECK(dice(a, b, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(dice(a, a, 1) == 1.0);
  const LabelVolume empty(d, 2, {0, 0, 0, 0});
  CHECK(dice(empty, empty, 1) == 1.0);  // both empty
  CHECK(mean_foreground_dice(a, b) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("ece oracle on a crafted two-bin case") {
  // Four voxels: confidences .95,.95 (one failure), .55,.55 (no failure).
  const Dims3 d{4, 1, 1};
  const ProbVolume p(d, 2, {0.95, 0.05, 0.95, 0.05, 0.55, 0.45, 0.55, 0.45});
  InaccuracyDecomposition dec;
  dec.failures = BinaryMask{d, {1, 0, 0, 0}};
  // bin(.95): |acc .5 - conf .95| = .45, weight .5; bin(.55): |1 - .55| = .45.
  CHECK(ece(p, dec, 10) == doctest::Approx(0.45).epsilon(1e-12));

  InaccuracyDecomposition none;
  none.failures = BinaryMask{d, {0, 0, 0, 0}};
  const ProbVolume certain(d, 2, {1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0});
  CHECK(ece(certain, none, 10) == doctest::Approx(0.0));
}

TEST_CASE("avu counts and curves match the brute-force oracle") {
  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    const Dims3 d{16, 16, 4};
    const std::int64_t C = trial % 2 == 0 ? 2 : 6;
    const InaccuracyDecomposition dec = random_decomp(d, 0.15, rng);
    const double u_max = C == 6 ? 0.4 : 1.0;
    // Uncertainties live inside [0, u_max] (as normalized entropies do for
    // the matching class count), so the threshold grid covers their range
    // and the sweep AUC converges to the rank statistic.
    const ScalarVolume unc = random_unc(d, rng, u_max);

    std::uniform_real_distribution<double> td(0.0, u_max);
    for (int k = 0; k < 5; ++k) {
      const double t = td(rng);
      const AvuCounts got = avu_counts(unc, dec, t);
      const AvuCounts want = oracle_counts(unc, dec, t);
      CHECK(got.n_ac == want.n_ac);
      CHECK(got.n_au == want.n_au);
      CHECK(got.n_ic == want.n_ic);
      CHECK(got.n_iu == want.n_iu);
    }

    if (dec.failures.count() == 0 ||
        dec.failures.count() == d.voxels())
      continue;
    const std::int64_t steps = 101;
    const CurveSeries roc = unc_roc_curve(unc, dec, u_max, steps);
    // Threshold-sweep ROC AUC approaches the rank-based Mann-Whitney
    // statistic as the grid refines.
    CHECK(std::abs(roc.auc - mann_whitney_auc(unc, dec)) <
          1.0 / static_cast<double>(steps));

    const CurveSeries avu = avu_curve(unc, dec, u_max, steps);
    CHECK(avu.auc >= 0.0);
    CHECK(avu.auc <= 1.0);
    for (double y : avu.ys) {
      CHECK(y >= 0.0);
      CHECK(y <= 1.0);
    }

    const CurveSeries prc = unc_prc_curve(unc, dec, u_max, steps);
    for (std::size_t i = 0; i < prc.xs.size(); ++i) {
      CHECK(prc.xs[i] >= 0.0);
      CHECK(prc.ys[i] <= 1.0);
    }
  }
}

TEST_CASE("roc/prc degenerate inputs throw") {
  const Dims3 d{4, 4, 1};
  Rng rng(53);
  const ScalarVolume unc = random_unc(d, rng);
  InaccuracyDecomposition none;
  none.failures = BinaryMask{d, std::vector<std::uint8_t>(d.voxels(), 0)};
  CHECK_THROWS_AS(unc_roc_curve(unc, none, 1.0, 11), DomainError);
  CHECK_THROWS_AS(unc_prc_curve(unc, none, 1.0, 11), DomainError);
  InaccuracyDecomposition all;
  all.failures = BinaryMask{d, std::vector<std::uint8_t>(d.voxels(), 1)};
  CHECK_THROWS_AS(unc_roc_curve(unc, all, 1.0, 11), DomainError);
}

TEST_CASE("wilcoxon signed-rank oracles") {
  // Constant shift, n = 10: W = 0, exact two-sided p = 2/2^10.
  std::vector<double> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[i] = static_cast<double>(i);
    b[i] = a[i] + 1.0 + 0.01 * i;  // distinct |d| so ranks are unique
  }
  CHECK(wilcoxon_signed_rank(a, b) == doctest::Approx(0.001953125).epsilon(1e-12));

  // Published small-n case: n = 8, W = 3 (negative signs on ranks 1 and 2)
  // -> exact two-sided p = 0.0390625.
  const std::vector<double> base{0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<double> diff{-1.0, -2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
  CHECK(wilcoxon_signed_rank(base, diff) ==
        doctest::Approx(0.0390625).epsilon(1e-12));

  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), DomainError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, std::vector<double>(9)), ShapeError);

  // Normal-approximation branch: symmetric differences give p near 1.
  std::vector<double> c(20), e(20);
  for (int i = 0; i < 20; ++i) {
    c[i] = 0.0;
    e[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + i);
  }
  const double p = wilcoxon_signed_rank(c, e);
  CHECK(p > 0.5);
  CHECK(p <= 1.0);
}

TEST_CASE("hyperparameter selection") {
  // Appendix-style validation rows (natural scale): the alpha=100 row wins
  // at least 4 of 5 metrics among survivors.
  const std::vector<CandidateMetrics> rows{
      {"10", 0.831, 0.076, 0.345, 0.782, 0.261},
      {"100", 0.832, 0.070, 0.355, 0.796, 0.280},
      {"1000", 0.843, 0.075, 0.359, 0.764, 0.231},
  };
  CHECK(select_hyperparameter(rows) == 1);

  // Dominated candidate is never selected.
  const std::vector<CandidateMetrics> dom{
      {"a", 0.80, 0.05, 0.42, 0.70, 0.32},
      {"b", 0.70, 0.09, 0.35, 0.60, 0.20},  // worst on all five
      {"c", 0.79, 0.06, 0.41, 0.69, 0.31},
  };
  CHECK(select_hyperparameter(dom) != 1);

  // No 4-of-5 winner: middlemost survivor in sweep order.
  const std::vector<CandidateMetrics> split{
      {"a", 0.80, 0.05, 0.40, 0.60, 0.20},
      {"b", 0.79, 0.06, 0.39, 0.70, 0.30},
      {"c", 0.78, 0.07, 0.41, 0.65, 0.25},
  };
  CHECK(select_hyperparameter(split) == 1);

  // A drop > 0.10 behind the best on dice eliminates a candidate.
  const std::vector<CandidateMetrics> drop{
      {"a", 0.90, 0.05, 0.40, 0.60, 0.20},
      {"b", 0.75, 0.01, 0.50, 0.90, 0.90},
  };
  CHECK(select_hyperparameter(drop) == 0);

  CHECK_THROWS_AS(select_hyperparameter({}), DomainError);
  CHECK(select_hyperparameter({{"only", 1, 0, 1, 1, 1}}) == 0);
}
