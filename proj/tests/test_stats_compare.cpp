#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/stats_compare.hpp"

using namespace driftlab;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::UsageError;
}

// Sort-based type-7 quantile, written out separately from the library.
double oracle_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Enumerates every split by bitmask.
double brute_permutation_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const auto n = pool.size();
  const double obs = std::abs(mean(a) - mean(b));
  std::size_t hits = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? x : y).push_back(pool[i]);
    ++total;
    if (std::abs(mean(x) - mean(y)) >= obs - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("identical groups") {
  const std::vector<double> a{1, 2, 3};
  const auto r = compare(a, a);
  CHECK(r.delta_mean == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK(r.exhaustive);
}

TEST_CASE("exhaustive split example") {
  const std::vector<double> a{10, 11}, b{0, 1};
  const auto r = compare(a, b);
  CHECK(r.exhaustive);
  CHECK(r.permutations == 6);
  CHECK(r.p_value == 2.0 / 6.0);
  CHECK(r.delta_mean == 10.0);
}

TEST_CASE("persona IQR matches a sort-based quantile oracle") {
  const std::vector<double> deltas{-0.02, 0.00, 0.01, 0.03, 0.05, 0.06};
  const std::vector<std::string> names{"p1", "p2", "p3", "p4", "p5", "p6"};
  std::vector<double> a, b;
  std::vector<std::string> pa, pb;
  for (std::size_t i = 0; i < 6; ++i) {
    a.push_back(1.0 + deltas[i]);
    a.push_back(1.0 + deltas[i]);
    pa.push_back(names[i]);
    pa.push_back(names[i]);
    b.push_back(1.0);
    pb.push_back(names[i]);
  }
  const auto r = compare(a, b, pa, pb);
  REQUIRE(r.iqr_persona);
  CHECK(r.n_personas == 6);
  CHECK(std::abs(*r.iqr_persona - (oracle_quantile(deltas, 0.75) - oracle_quantile(deltas, 0.25))) <= 1e-12);
  CHECK(quantile_type7(deltas, 0.5) == doctest::Approx(oracle_quantile(deltas, 0.5)));
}

TEST_CASE("errors and degenerate input") {
  const std::vector<double> one{1}, two{1, 2};
  CHECK(code_of([&] { compare(one, two); }) == ErrorCode::TooFewTrials);
  const std::vector<double> bad{1, NAN};
  CHECK(code_of([&] { compare(bad, two); }) == ErrorCode::NonFinite);
  const std::vector<std::string> labels{"x"};
  CHECK(code_of([&] { compare(two, two, labels, labels); }) == ErrorCode::DimensionMismatch);
  const std::vector<double> flat(5, 3.0);
  const auto r = compare(flat, flat);
  CHECK(r.degenerate);
  CHECK(r.p_value == 1.0);
  CHECK(percent_change(5, 5) == 0.0);
  CHECK(code_of([] { percent_change(1, 0); }) == ErrorCode::ZeroReference);
}

TEST_CASE("percent change against published means") {
  CHECK(std::abs(percent_change(3.180, 4.348) - (-26.9)) <= 0.05);
  CHECK(std::abs(percent_change(4.380, 5.268) - (-16.9)) <= 0.05);
}

TEST_CASE("exhaustive p agrees with a bitmask enumerator") {
  Rng rng(61);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t na = 2 + rng.index(5), nb = 2 + rng.index(5);
    std::vector<double> a(na), b(nb);
    for (auto& x : a) x = static_cast<double>(rng.index(6));
    for (auto& x : b) x = static_cast<double>(rng.index(6)) + 0.5 * static_cast<double>(rng.index(2));
    CHECK(exhaustive_permutation_p(a, b) == doctest::Approx(brute_permutation_p(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("permutation p symmetries") {
  Rng rng(71);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> a(30), b(25);
    for (auto& x : a) x = rng.normal() + 0.3;
    for (auto& x : b) x = rng.normal();
    CompareOptions o;
    o.resamples = 2000;
    o.seed = static_cast<std::uint64_t>(rep);
    const auto r = compare(a, b, o);
    // shifting both groups by a dyadic constant keeps every sum exact
    auto as = a, bs = b;
    for (auto& x : as) x += 8.0;
    for (auto& x : bs) x += 8.0;
    CHECK(std::abs(compare(as, bs, o).p_value - r.p_value) <= 1.5 / 2001.0);
    CHECK(r.p_value >= 1.0 / 2001.0);
    const std::vector<double> sa(a.begin(), a.begin() + 6), sb(b.begin(), b.begin() + 5);
    CHECK(compare(sa, sb).p_value == compare(sb, sa).p_value);
  }
}

TEST_CASE("bitwise determinism and worker independence") {
  Rng rng(81);
  std::vector<double> a(80), b(70);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal() + 0.2;
  CompareOptions o;
  o.resamples = 3000;
  o.seed = 99;
  const auto r1 = compare(a, b, o);
  o.workers = 4;
  const auto r2 = compare(a, b, o);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.ci_low == r2.ci_low);
  CHECK(r1.ci_high == r2.ci_high);
  CHECK(r1.ci_low <= r1.delta_mean);
  CHECK(r1.delta_mean <= r1.ci_high);
  REQUIRE(r1.welch);
  CHECK(r1.welch->p_value > 0.0);
}

TEST_CASE("Monte Carlo p within three binomial standard errors of exhaustive") {
  Rng rng(91);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = rng.normal() + 0.8;
    for (auto& x : b) x = rng.normal();
    CompareOptions o;
    o.resamples = 20000;
    o.seed = static_cast<std::uint64_t>(rep);
    o.exhaustive_limit = 0;
    const auto mc = compare(a, b, o);
    const double exact = exhaustive_permutation_p(a, b);
    const double se = std::sqrt(std::max(exact * (1 - exact), 1e-12) / 20000.0);
    CHECK(!mc.exhaustive);
    CHECK(std::abs(mc.p_value - exact) <= 3 * se + 1.0 / 20001.0);
  }
}

TEST_CASE("welch t against hand values") {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8, 10};
  const auto w = welch_t_test(a, b);
  REQUIRE(w);
  const double va = 5.0 / 3.0 / 4.0, vb = 10.0 / 5.0;
  CHECK(w->t == doctest::Approx((2.5 - 6.0) / std::sqrt(va + vb)));
  CHECK(w->df == doctest::Approx((va + vb) * (va + vb) / (va * va / 3 + vb * vb / 4)));
  CHECK(w->p_value > 0.0);
  CHECK(w->p_value < 0.1);
}

TEST_CASE("consistency examples and invariants") {
  CHECK(cell_consistency({"c", {1, 2, 3}}).consistency == 1.0);
  CHECK(std::abs(cell_consistency({"c", {1, 2, -1}}).consistency - 2.0 / 3.0) <= 1e-9);
  CHECK(cell_consistency({"c", {1, -1}}).consistency == 0.5);
  const auto z = cell_consistency({"c", {0, 0}});
  CHECK(z.all_zero);
  CHECK(z.consistency == 1.0);
  const auto withzero = cell_consistency({"c", {1, 0, -2, 3}});
  CHECK(withzero.n_zero == 1);
  CHECK(withzero.consistency == doctest::Approx(2.0 / 3.0));

  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    ConsistencyCell c{"k", {}};
    for (std::uint64_t i = 0, n = 1 + rng.index(10); i < n; ++i) c.values.push_back(static_cast<double>(rng.index(5)) - 2.0);
    const auto r = cell_consistency(c);
    CHECK(r.consistency >= 0.5);
    CHECK(r.consistency <= 1.0);
    auto neg = c;
    for (auto& v : neg.values) v = -v;
    CHECK(cell_consistency(neg).consistency == r.consistency);
  }

  const std::vector<ConsistencyCell> cells{{"a", {1, 1, 1}}, {"b", {1, -1}}, {"c", {4}}};
  const auto s = consistency(cells);
  CHECK(s.cells.size() == 2);
  CHECK(s.skipped == std::vector<std::string>{"c"});
  CHECK(*s.mean == doctest::Approx(0.75));
  CHECK(*s.stddev == doctest::Approx(std::sqrt(0.125)));
}
