#include <doctest.h>

#include <cmath>

#include "driftlab/constructs.hpp"
#include "driftlab/error.hpp"
#include "driftlab/rng.hpp"
#include "pca_oracle.hpp"

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

DeltaMatrix two_columns(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < a.size(); ++i) x.push_back({a[i], b[i]});
  return testing::to_delta_matrix(x);
}

const std::vector<std::string> kTwo{"m0", "m1"};

}  // namespace

TEST_CASE("default map") {
  const auto map = ConstructMap::defaults();
  map.check();
  CHECK(map.group(Construct::Activity).metrics ==
        std::vector<std::string>{"num_web_events", "total_duration_s", "tool_drift"});
  CHECK(map.group(Construct::Breadth).metrics ==
        std::vector<std::string>{"num_domains", "num_searches", "domain_entropy", "unique_url_ratio", "domain_kl",
                                 "domain_jaccard"});
  CHECK(map.group(Construct::Depth).metrics ==
        std::vector<std::string>{"num_unique_urls", "num_summaries", "avg_latency_s", "query_similarity"});
  auto dup = map;
  dup.groups[0].metrics.push_back("num_domains");
  CHECK(code_of([&] { dup.check(); }) == ErrorCode::ConfigOutOfRange);
}

TEST_CASE("perfectly correlated and anti-correlated pairs") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  auto fit = fit_pca(two_columns(a, {2, 4, 6, 8, 10}), kTwo);
  CHECK(std::abs(fit.loadings[0] - M_SQRT1_2) <= 1e-6);
  CHECK(std::abs(fit.loadings[1] - M_SQRT1_2) <= 1e-6);
  fit = fit_pca(two_columns(a, {5, 4, 3, 2, 1}), kTwo);
  CHECK(std::abs(fit.loadings[0] - M_SQRT1_2) <= 1e-6);
  CHECK(std::abs(fit.loadings[1] + M_SQRT1_2) <= 1e-6);
}

TEST_CASE("loadings match a dense eigensolver on random 10x3 matrices") {
  Rng rng(101);
  for (int rep = 0; rep < 50; ++rep) {
    const auto x = testing::random_matrix(rng, 10, 3);
    const auto oracle = testing::oracle_pc1(x);
    if (oracle.gap < 1e-3) continue;
    const std::vector<std::string> cols{"m0", "m1", "m2"};
    const auto fit = fit_pca(testing::to_delta_matrix(x), cols);
    REQUIRE(fit.loadings.size() == 3);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.loadings[j] - oracle.loadings[j]) <= 1e-8);
    CHECK(std::abs(fit.explained_variance - oracle.eigenvalue) <= 1e-8);
  }
}

TEST_CASE("scores: centering, unit projection and matrix-product oracle") {
  Rng rng(202);
  const auto x = testing::random_matrix(rng, 20, 4);
  const std::vector<std::string> cols{"m0", "m1", "m2", "m3"};
  const auto m = testing::to_delta_matrix(x);
  const auto fit = fit_pca(m, cols);
  const auto s = score_rows(fit, m);
  double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double expect = 0;
    for (std::size_t j = 0; j < 4; ++j) expect += (x[i][j] - fit.means[j]) / fit.stds[j] * fit.loadings[j];
    CHECK(std::abs(s[i] - expect) <= 1e-9);
    total += s[i];
  }
  CHECK(std::abs(total / 20.0) <= 1e-9);

  DeltaMatrix probe;
  probe.columns = m.columns;
  probe.trial_ids = {"mean", "row", "moved"};
  std::vector<std::optional<double>> mean_row, row, moved;
  for (std::size_t j = 0; j < 4; ++j) {
    mean_row.push_back(fit.means[j]);
    row.push_back(x[3][j]);
    moved.push_back(x[3][j] + fit.loadings[j] * fit.stds[j]);
  }
  probe.rows = {mean_row, row, moved};
  const auto ps = score_rows(fit, probe);
  CHECK(std::abs(ps[0]) <= 1e-9);
  CHECK(std::abs(ps[2] - ps[1] - 1.0) <= 1e-6);

  DeltaMatrix missing;
  missing.columns = {"m0"};
  missing.rows = {{1.0}};
  missing.trial_ids = {"x"};
  CHECK(code_of([&] { score_rows(fit, missing); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("PC1 captures at least as much variance as random unit directions") {
  Rng rng(303);
  const auto x = testing::random_matrix(rng, 60, 5);
  const std::vector<std::string> cols{"m0", "m1", "m2", "m3", "m4"};
  const auto fit = fit_pca(testing::to_delta_matrix(x), cols);
  double norm = 0;
  for (double l : fit.loadings) norm += l * l;
  CHECK(std::abs(norm - 1.0) <= 1e-12);
  CHECK(fit.loadings[0] >= 0.0);
  // variance of standardized projections onto direction u
  const auto var_along = [&](const std::vector<double>& u) {
    std::vector<double> proj;
    for (const auto& row : x) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += (row[j] - fit.means[j]) / fit.stds[j] * u[j];
      proj.push_back(s);
    }
    double m = 0, v = 0;
    for (double p : proj) m += p;
    m /= proj.size();
    for (double p : proj) v += (p - m) * (p - m);
    return v / (proj.size() - 1);
  };
  const double top = var_along(fit.loadings);
  CHECK(std::abs(top - fit.explained_variance) <= 1e-9);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> u(5);
    double n2 = 0;
    for (auto& v : u) {
      v = rng.normal();
      n2 += v * v;
    }
    for (auto& v : u) v /= std::sqrt(n2);
    CHECK(var_along(u) <= top + 1e-9);
  }
}

TEST_CASE("scale invariance and bitwise determinism") {
  Rng rng(404);
  const auto x = testing::random_matrix(rng, 30, 4);
  const std::vector<std::string> cols{"m0", "m1", "m2", "m3"};
  const auto m = testing::to_delta_matrix(x);
  const auto a = fit_pca(m, cols);
  const auto b = fit_pca(m, cols);
  CHECK(a.loadings == b.loadings);
  CHECK(a.explained_variance == b.explained_variance);
  auto scaled = x;
  for (auto& row : scaled) row[2] *= 37.5;
  const auto ms = testing::to_delta_matrix(scaled);
  const auto c = fit_pca(ms, cols);
  const auto sa = score_rows(a, m), sc = score_rows(c, ms);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(a.loadings[j] - c.loadings[j]) <= 1e-10);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(std::abs(sa[i] - sc[i]) <= 1e-9);
}

TEST_CASE("dropped columns, imputation and errors") {
  std::vector<std::vector<double>> x{{1, 5, 2}, {2, 5, 1}, {3, 5, 7}, {4, 5, 3}};
  auto m = testing::to_delta_matrix(x);
  const std::vector<std::string> cols{"m0", "m1", "m2"};
  auto fit = fit_pca(m, cols);
  CHECK(fit.dropped == std::vector<std::string>{"m1"});
  CHECK(fit.loadings.size() == 2);

  m.rows[1][2] = std::nullopt;
  fit = fit_pca(m, cols);
  CHECK(fit.imputed == 1);

  const std::vector<std::string> flat{"m1"};
  CHECK(code_of([&] { fit_pca(m, flat); }) == ErrorCode::AllColumnsDropped);
  auto small = m;
  small.rows.resize(2);
  small.trial_ids.resize(2);
  CHECK(code_of([&] { fit_pca(small, cols); }) == ErrorCode::TooFewTrials);
  const std::vector<std::string> absent{"nope"};
  CHECK(code_of([&] { fit_pca(m, absent); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("fit_construct_pca over a stratum") {
  Rng rng(505);
  const auto map = ConstructMap::defaults();
  std::vector<std::string> names;
  for (const auto& g : map.groups)
    for (const auto& n : g.metrics) names.push_back(n);
  const auto x = testing::random_matrix(rng, 25, names.size());
  auto m = testing::to_delta_matrix(x);
  m.columns = names;
  const auto res = fit_construct_pca(m, map, "bb/prefill");
  REQUIRE(res.fits.size() == 3);
  for (const auto& f : res.fits) CHECK(f.fit.has_value());
  REQUIRE(res.scores.size() == 25);
  for (const auto& s : res.scores)
    for (const auto& v : s.dpc) CHECK(v.has_value());
  const auto j = loadings_json(res.fits);
  CHECK(j.find("bb/prefill") != std::string::npos);

  auto tiny = m;
  tiny.rows.resize(2);
  tiny.trial_ids.resize(2);
  const auto skipped = fit_construct_pca(tiny, map, "bb");
  for (const auto& f : skipped.fits) CHECK(!f.fit.has_value());
  for (const auto& s : skipped.scores) CHECK(!s.dpc[0].has_value());
}

TEST_CASE("top_eigenpair on a known matrix") {
  const std::vector<double> a{2, 1, 1, 2};
  const auto e = top_eigenpair(a, 2);
  CHECK(std::abs(e.value - 3.0) <= 1e-12);
  CHECK(std::abs(std::abs(e.vector[0]) - M_SQRT1_2) <= 1e-12);
}
