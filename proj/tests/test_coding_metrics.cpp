#include <doctest.h>

#include <cmath>

#include "driftlab/coding_metrics.hpp"
#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"
#include "driftlab/rng.hpp"
#include "support.hpp"

using namespace driftlab;

namespace {

std::vector<double> brute_ranks(const std::vector<double>& d) {
  std::vector<double> q(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t c = 0;
    for (double x : d) c += x <= d[i] ? 1 : 0;
    q[i] = static_cast<double>(c) / static_cast<double>(d.size());
  }
  return q;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::UsageError;
}

}  // namespace

TEST_CASE("raw extraction examples") {
  auto r = extract_coding_raw(testing::coding_trial("a", Condition::C1, {10, 10}));
  CHECK(r.re == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.ms == 10.0);
  CHECK(r.nr == 2);
  CHECK(r.cd == doctest::Approx(4.0));
  CHECK(r.td == doctest::Approx(7.0));

  r = extract_coding_raw(testing::coding_trial("b", Condition::C1, {7}));
  CHECK(r.re == 0.0);
  CHECK(r.nr == 1);
  CHECK(r.ms == 7.0);

  // Hand Shannon over (0.2, 0.3, 0.5).
  r = extract_coding_raw(testing::coding_trial("c", Condition::C1, {4, 6, 10}));
  const double h = -(0.2 * std::log2(0.2) + 0.3 * std::log2(0.3) + 0.5 * std::log2(0.5));
  CHECK(std::abs(r.re - h) < 1e-12);
  CHECK(std::abs(r.re - 1.48548) < 1e-3);
  CHECK(std::abs(r.ms - 6.667) < 1e-3);
}

TEST_CASE("raw invariants on random trials") {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::uint64_t> sizes;
    for (std::uint64_t k = 0, n = 1 + rng.index(6); k < n; ++k) sizes.push_back(1 + rng.index(40));
    const auto r = extract_coding_raw(testing::coding_trial("r", Condition::C2, sizes));
    CHECK(r.td >= r.cd);
    CHECK(r.cd >= 0.0);
    CHECK(r.re >= 0.0);
    if (r.nr <= 1) CHECK(r.re == 0.0);
    if (r.nr >= 1) CHECK(r.ms > 0.0);
  }
}

TEST_CASE("CD spans close at each execution") {
  using namespace driftlab::event;
  TrialRecord t{testing::header("cd", Condition::C0P, TaskType::Coding), {}};
  t.events = {{0, Injection{InjectionKind::Neutral, "p"}}, {0, TaskStart{}},  {1, CodeRevision{3}},
              {4, CodeExec{false}},                        {10, CodeExec{true}}, {12, CodeRevision{5}},
              {13, CodeExec{true}},                        {20, TaskEnd{}}};
  const auto r = extract_coding_raw(t);
  CHECK(r.cd == doctest::Approx(4.0));
  CHECK(r.td == doctest::Approx(20.0));
}

TEST_CASE("extraction errors") {
  auto t = testing::coding_trial("e", Condition::C1, {});
  CHECK(code_of([&] { extract_coding_raw(t); }) == ErrorCode::NoCodeActivity);
  auto u = testing::coding_trial("f", Condition::C1, {3});
  std::erase_if(u.events, [](const TraceEvent& e) { return e.kind() == EventKind::TaskEnd; });
  CHECK(code_of([&] { extract_coding_raw(u); }) == ErrorCode::MissingTaskBoundary);
  auto w = testing::web_trial("w", Condition::C1, {});
  CHECK(code_of([&] { extract_coding_raw(w); }) == ErrorCode::InvalidTrial);
}

TEST_CASE("persona_delta") {
  PersonaBaseline b{"GPT", "cd", 7.0, 2};
  CHECK(persona_delta(10.0, b) == 3.0);
  CHECK(persona_delta(7.0, b) == 0.0);
  Rng rng(8);
  BaselineTable table;
  table.add("GPT", "cd", 2.0);
  table.add("GPT", "cd", 4.0);
  const auto mu = table.at("GPT", "cd");
  CHECK(mu.mu == 3.0);
  CHECK(mu.n_baseline == 2);
  for (int i = 0; i < 100; ++i) {
    const double v = 100 * rng.normal();
    CHECK(persona_delta(v, mu) == v - 3.0);
  }
  CHECK(code_of([&] { table.at("Qwen", "cd"); }) == ErrorCode::MissingBaseline);
}

TEST_CASE("percentile rank examples") {
  CHECK(percentile_ranks(std::vector<double>{5}) == std::vector<double>{1.0});
  CHECK(percentile_ranks(std::vector<double>{1, 2, 3, 4}) == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(percentile_ranks(std::vector<double>{2, 2}) == std::vector<double>{1.0, 1.0});
  CHECK(code_of([] { percentile_ranks(std::vector<double>{}); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { percentile_ranks(std::vector<double>{1, NAN}); }) == ErrorCode::NonFinite);
}

TEST_CASE("percentile ranks match brute force, bounds and shift invariance") {
  Rng rng(12);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 1 + rng.index(200);
    const bool ties = rep % 2 == 0;
    std::vector<double> d(n);
    for (auto& x : d) x = ties ? static_cast<double>(rng.index(5)) : rng.normal();
    const auto q = percentile_ranks(d);
    CHECK(q == brute_ranks(d));
    const double mn = *std::min_element(d.begin(), d.end());
    const auto k = std::count(d.begin(), d.end(), mn);
    CHECK(*std::min_element(q.begin(), q.end()) == static_cast<double>(k) / static_cast<double>(n));
    CHECK(*std::max_element(q.begin(), q.end()) == 1.0);
    auto shifted = d;
    for (auto& x : shifted) x += 17.0;
    CHECK(percentile_ranks(shifted) == q);

    // monotonicity: raising one delta does not lower its rank nor reorder the rest
    auto raised = d;
    const std::size_t j = rng.index(n);
    raised[j] += std::abs(rng.normal()) + 0.5;
    const auto q2 = percentile_ranks(raised);
    CHECK(q2[j] >= q[j]);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n && b < 20; ++b) {
        if (a == j || b == j) continue;
        if (q[a] < q[b]) CHECK(q2[a] <= q2[b]);
      }
  }
}

TEST_CASE("composite substitution identities") {
  auto s = composite_scores({1.0, 1.0, 1.0, 1.0, 1.0});
  CHECK(s.trs == 0.0);
  CHECK(s.evs == 0.5);
  s = composite_scores({0.5, 0.5, 0.5, 0.8, 0.2});
  CHECK(s.trs == 0.5);
  CHECK(s.evs == 0.8);
  for (double q : {0.1, 0.37, 0.5, 0.9}) CHECK(composite_scores({0.3, 0.3, 0.3, q, q}).evs == 0.5);
  CHECK(code_of([] { composite_scores({0.1, std::nullopt, 0.1, 0.1, 0.1}); }) == ErrorCode::MissingRank);
}

TEST_CASE("composite monotonicity") {
  const CodingRanks base{0.4, 0.4, 0.4, 0.4, 0.4};
  const auto s0 = composite_scores(base);
  for (int m = 0; m < 3; ++m) {
    auto r = base;
    (m == 0 ? r.cd : m == 1 ? r.td : r.nr) = 0.6;
    CHECK(composite_scores(r).trs < s0.trs);
  }
  auto r = base;
  r.re = 0.6;
  CHECK(composite_scores(r).evs > s0.evs);
  r = base;
  r.ms = 0.6;
  CHECK(composite_scores(r).evs < s0.evs);
}

TEST_CASE("stratum scoring excludes baseline trials from ranks") {
  std::vector<CodingTrialInput> in;
  const auto raw = [](std::vector<std::uint64_t> s) { return extract_coding_raw(testing::coding_trial("x", Condition::C1, s)); };
  in.push_back({"b1", "GPT", true, raw({5})});
  in.push_back({"b2", "GPT", true, raw({5, 5})});
  in.push_back({"n1", "GPT", false, raw({1})});
  in.push_back({"n2", "GPT", false, raw({1, 2, 3})});
  in.push_back({"n3", "Qwen", false, raw({4})});
  const auto res = score_coding_stratum(in);
  REQUIRE(res.rows.size() == 5);
  CHECK(!res.rows[0].trs);
  CHECK(res.rows[0].deltas[2].has_value());
  CHECK(*res.rows[2].deltas[2] == doctest::Approx(1.0 - 1.5));
  // nr deltas among n1, n2: -0.5, 1.5 -> ranks 0.5, 1
  CHECK(*res.rows[2].ranks[2] == 0.5);
  CHECK(*res.rows[3].ranks[2] == 1.0);
  CHECK(res.missing_baseline == std::vector<std::string>{"n3"});
  const auto csv_text = coding_scores_csv(res.rows);
  CHECK(csv_text.rfind("trial_id,cd,td,nr,re,ms,d_cd", 0) == 0);
}

TEST_CASE("entropy identities") {
  for (int k = 1; k <= 16; ++k) {
    std::vector<double> u(static_cast<std::size_t>(k), 3.0);
    CHECK(std::abs(shannon_entropy_bits(u) - std::log2(k)) <= 1e-9);
  }
  CHECK(shannon_entropy_bits(std::vector<double>{0, 9, 0}) == 0.0);
}
