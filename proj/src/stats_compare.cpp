#include "driftlab/stats_compare.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

constexpr std::size_t kBlock = 256;
constexpr std::uint64_t kPermutationStream = 1;
constexpr std::uint64_t kBootstrapStream = 2;

// C(n, k) saturating at `cap + 1`.
std::size_t choose_capped(std::size_t n, std::size_t k, std::size_t cap) {
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(cap) + 0.5) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

double tolerance_for(std::span<const double> pooled) {
  double m = 1.0;
  for (double x : pooled) m = std::max(m, std::abs(x));
  return 1e-9 * m;
}

// Runs `fn(block)` for every block, spread over `workers` threads.
void for_blocks(std::size_t n_blocks, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_blocks, 1))));
  if (workers == 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t b = w; b < n_blocks; b += workers) fn(b);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double exhaustive_permutation_p(std::span<const double> a, std::span<const double> b) {
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  if (na == 0 || nb == 0) throw Error(ErrorCode::TooFewTrials, "empty group");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const auto diff = [&](double sum_a) {
    return sum_a / static_cast<double>(na) - (total - sum_a) / static_cast<double>(nb);
  };
  const double observed = std::abs(diff(std::accumulate(a.begin(), a.end(), 0.0)));
  const double tol = tolerance_for(pooled);

  std::vector<std::size_t> idx(na);
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t extreme = 0, count = 0;
  while (true) {
    double s = 0.0;
    for (std::size_t i : idx) s += pooled[i];
    ++count;
    if (std::abs(diff(s)) >= observed - tol) ++extreme;
    // next combination in lexicographic order
    std::size_t pos = na;
    while (pos > 0 && idx[pos - 1] == n - na + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < na; ++j) idx[j] = idx[j - 1] + 1;
  }
  return static_cast<double>(extreme) / static_cast<double>(count);
}

std::optional<WelchResult> welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::TooFewTrials, "welch needs two values per group");
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  if (!(va + vb > 0.0)) return std::nullopt;
  WelchResult w;
  w.t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  w.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(w.df);
  w.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(w.t))));
  return w;
}

ComparisonResult compare(std::span<const double> a, std::span<const double> b,
                         std::span<const std::string> personas_a, std::span<const std::string> personas_b,
                         const CompareOptions& options) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorCode::TooFewTrials,
                "groups of " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + ", need 2 each");
  }
  if ((!personas_a.empty() || !personas_b.empty()) &&
      (personas_a.size() != a.size() || personas_b.size() != b.size())) {
    throw Error(ErrorCode::DimensionMismatch, "persona labels do not match values");
  }
  for (double x : a) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "group a");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "group b");
  }

  ComparisonResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  r.delta_mean = r.mean_a - r.mean_b;
  r.se = std::sqrt(sample_variance(a) / static_cast<double>(a.size()) +
                   sample_variance(b) / static_cast<double>(b.size()));

  if (!personas_a.empty()) {
    std::map<std::string, std::pair<double, std::size_t>> pa, pb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      pa[personas_a[i]].first += a[i];
      ++pa[personas_a[i]].second;
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      pb[personas_b[i]].first += b[i];
      ++pb[personas_b[i]].second;
    }
    std::vector<double> persona_deltas;
    for (const auto& [persona, sa] : pa) {
      const auto it = pb.find(persona);
      if (it == pb.end()) continue;
      persona_deltas.push_back(sa.first / static_cast<double>(sa.second) -
                               it->second.first / static_cast<double>(it->second.second));
    }
    r.n_personas = persona_deltas.size();
    if (!persona_deltas.empty()) {
      r.iqr_persona = quantile_type7(persona_deltas, 0.75) - quantile_type7(persona_deltas, 0.25);
    }
  }

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const bool all_same =
      std::all_of(pooled.begin(), pooled.end(), [&](double x) { return x == pooled.front(); });
  if (all_same) {
    r.degenerate = true;
    r.p_value = 1.0;
    r.ci_low = r.ci_high = 0.0;
    return r;
  }
  if (options.welch) r.welch = welch_t_test(a, b);

  const std::size_t n = pooled.size(), na = a.size(), nb = b.size();
  const std::size_t k = std::max<std::size_t>(options.resamples, 1);
  const std::size_t n_blocks = (k + kBlock - 1) / kBlock;
  const std::size_t arrangements = choose_capped(n, na, options.exhaustive_limit);
  if (arrangements <= options.exhaustive_limit) {
    r.exhaustive = true;
    r.permutations = arrangements;
    r.p_value = exhaustive_permutation_p(a, b);
  } else {
    const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
    const auto diff = [&](double sum_a) {
      return sum_a / static_cast<double>(na) - (total - sum_a) / static_cast<double>(nb);
    };
    const double observed = std::abs(diff(std::accumulate(a.begin(), a.end(), 0.0)));
    const double tol = tolerance_for(pooled);
    std::vector<std::size_t> extreme(n_blocks, 0);
    for_blocks(n_blocks, options.workers, [&](std::size_t block) {
      Rng rng(substream_seed(options.seed, kPermutationStream, block));
      std::vector<double> work = pooled;
      const std::size_t lo = block * kBlock, hi = std::min(k, lo + kBlock);
      for (std::size_t rep = lo; rep < hi; ++rep) {
        // partial Fisher-Yates: the first na slots form group a
        double s = 0.0;
        for (std::size_t i = 0; i < na; ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.index(n - i));
          std::swap(work[i], work[j]);
          s += work[i];
        }
        if (std::abs(diff(s)) >= observed - tol) ++extreme[block];
      }
    });
    const std::size_t hits = std::accumulate(extreme.begin(), extreme.end(), std::size_t{0});
    r.permutations = k;
    r.p_value = static_cast<double>(hits + 1) / static_cast<double>(k + 1);
  }

  std::vector<double> reps(k);
  for_blocks(n_blocks, options.workers, [&](std::size_t block) {
    Rng rng(substream_seed(options.seed, kBootstrapStream, block));
    const std::size_t lo = block * kBlock, hi = std::min(k, lo + kBlock);
    for (std::size_t rep = lo; rep < hi; ++rep) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < na; ++i) sa += a[static_cast<std::size_t>(rng.index(na))];
      for (std::size_t i = 0; i < nb; ++i) sb += b[static_cast<std::size_t>(rng.index(nb))];
      reps[rep] = sa / static_cast<double>(na) - sb / static_cast<double>(nb);
    }
  });
  std::sort(reps.begin(), reps.end());
  const double tail = (1.0 - options.ci_level) / 2.0;
  r.ci_low = quantile_type7_sorted(reps, tail);
  r.ci_high = quantile_type7_sorted(reps, 1.0 - tail);
  return r;
}

ConsistencyResult cell_consistency(const ConsistencyCell& cell) {
  ConsistencyResult r;
  r.key = cell.key;
  r.n_runs = cell.values.size();
  for (double v : cell.values) {
    if (v > 0.0) {
      ++r.n_positive;
    } else if (v < 0.0) {
      ++r.n_negative;
    } else {
      ++r.n_zero;
    }
  }
  const std::size_t signed_runs = r.n_positive + r.n_negative;
  if (signed_runs == 0) {
    r.all_zero = true;
    r.consistency = 1.0;
  } else {
    r.consistency =
        static_cast<double>(std::max(r.n_positive, r.n_negative)) / static_cast<double>(signed_runs);
  }
  return r;
}

ConsistencySummary consistency(std::span<const ConsistencyCell> cells) {
  ConsistencySummary s;
  std::vector<double> values;
  for (const auto& cell : cells) {
    if (cell.values.size() < 2) {
      s.skipped.push_back(cell.key);
      continue;
    }
    s.cells.push_back(cell_consistency(cell));
    values.push_back(s.cells.back().consistency);
  }
  if (!values.empty()) s.mean = mean(values);
  if (values.size() >= 2) s.stddev = sample_stddev(values);
  return s;
}

double percent_change(double value, double reference) {
  if (reference == 0.0) throw Error(ErrorCode::ZeroReference, "percent change against zero");
  return 100.0 * (value - reference) / reference;
}

}  // namespace driftlab
