#include "driftlab/constructs.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "driftlab/error.hpp"
#include "driftlab/trace_model.hpp"

namespace driftlab {

std::string_view to_string(Construct c) noexcept {
  switch (c) {
    case Construct::Activity: return "activity";
    case Construct::Breadth: return "breadth";
    case Construct::Depth: return "depth";
  }
  return "activity";
}

std::string_view score_name(Construct c) noexcept {
  switch (c) {
    case Construct::Activity: return "dpc_act";
    case Construct::Breadth: return "dpc_brd";
    case Construct::Depth: return "dpc_dpt";
  }
  return "dpc_act";
}

std::optional<Construct> parse_construct(std::string_view s) noexcept {
  for (Construct c : kConstructs) {
    if (s == to_string(c) || s == score_name(c)) return c;
  }
  return std::nullopt;
}

ConstructMap ConstructMap::defaults() {
  return ConstructMap{{
      {Construct::Activity, {"num_web_events", "total_duration_s", "tool_drift"}},
      {Construct::Breadth,
       {"num_domains", "num_searches", "domain_entropy", "unique_url_ratio", "domain_kl", "domain_jaccard"}},
      {Construct::Depth, {"num_unique_urls", "num_summaries", "avg_latency_s", "query_similarity"}},
  }};
}

void ConstructMap::check() const {
  std::set<std::string> seen;
  std::set<Construct> constructs;
  for (const auto& g : groups) {
    if (!constructs.insert(g.construct).second) {
      throw Error(ErrorCode::ConfigOutOfRange, "construct '" + std::string(to_string(g.construct)) + "' listed twice");
    }
    if (g.metrics.empty()) {
      throw Error(ErrorCode::ConfigOutOfRange, "construct '" + std::string(to_string(g.construct)) + "' has no metrics");
    }
    for (const auto& m : g.metrics) {
      if (!seen.insert(m).second) throw Error(ErrorCode::ConfigOutOfRange, "metric '" + m + "' mapped twice");
    }
  }
}

const ConstructGroup& ConstructMap::group(Construct c) const {
  for (const auto& g : groups) {
    if (g.construct == c) return g;
  }
  throw Error(ErrorCode::ConfigOutOfRange, "construct '" + std::string(to_string(c)) + "' not mapped");
}

std::size_t DeltaMatrix::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::DimensionMismatch, "missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

namespace {

double trace_of(const std::vector<double>& m, std::size_t p) {
  double t = 0.0;
  for (std::size_t i = 0; i < p; ++i) t += m[i * p + i];
  return t;
}

}  // namespace

EigenPair top_eigenpair(std::span<const double> a, std::size_t p) {
  if (p == 0 || a.size() != p * p) throw Error(ErrorCode::DimensionMismatch, "eigen input is not square");
  EigenPair out;
  out.vector.assign(p, 0.0);
  std::vector<double> m(a.begin(), a.end());
  const double tr = trace_of(m, p);
  if (!(tr > 0.0)) {
    out.vector[0] = 1.0;
    return out;
  }
  for (double& x : m) x /= tr;

  // M <- M^2 / tr(M^2) converges to the projector onto the top eigenspace;
  // each step squares the eigenvalue ratio, so a tiny gap still resolves.
  std::vector<double> sq(p * p);
  for (int iter = 0; iter < 128; ++iter) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < p; ++k) s += m[i * p + k] * m[k * p + j];
        sq[i * p + j] = s;
      }
    }
    const double t = trace_of(sq, p);
    if (!(t > 0.0)) break;
    double change = 0.0;
    for (std::size_t i = 0; i < p * p; ++i) {
      sq[i] /= t;
      change = std::max(change, std::abs(sq[i] - m[i]));
    }
    m.swap(sq);
    if (change < 1e-16) break;
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j < p; ++j) {
    if (m[j * p + j] > m[best * p + best]) best = j;
  }
  std::vector<double> v(p);
  for (std::size_t i = 0; i < p; ++i) v[i] = m[i * p + best];

  const auto normalize = [](std::vector<double>& x) {
    double n = 0.0;
    for (double e : x) n += e * e;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (double& e : x) e /= n;
    }
    return n;
  };
  normalize(v);

  std::vector<double> w(p);
  for (int iter = 0; iter < 1000; ++iter) {
    for (std::size_t i = 0; i < p; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += a[i * p + k] * v[k];
      w[i] = s;
    }
    if (normalize(w) == 0.0) break;
    double change = 0.0;
    for (std::size_t i = 0; i < p; ++i) change = std::max(change, std::abs(w[i] - v[i]));
    v.swap(w);
    if (change < 1e-12) break;
  }

  double rayleigh = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < p; ++k) rayleigh += v[i] * a[i * p + k] * v[k];
  }
  out.value = rayleigh;
  out.vector = std::move(v);
  return out;
}

PcaFit fit_pca(const DeltaMatrix& matrix, std::span<const std::string> metrics) {
  const std::size_t n = matrix.rows.size();
  if (n < 3) throw Error(ErrorCode::TooFewTrials, std::to_string(n) + " trials in stratum, need 3");

  PcaFit fit;
  fit.n_trials = n;
  std::vector<std::vector<double>> cols;
  for (const std::string& name : metrics) {
    const std::size_t c = matrix.column(name);
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& row : matrix.rows) {
      if (row.size() != matrix.columns.size()) throw Error(ErrorCode::DimensionMismatch, "ragged delta matrix");
      if (row[c]) {
        sum += *row[c];
        ++present;
      }
    }
    if (present == 0) {
      fit.dropped.push_back(name);
      continue;
    }
    const double mu = sum / static_cast<double>(present);
    std::vector<double> col(n);
    std::size_t imputed = 0;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cell = matrix.rows[i][c];
      col[i] = cell ? *cell : mu;
      imputed += cell ? 0 : 1;
      max_abs = std::max(max_abs, std::abs(col[i]));
    }
    double ss = 0.0;
    for (double x : col) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * max_abs)) {
      fit.dropped.push_back(name);
      continue;
    }
    for (double& x : col) x = (x - mu) / sd;
    fit.metrics.push_back(name);
    fit.source_columns.push_back(c);
    fit.means.push_back(mu);
    fit.stds.push_back(sd);
    fit.imputed += imputed;
    cols.push_back(std::move(col));
  }
  const std::size_t p = cols.size();
  if (p == 0) throw Error(ErrorCode::AllColumnsDropped, "no column with nonzero variance");

  std::vector<double> corr(p * p);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += cols[a][i] * cols[b][i];
      corr[a * p + b] = corr[b * p + a] = s / static_cast<double>(n - 1);
    }
  }
  EigenPair top = top_eigenpair(corr, p);
  if (top.vector[0] < 0.0) {
    for (double& x : top.vector) x = -x;
  }
  fit.loadings = std::move(top.vector);
  fit.explained_variance = top.value;
  fit.total_variance = static_cast<double>(p);
  return fit;
}

std::vector<double> score_rows(const PcaFit& fit, const DeltaMatrix& matrix) {
  if (fit.loadings.size() != fit.metrics.size() || fit.means.size() != fit.metrics.size() ||
      fit.stds.size() != fit.metrics.size()) {
    throw Error(ErrorCode::DimensionMismatch, "inconsistent PCA fit");
  }
  std::vector<std::size_t> idx;
  idx.reserve(fit.metrics.size());
  for (const auto& m : fit.metrics) idx.push_back(matrix.column(m));
  std::vector<double> scores;
  scores.reserve(matrix.rows.size());
  for (const auto& row : matrix.rows) {
    if (row.size() != matrix.columns.size()) throw Error(ErrorCode::DimensionMismatch, "ragged delta matrix");
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double x = row[idx[k]] ? *row[idx[k]] : fit.means[k];
      s += (x - fit.means[k]) / fit.stds[k] * fit.loadings[k];
    }
    scores.push_back(s);
  }
  return scores;
}

ConstructResult fit_construct_pca(const DeltaMatrix& matrix, const ConstructMap& map, const std::string& stratum) {
  map.check();
  ConstructResult result;
  result.scores.resize(matrix.rows.size());
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) result.scores[i].trial_id = matrix.trial_ids.at(i);

  for (const auto& group : map.groups) {
    ConstructFit cf;
    cf.stratum = stratum;
    cf.construct = group.construct;
    try {
      cf.fit = fit_pca(matrix, group.metrics);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooFewTrials && e.code() != ErrorCode::AllColumnsDropped) throw;
      cf.skipped_reason = e.what();
    }
    if (cf.fit) {
      const auto scores = score_rows(*cf.fit, matrix);
      const auto slot = static_cast<std::size_t>(group.construct);
      for (std::size_t i = 0; i < scores.size(); ++i) result.scores[i].dpc[slot] = scores[i];
    }
    result.fits.push_back(std::move(cf));
  }
  return result;
}

std::string loadings_json(std::span<const ConstructFit> fits) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["fits"] = nlohmann::ordered_json::array();
  for (const auto& cf : fits) {
    nlohmann::ordered_json j;
    j["stratum"] = cf.stratum;
    j["construct"] = to_string(cf.construct);
    if (!cf.fit) {
      j["skipped"] = cf.skipped_reason;
      doc["fits"].push_back(std::move(j));
      continue;
    }
    const PcaFit& f = *cf.fit;
    j["n_trials"] = f.n_trials;
    j["explained_variance"] = f.explained_variance;
    j["explained_ratio"] = f.explained_variance / f.total_variance;
    j["imputed"] = f.imputed;
    j["dropped"] = f.dropped;
    j["metrics"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < f.metrics.size(); ++k) {
      nlohmann::ordered_json m;
      m["metric"] = f.metrics[k];
      m["loading"] = f.loadings[k];
      m["mean"] = f.means[k];
      m["std"] = f.stds[k];
      j["metrics"].push_back(std::move(m));
    }
    doc["fits"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

}  // namespace driftlab
