#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace driftlab {

enum class Construct { Activity, Breadth, Depth };
inline constexpr std::array<Construct, 3> kConstructs = {Construct::Activity, Construct::Breadth, Construct::Depth};

std::string_view to_string(Construct c) noexcept;
/// Column label of a construct score ("dpc_act", "dpc_brd", "dpc_dpt").
std::string_view score_name(Construct c) noexcept;
std::optional<Construct> parse_construct(std::string_view s) noexcept;

struct ConstructGroup {
  Construct construct;
  std::vector<std::string> metrics;  // first entry is the sign anchor
};

struct ConstructMap {
  std::vector<ConstructGroup> groups;

  static ConstructMap defaults();
  /// Throws ConfigOutOfRange when a metric is listed twice or a group is empty.
  void check() const;
  const ConstructGroup& group(Construct c) const;
};

/// Trials x named columns; absent cells are std::nullopt.
struct DeltaMatrix {
  std::vector<std::string> trial_ids;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;

  /// Throws DimensionMismatch when a column is missing.
  std::size_t column(std::string_view name) const;
};

/// First principal component of the correlation matrix of some columns.
struct PcaFit {
  std::vector<std::string> metrics;  // kept columns, in map order
  std::vector<std::size_t> source_columns;  // their indices in the fitted matrix
  std::vector<std::string> dropped;  // zero-variance columns
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> loadings;      // unit norm, anchor non-negative
  double explained_variance = 0.0;   // top eigenvalue of the correlation matrix
  double total_variance = 0.0;       // number of kept columns
  std::size_t n_trials = 0;
  std::size_t imputed = 0;           // absent cells filled with the column mean
};

/// Top eigenpair of a symmetric positive semi-definite matrix (row-major,
/// p x p) by repeated squaring followed by power-iteration polishing. The
/// returned vector has unit norm; its sign is not normalized.
struct EigenPair {
  double value = 0.0;
  std::vector<double> vector;
};
EigenPair top_eigenpair(std::span<const double> matrix, std::size_t p);

/// Correlation-matrix PCA over `metrics` (anchor first). Throws TooFewTrials
/// (fewer than 3 rows), DimensionMismatch (missing column) or
/// AllColumnsDropped. Zero-variance columns are dropped and listed.
PcaFit fit_pca(const DeltaMatrix& matrix, std::span<const std::string> metrics);

/// Projection of standardized rows onto the loadings. Rows are looked up by
/// column name; absent cells take the fitted mean. Throws DimensionMismatch.
std::vector<double> score_rows(const PcaFit& fit, const DeltaMatrix& matrix);

struct ConstructFit {
  std::string stratum;
  Construct construct = Construct::Activity;
  std::optional<PcaFit> fit;  // empty when every column dropped or too few trials
  std::string skipped_reason;
};

struct ConstructScore {
  std::string trial_id;
  std::array<std::optional<double>, 3> dpc;  // indexed like kConstructs
};

struct ConstructResult {
  std::vector<ConstructFit> fits;
  std::vector<ConstructScore> scores;  // matrix row order
};

/// Fits every construct of `map` on one stratum and scores its trials.
/// Constructs that cannot be fitted leave their score column empty.
ConstructResult fit_construct_pca(const DeltaMatrix& matrix, const ConstructMap& map, const std::string& stratum);

/// {"schema_version":1,"fits":[{stratum, construct, n_trials, ..., "metrics":[...]}]}
std::string loadings_json(std::span<const ConstructFit> fits);

}  // namespace driftlab
