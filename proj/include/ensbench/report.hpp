#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ensbench/climatology.hpp"
#include "ensbench/ensemble.hpp"
#include "ensbench/metrics.hpp"

namespace ensbench {

struct BrierEvent {
  double level;  // climatological percentile, percent
  Exceedance dir;
  std::string key() const;  // e.g. "bs_gt_p90", "bs_lt_p10"
};

std::vector<BrierEvent> default_brier_events();

struct VerifyOptions {
  CrpsEstimator estimator = CrpsEstimator::Empirical;
  std::vector<BrierEvent> events = default_brier_events();
  bool uniform_weights = false;
};

/// Scores of one forecast case, indexed [channel][lead].
struct CaseScores {
  struct Cell {
    double rmse = 0.0;
    std::optional<double> acc;
    double crps = 0.0;
    std::optional<double> spread;
    std::map<std::string, double> brier;
  };
  std::vector<std::string> variables;
  double step_hours = 6.0;
  std::vector<std::vector<Cell>> cells;
};

/// Scores one ensemble against truth (a single-member series with the same
/// leads). `clim` may be null, which disables ACC and Brier scores.
/// Grid or shape mismatches throw Data naming both grids.
CaseScores score_case(const EnsembleForecast& forecast, const EnsembleForecast& truth, const Climatology* clim,
                      const VerifyOptions& opts);

struct MetricRow {
  std::string variable;
  std::size_t lead = 0;  // 1-based step count
  double lead_hours = 0.0;
  double rmse = 0.0;
  std::optional<double> acc;
  double crps = 0.0;
  std::optional<double> spread;
  std::optional<double> ssr;
  std::map<std::string, double> brier;
  std::map<std::string, double> normalized;  // vs report baseline
};

struct MetricReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t cases = 0;
  std::string estimator = "empirical";
  std::string baseline;  // name of the comparison baseline, if any
  std::vector<MetricRow> rows;

  const MetricRow& row(const std::string& variable, std::size_t lead) const;
};

/// Averages per-case scores over the case set. merge() is associative, so
/// partial accumulators from parallel workers can be combined in a fixed order.
class MetricAccumulator {
 public:
  void add(const CaseScores& scores);
  void merge(const MetricAccumulator& other);
  std::size_t cases() const { return cases_; }
  MetricReport finalize() const;

 private:
  struct Sum {
    double rmse = 0.0, crps = 0.0, acc = 0.0, spread = 0.0;
    std::size_t n = 0, n_acc = 0, n_spread = 0;
    std::map<std::string, std::pair<double, std::size_t>> brier;
  };
  std::vector<std::string> variables_;
  double step_hours_ = 6.0;
  std::vector<std::vector<Sum>> sums_;
  std::size_t cases_ = 0;
};

/// Adds normalized differences of `a` relative to baseline `b` into a copy of `a`.
MetricReport compare_reports(const MetricReport& a, const MetricReport& b, const std::string& baseline_name);

void write_report_csv(std::ostream& os, const MetricReport& report);
void write_report_json(std::ostream& os, const MetricReport& report);
MetricReport read_report_json(std::istream& is);

}  // namespace ensbench
