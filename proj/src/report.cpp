#include "ensbench/report.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "ensbench/error.hpp"

namespace ensbench {

std::string BrierEvent::key() const {
  std::ostringstream os;
  os << (dir == Exceedance::Above ? "bs_gt_p" : "bs_lt_p") << level;
  return os.str();
}

std::vector<BrierEvent> default_brier_events() {
  return {{90, Exceedance::Above}, {95, Exceedance::Above}, {98, Exceedance::Above},
          {10, Exceedance::Below}, {5, Exceedance::Below},  {2, Exceedance::Below}};
}

CaseScores score_case(const EnsembleForecast& forecast, const EnsembleForecast& truth, const Climatology* clim,
                      const VerifyOptions& opts) {
  if (!(forecast.grid == truth.grid))
    fail(ErrorKind::Data, "grid mismatch: forecast grid " + forecast.grid.describe() + " vs truth grid " +
                              truth.grid.describe());
  if (truth.leads < forecast.leads || truth.variables != forecast.variables)
    fail(ErrorKind::Data, "truth series does not cover the forecast leads/variables");
  if (truth.init_time != forecast.init_time || truth.step_hours != forecast.step_hours)
    fail(ErrorKind::Data, "truth series is not aligned with forecast valid times");
  if (clim) {
    if (!(clim->grid == forecast.grid))
      fail(ErrorKind::Data, "grid mismatch: forecast grid " + forecast.grid.describe() + " vs climatology grid " +
                                clim->grid.describe());
    if (clim->variables != forecast.variables) fail(ErrorKind::Data, "climatology variables differ from forecast");
  }

  const GridSpec& g = forecast.grid;
  const LatWeights w = opts.uniform_weights ? LatWeights::uniform(g.nlat) : latitude_weights(g);

  CaseScores out;
  out.variables = forecast.variables;
  out.step_hours = forecast.step_hours;
  out.cells.assign(forecast.channels(), std::vector<CaseScores::Cell>(forecast.leads));
  for (std::size_t c = 0; c < forecast.channels(); ++c) {
    for (std::size_t l = 0; l < forecast.leads; ++l) {
      auto& cell = out.cells[c][l];
      const auto members = forecast.member_slices(l, c);
      const auto mean = forecast.mean_slice(l, c);
      const auto obs = truth.slice(0, l, c);
      const TimePoint valid = forecast.valid_time(l);
      cell.rmse = rmse(mean, obs, g, w);
      cell.crps = crps_field(members, obs, g, w, opts.estimator);
      if (forecast.members >= 2) cell.spread = spread(members, g, w);
      if (clim) {
        try {
          cell.acc = acc(mean, obs, clim->mean(c, valid), g, w);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::UndefinedMetric) throw;
        }
        for (const auto& ev : opts.events)
          cell.brier[ev.key()] = brier(members, obs, clim->percentile(c, ev.level, valid), ev.dir, g, w);
      }
    }
  }
  return out;
}

const MetricRow& MetricReport::row(const std::string& variable, std::size_t lead) const {
  for (const auto& r : rows)
    if (r.variable == variable && r.lead == lead) return r;
  fail(ErrorKind::InvalidArgument, "no report row for " + variable + " lead " + std::to_string(lead));
}

void MetricAccumulator::add(const CaseScores& scores) {
  if (cases_ == 0 && sums_.empty()) {
    variables_ = scores.variables;
    step_hours_ = scores.step_hours;
    sums_.assign(scores.cells.size(), std::vector<Sum>(scores.cells.empty() ? 0 : scores.cells[0].size()));
  }
  require(scores.variables == variables_ && scores.cells.size() == sums_.size(),
          "case scores do not match accumulator layout");
  for (std::size_t c = 0; c < sums_.size(); ++c) {
    require(scores.cells[c].size() == sums_[c].size(), "case scores lead count mismatch");
    for (std::size_t l = 0; l < sums_[c].size(); ++l) {
      const auto& cell = scores.cells[c][l];
      auto& s = sums_[c][l];
      s.rmse += cell.rmse;
      s.crps += cell.crps;
      ++s.n;
      if (cell.acc) {
        s.acc += *cell.acc;
        ++s.n_acc;
      }
      if (cell.spread) {
        s.spread += *cell.spread;
        ++s.n_spread;
      }
      for (const auto& [k, v] : cell.brier) {
        s.brier[k].first += v;
        ++s.brier[k].second;
      }
    }
  }
  ++cases_;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  if (other.cases_ == 0) return;
  if (cases_ == 0) {
    *this = other;
    return;
  }
  require(other.variables_ == variables_ && other.sums_.size() == sums_.size(), "accumulator layout mismatch");
  for (std::size_t c = 0; c < sums_.size(); ++c) {
    for (std::size_t l = 0; l < sums_[c].size(); ++l) {
      auto& s = sums_[c][l];
      const auto& o = other.sums_[c][l];
      s.rmse += o.rmse;
      s.crps += o.crps;
      s.acc += o.acc;
      s.spread += o.spread;
      s.n += o.n;
      s.n_acc += o.n_acc;
      s.n_spread += o.n_spread;
      for (const auto& [k, v] : o.brier) {
        s.brier[k].first += v.first;
        s.brier[k].second += v.second;
      }
    }
  }
  cases_ += other.cases_;
}

MetricReport MetricAccumulator::finalize() const {
  MetricReport rep;
  rep.cases = cases_;
  for (std::size_t c = 0; c < sums_.size(); ++c) {
    for (std::size_t l = 0; l < sums_[c].size(); ++l) {
      const auto& s = sums_[c][l];
      MetricRow row;
      row.variable = variables_[c];
      row.lead = l + 1;
      row.lead_hours = step_hours_ * static_cast<double>(l + 1);
      const double n = static_cast<double>(s.n);
      row.rmse = s.rmse / n;
      row.crps = s.crps / n;
      if (s.n_acc > 0) row.acc = s.acc / static_cast<double>(s.n_acc);
      if (s.n_spread > 0) {
        row.spread = s.spread / static_cast<double>(s.n_spread);
        if (row.rmse > 0.0) row.ssr = ssr(*row.spread, row.rmse);
      }
      for (const auto& [k, v] : s.brier) row.brier[k] = v.first / static_cast<double>(v.second);
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

MetricReport compare_reports(const MetricReport& a, const MetricReport& b, const std::string& baseline_name) {
  MetricReport out = a;
  out.baseline = baseline_name;
  for (auto& row : out.rows) {
    const MetricRow& base = b.row(row.variable, row.lead);
    row.normalized.clear();
    if (base.rmse > 0.0) row.normalized["nd_rmse"] = normalized_diff(row.rmse, base.rmse, DiffKind::RmseLike);
    if (base.crps > 0.0) row.normalized["nd_crps"] = normalized_diff(row.crps, base.crps, DiffKind::CrpsLike);
    if (row.acc && base.acc && *base.acc != 1.0)
      row.normalized["nd_acc"] = normalized_diff(*row.acc, *base.acc, DiffKind::AccLike);
  }
  return out;
}

namespace {

template <typename F>
void for_each_metric(const MetricRow& r, F&& emit) {
  emit("rmse", r.rmse);
  if (r.acc) emit("acc", *r.acc);
  emit("crps", r.crps);
  if (r.spread) emit("spread", *r.spread);
  if (r.ssr) emit("ssr", *r.ssr);
  for (const auto& [k, v] : r.brier) emit(k, v);
  for (const auto& [k, v] : r.normalized) emit(k, v);
}

}  // namespace

void write_report_csv(std::ostream& os, const MetricReport& report) {
  os << "# config_hash=" << report.config_hash << " seed=" << report.seed << " cases=" << report.cases
     << " estimator=" << report.estimator;
  if (!report.baseline.empty()) os << " baseline=" << report.baseline;
  os << "\nvariable,lead,lead_hours,metric,value\n" << std::setprecision(12);
  for (const auto& r : report.rows)
    for_each_metric(r, [&](const std::string& name, double v) {
      os << r.variable << ',' << r.lead << ',' << r.lead_hours << ',' << name << ',' << v << '\n';
    });
}

void write_report_json(std::ostream& os, const MetricReport& report) {
  nlohmann::json j;
  j["meta"] = {{"config_hash", report.config_hash}, {"seed", report.seed}, {"cases", report.cases},
               {"estimator", report.estimator},     {"baseline", report.baseline}};
  j["variables"] = nlohmann::json::object();
  for (const auto& r : report.rows) {
    nlohmann::json entry = {{"lead", r.lead}, {"lead_hours", r.lead_hours}};
    for_each_metric(r, [&](const std::string& name, double v) { entry[name] = v; });
    j["variables"][r.variable].push_back(std::move(entry));
  }
  os << j.dump(2) << '\n';
}

MetricReport read_report_json(std::istream& is) {
  MetricReport rep;
  try {
    const auto j = nlohmann::json::parse(is);
    const auto& meta = j.at("meta");
    rep.config_hash = meta.value("config_hash", "");
    rep.seed = meta.value("seed", std::uint64_t{0});
    rep.cases = meta.value("cases", std::size_t{0});
    rep.estimator = meta.value("estimator", "empirical");
    rep.baseline = meta.value("baseline", "");
    for (const auto& [var, entries] : j.at("variables").items()) {
      for (const auto& e : entries) {
        MetricRow r;
        r.variable = var;
        for (const auto& [k, v] : e.items()) {
          if (k == "lead") r.lead = v.get<std::size_t>();
          else if (k == "lead_hours") r.lead_hours = v.get<double>();
          else if (k == "rmse") r.rmse = v.get<double>();
          else if (k == "acc") r.acc = v.get<double>();
          else if (k == "crps") r.crps = v.get<double>();
          else if (k == "spread") r.spread = v.get<double>();
          else if (k == "ssr") r.ssr = v.get<double>();
          else if (k.rfind("bs_", 0) == 0) r.brier[k] = v.get<double>();
          else if (k.rfind("nd_", 0) == 0) r.normalized[k] = v.get<double>();
          else fail(ErrorKind::Data, "unknown report metric '" + k + "'");
        }
        rep.rows.push_back(std::move(r));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed metric report: ") + e.what());
  }
  return rep;
}

}  // namespace ensbench
