#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridflex/csv.hpp"
#include "gridflex/errors.hpp"
#include "gridflex/mpc.hpp"
#include "gridflex/svg.hpp"

namespace gridflex {

struct DistSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

inline DistSummary summarize(std::vector<double> v) {
  DistSummary d;
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  auto quant = [&](double q) {
    const double pos = q * (static_cast<double>(v.size()) - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1 - frac) + v[i + 1] * frac;
  };
  d.min = v.front();
  d.q1 = quant(0.25);
  d.median = quant(0.5);
  d.q3 = quant(0.75);
  d.max = v.back();
  double sum = 0;
  for (double x : v) sum += x;
  d.mean = sum / static_cast<double>(v.size());
  return d;
}

struct ViolationCounts {
  long trafo_overload = 0;  // loading > 100 %
  long line_overload = 0;   // any non-transformer branch > 100 %
  long voltage = 0;         // any bus outside [vmin, vmax]
};

struct ControllerStats {
  DistSummary objective;       // realized per-step 1/2 p_slack^2
  DistSummary trafo_loading;
  DistSummary line_loading;    // per-step max over lines
  DistSummary voltage;         // per-step extremes pooled
  ViolationCounts violations;
  // Wall-clock per-step totals, first (cold) step excluded.
  DistSummary time;
  double cold_start_time = 0.0;
  double time_spread = 0.0;    // max / median
};

// Table-style cross-controller statistics; ratio fields are NPC / MPC on
// identical step sets. Timing lives in its own section because wall-clock
// numbers can never reproduce bit-exactly across runs.
struct ComparisonReport {
  long first_step = 0;
  long n_steps = 0;
  double dt_hours = 0.25;
  double vmin = 0.95, vmax = 1.05;
  std::map<std::string, ControllerStats> controllers;
  double objective_mean_ratio = 0.0;    // mean_npc / mean_mpc
  double objective_median_ratio = 0.0;  // median_npc / median_mpc
  double time_median_ratio = 0.0;       // median_npc / median_mpc
};

inline ViolationCounts count_violations(const SimulationLog& log,
                                        int trafo_branch, double vmin,
                                        double vmax) {
  ViolationCounts c;
  for (int i = 0; i < log.n_steps(); ++i) {
    if (log.trafo_pct[i] > 100.0) ++c.trafo_overload;
    bool line = false, volt = false;
    for (int k = 0; k < log.n_branches; ++k) {
      if (k == trafo_branch) continue;
      if (log.line_pct(i, k) > 100.0) line = true;
    }
    for (int b = 0; b < log.n_buses; ++b)
      if (log.v(i, b) < vmin || log.v(i, b) > vmax) volt = true;
    c.line_overload += line;
    c.voltage += volt;
  }
  return c;
}

namespace evaldetail {

inline ControllerStats stats_for(const SimulationLog& log, int trafo_branch,
                                 double vmin, double vmax) {
  ControllerStats s;
  s.objective = summarize(log.obj_realized);
  s.trafo_loading = summarize(log.trafo_pct);
  std::vector<double> line_max, volts;
  for (int i = 0; i < log.n_steps(); ++i) {
    double m = 0.0;
    for (int k = 0; k < log.n_branches; ++k) {
      if (k == trafo_branch) continue;
      m = std::max(m, log.line_pct(i, k));
    }
    line_max.push_back(m);
    for (int b = 0; b < log.n_buses; ++b) volts.push_back(log.v(i, b));
  }
  s.line_loading = summarize(line_max);
  s.voltage = summarize(volts);
  s.violations = count_violations(log, trafo_branch, vmin, vmax);
  if (log.n_steps() > 1) {
    std::vector<double> warm(log.t_total.begin() + 1, log.t_total.end());
    s.time = summarize(warm);
    s.cold_start_time = log.t_total.front();
    s.time_spread = s.time.median > 0 ? s.time.max / s.time.median : 0.0;
  }
  return s;
}

}  // namespace evaldetail

inline ComparisonReport compare(const SimulationLog& baseline,
                                const SimulationLog& mpc,
                                const SimulationLog& npc, int trafo_branch,
                                double vmin = 0.95, double vmax = 1.05) {
  auto same_range = [](const SimulationLog& a, const SimulationLog& b) {
    return a.n_steps() == b.n_steps() && !a.step.empty() &&
           a.step.front() == b.step.front() && a.step.back() == b.step.back();
  };
  if (!same_range(baseline, mpc) || !same_range(mpc, npc))
    throw ValidationError("compare: logs cover different step ranges");

  ComparisonReport r;
  r.first_step = mpc.step.front();
  r.n_steps = mpc.n_steps();
  r.dt_hours = mpc.dt_hours;
  r.vmin = vmin;
  r.vmax = vmax;
  r.controllers["baseline"] =
      evaldetail::stats_for(baseline, trafo_branch, vmin, vmax);
  r.controllers["mpc"] = evaldetail::stats_for(mpc, trafo_branch, vmin, vmax);
  r.controllers["npc"] = evaldetail::stats_for(npc, trafo_branch, vmin, vmax);

  const auto& sm = r.controllers["mpc"];
  const auto& sn = r.controllers["npc"];
  r.objective_mean_ratio =
      sm.objective.mean > 0 ? sn.objective.mean / sm.objective.mean : 0.0;
  r.objective_median_ratio = sm.objective.median > 0
                                 ? sn.objective.median / sm.objective.median
                                 : 0.0;
  r.time_median_ratio =
      sm.time.median > 0 ? sn.time.median / sm.time.median : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// report (de)serialization. The "deterministic" section must reproduce
// bit-exactly for a fixed seed; "timing" never does and is kept apart.

namespace evaldetail {

inline nlohmann::json dist_json(const DistSummary& d) {
  return {{"min", d.min}, {"q1", d.q1},   {"median", d.median},
          {"q3", d.q3},   {"max", d.max}, {"mean", d.mean}};
}

inline DistSummary dist_from(const nlohmann::json& j) {
  DistSummary d;
  d.min = j.at("min");
  d.q1 = j.at("q1");
  d.median = j.at("median");
  d.q3 = j.at("q3");
  d.max = j.at("max");
  d.mean = j.at("mean");
  return d;
}

}  // namespace evaldetail

inline nlohmann::json report_to_json(const ComparisonReport& r) {
  nlohmann::json det;
  det["first_step"] = r.first_step;
  det["n_steps"] = r.n_steps;
  det["dt_hours"] = r.dt_hours;
  det["vmin"] = r.vmin;
  det["vmax"] = r.vmax;
  for (const auto& [name, s] : r.controllers) {
    nlohmann::json c;
    c["objective"] = evaldetail::dist_json(s.objective);
    c["trafo_loading"] = evaldetail::dist_json(s.trafo_loading);
    c["line_loading"] = evaldetail::dist_json(s.line_loading);
    c["voltage"] = evaldetail::dist_json(s.voltage);
    c["violations"] = {{"trafo_overload", s.violations.trafo_overload},
                       {"line_overload", s.violations.line_overload},
                       {"voltage", s.violations.voltage}};
    det["controllers"][name] = c;
  }
  det["objective_mean_ratio"] = r.objective_mean_ratio;
  det["objective_median_ratio"] = r.objective_median_ratio;

  nlohmann::json timing;
  for (const auto& [name, s] : r.controllers) {
    timing[name] = {{"per_step", evaldetail::dist_json(s.time)},
                    {"cold_start", s.cold_start_time},
                    {"spread_max_over_median", s.time_spread}};
  }
  timing["time_median_ratio"] = r.time_median_ratio;

  return {{"deterministic", det}, {"timing", timing}};
}

inline void save_report(const ComparisonReport& r,
                        const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << report_to_json(r).dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

// Canonical byte representation of the seed-reproducible part.
inline std::string deterministic_fingerprint(const ComparisonReport& r) {
  return report_to_json(r).at("deterministic").dump();
}

// ---------------------------------------------------------------------------
// figures: four SVG + CSV pairs mirroring the single-day traces, the yearly
// loading series, the loading/voltage distributions and the time/objective
// distributions.

namespace evaldetail {

// max/min-preserving decimation so year-long series stay plottable.
inline void decimate(const std::vector<double>& xs,
                     const std::vector<double>& ys, std::size_t max_pts,
                     std::vector<double>& oxs, std::vector<double>& oys) {
  if (xs.size() <= max_pts) {
    oxs = xs;
    oys = ys;
    return;
  }
  const std::size_t bucket = (xs.size() + max_pts / 2 - 1) / (max_pts / 2);
  for (std::size_t start = 0; start < xs.size(); start += bucket) {
    const std::size_t end = std::min(xs.size(), start + bucket);
    std::size_t imin = start, imax = start;
    for (std::size_t i = start; i < end; ++i) {
      if (ys[i] < ys[imin]) imin = i;
      if (ys[i] > ys[imax]) imax = i;
    }
    for (std::size_t i : {std::min(imin, imax), std::max(imin, imax)}) {
      oxs.push_back(xs[i]);
      oys.push_back(ys[i]);
    }
  }
}

inline SvgPlot::BoxStats box_of(const DistSummary& d,
                                const std::string& label) {
  return {d.min, d.q1, d.median, d.q3, d.max, label};
}

}  // namespace evaldetail

inline std::vector<std::filesystem::path> export_plots(
    const ComparisonReport& report, const SimulationLog& baseline,
    const SimulationLog& mpc, const SimulationLog& npc,
    const std::filesystem::path& dir, long day_start_step = -1) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir))
    throw IoError("plots: cannot create directory " + dir.string());
  std::vector<fs::path> files;
  const int spd = steps_per_day(mpc.dt_hours);

  // --- figure 1: one day of storage powers, transformer loading, SoC
  {
    long d0 = day_start_step >= 0 ? day_start_step : mpc.step.front();
    // snap to the start of a day inside the log
    d0 = std::max(d0, mpc.step.front());
    const long rel = (d0 - mpc.step.front());
    const long day_rel = rel - rel % spd;
    const long lo = day_rel;
    const long hi = std::min<long>(day_rel + spd, mpc.n_steps());

    SvgPlot plot("Single-day storage powers and transformer loading",
                 "hour of day", "kW / % / kWh");
    std::vector<std::string> header{"hour"};
    std::vector<std::vector<double>> rows(hi - lo);
    std::vector<double> hours;
    for (long i = lo; i < hi; ++i) {
      const double h = static_cast<double>(i - lo) * mpc.dt_hours;
      hours.push_back(h);
      rows[i - lo].push_back(h);
    }
    for (int s = 0; s < mpc.n_storages; ++s) {
      std::vector<double> p;
      for (long i = lo; i < hi; ++i) p.push_back(mpc.p_apply_kw(i, s));
      plot.add_line(hours, p, "mpc p_sto" + std::to_string(s) + " kW");
      header.push_back("mpc_p_kw_" + std::to_string(s));
      for (long i = lo; i < hi; ++i)
        rows[i - lo].push_back(mpc.p_apply_kw(i, s));
    }
    auto add_trafo = [&](const SimulationLog& log, const std::string& name) {
      std::vector<double> t(log.trafo_pct.begin() + lo,
                            log.trafo_pct.begin() + hi);
      plot.add_line(hours, t, name + " trafo %");
      header.push_back(name + "_trafo_pct");
      for (long i = lo; i < hi; ++i)
        rows[i - lo].push_back(log.trafo_pct[i]);
    };
    add_trafo(baseline, "baseline");
    add_trafo(mpc, "mpc");
    add_trafo(npc, "npc");
    for (int s = 0; s < mpc.n_storages; ++s) {
      header.push_back("mpc_soc_kwh_" + std::to_string(s));
      std::vector<double> e;
      for (long i = lo; i < hi; ++i) {
        rows[i - lo].push_back(mpc.soc_kwh(i, s));
        e.push_back(mpc.soc_kwh(i, s));
      }
      plot.add_line(hours, e, "mpc soc" + std::to_string(s) + " kWh");
    }
    plot.add_hline(100.0, "rating");
    plot.write(dir / "fig_day.svg");
    write_csv(dir / "fig_day.csv", header, rows);
    files.push_back(dir / "fig_day.svg");
    files.push_back(dir / "fig_day.csv");
  }

  // --- figure 2: transformer loading over the whole simulated span
  {
    SvgPlot plot("Transformer loading over the simulated span", "day",
                 "loading %");
    std::vector<double> xs;
    for (long s : mpc.step)
      xs.push_back(static_cast<double>(s) / spd);
    for (const auto* log : {&baseline, &mpc, &npc}) {
      std::vector<double> dx, dy;
      evaldetail::decimate(xs, log->trafo_pct, 4096, dx, dy);
      plot.add_line(dx, dy, log->controller.empty() ? "log" : log->controller);
    }
    plot.add_hline(100.0, "rating");
    plot.write(dir / "fig_loading.svg");
    std::vector<std::vector<double>> rows(mpc.n_steps());
    for (int i = 0; i < mpc.n_steps(); ++i)
      rows[i] = {static_cast<double>(mpc.step[i]), baseline.trafo_pct[i],
                 mpc.trafo_pct[i], npc.trafo_pct[i]};
    write_csv(dir / "fig_loading.csv",
              {"step", "baseline_pct", "mpc_pct", "npc_pct"}, rows);
    files.push_back(dir / "fig_loading.svg");
    files.push_back(dir / "fig_loading.csv");
  }

  // --- figure 3: constraint distributions
  {
    SvgPlot plot("Loading and voltage distributions", "", "% / p.u.");
    std::vector<std::vector<double>> rows;
    for (const auto& metric :
         std::vector<std::string>{"trafo_loading", "line_loading",
                                  "voltage"}) {
      for (const auto& name :
           std::vector<std::string>{"baseline", "mpc", "npc"}) {
        const auto& s = report.controllers.at(name);
        const DistSummary& d = metric == "trafo_loading" ? s.trafo_loading
                               : metric == "line_loading" ? s.line_loading
                                                          : s.voltage;
        if (metric != "voltage")
          plot.add_box(evaldetail::box_of(d, name + " " + metric.substr(0, 5)));
        rows.push_back({d.min, d.q1, d.median, d.q3, d.max, d.mean});
      }
    }
    plot.add_hline(100.0, "limit");
    plot.write(dir / "fig_violations.svg");
    write_csv(dir / "fig_violations.csv",
              {"min", "q1", "median", "q3", "max", "mean"}, rows);
    files.push_back(dir / "fig_violations.svg");
    files.push_back(dir / "fig_violations.csv");
  }

  // --- figure 4: per-step time and objective distributions
  {
    SvgPlot plot("Per-step calculation time and objective", "",
                 "seconds / objective");
    std::vector<std::vector<double>> rows;
    for (const auto& name : std::vector<std::string>{"mpc", "npc"}) {
      const auto& s = report.controllers.at(name);
      plot.add_box(evaldetail::box_of(s.time, name + " time"));
      rows.push_back({s.time.min, s.time.q1, s.time.median, s.time.q3,
                      s.time.max, s.time.mean});
    }
    for (const auto& name :
         std::vector<std::string>{"baseline", "mpc", "npc"}) {
      const auto& s = report.controllers.at(name);
      rows.push_back({s.objective.min, s.objective.q1, s.objective.median,
                      s.objective.q3, s.objective.max, s.objective.mean});
    }
    plot.write(dir / "fig_time_objective.svg");
    write_csv(dir / "fig_time_objective.csv",
              {"min", "q1", "median", "q3", "max", "mean"}, rows);
    files.push_back(dir / "fig_time_objective.svg");
    files.push_back(dir / "fig_time_objective.csv");
  }
  return files;
}

}  // namespace gridflex
