#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflex/csv.hpp"
#include "gridflex/errors.hpp"

namespace gridflex {

enum class BusType { slack, pq };

struct Bus {
  int id = 0;
  BusType bus_type = BusType::pq;
  double v_lb = 0.95;  // p.u.
  double v_ub = 1.05;  // p.u.
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  std::complex<double> y;     // series admittance, p.u.
  double i_eff_max = 0.0;     // amperes
  double s_rated = 0.0;       // VA; transformer only, 0 for lines
};

struct Storage {
  int bus = 0;
  double e_max = 0.0;         // kWh
  double p_max = 0.0;         // kW
  double mu_sd = 0.0;         // self-discharge per hour
  double soc_frac_max = 0.8;  // usable SoC cap
  double e_init = 0.0;        // kWh
};

// Electrical network: the single source of truth for dimensions and bases.
// Immutable after load; safe to share across threads.
struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  int transformer = 0;  // index into branches; the slack-side coupling
  std::vector<Storage> storages;
  int slack_bus = 0;
  double v_base = 400.0;     // V
  double s_base = 100000.0;  // VA

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  int n_storages() const { return static_cast<int>(storages.size()); }
  const Branch& transformer_branch() const { return branches[transformer]; }
};

// ---------------------------------------------------------------------------
// per-unit conversion (physical units live only at this boundary)

inline double power_to_pu(double watts, double s_base) {
  if (s_base <= 0.0) throw ValidationError("per-unit: s_base must be > 0");
  return watts / s_base;
}

inline double kw_to_pu(double kw, double s_base) {
  return power_to_pu(kw * 1e3, s_base);
}

inline double pu_to_kw(double pu, double s_base) { return pu * s_base / 1e3; }

// Energy base is s_base acting for one hour, so the storage recurrence keeps
// its form in p.u. (dt in hours).
inline double kwh_to_pu(double kwh, double s_base) {
  if (s_base <= 0.0) throw ValidationError("per-unit: s_base must be > 0");
  return kwh * 1e3 / s_base;
}

inline double pu_to_kwh(double pu, double s_base) { return pu * s_base / 1e3; }

// Three-phase current base in amperes.
inline double current_base_amps(double v_base, double s_base) {
  if (v_base <= 0.0 || s_base <= 0.0)
    throw ValidationError("per-unit: bases must be > 0");
  return s_base / (std::sqrt(3.0) * v_base);
}

inline double current_to_pu(double amps, double v_base, double s_base) {
  return amps / current_base_amps(v_base, s_base);
}

// Voltage-difference bound equivalent to a branch ampacity:
//   i_eff_max * sqrt(3) * V_b / (|y| * S_b)
// i.e. the per-unit current limit divided by |y|.
inline double current_limit_to_voltage_bound(double i_eff_max_amps,
                                             double v_base, double s_base,
                                             double y_abs_pu) {
  if (y_abs_pu <= 0.0)
    throw ValidationError("per-unit: branch admittance must be nonzero");
  return i_eff_max_amps * std::sqrt(3.0) * v_base / (y_abs_pu * s_base);
}

// ---------------------------------------------------------------------------
// validation

namespace detail {

inline void check_connected(const Network& net) {
  const int n = net.n_buses();
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : net.branches) {
    adj[br.from_bus].push_back(br.to_bus);
    adj[br.to_bus].push_back(br.from_bus);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{net.slack_bus};
  seen[net.slack_bus] = 1;
  while (!stack.empty()) {
    const int b = stack.back();
    stack.pop_back();
    for (int nb : adj[b]) {
      if (!seen[nb]) {
        seen[nb] = 1;
        stack.push_back(nb);
      }
    }
  }
  if (std::count(seen.begin(), seen.end(), 1) != n)
    throw ValidationError("network: branch graph is not connected");
}

}  // namespace detail

inline void validate(const Network& net) {
  const int n = net.n_buses();
  if (n < 2) throw ValidationError("network: needs at least two buses");
  int n_slack = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses[i];
    if (b.id != i)
      throw ValidationError("network: bus ids must be 0..n-1 in order");
    if (b.bus_type == BusType::slack) ++n_slack;
    if (!(b.v_lb < b.v_ub))
      throw ValidationError("network: bus " + std::to_string(i) +
                            " violates v_lb < v_ub");
  }
  if (n_slack != 1)
    throw ValidationError("network: exactly one slack bus required, got " +
                          std::to_string(n_slack));
  if (net.buses[net.slack_bus].bus_type != BusType::slack)
    throw ValidationError("network: slack_bus index does not mark a slack bus");
  if (net.v_base <= 0.0 || net.s_base <= 0.0)
    throw ValidationError("network: bases must be positive");

  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const Branch& br = net.branches[k];
    if (br.from_bus == br.to_bus)
      throw ValidationError("network: branch " + std::to_string(k) +
                            " is a self-loop");
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw ValidationError("network: branch " + std::to_string(k) +
                            " references a missing bus");
    if (!std::isfinite(br.y.real()) || !std::isfinite(br.y.imag()) ||
        std::abs(br.y) == 0.0)
      throw ValidationError("network: branch " + std::to_string(k) +
                            " admittance must be finite and nonzero");
    if (br.i_eff_max <= 0.0)
      throw ValidationError("network: branch " + std::to_string(k) +
                            " needs i_eff_max > 0");
  }
  if (net.transformer < 0 || net.transformer >= net.n_branches())
    throw ValidationError("network: transformer index out of range");
  {
    const Branch& t = net.transformer_branch();
    if (t.from_bus != net.slack_bus && t.to_bus != net.slack_bus)
      throw ValidationError("network: transformer must couple the slack bus");
    if (t.s_rated <= 0.0)
      throw ValidationError("network: transformer needs s_rated > 0");
  }
  for (std::size_t k = 0; k < net.storages.size(); ++k) {
    const Storage& s = net.storages[k];
    if (s.bus < 0 || s.bus >= n || s.bus == net.slack_bus)
      throw ValidationError("network: storage " + std::to_string(k) +
                            " must sit on a non-slack bus");
    if (s.p_max <= 0.0)
      throw ValidationError("network: storage " + std::to_string(k) +
                            " needs p_max > 0");
    if (s.e_max <= 0.0 || s.soc_frac_max <= 0.0 || s.soc_frac_max > 1.0)
      throw ValidationError("network: storage " + std::to_string(k) +
                            " has invalid capacity limits");
    if (s.e_init < 0.0 || s.e_init > s.soc_frac_max * s.e_max)
      throw ValidationError("network: storage " + std::to_string(k) +
                            " e_init outside [0, soc_frac_max*e_max]");
    if (s.mu_sd < 0.0)
      throw ValidationError("network: storage " + std::to_string(k) +
                            " self-discharge must be >= 0");
  }
  detail::check_connected(net);
}

// ---------------------------------------------------------------------------
// network file format (JSON-shaped; see README for the schema)

inline Network network_from_json(const nlohmann::json& j) {
  Network net;
  try {
    const auto& bases = j.at("bases");
    net.v_base = bases.at("v_base").get<double>();
    net.s_base = bases.at("s_base").get<double>();
    net.slack_bus = j.at("slack_bus").get<int>();
    net.transformer = j.at("transformer").get<int>();
    for (const auto& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      const auto type = jb.at("bus_type").get<std::string>();
      if (type == "slack")
        b.bus_type = BusType::slack;
      else if (type == "PQ")
        b.bus_type = BusType::pq;
      else
        throw ParseError("network: unknown bus_type '" + type + "'");
      b.v_lb = jb.at("v_lb").get<double>();
      b.v_ub = jb.at("v_ub").get<double>();
      net.buses.push_back(b);
    }
    for (const auto& jb : j.at("branches")) {
      Branch br;
      br.from_bus = jb.at("from_bus").get<int>();
      br.to_bus = jb.at("to_bus").get<int>();
      br.y = {jb.at("y").at(0).get<double>(), jb.at("y").at(1).get<double>()};
      br.i_eff_max = jb.at("i_eff_max").get<double>();
      br.s_rated = jb.value("s_rated", 0.0);
      net.branches.push_back(br);
    }
    for (const auto& js : j.at("storages")) {
      Storage s;
      s.bus = js.at("bus").get<int>();
      s.e_max = js.at("e_max").get<double>();
      s.p_max = js.at("p_max").get<double>();
      s.mu_sd = js.at("mu_sd").get<double>();
      s.soc_frac_max = js.value("soc_frac_max", 0.8);
      s.e_init = js.at("e_init").get<double>();
      net.storages.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network: ") + e.what());
  }
  validate(net);
  return net;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["bases"] = {{"v_base", net.v_base}, {"s_base", net.s_base}};
  j["slack_bus"] = net.slack_bus;
  j["transformer"] = net.transformer;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : net.buses) {
    j["buses"].push_back(
        {{"id", b.id},
         {"bus_type", b.bus_type == BusType::slack ? "slack" : "PQ"},
         {"v_lb", b.v_lb},
         {"v_ub", b.v_ub}});
  }
  j["branches"] = nlohmann::json::array();
  for (const auto& br : net.branches) {
    j["branches"].push_back({{"from_bus", br.from_bus},
                             {"to_bus", br.to_bus},
                             {"y", {br.y.real(), br.y.imag()}},
                             {"i_eff_max", br.i_eff_max},
                             {"s_rated", br.s_rated}});
  }
  j["storages"] = nlohmann::json::array();
  for (const auto& s : net.storages) {
    j["storages"].push_back({{"bus", s.bus},
                             {"e_max", s.e_max},
                             {"p_max", s.p_max},
                             {"mu_sd", s.mu_sd},
                             {"soc_frac_max", s.soc_frac_max},
                             {"e_init", s.e_init}});
  }
  return j;
}

inline Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("network: " + path.string() + ": " + e.what());
  }
  return network_from_json(j);
}

inline void save_network(const Network& net,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << network_to_json(net).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// scenario time series

// Per-bus injection forecasts on a fixed time grid, p.u., generation
// positive / consumption negative. p_gen carries the generation component
// separately when known (it feeds the imitation features); if a source file
// does not provide it, the positive part of the net injection is used.
struct ScenarioSeries {
  double dt_hours = 0.25;
  long n_steps = 0;
  Eigen::MatrixXd p_inj;  // n_steps x n_buses, p.u.
  Eigen::MatrixXd q_inj;  // n_steps x n_buses, p.u.
  Eigen::MatrixXd p_gen;  // n_steps x n_buses, p.u., >= 0
};

// Fixed 0.95 inductive power factor for the reactive default.
inline constexpr double kDefaultTanPhi = 0.32868480260786335;  // tan(acos(.95))

inline ScenarioSeries load_series(
    const std::filesystem::path& path, const Network& net,
    const std::optional<std::filesystem::path>& kvar_path = std::nullopt,
    const std::optional<std::filesystem::path>& gen_path = std::nullopt,
    double dt_hours = 0.25) {
  const CsvTable t = read_csv(path);
  const int n = net.n_buses();
  if (static_cast<int>(t.n_cols()) != n)
    throw ValidationError("series: " + std::to_string(t.n_cols()) +
                          " bus columns, network has " + std::to_string(n));
  for (int c = 0; c < n; ++c) {
    if (t.header[c] != std::to_string(net.buses[c].id))
      throw ValidationError("series: column " + std::to_string(c) +
                            " is '" + t.header[c] + "', expected bus id " +
                            std::to_string(net.buses[c].id));
  }
  if (t.n_rows() == 0) throw ValidationError("series: no data rows");
  if (dt_hours <= 0.0) throw ValidationError("series: dt_hours must be > 0");

  ScenarioSeries s;
  s.dt_hours = dt_hours;
  s.n_steps = static_cast<long>(t.n_rows());
  s.p_inj.resize(s.n_steps, n);
  for (long r = 0; r < s.n_steps; ++r)
    for (int c = 0; c < n; ++c)
      s.p_inj(r, c) = kw_to_pu(t.rows[r][c], net.s_base);

  auto read_parallel = [&](const std::filesystem::path& p) {
    const CsvTable u = read_csv(p);
    if (u.n_cols() != t.n_cols() || u.n_rows() != t.n_rows())
      throw ValidationError("series: " + p.string() +
                            " does not match the main series shape");
    Eigen::MatrixXd m(s.n_steps, n);
    for (long r = 0; r < s.n_steps; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = kw_to_pu(u.rows[r][c], net.s_base);
    return m;
  };

  s.q_inj = kvar_path ? read_parallel(*kvar_path)
                      : Eigen::MatrixXd(s.p_inj * kDefaultTanPhi);
  s.p_gen = gen_path ? read_parallel(*gen_path)
                     : Eigen::MatrixXd(s.p_inj.cwiseMax(0.0));
  if (!s.p_inj.allFinite() || !s.q_inj.allFinite() || !s.p_gen.allFinite())
    throw ValidationError("series: non-finite values");
  return s;
}

inline void save_series(const ScenarioSeries& s, const Network& net,
                        const std::filesystem::path& p_path,
                        const std::optional<std::filesystem::path>& q_path =
                            std::nullopt,
                        const std::optional<std::filesystem::path>& gen_path =
                            std::nullopt) {
  std::vector<std::string> header;
  for (const auto& b : net.buses) header.push_back(std::to_string(b.id));
  auto dump = [&](const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::vector<std::vector<double>> rows(m.rows());
    for (long r = 0; r < m.rows(); ++r) {
      rows[r].resize(m.cols());
      for (int c = 0; c < m.cols(); ++c)
        rows[r][c] = pu_to_kw(m(r, c), net.s_base);
    }
    write_csv(path, header, rows);
  };
  dump(s.p_inj, p_path);
  if (q_path) dump(s.q_inj, *q_path);
  if (gen_path) dump(s.p_gen, *gen_path);
}

// A contiguous forecast slice [start, start+n) viewed by the controllers.
struct ForecastWindow {
  long start = 0;
  Eigen::MatrixXd p_inj;  // n x n_buses
  Eigen::MatrixXd q_inj;
  Eigen::MatrixXd p_gen;

  long length() const { return p_inj.rows(); }
};

inline ForecastWindow window(const ScenarioSeries& s, long start, long n) {
  if (start < 0 || start + n > s.n_steps)
    throw ValidationError("series: window [" + std::to_string(start) + ", " +
                          std::to_string(start + n) + ") outside 0.." +
                          std::to_string(s.n_steps));
  ForecastWindow w;
  w.start = start;
  w.p_inj = s.p_inj.middleRows(start, n);
  w.q_inj = s.q_inj.middleRows(start, n);
  w.p_gen = s.p_gen.middleRows(start, n);
  return w;
}

}  // namespace gridflex
