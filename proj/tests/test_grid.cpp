#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "gridflex/bench.hpp"
#include "gridflex/grid.hpp"
#include "support/helpers.hpp"

using namespace gridflex;
using testsupport::TempDir;

TEST_CASE("two-bus network file round trip") {
  TempDir dir("grid");
  const Network net = testsupport::two_bus_net();
  const auto path = dir.path() / "net.json";
  save_network(net, path);
  const Network back = load_network(path);
  REQUIRE(back.n_buses() == 2);
  REQUIRE(back.n_branches() == 1);
  REQUIRE(back.buses[0].bus_type == BusType::slack);

  // bit-exact numeric fields
  CHECK(back.branches[0].y.real() == net.branches[0].y.real());
  CHECK(back.branches[0].y.imag() == net.branches[0].y.imag());
  CHECK(back.storages[0].e_max == net.storages[0].e_max);
  CHECK(back.v_base == net.v_base);

  // and a second save reproduces the file byte for byte
  const auto path2 = dir.path() / "net2.json";
  save_network(back, path2);
  std::ifstream a(path), b(path2);
  const std::string sa((std::istreambuf_iterator<char>(a)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("benchmark network file: 15 buses, radial, 5 storages") {
  TempDir dir("grid_bench");
  BenchSpec spec;
  spec.n_days = 1;  // network shape only
  const BenchResult r = generate(spec);
  const auto path = dir.path() / "grid.json";
  save_network(r.network, path);
  const Network net = load_network(path);
  CHECK(net.n_buses() == 15);
  CHECK(net.n_branches() == net.n_buses() - 1);  // radial
  CHECK(net.n_storages() == 5);
  CHECK(net.transformer_branch().s_rated > 0);
}

TEST_CASE("two slack buses rejected") {
  Network net = testsupport::two_bus_net();
  net.buses[1].bus_type = BusType::slack;
  REQUIRE_THROWS_AS(validate(net), ValidationError);
}

TEST_CASE("validation rejects broken fields") {
  {
    Network net = testsupport::two_bus_net();
    net.branches[0].y = 0.0;
    CHECK_THROWS_AS(validate(net), ValidationError);
  }
  {
    Network net = testsupport::two_bus_net();
    net.storages[0].e_init = 100.0;  // above the SoC cap
    CHECK_THROWS_AS(validate(net), ValidationError);
  }
  {
    Network net = testsupport::two_bus_net();
    net.buses[0].v_lb = 1.2;
    CHECK_THROWS_AS(validate(net), ValidationError);
  }
}

TEST_CASE("disconnected graph rejected") {
  Network net = testsupport::three_bus_net();
  net.branches.pop_back();  // bus 2 unreachable
  REQUIRE_THROWS_AS(validate(net), ValidationError);
}

TEST_CASE("series loading") {
  TempDir dir("series");
  const Network net = testsupport::two_bus_net();

  SECTION("all-zero CSV, 96 rows") {
    std::ofstream os(dir.path() / "s.csv");
    os << "0,1\n";
    for (int i = 0; i < 96; ++i) os << "0,0\n";
    os.close();
    const ScenarioSeries s = load_series(dir.path() / "s.csv", net);
    CHECK(s.n_steps == 96);
    CHECK(s.p_inj.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.q_inj.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("a year is 35040 steps") {
    std::ofstream os(dir.path() / "y.csv");
    os << "0,1\n";
    for (int i = 0; i < 365 * 96; ++i) os << "0,-1\n";
    os.close();
    const ScenarioSeries s = load_series(dir.path() / "y.csv", net);
    CHECK(s.n_steps == 35040);
    // kW to p.u. on the 100 kVA base
    CHECK(s.p_inj(0, 1) == Catch::Approx(-0.01));
    // reactive default: 0.95 inductive power factor
    CHECK(s.q_inj(0, 1) == Catch::Approx(-0.01 * kDefaultTanPhi));
    // generation component defaults to the positive part
    CHECK(s.p_gen(0, 1) == 0.0);
  }

  SECTION("missing bus column") {
    std::ofstream os(dir.path() / "bad.csv");
    os << "0\n0\n";
    os.close();
    CHECK_THROWS_AS(load_series(dir.path() / "bad.csv", net),
                    ValidationError);
  }

  SECTION("non-numeric cell") {
    std::ofstream os(dir.path() / "nan.csv");
    os << "0,1\n0,abc\n";
    os.close();
    CHECK_THROWS_AS(load_series(dir.path() / "nan.csv", net), ParseError);
  }
}

TEST_CASE("per-unit conversion") {
  CHECK(kw_to_pu(400.0, 400e3) == Catch::Approx(1.0));
  // Eq-style branch bound: 100 A, 400 V, |y| = 10, 400 kVA
  CHECK(current_limit_to_voltage_bound(100.0, 400.0, 400e3, 10.0) ==
        Catch::Approx(0.017320508).epsilon(1e-6));
  CHECK_THROWS_AS(power_to_pu(1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(current_base_amps(400.0, -1.0), ValidationError);
}

TEST_CASE("forecast window bounds checked") {
  const Network net = testsupport::two_bus_net();
  ScenarioSeries s;
  s.dt_hours = 0.25;
  s.n_steps = 10;
  s.p_inj = Eigen::MatrixXd::Zero(10, 2);
  s.q_inj = s.p_inj;
  s.p_gen = s.p_inj;
  CHECK(window(s, 2, 8).length() == 8);
  CHECK_THROWS_AS(window(s, 3, 8), ValidationError);
  (void)net;
}
