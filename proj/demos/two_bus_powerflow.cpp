// Smallest possible example: a slack bus feeding one load over a single
// cable, solved with the Newton-Raphson reference and with the flat-start
// linear model.

#include <complex>
#include <iostream>

#include "gridflex/grid.hpp"
#include "gridflex/linearizer.hpp"

using namespace gridflex;

int main() {
  Network net;
  net.v_base = 400.0;
  net.s_base = 100e3;
  net.slack_bus = 0;
  net.buses = {{0, BusType::slack, 0.95, 1.05}, {1, BusType::pq, 0.95, 1.05}};
  Branch line;
  line.from_bus = 0;
  line.to_bus = 1;
  line.y = 1.0 / std::complex<double>(0.01, 0.05);
  line.i_eff_max = 270.0;
  line.s_rated = 100e3;  // doubles as the coupling transformer here
  net.branches = {line};
  net.transformer = 0;
  validate(net);

  const LinearModel lm = linearize(net);
  Eigen::VectorXd p(2), q(2);
  p << 0.0, -0.3;  // 30 kW load
  q << 0.0, -0.1;

  const AcSolution ac = solve_ac(net, p, q);
  const LinearPrediction lp = predict(lm, p, q);

  std::cout << "AC:     v1 = " << ac.v(1) << " pu, slack p = " << ac.slack_p
            << " pu (" << ac.iterations << " Newton iterations)\n";
  std::cout << "linear: v1 = " << lp.v(1) << " pu, slack p = " << lp.slack_p
            << " pu\n";
  std::cout << "branch current " << branch_current(ac, net.branches[0])
            << " pu\n";
  return 0;
}
