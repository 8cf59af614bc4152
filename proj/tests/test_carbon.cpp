#include <doctest.h>

#include "helpers.hpp"

using namespace carbonmkt;
using testutil::table2;

TEST_CASE("baseline parameters and derived quantities") {
  const CarbonParams p = table2();
  CHECK(p.x_tilde0() == doctest::Approx(-3.9));
  CHECK_NOTHROW(p.validate());

  const TimeGrid g = testutil::grid();
  const GeneralLQSpec s = testutil::carbon_endogenous(p, g);
  CHECK(s.R(0, 0) == p.c12);
  CHECK(s.R(1, 1) == p.c22);
  CHECK(s.R(2, 2) == doctest::Approx(1.0 / (2.0 * p.eta)));
  CHECK(s.R(3, 3) == doctest::Approx(1.0 / (2.0 * p.nu)));
  CHECK(s.rtilde(0) == p.c11 / 2.0);
  CHECK(s.rtilde(1) == p.c21 / 2.0);
  CHECK(s.rtilde(2) == p.h / 2.0);
  CHECK(s.rtilde(3) == 0.0);
  CHECK(s.A(0, 0) == -p.delta);
  CHECK(s.A0(1, 0) == doctest::Approx(0.1));  // 0.5 / T at the default horizon
}

TEST_CASE("zero competition removes the mean cost block") {
  CarbonParams p = table2();
  p.gamma = 0.0;
  const TimeGrid g = testutil::grid(1.0, 0.1);
  const GeneralLQSpec s = testutil::carbon_endogenous(p, g);
  CHECK(s.Qbar.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.Q(0, 0) == doctest::Approx(p.b * p.A_k * p.A_k));
}

TEST_CASE("parameter validation rejects out-of-range values") {
  CarbonParams p = table2();
  p.nu = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = table2();
  p.gamma = 1.5;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = table2();
  p.T = 0.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = table2();
  p.rho = -0.1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("build_spec schedule plumbing") {
  const TimeGrid g = testutil::grid(1.0, 0.1);
  CarbonParams p = table2();

  SUBCASE("exogenous variant requires a price schedule") {
    CHECK_THROWS_AS(build_spec(p, g, Variant::exogenous), ConfigError);
  }

  SUBCASE("endogenous variant rejects a price schedule") {
    const Eigen::VectorXd price = Eigen::VectorXd::Zero(g.n);
    CHECK_THROWS_AS(build_spec(p, g, Variant::endogenous, &price), ConfigError);
  }

  SUBCASE("price schedule length must match the grid") {
    const Eigen::VectorXd price = Eigen::VectorXd::Zero(g.n - 1);
    CHECK_THROWS_AS(build_spec(p, g, Variant::exogenous, &price), ConfigError);
  }

  SUBCASE("allowance schedule fills the drift row") {
    p.atilde_schedule = Eigen::VectorXd::LinSpaced(g.n, 0.2, 0.4);
    const GeneralLQSpec s = build_spec(p, g, Variant::endogenous);
    CHECK(s.A0(1, 0) == 0.2);
    CHECK(s.A0(1, g.n - 1) == 0.4);
    CHECK(s.A0.row(0).cwiseAbs().maxCoeff() == 0.0);

    p.atilde_schedule = Eigen::VectorXd::Zero(g.n + 3);
    CHECK_THROWS_AS(build_spec(p, g, Variant::endogenous), ConfigError);
  }
}

TEST_CASE("well-posedness conditions at the baseline and a failing case") {
  const Wellposedness w = check_wellposedness(table2());
  CHECK(w.pass);
  CHECK(w.cond1 == doctest::Approx(5.7225).epsilon(1e-9));
  CHECK(w.cond2 == doctest::Approx(284.135).epsilon(1e-9));

  CarbonParams p = table2();
  p.kappa_e = 100.0;
  CHECK_FALSE(check_wellposedness(p).pass);
}

TEST_CASE("inverse demand") {
  CarbonParams p = table2();
  SUBCASE("no competition uses only own capital") {
    p.gamma = 0.0;
    CHECK(inverse_demand(30.0, 999.0, p) == doctest::Approx(50.0 - 0.14 * 30.0));
  }
  SUBCASE("full competition uses only the mean") {
    p.gamma = 1.0;
    CHECK(inverse_demand(999.0, 30.0, p) == doctest::Approx(50.0 - 0.14 * 30.0));
  }
  SUBCASE("at the mean the value is gamma-independent") {
    for (double gm : {0.0, 0.3, 1.0}) {
      p.gamma = gm;
      CHECK(inverse_demand(30.0, 30.0, p) == doctest::Approx(45.8));
    }
  }
}

TEST_CASE("adjoint-to-control coupling") {
  const CarbonParams p = table2();
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();

  SUBCASE("zero adjoint gives the pure cost-offset controls") {
    const Controls c = coupling_controls(zero, zero, std::nullopt, p,
                                         Variant::endogenous);
    CHECK(c.Kf == doctest::Approx(-p.c11 / (2.0 * p.c12)));
    CHECK(c.Kg == doctest::Approx(-p.c21 / (2.0 * p.c22)));
    CHECK(c.alpha == doctest::Approx(-p.eta * p.h));
    CHECK(c.beta == 0.0);

    const Controls cx = coupling_controls(zero, zero, 10.0, p, Variant::exogenous);
    CHECK(cx.beta == doctest::Approx(-p.nu * 10.0));
  }

  SUBCASE("matches -R^-1 (B^T y + rtilde + D ybar) in the endogenous variant") {
    const TimeGrid g = testutil::grid(1.0, 0.1);
    const GeneralLQSpec s = testutil::carbon_endogenous(p, g);
    const Eigen::Vector2d y(0.7, -1.3), yb(0.2, 0.4);
    const Eigen::Vector4d v =
        coupling_controls(y, yb, std::nullopt, p, Variant::endogenous).vec();
    const Eigen::Vector4d expect =
        -s.R.inverse() * (s.B.transpose() * y + s.rtilde + s.Dmkt * yb);
    CHECK((v - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("matches -R^-1 (B^T y + r) in the exogenous variant") {
    const TimeGrid g = testutil::grid(1.0, 0.1);
    Eigen::VectorXd price;
    const double omega = 25.0;
    const GeneralLQSpec s = testutil::carbon_exogenous(p, g, price, omega);
    const Eigen::Vector2d y(0.7, -1.3);
    const Eigen::Vector4d v =
        coupling_controls(y, y, omega, p, Variant::exogenous).vec();
    const Eigen::Vector4d expect =
        -s.R.inverse() * (s.B.transpose() * y + s.r.col(0));
    CHECK((v - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("no trading at the conditional mean") {
    const Eigen::Vector2d y(0.7, -1.3);
    const Controls c = coupling_controls(y, y, std::nullopt, p, Variant::endogenous);
    CHECK(c.beta == 0.0);
  }

  SUBCASE("abatement satisfies the marginal-cost identity") {
    const Eigen::Vector2d y(0.0, 3.25);
    const Controls c = coupling_controls(y, y, std::nullopt, p, Variant::endogenous);
    CHECK(c.alpha / p.eta + p.h == doctest::Approx(-2.0 * y(1)));
  }

  SUBCASE("the map is affine in the adjoint") {
    const Eigen::Vector2d y1(0.7, -1.3), y2(-0.4, 2.1), yb(0.2, 0.4);
    auto at = [&](const Eigen::Vector2d& y) {
      return coupling_controls(y, yb, std::nullopt, p, Variant::endogenous).vec();
    };
    const Eigen::Vector4d lhs = at(y1 + y2) + at(Eigen::Vector2d::Zero());
    const Eigen::Vector4d rhs = at(y1) + at(y2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("the exogenous variant requires the permit price") {
    CHECK_THROWS_AS(coupling_controls(zero, zero, std::nullopt, p,
                                      Variant::exogenous),
                    ConfigError);
  }
}

TEST_CASE("running cost") {
  const CarbonParams p = table2();

  SUBCASE("vanishes with zero controls and zero capital") {
    const Eigen::Vector2d x(0.0, -3.9), xb(0.0, 1.0);
    CHECK(running_cost(x, xb, Controls{}, 25.0, p, CostMode::NE) == 0.0);
    CHECK(running_cost(x, xb, Controls{}, 25.0, p, CostMode::LQ) == 0.0);
  }

  SUBCASE("NE and LQ modes differ by the revenue on the deviation") {
    const Eigen::Vector2d x(33.0, -2.0), xb(30.0, -3.9);
    const Controls v{1.0, 0.5, -10.0, 2.0};
    const double ne = running_cost(x, xb, v, 25.0, p, CostMode::NE);
    const double lq = running_cost(x, xb, v, 25.0, p, CostMode::LQ);
    const double price = inverse_demand(x(0), xb(0), p);
    CHECK(ne - lq == doctest::Approx(-price * p.A_k * (x(0) - xb(0))));
  }

  SUBCASE("matches the itemized economic terms") {
    const Eigen::Vector2d x(30.0, -3.9), xb(28.0, 0.0);
    const Controls v{1.0, 0.5, -10.0, 2.0};
    const double omega = 25.0;
    const double revenue = inverse_demand(x(0), xb(0), p) * p.A_k * x(0);
    const double capital = p.c11 * v.Kf + p.c12 * v.Kf * v.Kf + p.c21 * v.Kg +
                           p.c22 * v.Kg * v.Kg;
    const double abatement = p.h * v.alpha + v.alpha * v.alpha / (2.0 * p.eta);
    const double trading = omega * v.beta + v.beta * v.beta / (2.0 * p.nu);
    CHECK(running_cost(x, xb, v, omega, p, CostMode::NE) ==
          doctest::Approx(-revenue + capital + abatement + trading).epsilon(1e-12));
  }
}
