#include <doctest.h>

#include "helpers.hpp"

using namespace carbonmkt;
using testutil::table2;

TEST_CASE("time grid construction and node lookup") {
  const TimeGrid g = TimeGrid::make(5.0, 1e-2);
  CHECK(g.n == 501);
  CHECK(g.steps() == 500);
  CHECK(g.t(0) == 0.0);
  CHECK(g.t(500) == doctest::Approx(5.0));
  CHECK(g.node_of(0.0) == 0);
  CHECK(g.node_of(2.5) == 250);
  CHECK(g.node_of(2.505) == -1);
  CHECK(g.node_of(-1.0) == -1);
  CHECK_THROWS_AS(TimeGrid::make(-1.0, 0.1), StructuralError);
  CHECK_THROWS_AS(TimeGrid::make(1.0, 0.0), StructuralError);
  CHECK_THROWS_AS(TimeGrid::make(1.0, 0.3), StructuralError);
}

TEST_CASE("zero spec has consistent shapes and passes wellformedness") {
  const TimeGrid g = testutil::grid(1.0, 0.1);
  GeneralLQSpec s = GeneralLQSpec::zero(2, 2, 3, 4, g);
  CHECK(s.A.rows() == 2);
  CHECK(s.B.cols() == 4);
  CHECK(static_cast<int>(s.C.size()) == 3);
  CHECK(static_cast<int>(s.F.size()) == 2);
  CHECK(s.r.rows() == 4);
  CHECK(s.r.cols() == g.n);
  CHECK_NOTHROW(s.ensure_wellformed());

  s.H(0, 1) = 1.0;  // break symmetry
  CHECK_THROWS_AS(s.ensure_wellformed(), StructuralError);
}

TEST_CASE("control-problem assumption validator on the cap-and-trade data") {
  const TimeGrid g = testutil::grid();
  const GeneralLQSpec spec = testutil::carbon_endogenous(table2(), g);
  const AssumptionReport rep = validate_mfc_assumptions(spec);
  CHECK(rep.pass());
  CHECK(rep.items.size() == 7);
  for (const auto& item : rep.items) CHECK(item.pass);
}

TEST_CASE("validator flags zero R and nonzero S") {
  const TimeGrid g = testutil::grid(1.0, 0.1);
  GeneralLQSpec s = GeneralLQSpec::zero(2, 1, 1, 2, g);

  SUBCASE("R = 0 fails the eigenvalue item with margin -delta2") {
    const double delta2 = 1e-12;
    const AssumptionReport rep = validate_mfc_assumptions(s, 0.0, delta2);
    CHECK_FALSE(rep.pass());
    CHECK(rep.items[4].pass == false);
    CHECK(rep.items[4].margin == doctest::Approx(-delta2));
  }

  SUBCASE("S nonzero with delta1 = 0 fails the cross-term item") {
    s.R = Eigen::MatrixXd::Identity(2, 2);
    s.S(0, 0) = 0.5;
    const AssumptionReport rep = validate_mfc_assumptions(s, 0.0, 1e-12);
    CHECK_FALSE(rep.pass());
    CHECK(rep.items[6].pass == false);
  }
}

TEST_CASE("game-problem validator mirrors the control one") {
  const TimeGrid g = testutil::grid();
  const GeneralLQSpec spec = testutil::carbon_endogenous(table2(), g);
  CHECK(validate_mfg_assumptions(spec).pass());

  GeneralLQSpec s = GeneralLQSpec::zero(2, 1, 1, 2, g);
  s.R = Eigen::MatrixXd::Identity(2, 2);
  s.H << 1.0, 0.0, 0.0, -1.0;  // negative eigenvalue
  const AssumptionReport rep = validate_mfg_assumptions(s);
  CHECK_FALSE(rep.pass());
  CHECK(rep.items[4].pass == false);
}

TEST_CASE("coefficient snapshot interpolation") {
  const TimeGrid g = testutil::grid(5.0, 1e-2);
  const GeneralLQSpec spec = testutil::carbon_endogenous(table2(), g);

  SUBCASE("allowance schedule at the horizon") {
    const CoefficientSnapshot snap = coeff_at(spec, 5.0);
    CHECK(snap.A0(0) == 0.0);
    CHECK(snap.A0(1) == doctest::Approx(0.1).epsilon(1e-12));  // 0.5 / T
  }

  SUBCASE("grid nodes reproduce stored columns bitwise") {
    for (int k : {0, 17, g.n - 1}) {
      const CoefficientSnapshot snap = coeff_at(spec, g.t(k));
      CHECK((snap.A0 - spec.A0.col(k)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((snap.r - spec.r.col(k)).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("constant matrices returned as stored") {
    const CoefficientSnapshot snap = coeff_at(spec, 0.0);
    CHECK((snap.A - spec.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((snap.R - spec.R).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("midpoint of a linear schedule is the node average") {
    GeneralLQSpec s = GeneralLQSpec::zero(1, 1, 1, 1, g);
    for (int k = 0; k < g.n; ++k) s.A0(0, k) = 2.0 * g.t(k) + 1.0;
    const double tm = g.t(3) + 0.5 * g.dt;
    const Eigen::VectorXd mid = schedule_at(s.A0, g, tm);
    CHECK(mid(0) == doctest::Approx(0.5 * (s.A0(0, 3) + s.A0(0, 4))).epsilon(1e-14));
  }

  SUBCASE("queries outside the horizon are range errors") {
    CHECK_THROWS_AS(coeff_at(spec, -0.1), RangeError);
    CHECK_THROWS_AS(coeff_at(spec, 5.1), RangeError);
  }
}

TEST_CASE("cost matrices stay exactly symmetric after construction") {
  const TimeGrid g = testutil::grid();
  const GeneralLQSpec s = testutil::carbon_endogenous(table2(), g);
  CHECK((s.Q - s.Q.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.Qbar - s.Qbar.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.R - s.R.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.H - s.H.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("R is invertible whenever the validator passes with positive delta2") {
  const TimeGrid g = testutil::grid();
  const GeneralLQSpec s = testutil::carbon_endogenous(table2(), g);
  const double delta2 = 1.0 / (2.0 * table2().nu);
  CHECK(validate_mfc_assumptions(s, 0.0, delta2).pass());
  const Eigen::MatrixXd Rinv = s.R.inverse();
  CHECK((s.R * Rinv - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  // Operator norm bound ||R^-1|| <= 1/delta2.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Rinv);
  CHECK(svd.singularValues()(0) <= 1.0 / delta2 + 1e-9);
}
