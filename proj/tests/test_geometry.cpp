#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stifle_tpa/geometry.hpp"

using namespace stifle_tpa;

namespace {

CaseLandmarks make(Point2D e, Point2D t, Point2D d1, Point2D d2) {
  CaseLandmarks lm;
  lm.intercondylar_eminence = e;
  lm.talus_center = t;
  lm.mtpl_p1 = d1;
  lm.mtpl_p2 = d2;
  return lm;
}

Line2D line(double dx, double dy) { return Line2D{{0, 0}, Vec2{dx, dy}}; }

const double kC20 = std::cos(radians(20.0));
const double kS20 = std::sin(radians(20.0));

}  // namespace

TEST(Ftl, AxisAligned) {
  auto l = ftl(make({0, 0}, {0, 100}, {-10, 0}, {10, 0}));
  EXPECT_EQ(l.anchor, (Point2D{0, 0}));
  EXPECT_DOUBLE_EQ(l.direction.dx, 0.0);
  EXPECT_DOUBLE_EQ(l.direction.dy, 1.0);
}

TEST(Ftl, CoincidentPointsAreDegenerate) {
  try {
    ftl(make({3, 4}, {3, 4}, {-10, 0}, {10, 0}));
    FAIL() << "expected DegenerateGeometry";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateGeometry);
  }
}

TEST(Ftl, NormalizesThreeFourFive) {
  auto l = ftl(make({0, 0}, {30, 40}, {-10, 0}, {10, 0}));
  EXPECT_NEAR(l.direction.dx, 0.6, 1e-15);
  EXPECT_NEAR(l.direction.dy, 0.8, 1e-15);
  EXPECT_NEAR(std::hypot(l.direction.dx, l.direction.dy), 1.0, 1e-12);
}

TEST(Mtpl, Horizontal) {
  auto l = mtpl(make({0, 0}, {0, 100}, {-10, 0}, {10, 0}));
  EXPECT_EQ(l.anchor, (Point2D{-10, 0}));
  EXPECT_DOUBLE_EQ(l.direction.dx, 1.0);
  EXPECT_DOUBLE_EQ(l.direction.dy, 0.0);
}

TEST(Mtpl, CoincidentPointsAreDegenerate) {
  EXPECT_THROW(mtpl(make({0, 0}, {0, 100}, {0, 0}, {0, 0})), Error);
}

TEST(Mtpl, TwentyDegreeSlope) {
  auto l = mtpl(make({0, 0}, {0, 100}, {-9.397, -3.420}, {9.397, 3.420}));
  EXPECT_NEAR(l.direction.dx, kC20, 1e-3);
  EXPECT_NEAR(l.direction.dy, kS20, 1e-3);
}

TEST(Degeneracy, EpsilonScalesWithImageDiagonal) {
  // 1e-6 px apart: fine at diagonal 1, coincident at diagonal 5000.
  auto lm = make({0, 0}, {1e-6, 0}, {-10, 0}, {10, 0});
  EXPECT_NO_THROW(ftl(lm, 1.0));
  EXPECT_THROW(ftl(lm, 5000.0), Error);
  EXPECT_DOUBLE_EQ(degeneracy_epsilon(0.5), 1e-9);
  EXPECT_DOUBLE_EQ(degeneracy_epsilon(2000.0), 2e-6);
}

TEST(Degeneracy, NonFiniteLandmarkRejected) {
  auto lm = make({0, 0}, {NAN, 5}, {-10, 0}, {10, 0});
  try {
    ftl(lm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(Perpendicular, RotatesNinetyDegrees) {
  auto p = perpendicular_at(line(0, 1), {5, 5});
  EXPECT_EQ(p.anchor, (Point2D{5, 5}));
  EXPECT_DOUBLE_EQ(std::abs(p.direction.dx), 1.0);
  EXPECT_DOUBLE_EQ(p.direction.dy, 0.0);

  p = perpendicular_at(line(1, 0), {0, 0});
  EXPECT_DOUBLE_EQ(p.direction.dx, 0.0);
  EXPECT_DOUBLE_EQ(std::abs(p.direction.dy), 1.0);

  p = perpendicular_at(line(0.6, 0.8), {0, 0});
  EXPECT_NEAR(p.direction.dx, -0.8, 1e-15);
  EXPECT_NEAR(p.direction.dy, 0.6, 1e-15);
}

TEST(Perpendicular, DotProductIsZeroForRandomDirections) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi);
  for (int i = 0; i < 1000; ++i) {
    const double a = ang(rng);
    Line2D l{{0, 0}, {std::cos(a), std::sin(a)}};
    EXPECT_LT(std::abs(dot(l.direction, perpendicular_at(l, {1, 2}).direction)), 1e-12);
  }
}

TEST(AngleBetweenLines, Examples) {
  EXPECT_DOUBLE_EQ(angle_between_lines(line(0, 1), line(1, 0)), 90.0);
  EXPECT_DOUBLE_EQ(angle_between_lines(line(0, 1), line(0, -1)), 0.0);
  EXPECT_NEAR(angle_between_lines(line(0, 1), line(kC20, kS20)), 70.0, 1e-9);
}

TEST(AngleBetweenLines, SymmetricFlipInvariantAndBounded) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(-10, 10);
  for (int i = 0; i < 2000; ++i) {
    const double a = ang(rng), b = ang(rng);
    auto la = line(std::cos(a), std::sin(a));
    auto lb = line(std::cos(b), std::sin(b));
    auto lb_flip = line(-std::cos(b), -std::sin(b));
    const double v = angle_between_lines(la, lb);
    EXPECT_FALSE(std::isnan(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 90.0);
    EXPECT_DOUBLE_EQ(v, angle_between_lines(lb, la));
    EXPECT_NEAR(v, angle_between_lines(la, lb_flip), 1e-12);
    const double ref = oracle::line_angle_deg(0, 0, std::cos(a), std::sin(a), 0, 0, std::cos(b), std::sin(b));
    EXPECT_NEAR(v, ref, 1e-6);
  }
}

TEST(AngleBetweenLines, SlightlyNonUnitInputStaysInRange) {
  // |dot| a hair above 1 would make a bare acos return NaN.
  Line2D a{{0, 0}, {1.0 + 1e-15, 0}};
  Line2D b{{0, 0}, {1.0, 0}};
  EXPECT_EQ(angle_between_lines(a, b), 0.0);
}

TEST(ComputeTpa, Examples) {
  auto r = compute_tpa(make({0, 0}, {0, 100}, {-10, 0}, {10, 0}));
  EXPECT_NEAR(r.angle_deg, 0.0, 1e-12);
  EXPECT_EQ(r.range_class, RangeClass::BelowRange);

  r = compute_tpa(make({0, 0}, {0, 100}, {5, 0}, {5, 10}));
  EXPECT_NEAR(r.angle_deg, 90.0, 1e-12);
  EXPECT_TRUE(r.mtpl_parallel_to_ftl);

  r = compute_tpa(make({0, 0}, {0, 100}, {-10 * kC20, -10 * kS20}, {10 * kC20, 10 * kS20}));
  EXPECT_NEAR(r.angle_deg, 20.0, 1e-9);
  EXPECT_EQ(r.range_class, RangeClass::Normal);
  EXPECT_FALSE(r.mtpl_parallel_to_ftl);
  EXPECT_EQ(r.perpendicular.anchor, (Point2D{0, 0}));
}

TEST(ComputeTpa, PropagatesDegenerateMtpl) {
  try {
    compute_tpa(make({0, 0}, {0, 100}, {1, 1}, {1, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateGeometry);
  }
}

TEST(ComputeTpa, SwapInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1000);
  for (int i = 0; i < 500; ++i) {
    auto lm = make({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)});
    const double base = compute_tpa(lm).angle_deg;
    auto s1 = lm;
    std::swap(s1.mtpl_p1, s1.mtpl_p2);
    auto s2 = lm;
    std::swap(s2.intercondylar_eminence, s2.talus_center);
    EXPECT_NEAR(compute_tpa(s1).angle_deg, base, 1e-9);
    EXPECT_NEAR(compute_tpa(s2).angle_deg, base, 1e-9);
    EXPECT_NEAR(90.0 - angle_between_lines(ftl(lm), mtpl(lm)), base, 1e-9);
  }
}

TEST(Classify, PublishedMeasurements) {
  EXPECT_EQ(classify(20.537), RangeClass::Normal);
  EXPECT_EQ(classify(10.4), RangeClass::BelowRange);
  EXPECT_EQ(classify(6.53), RangeClass::BelowRange);
}

TEST(Classify, BoundariesAreInclusive) {
  EXPECT_EQ(classify(18.0), RangeClass::Normal);
  EXPECT_EQ(classify(25.0), RangeClass::Normal);
  EXPECT_EQ(classify(25.0001), RangeClass::AboveRange);
  EXPECT_EQ(classify(17.9999), RangeClass::BelowRange);
  EXPECT_EQ(classify(17.354, {17.0, 26.0}), RangeClass::Normal);
}

TEST(Classify, InvalidThresholds) {
  for (RangeThresholds t : {RangeThresholds{25, 18}, RangeThresholds{18, 18}, RangeThresholds{-1, 25},
                            RangeThresholds{18, 91}}) {
    try {
      classify(20.0, t);
      FAIL() << t.lower << " " << t.upper;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidThresholds);
    }
  }
}

TEST(Classify, AngleOutsideDomain) {
  EXPECT_THROW(classify(-0.1), Error);
  EXPECT_THROW(classify(90.5), Error);
  EXPECT_THROW(classify(NAN), Error);
}

TEST(Roles, NamesRoundTrip) {
  for (auto role : kAllRoles) EXPECT_EQ(role_from_string(to_string(role)), role);
  EXPECT_FALSE(role_from_string("Patella"));
}
