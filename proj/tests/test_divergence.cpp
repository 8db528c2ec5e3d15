#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scmrelax/divergence.hpp"
#include "scmrelax/error.hpp"
#include "test_util.hpp"

using namespace scmr;
using Eigen::VectorXd;

TEST(Divergence, L2Values) {
  const VectorXd w = VectorXd::Constant(4, 0.25);
  EXPECT_DOUBLE_EQ(divergence_value(Divergence::l2(), w), 0.25);
  const VectorXd g = divergence_gradient(Divergence::l2(), w);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g[i], 0.5);
}

TEST(Divergence, EntropyVertexIsZero) {
  EXPECT_DOUBLE_EQ(divergence_value(Divergence::entropy(), Eigen::Vector3d(1, 0, 0)), 0.0);
}

TEST(Divergence, ElRejectsZero) {
  try {
    divergence_value(Divergence::el(), Eigen::Vector2d(1, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomainViolation);
  }
}

TEST(Divergence, CressieReadLimits) {
  EXPECT_EQ(Divergence::cressie_read(0.0), Divergence::entropy());
  EXPECT_EQ(Divergence::cressie_read(-1.0), Divergence::el());
  EXPECT_EQ(Divergence::parse("cr:0"), Divergence::entropy());
  EXPECT_EQ(Divergence::parse("el"), Divergence::el());
  EXPECT_THROW(Divergence::parse("cr:2"), Error);
  EXPECT_THROW(Divergence::parse("bogus"), Error);
  // CR(1) is a shifted half of L2.
  const Divergence cr1 = Divergence::cressie_read(1.0);
  EXPECT_NEAR(cr1.value(0.3), (0.09 - 1.0) / 2.0, 1e-15);
}

TEST(Divergence, CressieReadApproachesEntropy) {
  // (x^{a+1} - 1) / (a (a + 1)) - (x - 1) / a -> x log x - x + 1 as a -> 0;
  // on the simplex the linear part is constant, so gradients differ by a
  // constant shift that vanishes in the comparison below.
  const Divergence near0 = Divergence::cressie_read(1e-6);
  const double x = 0.37;
  const double shifted = near0.derivative(x) - (near0.derivative(1.0));
  EXPECT_NEAR(shifted, std::log(x), 1e-5);
}

TEST(Divergence, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  const Divergence ds[] = {Divergence::l2(), Divergence::el(), Divergence::entropy(),
                           Divergence::cressie_read(0.5), Divergence::cressie_read(-0.5)};
  const double h = 1e-6;
  for (const Divergence& d : ds) {
    for (int rep = 0; rep < 20; ++rep) {
      // Central differences lose accuracy as x -> 0 for the singular members,
      // so the points are kept at least 0.1 from the boundary.
      const VectorXd w = (0.5 * fixtures::random_simplex(rng, 5).array() + 0.1).matrix();
      const VectorXd g = divergence_gradient(d, w);
      const VectorXd hd = divergence_hessian_diagonal(d, w);
      for (int i = 0; i < 5; ++i) {
        VectorXd up = w, dn = w;
        up[i] += h;
        dn[i] -= h;
        const double fd = (divergence_value(d, up) - divergence_value(d, dn)) / (2 * h);
        EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << d.name();
        const double fd2 = (d.derivative(w[i] + h) - d.derivative(w[i] - h)) / (2 * h);
        EXPECT_NEAR(hd[i], fd2, 1e-5 * std::max(1.0, std::abs(fd2))) << d.name();
      }
    }
  }
}

TEST(Divergence, StrictConvexity) {
  const Divergence ds[] = {Divergence::l2(), Divergence::el(), Divergence::entropy(),
                           Divergence::cressie_read(0.5), Divergence::cressie_read(-0.5)};
  for (const Divergence& d : ds) {
    for (double x : {1e-4, 0.01, 0.3, 0.9, 2.0}) EXPECT_GT(d.second_derivative(x), 0.0) << d.name();
  }
}
