#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "test_util.hpp"

using namespace twoscale;
using tst::random_hurwitz;
using tst::random_stochastic;

namespace {

// Row-major vectorisation: vec(A^T Q) = (A^T (x) I) vec(Q), vec(Q A) = (I (x) A^T) vec(Q).
Mat kron_lyapunov_oracle(const Mat& A) {
  const int d = static_cast<int>(A.rows());
  Mat K = Mat::Zero(d * d, d * d);
  const Mat At = A.transpose();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        K(i * d + j, k * d + j) += At(i, k);  // (A^T Q)_{ij} = sum_k A^T_{ik} Q_{kj}
        K(i * d + j, i * d + k) += A(k, j);   // (Q A)_{ij} = sum_k Q_{ik} A_{kj}
      }
  Vec rhs(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) rhs(i * d + j) = i == j ? 1.0 : 0.0;
  Vec q = K.householderQr().solve(rhs);
  Mat Q(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) Q(i, j) = q(i * d + j);
  return Q;
}

}  // namespace

TEST(Lyapunov, ScalarAndDiagonal) {
  Mat A(1, 1);
  A << 1.0;
  EXPECT_NEAR(solve_lyapunov(A)(0, 0), 0.5, 1e-15);
  Mat D = Vec(Eigen::Vector2d(2.0, 3.0)).asDiagonal();
  Mat Q = solve_lyapunov(D);
  EXPECT_NEAR(Q(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(Q(1, 1), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(Q(0, 1), 0.0, 1e-15);
}

TEST(Lyapunov, UpperTriangularHandSolution) {
  Mat A(2, 2);
  A << 2, 1, 0, 3;
  Mat Q = solve_lyapunov(A);
  EXPECT_NEAR(Q(0, 0), 1.0 / 4.0, 1e-14);
  EXPECT_NEAR(Q(0, 1), -1.0 / 20.0, 1e-14);
  EXPECT_NEAR(Q(1, 0), -1.0 / 20.0, 1e-14);
  EXPECT_NEAR(Q(1, 1), 11.0 / 60.0, 1e-14);
}

TEST(Lyapunov, ResidualAcrossRandomHurwitzDraws) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + t % 8;
    Mat A = random_hurwitz(rng, d);
    Mat Q = solve_lyapunov(A);
    EXPECT_LE(lyapunov_residual(A, Q), 1e-10 * d);
    EXPECT_LE((Q - Q.transpose()).norm(), 1e-12);
    EXPECT_GT(sym_eigenvalues(Q).minCoeff(), 0.0);
    EXPECT_LE((Q - kron_lyapunov_oracle(A)).norm(), 1e-9 * Q.norm());
  }
}

TEST(Lyapunov, RejectsNonHurwitz) {
  Mat A(2, 2);
  A << 1, 0, 0, -0.5;
  EXPECT_THROW(solve_lyapunov(A), NotHurwitz);
  Mat Z = Mat::Zero(2, 2);
  EXPECT_THROW(solve_lyapunov(Z), NotHurwitz);
}

TEST(Certificate, Fields) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    Mat A = random_hurwitz(rng, 4);
    LyapunovCertificate c = make_certificate(A);
    EXPECT_DOUBLE_EQ(c.a, 1.0 / (2.0 * c.q_norm * c.q_norm));
    EXPECT_NEAR(c.q_norm, spectral_norm(c.Q), 1e-12 * c.q_norm);
    EXPECT_GE(c.p, 1.0);
    EXPECT_GT(c.step_cap, 0.0);
  }
}

TEST(WeightedNorm, MatchesGeneralizedEigenvalueOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const int p = 1 + t % 4, q = 1 + (t / 4) % 4;
    Mat M(q, p), X(p, p), Y(q, q);
    for (auto* m : {&M, &X, &Y})
      for (int i = 0; i < m->rows(); ++i)
        for (int j = 0; j < m->cols(); ++j) (*m)(i, j) = n(rng);
    Mat P = X * X.transpose() + 0.1 * Mat::Identity(p, p);
    Mat Q = Y * Y.transpose() + 0.1 * Mat::Identity(q, q);
    // max_x x^T M^T Q M x / x^T P x
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(M.transpose() * Q * M, P);
    const double oracle = std::sqrt(ges.eigenvalues().maxCoeff());
    const double v = weighted_opnorm(M, P, Q);
    EXPECT_NEAR(v, oracle, 1e-9 * (1.0 + oracle));
    // random directions never exceed it
    double best = 0;
    for (int s = 0; s < 2000; ++s) {
      Vec x(p);
      for (int i = 0; i < p; ++i) x(i) = n(rng);
      best = std::max(best, std::sqrt((M * x).dot(Q * M * x) / x.dot(P * x)));
    }
    EXPECT_LE(best, v * (1 + 1e-12));
  }
}

TEST(WeightedNorm, IdentityWeightsGiveSpectralNorm) {
  Mat M(2, 3);
  M << 1, 2, 3, 4, 5, 6;
  EXPECT_NEAR(weighted_opnorm(M, Mat::Identity(3, 3), Mat::Identity(2, 2)), M.jacobiSvd().singularValues()(0), 1e-12);
  EXPECT_THROW(weighted_opnorm(M, Mat::Identity(2, 2), Mat::Identity(2, 2)), DimensionMismatch);
}

TEST(Contraction, BoundHoldsOnGrid) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 25; ++t) {
    Mat A = random_hurwitz(rng, 1 + t % 5, 0.05);
    LyapunovCertificate c = make_certificate(A);
    const double g_star = 1.0 / (c.lambda_max * c.a_qnorm * c.a_qnorm);
    for (double f : {1e-3, 1e-2, 0.1, 0.5, 0.9}) {
      for (double g : {f * c.step_cap, f * g_star}) {
        EXPECT_LE(contraction_factor(A, c, g), contraction_bound(c, g) + 1e-12);
      }
      EXPECT_LT(contraction_factor(A, c, f * g_star), 1.0);
    }
  }
}

// With ||Q|| < 1 the rate 1 - a gamma is not implied by the Lyapunov equation; A = [1] is a witness.
TEST(Contraction, RateOneMinusAGammaFailsForSmallQ) {
  Mat A(1, 1);
  A << 1.0;
  LyapunovCertificate c = make_certificate(A);
  ASSERT_NEAR(c.a, 2.0, 1e-15);
  const double g = c.step_cap;
  const double f = contraction_factor(A, c, g);
  EXPECT_GT(f * f, 1.0 - c.a * g);
  EXPECT_LE(f, contraction_bound(c, g) + 1e-15);
}

TEST(CSeq, KnownValues) {
  EXPECT_DOUBLE_EQ(c_seq(2.0, 1.0, 1.0), 2.0);
  EXPECT_NEAR(c_seq(1.0, 1.1, 1.0), 5.324, 1e-12);
  EXPECT_DOUBLE_EQ(c_seq(1.0, 1.0, 32.0), 64.0);
  EXPECT_THROW(c_seq(0.0, 1.0, 1.0), NonPositiveRate);
  EXPECT_THROW(c_seq(1.0, 0.5, 1.0), NonPositiveInput);
  ScheduleHead h{0.1, 0.2, 1.0, 2.0};
  EXPECT_NEAR(varsigma(h), 1.025, 1e-15);
  EXPECT_NEAR(c_seq(1.0, h), std::max(2.0 * 1.025, 4.0 * std::pow(1.025, 3)), 1e-12);
}

TEST(FixedPoint, HandSolvedScalarSystem) {
  LinearSystem s;
  s.b1 = Vec::Constant(1, 3.0);
  s.b2 = Vec::Constant(1, 1.0);
  s.A11 = Mat::Constant(1, 1, 2.0);
  s.A12 = Mat::Constant(1, 1, 1.0);
  s.A21 = Mat::Constant(1, 1, 1.0);
  s.A22 = Mat::Constant(1, 1, 1.0);
  FixedPoint fp = fixed_point(s);
  EXPECT_NEAR(fp.theta_star(0), 2.0, 1e-14);
  EXPECT_NEAR(fp.w_star(0), -1.0, 1e-14);
  EXPECT_NEAR(s.delta()(0, 0), 1.0, 1e-15);
}

TEST(FixedPoint, Errors) {
  LinearSystem s;
  s.b1 = Vec::Zero(1);
  s.b2 = Vec::Zero(1);
  s.A11 = Mat::Constant(1, 1, 1.0);
  s.A12 = Mat::Zero(1, 1);
  s.A21 = Mat::Zero(1, 1);
  s.A22 = Mat::Zero(1, 1);
  EXPECT_THROW(fixed_point(s), SingularA22);
  s.A22 = Mat::Constant(1, 1, -1.0);
  EXPECT_THROW(check_a1(s), HurwitzViolated);
  s.A12 = Mat::Zero(2, 1);
  EXPECT_THROW(s.check_shapes(), DimensionMismatch);
}

TEST(Toy, DeterministicAndSatisfiesA1) {
  ToyInstance a = random_toy_instance(6, 42), b = random_toy_instance(6, 42);
  EXPECT_EQ(a.sys.A12, b.sys.A12);
  EXPECT_EQ(a.fp.theta_star, b.fp.theta_star);
  EXPECT_TRUE(satisfies_a1(a.sys));
  EXPECT_LE((a.sys.A22 - a.sys.A22.transpose()).norm(), 1e-15);
  const Vec r1 = a.sys.b1 - a.sys.A11 * a.fp.theta_star - a.sys.A12 * a.fp.w_star;
  const Vec r2 = a.sys.b2 - a.sys.A21 * a.fp.theta_star - a.sys.A22 * a.fp.w_star;
  EXPECT_LE(r1.norm() + r2.norm(), 1e-10);
  ToyInstance c = random_toy_instance(6, 43);
  EXPECT_NE(a.sys.A12, c.sys.A12);
  EXPECT_THROW(random_toy_instance(0, 1), ConfigError);
}

TEST(Garnet, KernelStructure) {
  GarnetSpec g;
  g.seed = garnet_default_seed;
  GtdProblem p = garnet_instance(g);
  ASSERT_EQ(static_cast<int>(p.p.size()), g.n_actions);
  for (const Mat& k : p.p)
    for (int s = 0; s < g.n_states; ++s) {
      EXPECT_NEAR(k.row(s).sum(), 1.0, 1e-14);
      EXPECT_EQ((k.row(s).array() > 0).count(), g.branching);
    }
  EXPECT_GE(p.features.minCoeff(), 0.0);
  EXPECT_LE(p.features.maxCoeff(), 1.0);
  EXPECT_NO_THROW(check_ergodic(p.p_pi));
  GarnetSpec bad;
  bad.branching = 40;
  EXPECT_THROW(garnet_instance(bad), ConfigError);
}

TEST(Garnet, GtdStationaryPointHasZeroW) {
  GarnetSpec g;
  g.seed = garnet_default_seed;
  LinearSystem sys = gtd_system(garnet_instance(g));
  FixedPoint fp = fixed_point(sys);
  EXPECT_LE(fp.w_star.norm(), 1e-10);
  EXPECT_LE((sys.delta() - sys.A21.transpose() * sys.A21).norm(), 1e-12);
}

TEST(Garnet, TwoPathMeanFieldsAgree) {
  GarnetSpec g;
  g.seed = garnet_default_seed;
  GtdProblem p = garnet_instance(g);
  LinearSystem direct = gtd_system(p);
  LinearSystem via_chain = mean_fields(gtd_markov_model(p).model);
  EXPECT_LE((direct.A12 - via_chain.A12).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((direct.A21 - via_chain.A21).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((direct.A22 - via_chain.A22).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((direct.b2 - via_chain.b2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((direct.A11 - via_chain.A11).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Markov, TwoStateStationary) {
  Mat P(2, 2);
  P << 0.7, 0.3, 0.1, 0.9;
  Vec mu = stationary_distribution(P);
  EXPECT_NEAR(mu(0), 0.25, 1e-15);
  EXPECT_NEAR(mu(1), 0.75, 1e-15);
}

TEST(Markov, StructureChecks) {
  Mat cyc(3, 3);
  cyc << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  EXPECT_TRUE(is_irreducible(cyc));
  EXPECT_EQ(period(cyc), 3);
  EXPECT_THROW(check_ergodic(cyc), NotErgodic);
  Mat red(2, 2);
  red << 1, 0, 0.5, 0.5;
  EXPECT_FALSE(is_irreducible(red));
  EXPECT_THROW(stationary_distribution(red), Reducible);
  Mat bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(check_stochastic(bad), ConfigError);
}

TEST(Markov, PoissonResidualAndNeumannOracle) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const int ns = 2 + t % 9;
    Mat P = random_stochastic(rng, ns, 0.3);
    if (!is_irreducible(P) || period(P) != 1) continue;
    Vec mu = stationary_distribution(P);
    EXPECT_LE((P.transpose() * mu - mu).cwiseAbs().maxCoeff(), 1e-14);
    std::vector<Vec> f(ns, Vec(2));
    for (auto& v : f) v << n(rng), n(rng);
    auto sol = solve_poisson(P, mu, f);
    EXPECT_LE(poisson_residual(P, f, sol), 1e-10);
    // f_hat = sum_t P^t (f - f_bar)
    Mat F(ns, 2);
    for (int x = 0; x < ns; ++x) F.row(x) = f[x].transpose();
    Mat G = F.rowwise() - (mu.transpose() * F);
    Mat acc = Mat::Zero(ns, 2), term = G;
    for (int it = 0; it < 100000 && term.cwiseAbs().maxCoeff() > 1e-17; ++it) {
      acc += term;
      term = P * term;
    }
    for (int x = 0; x < ns; ++x) EXPECT_LE((sol.hat_f[x] - acc.row(x).transpose()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Markov, SampledFrequenciesApproachStationaryLaw) {
  Mat P(3, 3);
  P << 0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2;
  MarkovModel m;
  m.P = P;
  Rng rng(9);
  auto xs = sample_chain(m, 0, 200000, rng);
  Vec freq = Vec::Zero(3);
  for (int x : xs) freq(x) += 1.0;
  freq /= static_cast<double>(xs.size());
  EXPECT_LE((freq - stationary_distribution(P)).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_THROW(sample_chain(m, 5, 10, rng), ConfigError);
}
