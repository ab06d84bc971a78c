#include "oracles.hpp"

#include "sksim/mechanism.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace sksim;

namespace {

const DomainSpec kTorus(DomainMode::torus, 0.0, 2.0 * std::numbers::pi, 201);

BranchingMechanism quadratic(double alpha = 1.0, double beta = 1.0) {
    return {SpatialFn::constant(alpha), SpatialFn::constant(beta), {}, kTorus};
}

BranchingMechanism single_atom(double alpha, double beta, double u, double c) {
    return {SpatialFn::constant(alpha), SpatialFn::constant(beta), {{u, SpatialFn::constant(c)}}, kTorus};
}

Motion brownian() { return {SpatialFn::constant(0.0), SpatialFn::constant(1.0), kTorus}; }

MartingaleFunction unchecked_constant_w(double v) { return {SpatialFn::constant(v), kTorus.grid(), 0.0}; }

}  // namespace

TEST(EvalPsi, QuadraticValues) {
    const auto m = quadratic();
    EXPECT_EQ(eval_psi(m, 1.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(eval_psi(m, 1.0, 2.0), 2.0);
    EXPECT_DOUBLE_EQ(eval_psi_prime(m, 1.0, 0.0), -1.0);
    EXPECT_DOUBLE_EQ(eval_psi_prime(m, 1.0, 1.0), 1.0);
}

TEST(EvalPsi, MatchesTermByTermOracle) {
    const BranchingMechanism m(SpatialFn::constant(0.7), SpatialFn::constant(0.4),
                               {{0.5, SpatialFn::constant(1.3)}, {2.0, SpatialFn::constant(0.2)}}, kTorus);
    for (double z : {0.0, 1e-8, 0.3, 1.0, 4.0, 25.0}) {
        const double ref = oracle::psi(0.7, 0.4, {{0.5, 1.3}, {2.0, 0.2}}, z);
        EXPECT_NEAR(eval_psi(m, 2.0, z), ref, 1e-13 * (1.0 + std::abs(ref)));
    }
}

TEST(EvalPsi, DerivativeMatchesCentralDifferences) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int cfg = 0; cfg < 10; ++cfg) {
        std::vector<JumpAtom> jumps;
        for (int j = 0; j < 3; ++j) jumps.push_back({0.1 + 2.0 * U(rng), SpatialFn::constant(2.0 * U(rng))});
        const BranchingMechanism m(SpatialFn::constant(3.0 * U(rng) - 1.0), SpatialFn::constant(U(rng)), jumps,
                                   kTorus);
        for (double z : {0.1, 0.7, 2.5}) {
            const double h = 1e-6;
            const double fd = (eval_psi(m, 1.0, z + h) - eval_psi(m, 1.0, z - h)) / (2.0 * h);
            const double v = eval_psi_prime(m, 1.0, z);
            EXPECT_LT(std::abs(v - fd), 1e-6 * (1.0 + std::abs(v)));
        }
    }
}

TEST(EvalPsi, RejectsNegativeArgumentAndOutsidePositions) {
    EXPECT_THROW(eval_psi(quadratic(), 1.0, -0.1), PreconditionError);
    const DomainSpec killed(DomainMode::killed_interval, 0.0, 1.0, 50);
    const BranchingMechanism m(SpatialFn::constant(1.0), SpatialFn::constant(1.0), {}, killed);
    EXPECT_THROW(eval_psi(m, 1.5, 0.5), DomainError);
    EXPECT_THROW(eval_psi_prime(m, -0.1, 0.5), DomainError);
    EXPECT_NO_THROW(eval_psi(m, 0.5, 0.5));
}

TEST(Mechanism, RejectsNegativeBetaAndBadAtoms) {
    EXPECT_THROW(quadratic(1.0, -0.5), ConfigError);
    EXPECT_THROW(single_atom(1.0, 1.0, 0.0, 1.0), ConfigError);
    EXPECT_THROW(single_atom(1.0, 1.0, 1.0, -1.0), ConfigError);
}

TEST(FindWStar, QuadraticRoots) {
    EXPECT_NEAR(find_w_star(quadratic(1.0, 1.0)), 1.0, 1e-12);
    EXPECT_NEAR(find_w_star(quadratic(2.0, 1.0)), 2.0, 1e-12);
    EXPECT_NEAR(find_w_star(quadratic(3.0, 0.5)), 6.0, 1e-11);
}

TEST(FindWStar, SingleAtomMatchesBisectionOracle) {
    const double ref = oracle::positive_root(1.0, 1.0, {{1.0, 1.0}});
    EXPECT_NEAR(find_w_star(single_atom(1.0, 1.0, 1.0, 1.0)), ref, 1e-11);
    // psi(z) = z^2 + e^{-z} - 1 once alpha cancels the compensator
    EXPECT_NEAR(ref * ref + std::exp(-ref) - 1.0, 0.0, 1e-12);
    EXPECT_NEAR(ref, 0.7145563847, 1e-9);
}

TEST(FindWStar, PureJumpMechanism) {
    // beta = 0 needs alpha > c u for supercriticality; psi = -z + 2(e^{-z} - 1 + z)
    const double ref = oracle::positive_root(1.0, 0.0, {{1.0, 2.0}});
    EXPECT_NEAR(find_w_star(single_atom(1.0, 0.0, 1.0, 2.0)), ref, 1e-11);
}

TEST(FindWStar, RejectsSubcriticalAndInhomogeneous) {
    EXPECT_THROW(find_w_star(quadratic(-1.0, 1.0)), ModelError);
    EXPECT_THROW(find_w_star(quadratic(0.0, 1.0)), ModelError);
    // alpha = 1, beta = 0, u = c = 1: psi = e^{-z} - 1 < 0 for all z > 0
    EXPECT_THROW(find_w_star(single_atom(1.0, 0.0, 1.0, 1.0)), ModelError);
    const BranchingMechanism m(SpatialFn::sine(1.0, 0.5, 1.0, 0.0), SpatialFn::constant(1.0), {}, kTorus);
    EXPECT_THROW(find_w_star(m), PreconditionError);
}

TEST(Tilt, QuadraticBecomesSubcriticalQuadratic) {
    const auto m = quadratic();
    const auto w = validate_w(m, brownian(), SpatialFn::constant(1.0), 1e-10);
    const auto t = tilt(m, w);
    EXPECT_DOUBLE_EQ(t.alpha()(0.3), -1.0);
    EXPECT_DOUBLE_EQ(t.beta()(0.3), 1.0);
    for (double z : {0.0, 0.5, 1.0}) EXPECT_NEAR(eval_psi(t, 0.3, z), z + z * z, 1e-14);
}

TEST(Tilt, AtomIntensityIsExponentiallyTilted) {
    const auto t = tilt(single_atom(1.0, 1.0, 1.0, 1.0), unchecked_constant_w(0.5));
    ASSERT_EQ(t.jumps().size(), 1u);
    EXPECT_NEAR(t.jumps()[0].intensity(1.0), 0.60653065971, 1e-10);
    EXPECT_EQ(eval_psi(t, 1.0, 0.0), 0.0);
}

TEST(Tilt, ConsistencyOnSpatialMechanism) {
    const BranchingMechanism m(SpatialFn::gaussian_bump(0.5, 1.0, 3.0, 0.8), SpatialFn::sine(0.6, 0.3, 1.0, 0.0),
                               {{0.7, SpatialFn::affine(0.5, 0.05)}}, kTorus);
    const MartingaleFunction w(SpatialFn::sine(1.0, 0.4, 2.0, 0.3), kTorus.grid(), 0.0);
    const auto t = tilt(m, w);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> X(0.0, 2.0 * std::numbers::pi), Z(0.0, 3.0);
    for (int k = 0; k < 100; ++k) {
        const double x = X(rng), z = Z(rng);
        const double lhs = eval_psi(t, x, z);
        const double rhs = eval_psi(m, x, z + w(x)) - eval_psi(m, x, w(x));
        EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
        EXPECT_NEAR(t.alpha()(x), -eval_psi_prime(m, x, w(x)), 1e-13);
    }
}

TEST(OffspringLaw, DyadicTier) {
    const auto m = quadratic();
    const auto law = build_offspring_law(m, validate_w(m, brownian(), SpatialFn::constant(1.0), 1e-10));
    for (double x : {0.0, 2.0, 5.0}) {
        EXPECT_NEAR(law.q(x), 1.0, 1e-14);
        EXPECT_EQ(law.p(x, 0), 0.0);
        EXPECT_EQ(law.p(x, 1), 0.0);
        EXPECT_NEAR(law.p(x, 2), 1.0, 1e-14);
        EXPECT_EQ(law.tail_mass(x), 0.0);
        const auto eta = law.eta(x, 2);
        ASSERT_EQ(eta.size(), 1u);
        EXPECT_EQ(eta[0].mass, 0.0);
        EXPECT_NEAR(eta[0].probability, 1.0, 1e-14);
    }
}

TEST(OffspringLaw, PureJumpLawIsTruncatedPoisson) {
    const auto m = single_atom(1.0, 0.0, 1.0, 2.0);
    const double ws = find_w_star(m);
    const auto law = build_offspring_law(m, validate_w(m, brownian(), SpatialFn::constant(ws), 1e-9));
    EXPECT_GT(law.n_max(), 2);
    // p_n proportional to w^n / n! for n >= 2
    double norm = 0.0;
    for (int n = 2; n <= 60; ++n) norm += std::pow(ws, n) / std::tgamma(n + 1.0);
    double sum = law.tail_mass(1.0);
    for (int n = 2; n <= law.n_max(); ++n) {
        EXPECT_NEAR(law.p(1.0, n), std::pow(ws, n) / std::tgamma(n + 1.0) / norm, 1e-12);
        sum += law.p(1.0, n);
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
    EXPECT_LE(law.tail_mass(1.0), 1e-12);
}

TEST(OffspringLaw, NormalizationFromRateIdentity) {
    // w q = beta w^2 + sum c (1 - e^{-wu} - wu e^{-wu}) makes the full series sum to one
    const BranchingMechanism m(SpatialFn::constant(2.0), SpatialFn::constant(0.3),
                               {{0.5, SpatialFn::constant(1.0)}, {1.5, SpatialFn::constant(0.4)}}, kTorus);
    const double ws = find_w_star(m);
    const auto law = build_offspring_law(m, validate_w(m, brownian(), SpatialFn::constant(ws), 1e-9));
    double rhs = 0.3 * ws * ws;
    for (auto [u, c] : {std::pair{0.5, 1.0}, std::pair{1.5, 0.4}})
        rhs += c * (1.0 - std::exp(-ws * u) - ws * u * std::exp(-ws * u));
    EXPECT_NEAR(ws * law.q(0.0), rhs, 1e-12);
    double s = law.tail_mass(0.0);
    for (int n = 0; n <= law.n_max(); ++n) s += law.p(0.0, n);
    EXPECT_NEAR(s, 1.0, 1e-10);
    for (int n = 2; n <= 5; ++n) {
        double e = 0.0, mean = 0.0;
        for (const auto& a : law.eta(0.0, n)) {
            e += a.probability;
            mean += a.probability * a.mass;
        }
        EXPECT_NEAR(e, 1.0, 1e-12);
        EXPECT_LE(mean, m.max_jump());
    }
    // n = 2 carries the beta atom at y = 0, larger n only jump sizes
    EXPECT_EQ(law.eta(0.0, 2).front().mass, 0.0);
    for (const auto& a : law.eta(0.0, 3)) EXPECT_GT(a.mass, 0.0);
}

TEST(OffspringLaw, SpatialMechanismStaysNormalizedAndNonNegative) {
    const BranchingMechanism m(SpatialFn::gaussian_bump(1.0, 0.5, 3.0, 1.0), SpatialFn::constant(0.5),
                               {{1.0, SpatialFn::sine(0.5, 0.2, 1.0, 0.0)}}, kTorus);
    const MartingaleFunction w(SpatialFn::sine(1.5, 0.3, 1.0, 0.0), kTorus.grid(), 0.0);
    const auto law = build_offspring_law(m, w);
    for (double x : kTorus.grid().nodes) {
        EXPECT_GE(law.q(x), -1e-12);
        double s = law.tail_mass(x);
        for (int n = 2; n <= law.n_max(); ++n) s += law.p(x, n);
        EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(OffspringLaw, SamplingInvertsTheCdf) {
    const auto m = single_atom(1.0, 1.0, 1.0, 1.0);
    const auto law = build_offspring_law(m, unchecked_constant_w(find_w_star(m)));
    EXPECT_EQ(law.sample_offspring(0.0, 0.0), 2);
    EXPECT_EQ(law.sample_offspring(0.0, 0.5 * law.p(0.0, 2)), 2);
    EXPECT_EQ(law.sample_offspring(0.0, law.p(0.0, 2) + 1e-9), 3);
    EXPECT_EQ(law.sample_branch_mass(0.0, 3, 0.5), 1.0);
}

TEST(OffspringLaw, RejectsSmallNMax) {
    const auto m = quadratic();
    EXPECT_THROW(build_offspring_law(m, unchecked_constant_w(1.0), 1), PreconditionError);
}

TEST(ValidateW, ResidualExamples) {
    const auto m = quadratic();
    const auto w = validate_w(m, brownian(), SpatialFn::constant(1.0), 1e-10);
    EXPECT_LT(w.residual_sup(), 1e-10);
    EXPECT_EQ(w.lower_bound(), 1.0);
    try {
        validate_w(m, brownian(), SpatialFn::constant(1.5), 1e-6);
        FAIL() << "1.5 w* accepted";
    } catch (const InvalidMartingaleFunction& e) {
        EXPECT_NEAR(e.residual_sup(), std::abs(oracle::psi(1.0, 1.0, {}, 1.5)), 1e-12);
        EXPECT_EQ(e.residual_profile().size(), 201u);
    }
    const BranchingMechanism zero(SpatialFn::constant(0.0), SpatialFn::constant(0.0), {}, kTorus);
    EXPECT_EQ(validate_w(zero, brownian(), SpatialFn::constant(3.7), 1e-12).residual_sup(), 0.0);
    EXPECT_THROW(validate_w(m, brownian(), SpatialFn::constant(-1.0), 1e-6), PreconditionError);
}
