#include "oracles.hpp"
#include "sksim/engine.hpp"
#include "sksim/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace sksim;

namespace {

const DomainSpec kTorus(DomainMode::torus, 0.0, 2.0 * std::numbers::pi, 201);

Motion brownian() { return {SpatialFn::constant(0.0), SpatialFn::constant(1.0), kTorus}; }

BranchingMechanism mechanism(double alpha, double beta, std::vector<JumpAtom> jumps = {}) {
    return {SpatialFn::constant(alpha), SpatialFn::constant(beta), std::move(jumps), kTorus};
}

MartingaleFunction star_w(const BranchingMechanism& m) {
    return validate_w(m, brownian(), SpatialFn::constant(find_w_star(m)), 1e-9);
}

std::vector<SkeletonParticle> particles_at(double x, std::size_t n) {
    std::vector<SkeletonParticle> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back({i + 1, kNoParent, x, 0.0, std::nullopt, std::nullopt});
    return v;
}

}  // namespace

TEST(InitialSkeleton, PoissonCounts) {
    const auto m = mechanism(1.0, 1.0);
    const auto w = star_w(m);
    Rng rng = make_stream(1, 0);
    EXPECT_TRUE(sample_initial_skeleton(AtomicMeasure{}, w, rng).empty());
    std::vector<double> counts(100'000);
    for (auto& c : counts) c = static_cast<double>(sample_initial_skeleton(AtomicMeasure{{1.0, 2.0}}, w, rng).size());
    auto est = stats::mean_and_error(counts);
    EXPECT_LT(std::abs(est.mean - 1.0), 3.0 * est.std_error);

    const auto ma = mechanism(1.0, 1.0, {{1.0, SpatialFn::constant(1.0)}});
    const auto wa = star_w(ma);
    for (auto& c : counts) c = static_cast<double>(sample_initial_skeleton(AtomicMeasure{{2.0, 2.0}}, wa, rng).size());
    est = stats::mean_and_error(counts);
    EXPECT_LT(std::abs(est.mean - 2.0 * wa(0.0)), 3.0 * est.std_error);
    for (const auto& p : sample_initial_skeleton(AtomicMeasure{{5.0, 2.0}}, wa, rng)) EXPECT_EQ(p.position, 2.0);
}

TEST(ThinJump, PoissonMarks) {
    const auto m = mechanism(1.0, 1.0);
    const auto w = star_w(m);  // w = 1
    Rng rng = make_stream(2, 0);
    EXPECT_THROW(thin_jump(0.0, 0.0, w, rng), PreconditionError);
    const int n = 100'000;
    std::vector<double> zero(n), k(n);
    for (int i = 0; i < n; ++i) {
        const int v = thin_jump(1.0, 1.0, w, rng);
        k[i] = v;
        zero[i] = v == 0 ? 1.0 : 0.0;
    }
    const auto p0 = stats::mean_and_error(zero);
    const auto mk = stats::mean_and_error(k);
    EXPECT_LT(std::abs(p0.mean - std::exp(-1.0)), 3.0 * p0.std_error);
    EXPECT_LT(std::abs(mk.mean - 1.0), 3.0 * mk.std_error);
    EXPECT_EQ(route_jump(0), JumpStream::n0);
    EXPECT_EQ(route_jump(1), JumpStream::n1);
    EXPECT_EQ(route_jump(5), JumpStream::n2);
}

TEST(Skeleton, NoBranchingWhenPsiVanishes) {
    const auto m = mechanism(0.0, 0.0);
    const auto w = validate_w(m, brownian(), SpatialFn::constant(1.0), 1e-12);
    const auto law = build_offspring_law(m, w);
    SimParams p;
    Rng rng = make_stream(3, 0);
    const auto path = simulate_skeleton(law, brownian(), w, particles_at(1.0, 50), p, rng);
    EXPECT_TRUE(path.branches.empty());
    EXPECT_EQ(path.states.back().skeleton.size(), 50u);
}

TEST(Skeleton, DyadicGrowthMatchesExpectation) {
    const auto m = mechanism(1.0, 1.0);
    const auto w = star_w(m);
    const auto law = build_offspring_law(m, w);
    SimParams p;
    p.record_events = false;
    const auto pops = run_replicates(1000, 44, 1, [&](std::size_t, Rng& rng) {
        return static_cast<double>(simulate_skeleton(law, brownian(), w, particles_at(1.0, 100), p, rng)
                                       .states.back()
                                       .skeleton.size());
    });
    const auto est = stats::mean_and_error(pops);
    EXPECT_LT(std::abs(est.mean - 100.0 * std::exp(1.0)), 3.0 * est.std_error);
}

TEST(Skeleton, OffspringHistogramMatchesLaw) {
    const auto m = mechanism(1.0, 1.0, {{1.5, SpatialFn::constant(2.0)}});
    const auto w = star_w(m);
    const auto law = build_offspring_law(m, w);
    SimParams p;
    p.T = 2.0;
    std::vector<double> hist(law.n_max() + 1, 0.0);
    double events = 0.0;
    for (std::size_t r = 0; events < 20'000; ++r) {
        Rng rng = make_stream(55, r);
        const auto path = simulate_skeleton(law, brownian(), w, particles_at(2.0, 50), p, rng);
        for (const auto& b : path.branches) {
            ASSERT_GE(b.offspring_count, 2);
            hist[b.offspring_count] += 1.0;
            events += 1.0;
        }
    }
    // pool the sparse tail so every cell has expected count >= 5
    double chi2 = 0.0, tail_obs = 0.0, tail_exp = 0.0;
    int cells = 0;
    for (int n = 2; n <= law.n_max(); ++n) {
        const double e = events * law.p(0.0, n);
        if (e >= 5.0) {
            chi2 += (hist[n] - e) * (hist[n] - e) / e;
            ++cells;
        } else {
            tail_obs += hist[n];
            tail_exp += e;
        }
    }
    if (tail_exp > 0.0) {
        chi2 += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
        ++cells;
    }
    EXPECT_GT(stats::chi_square_sf(chi2, cells - 1), 0.01) << "chi2 = " << chi2;
}

TEST(Skeleton, HistoryRecordsParentage) {
    const auto m = mechanism(1.0, 1.0);
    const auto w = star_w(m);
    const auto law = build_offspring_law(m, w);
    SimParams p;
    Rng rng = make_stream(6, 0);
    const auto path = simulate_skeleton(law, brownian(), w, particles_at(1.0, 5), p, rng);
    std::set<std::uint64_t> ids;
    for (const auto& s : path.skeleton_history) {
        EXPECT_TRUE(ids.insert(s.id).second);
        if (s.death_time) {
            EXPECT_GT(*s.death_time, s.birth_time);
            ASSERT_TRUE(s.offspring_count);
            EXPECT_EQ(*s.offspring_count, 2);
        }
    }
    for (const auto& s : path.skeleton_history) {
        if (s.parent_id != kNoParent) {
            EXPECT_TRUE(ids.count(s.parent_id));
        }
    }
}

TEST(Superprocess, ZeroMechanismConservesMass) {
    const auto m = mechanism(0.0, 0.0);
    SimParams p;
    p.snapshot_times = {0.0, 0.5, 1.0};
    Rng rng = make_stream(7, 0);
    const AtomicMeasure mu{{0.73, 1.0}, {1.4, 4.0}};
    const auto path = simulate_superprocess(m, brownian(), mu, p, rng);
    ASSERT_EQ(path.states.size(), 3u);
    for (const auto& s : path.states) EXPECT_NEAR(s.lambda.total_mass(), mu.total_mass(), 1e-12);
}

TEST(Superprocess, FirstMomentGrowsAtRateAlpha) {
    const auto m = mechanism(1.0, 1.0, {{0.5, SpatialFn::constant(1.0)}});
    SimParams p;
    p.record_events = false;
    const AtomicMeasure mu{{0.5, 1.0}, {0.5, 4.0}};
    const auto mass = run_replicates(2000, 8, 1, [&](std::size_t, Rng& rng) {
        return simulate_superprocess(m, brownian(), mu, p, rng).states.back().lambda.total_mass();
    });
    const auto est = stats::mean_and_error(mass);
    EXPECT_LT(std::abs(est.mean - std::exp(1.0)), 3.0 * est.std_error + 0.02);
}

TEST(Superprocess, CoarseParticleLaplaceMatchesGeneratingFunction) {
    // With particle mass delta the engine runs binary branching with death rate
    // beta/delta and birth rate beta/delta + alpha; v = E exp(-delta f N_t) for one
    // particle then solves v' = (b + alpha)(v^2 - v) + b (1 - v), b = beta/delta.
    // A coarse delta separates this law from the superprocess limit.
    const double delta = 0.25, f = 0.5, b = 1.0 / delta;
    const double v = oracle::rk4_adaptive([&](double y) { return (b + 1.0) * (y * y - y) + b * (1.0 - y); },
                                          std::exp(-f * delta), 1.0);
    const double particle = std::pow(v, 1.0 / delta);
    const double limit = std::exp(-1.0 / (1.0 + std::exp(-1.0)));
    const auto m = mechanism(1.0, 1.0);
    SimParams p;
    p.delta = delta;
    p.record_events = false;
    const auto samples = run_replicates(100'000, 14, 1, [&](std::size_t, Rng& rng) {
        return std::exp(-f * simulate_superprocess(m, brownian(), AtomicMeasure{{1.0, 2.0}}, p, rng)
                                 .states.back()
                                 .lambda.total_mass());
    });
    const auto est = stats::mean_and_error(samples);
    EXPECT_LT(std::abs(est.mean - particle), 3.5 * est.std_error) << est.mean << " vs " << particle;
    EXPECT_GT(std::abs(est.mean - limit), 8.0 * est.std_error);
}

TEST(Superprocess, PopulationCeilingAborts) {
    const auto m = mechanism(5.0, 0.1);
    SimParams p;
    p.population_ceiling = 200;
    p.delta = 0.01;
    Rng rng = make_stream(9, 0);
    EXPECT_THROW(simulate_superprocess(m, brownian(), AtomicMeasure{{1.5, 1.0}}, p, rng), GrowthError);
}

TEST(Dressed, NoImmigrationWithoutBranchingTerms) {
    const auto m = mechanism(0.0, 0.0);
    const auto w = validate_w(m, brownian(), SpatialFn::constant(1.0), 1e-12);
    SimParams p;
    Rng rng = make_stream(10, 0);
    const auto path = simulate_dressed(m, w, brownian(), AtomicMeasure{{2.0, 1.0}}, p, rng);
    EXPECT_TRUE(path.immigrations.empty());
    const auto& s = path.states.back();
    for (auto c : s.component) EXPECT_EQ(c, 0u);
    EXPECT_NEAR(s.x_star_mass(), 2.0, 1e-12);
}

TEST(Dressed, EventBookkeeping) {
    const auto m = mechanism(1.0, 1.0, {{1.0, SpatialFn::constant(1.0)}, {0.3, SpatialFn::constant(2.0)}});
    const auto w = star_w(m);
    const auto model = make_dressed_model(m, w);
    SimParams p;
    p.snapshot_times = {0.5, 1.0};
    int seen[3] = {0, 0, 0};
    for (std::size_t r = 0; r < 40; ++r) {
        Rng rng = make_stream(11, r);
        const auto path = simulate_dressed(model, brownian(), AtomicMeasure{{0.5, 1.0}, {0.5, 4.0}}, p, rng);
        for (const auto& e : path.immigrations) {
            switch (e.kind) {
                case ImmigrationKind::continuous: EXPECT_EQ(e.initial_mass, p.epsilon); break;
                case ImmigrationKind::discontinuous: EXPECT_TRUE(e.initial_mass == 1.0 || e.initial_mass == 0.3); break;
                case ImmigrationKind::branch_point: EXPECT_TRUE(e.initial_mass == 1.0 || e.initial_mass == 0.3); break;
            }
            EXPECT_GE(e.component, 1u);
            ++seen[static_cast<int>(e.kind)];
        }
        for (const auto& b : path.branches) EXPECT_GE(b.offspring_count, 2);
        for (const auto& s : path.states) {
            ASSERT_EQ(s.component.size(), s.lambda.size());
            double total = 0.0;
            std::map<std::uint32_t, double> by;
            for (std::size_t k = 0; k < s.lambda.size(); ++k) by[s.component[k]] += s.lambda.atoms()[k].mass;
            for (const auto& [c, v] : by) total += v;
            EXPECT_NEAR(total, s.lambda.total_mass(), 1e-9 * (1.0 + total));
            for (const auto& [c, v] : by) EXPECT_LE(c, path.immigrations.size());
        }
    }
    EXPECT_GT(seen[0], 0);
    EXPECT_GT(seen[1], 0);
    EXPECT_GT(seen[2], 0);
}

TEST(Dressed, MeanMassMatchesLinearSemigroup) {
    const auto m = mechanism(1.0, 1.0);
    const auto model = make_dressed_model(m, star_w(m));
    SimParams p;
    p.record_events = false;
    const auto mass = run_replicates(1500, 12, 1, [&](std::size_t, Rng& rng) {
        return simulate_dressed(model, brownian(), AtomicMeasure{{0.5, 1.0}, {0.5, 4.0}}, p, rng)
            .states.back()
            .lambda.total_mass();
    });
    const auto est = stats::mean_and_error(mass);
    EXPECT_LT(std::abs(est.mean - std::exp(1.0)), 3.0 * est.std_error + 0.03);
}

TEST(Engine, DeterministicAndScheduleIndependent) {
    const auto m = mechanism(1.0, 1.0, {{1.0, SpatialFn::constant(1.0)}});
    const auto model = make_dressed_model(m, star_w(m));
    SimParams p;
    auto run = [&](unsigned jobs) {
        return run_replicates(12, 99, jobs, [&](std::size_t, Rng& rng) {
            return simulate_dressed(model, brownian(), AtomicMeasure{{0.5, 1.0}}, p, rng);
        });
    };
    const auto a = run(1), b = run(3);
    for (std::size_t r = 0; r < a.size(); ++r) {
        ASSERT_EQ(a[r].immigrations.size(), b[r].immigrations.size());
        for (std::size_t k = 0; k < a[r].immigrations.size(); ++k) {
            EXPECT_EQ(a[r].immigrations[k].time, b[r].immigrations[k].time);
            EXPECT_EQ(a[r].immigrations[k].site, b[r].immigrations[k].site);
        }
        ASSERT_EQ(a[r].states.back().lambda.size(), b[r].states.back().lambda.size());
        for (std::size_t k = 0; k < a[r].states.back().lambda.size(); ++k)
            EXPECT_EQ(a[r].states.back().lambda.atoms()[k].position, b[r].states.back().lambda.atoms()[k].position);
    }
    // a batch starting mid-campaign reproduces the same replicates
    const auto tail = run_replicate_range(5, 3, 99, 1, [&](std::size_t, Rng& rng) {
        return simulate_dressed(model, brownian(), AtomicMeasure{{0.5, 1.0}}, p, rng);
    });
    EXPECT_EQ(tail[0].branches.size(), a[5].branches.size());
    EXPECT_EQ(tail[2].states.back().lambda.total_mass(), a[7].states.back().lambda.total_mass());
}

TEST(SimParams, Validation) {
    SimParams p;
    p.delta = 0.0;
    EXPECT_THROW(p.validate(), PreconditionError);
    p = SimParams{};
    p.snapshot_times = {2.0};
    EXPECT_THROW(p.validate(), PreconditionError);
    p = SimParams{};
    p.snapshot_times = {1.0, 0.5, 0.5};
    EXPECT_EQ(p.output_times(), (std::vector<double>{0.5, 1.0}));
}
