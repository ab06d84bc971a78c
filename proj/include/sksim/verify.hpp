#pragma once

#include "sksim/engine.hpp"
#include "sksim/errors.hpp"
#include "sksim/measure.hpp"
#include "sksim/mechanism.hpp"
#include "sksim/motion.hpp"
#include "sksim/solver.hpp"
#include "sksim/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sksim {

/// Pass rules shared by every statistical check.
struct Thresholds {
    double sigma_k = 3.0;    // CI half-width in standard errors
    double tol_disc = 2e-2;  // additive discretization bias budget
    double ks_alpha = 0.01;  // minimum KS p-value
};

struct LaplaceEstimate {
    double point_estimate = 0.0;
    double std_error = 0.0;
    std::size_t replicates = 0;
    std::string functional;
};

struct TestReport {
    std::string name;
    double statistic = 0.0;
    std::optional<double> p_value;
    std::optional<double> z_score;
    bool pass = false;
    std::string fingerprint;
    nlohmann::json details = nlohmann::json::object();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["name"] = name;
        j["statistic"] = statistic;
        j["p_value"] = p_value ? nlohmann::json(*p_value) : nlohmann::json(nullptr);
        j["z_score"] = z_score ? nlohmann::json(*z_score) : nlohmann::json(nullptr);
        j["pass"] = pass;
        j["fingerprint"] = fingerprint;
        j["details"] = details;
        return j;
    }
};

inline LaplaceEstimate laplace_estimate(std::span<const double> samples, std::string functional) {
    if (samples.empty()) throw PreconditionError("Laplace estimate needs at least one replicate");
    const auto m = stats::mean_and_error(samples);
    return {m.mean, m.std_error, m.count, std::move(functional)};
}

/// exp(-<f, Lambda> - <h, Z>) for one state; `h` absent drops the skeleton term.
inline double laplace_sample(const DressedState& state, const SpatialFn& f, const SpatialFn* h) {
    double e = state.lambda.integrate(f);
    if (h) e += state.skeleton_integral(*h);
    return std::exp(-e);
}

inline LaplaceEstimate mc_laplace(std::span<const DressedState> states, const SpatialFn& f,
                                  const std::optional<SpatialFn>& h = std::nullopt) {
    if (states.empty()) throw PreconditionError("mc_laplace: empty input");
    std::vector<double> v;
    v.reserve(states.size());
    for (const auto& s : states) v.push_back(laplace_sample(s, f, h ? &*h : nullptr));
    return laplace_estimate(v, "f=" + f.description() + (h ? ";h=" + h->description() : std::string()));
}

/// Replication and solver settings for a campaign.
struct CampaignOptions {
    std::size_t replicates = 10'000;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    double solver_dt = 1e-3;
    Thresholds thresholds;
};

/// |estimate - target| <= k * se + tol_disc, reported with its z-score.
inline TestReport ci_report(std::string name, const LaplaceEstimate& est, double target, const Thresholds& th,
                            double tol_disc) {
    TestReport r;
    r.name = std::move(name);
    const double diff = est.point_estimate - target;
    r.statistic = diff;
    r.z_score = est.std_error > 0.0 ? std::optional<double>(diff / est.std_error) : std::nullopt;
    r.pass = std::abs(diff) <= th.sigma_k * est.std_error + tol_disc;
    r.details = {{"estimate", est.point_estimate}, {"std_error", est.std_error}, {"target", target},
                 {"replicates", est.replicates},   {"sigma_k", th.sigma_k},     {"tol_disc", tol_disc},
                 {"functional", est.functional}};
    return r;
}

/// Deterministic right side exp(-<u_{f + w(1 - e^{-h})}(., T), mu>).
inline double identity_rhs(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                           const AtomicMeasure& mu, const SpatialFn& f, const SpatialFn& h, double T, double dt) {
    const auto u = solve_u(mech, motion, TestFunction(transported_data(f, h, w)), T, dt);
    return std::exp(-u.pair(u.time_count() - 1, mu));
}

struct IdentityCase {
    SpatialFn f;
    SpatialFn h;
    std::string label;
};

/// Checks E[exp(-<f, Lambda_T> - <h, Z_T>)] = exp(-<u_{f + w(1 - e^{-h})}(., T), mu>)
/// for every case on one shared set of dressed replicates.
inline std::vector<TestReport> identity_check(const DressedModel& model, const Motion& motion, const AtomicMeasure& mu,
                                              std::span<const IdentityCase> cases, const SimParams& params,
                                              const CampaignOptions& opts) {
    SimParams p = params;
    p.snapshot_times = {p.T};
    p.record_events = false;
    const auto samples = run_replicates(opts.replicates, opts.seed, opts.jobs, [&](std::size_t, Rng& rng) {
        const auto path = simulate_dressed(model, motion, mu, p, rng);
        std::vector<double> v;
        for (const auto& c : cases) v.push_back(laplace_sample(path.states.back(), c.f, &c.h));
        return v;
    });
    std::vector<TestReport> out;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        std::vector<double> col(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i][k];
        const auto est = laplace_estimate(col, "f=" + cases[k].f.description() + ";h=" + cases[k].h.description());
        const double rhs = identity_rhs(model.mechanism, model.w, motion, mu, cases[k].f, cases[k].h, p.T, opts.solver_dt);
        auto r = ci_report("identity:" + cases[k].label, est, rhs, opts.thresholds, opts.thresholds.tol_disc);
        r.details["epsilon"] = p.epsilon;
        r.details["delta"] = p.delta;
        out.push_back(std::move(r));
    }
    return out;
}

inline TestReport identity_check(const DressedModel& model, const Motion& motion, const AtomicMeasure& mu,
                                 const SpatialFn& f, const SpatialFn& h, const SimParams& params,
                                 const CampaignOptions& opts) {
    const IdentityCase c{f, h, "f,h"};
    return identity_check(model, motion, mu, std::span<const IdentityCase>(&c, 1), params, opts).front();
}

/// Superprocess Laplace functional E[exp(-<f, X_T>)] against exp(-<u_f(., T), mu>).
inline TestReport laplace_check(const BranchingMechanism& mech, const Motion& motion, const AtomicMeasure& mu,
                                const SpatialFn& f, const SimParams& params, const CampaignOptions& opts) {
    SimParams p = params;
    p.snapshot_times = {p.T};
    p.record_events = false;
    const auto samples = run_replicates(opts.replicates, opts.seed, opts.jobs, [&](std::size_t, Rng& rng) {
        const auto path = simulate_superprocess(mech, motion, mu, p, rng);
        return laplace_sample(path.states.back(), f, nullptr);
    });
    const auto est = laplace_estimate(samples, "f=" + f.description());
    const auto u = solve_u(mech, motion, TestFunction(f), p.T, opts.solver_dt);
    const double target = std::exp(-u.pair(u.time_count() - 1, mu));
    return ci_report("laplace", est, target, opts.thresholds, opts.thresholds.tol_disc);
}

/// exp(-<w, X_t>) per output time must stay at exp(-<w, mu>).
/// `samples[k]` holds the replicate values at `times[k]`.
inline TestReport martingale_test(std::span<const double> times, const std::vector<std::vector<double>>& samples,
                                  double target, const Thresholds& th, std::string name = "martingale") {
    if (times.size() != samples.size()) throw PreconditionError("martingale_test: times/samples mismatch");
    TestReport r;
    r.name = std::move(name);
    r.pass = true;
    double worst = 0.0;
    nlohmann::json per_time = nlohmann::json::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto est = laplace_estimate(samples[k], "exp(-<w,X_t>)");
        const double diff = est.point_estimate - target;
        const bool ok = std::abs(diff) <= th.sigma_k * est.std_error + th.tol_disc;
        // a spread at round-off level (deterministic samples) carries no z-score
        const bool noisy = est.std_error > 1e-12 * std::max(1.0, std::abs(est.point_estimate));
        const double z = noisy ? diff / est.std_error : 0.0;
        if (std::abs(diff) >= std::abs(worst)) {
            worst = diff;
            r.z_score = z;
        }
        r.pass = r.pass && ok;
        per_time.push_back({{"t", times[k]}, {"estimate", est.point_estimate}, {"std_error", est.std_error},
                            {"z", z}, {"pass", ok}});
    }
    r.statistic = worst;
    r.details = {{"target", target}, {"per_time", per_time}, {"sigma_k", th.sigma_k}, {"tol_disc", th.tol_disc}};
    return r;
}

/// Replicate-level form: `paths[i].states` are the snapshots of replicate i.
inline TestReport martingale_test(std::span<const DressedPath> paths, const SpatialFn& w, const AtomicMeasure& mu,
                                  const Thresholds& th) {
    if (paths.empty()) throw PreconditionError("martingale_test: no replicates");
    const std::size_t nt = paths.front().states.size();
    std::vector<double> times(nt);
    std::vector<std::vector<double>> samples(nt);
    for (std::size_t k = 0; k < nt; ++k) times[k] = paths.front().states[k].time;
    for (const auto& p : paths)
        for (std::size_t k = 0; k < nt; ++k) samples[k].push_back(std::exp(-p.states[k].lambda.integrate(w)));
    return martingale_test(times, samples, std::exp(-mu.integrate(w)), th);
}

/// Runs superprocess replicates and applies the martingale test without
/// keeping the paths.
inline TestReport run_martingale_test(const BranchingMechanism& mech, const Motion& motion, const AtomicMeasure& mu,
                                      const SpatialFn& w, std::vector<double> times, const SimParams& params,
                                      const CampaignOptions& opts, std::string name = "martingale") {
    SimParams p = params;
    std::sort(times.begin(), times.end());
    p.snapshot_times = times;
    p.T = std::max(p.T, times.back());
    p.record_events = false;
    const auto per_rep = run_replicates(opts.replicates, opts.seed, opts.jobs, [&](std::size_t, Rng& rng) {
        const auto path = simulate_superprocess(mech, motion, mu, p, rng);
        std::vector<double> v;
        for (const auto& s : path.states) v.push_back(std::exp(-s.lambda.integrate(w)));
        return v;
    });
    std::vector<std::vector<double>> samples(times.size());
    for (const auto& v : per_rep)
        for (std::size_t k = 0; k < times.size(); ++k) samples[k].push_back(v[k]);
    auto r = martingale_test(times, samples, std::exp(-mu.integrate(w)), opts.thresholds, std::move(name));
    r.details["w"] = w.description();
    return r;
}

struct Region {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const noexcept { return x >= lo && x < hi; }
};

/// (intensity, observed count) for one replicate and one region.
struct RegionCount {
    double intensity = 0.0;
    std::int64_t count = 0;
};

inline std::vector<std::vector<RegionCount>> region_counts(std::span<const DressedState> states, const SpatialFn& w,
                                                           const std::vector<Region>& regions) {
    std::vector<std::vector<RegionCount>> out;
    out.reserve(states.size());
    for (const auto& s : states) {
        std::vector<RegionCount> row(regions.size());
        for (std::size_t b = 0; b < regions.size(); ++b) {
            const Region& reg = regions[b];
            row[b].intensity = s.lambda.integrate([&](double x) { return reg.contains(x) ? w(x) : 0.0; });
            for (const auto& p : s.skeleton)
                if (reg.contains(p.position)) ++row[b].count;
        }
        out.push_back(std::move(row));
    }
    return out;
}

/// Randomized-PIT check that counts are Poisson with the given intensities:
/// KS of the pooled PIT values against Uniform(0, 1), plus a screen that the
/// PIT values of different regions are uncorrelated.
inline TestReport poisson_pit_test(const std::vector<std::vector<RegionCount>>& counts, std::uint64_t seed,
                                   const Thresholds& th, std::string name = "poissonization") {
    if (counts.empty() || counts.front().empty()) throw PreconditionError("poissonization: no regions or replicates");
    const std::size_t nb = counts.front().size();
    Rng rng = make_stream(seed, 0x9150);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> pit(nb);
    std::vector<double> pooled;
    pooled.reserve(counts.size() * nb);
    for (const auto& row : counts) {
        for (std::size_t b = 0; b < nb; ++b) {
            const double u = stats::poisson_pit(row[b].intensity, row[b].count, unif(rng));
            pit[b].push_back(u);
            pooled.push_back(u);
        }
    }
    const auto ks = stats::ks_uniform(pooled);
    const double rho_limit = 3.0 / std::sqrt(static_cast<double>(counts.size()));
    double rho_max = 0.0;
    for (std::size_t a = 0; a < nb; ++a)
        for (std::size_t b = a + 1; b < nb; ++b) rho_max = std::max(rho_max, std::abs(stats::pearson(pit[a], pit[b])));
    TestReport r;
    r.name = std::move(name);
    r.statistic = ks.statistic;
    r.p_value = ks.p_value;
    r.pass = ks.p_value >= th.ks_alpha && rho_max <= rho_limit;
    r.details = {{"ks_d", ks.statistic},          {"ks_p", ks.p_value},   {"ks_alpha", th.ks_alpha},
                 {"max_abs_correlation", rho_max}, {"rho_limit", rho_limit}, {"replicates", counts.size()},
                 {"regions", nb}};
    return r;
}

/// Skeleton Z_t given Lambda_t is Poisson(w Lambda_t) region by region.
inline TestReport poissonization_test(std::span<const DressedState> states, const SpatialFn& w,
                                      const std::vector<Region>& regions, std::uint64_t seed, const Thresholds& th) {
    if (regions.empty()) throw PreconditionError("poissonization: empty region list");
    if (states.size() < 500) throw PreconditionError("poissonization: needs at least 500 replicates");
    return poisson_pit_test(region_counts(states, w, regions), seed, th);
}

/// Mean skeleton size at T against N0 exp(q (m - 1) T).
inline TestReport skeleton_moment_test(std::span<const double> populations, double n0, double q, double mean_offspring,
                                       double T, const Thresholds& th) {
    LaplaceEstimate est = laplace_estimate(populations, "population");
    const double target = n0 * std::exp(q * (mean_offspring - 1.0) * T);
    auto r = ci_report("skeleton-moment", est, target, th, 0.0);
    r.details["q"] = q;
    r.details["mean_offspring"] = mean_offspring;
    return r;
}

/// Homogeneous form reading q and m from the offspring law.
inline TestReport skeleton_moment_test(std::span<const DressedPath> paths, const OffspringLaw& law, double n0, double T,
                                       const Thresholds& th) {
    if (!law.mechanism().homogeneous() || !law.w().constant_value())
        throw PreconditionError("skeleton_moment_test needs a homogeneous configuration");
    std::vector<double> pop;
    for (const auto& p : paths) pop.push_back(static_cast<double>(p.states.back().skeleton.size()));
    const double x0 = law.w().grid().nodes.front();
    return skeleton_moment_test(pop, n0, law.q(x0), law.mean_offspring(x0), T, th);
}

}  // namespace sksim
