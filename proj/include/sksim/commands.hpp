#pragma once

#include "sksim/config.hpp"
#include "sksim/engine.hpp"
#include "sksim/io.hpp"
#include "sksim/solver.hpp"
#include "sksim/verify.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace sksim {

namespace exit_code {
inline constexpr int pass = 0;
inline constexpr int test_failure = 1;
inline constexpr int config_error = 2;
inline constexpr int runtime_error = 3;
}  // namespace exit_code

struct CommandOptions {
    unsigned jobs = 1;
    std::optional<std::filesystem::path> out_dir;  // overrides output.dir
    std::ostream* log = &std::cout;
    std::ostream* warn = &std::cerr;
};

struct RunManifest {
    std::string command;
    std::string fingerprint;
    std::string tool_version = kToolVersion;
    double wall_clock_seconds = 0.0;
    std::vector<TestReport> reports;
    std::vector<std::string> files;
    std::vector<std::string> warnings;

    bool all_pass() const {
        for (const auto& r : reports)
            if (!r.pass) return false;
        return true;
    }

    Json to_json() const {
        Json j = {{"command", command},
                  {"fingerprint", fingerprint},
                  {"tool_version", tool_version},
                  {"wall_clock_seconds", wall_clock_seconds},
                  {"files", files},
                  {"warnings", warnings}};
        j["reports"] = Json::array();
        for (const auto& r : reports) j["reports"].push_back(r.to_json());
        return j;
    }
};

struct CommandResult {
    int exit_code = exit_code::pass;
    RunManifest manifest;
};

namespace cmd_detail {

inline std::filesystem::path output_dir(const RunConfig& c, const CommandOptions& o) {
    auto dir = o.out_dir ? *o.out_dir : std::filesystem::path(c.output.dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline bool wants(const RunConfig& c, const std::string& format) {
    for (const auto& f : c.output.formats)
        if (f == format) return true;
    return false;
}

inline TestReport make_report(std::string name, bool pass, Json details, const std::string& fp) {
    TestReport r;
    r.name = std::move(name);
    r.pass = pass;
    r.details = std::move(details);
    r.fingerprint = fp;
    return r;
}

/// Generator-checked w, or a failing report describing the residual.
inline std::optional<MartingaleFunction> checked_w(const RunConfig& c, const ModelObjects& m, TestReport& report) {
    report.name = "w";
    try {
        auto w = validate_w(m.mechanism, m.motion, w_candidate(c, m.mechanism), c.numerics.w_tol);
        report.pass = true;
        report.statistic = w.residual_sup();
        report.details = {{"residual_sup", w.residual_sup()}, {"tolerance", c.numerics.w_tol},
                          {"w", w.fn().description()}};
        return w;
    } catch (const InvalidMartingaleFunction& e) {
        const auto& prof = e.residual_profile();
        const auto worst = std::max_element(prof.begin(), prof.end()) - prof.begin();
        report.pass = false;
        report.statistic = e.residual_sup();
        report.details = {{"error", e.what()},
                          {"residual_sup", e.residual_sup()},
                          {"tolerance", c.numerics.w_tol},
                          {"worst_x", m.motion.grid().nodes[static_cast<std::size_t>(worst)]}};
    } catch (const ModelError& e) {
        report.pass = false;
        report.details = {{"error", e.what()}};
    }
    return std::nullopt;
}

inline void finish(CommandResult& res, const RunConfig& c, const CommandOptions& o,
                   std::chrono::steady_clock::time_point start) {
    res.manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto dir = output_dir(c, o);
    std::ofstream os(dir / ("manifest-" + res.manifest.command + "-" + res.manifest.fingerprint + ".json"));
    os << res.manifest.to_json().dump(2) << '\n';
}

inline void print_summary(std::ostream& os, const std::vector<TestReport>& reports) {
    os << std::left << std::setw(34) << "test" << std::setw(6) << "pass" << std::setw(16) << "statistic"
       << "p / z\n";
    for (const auto& r : reports) {
        std::string pz = "-";
        if (r.p_value) pz = "p=" + io::fmt(*r.p_value).substr(0, 10);
        else if (r.z_score) pz = "z=" + io::fmt(*r.z_score).substr(0, 10);
        os << std::left << std::setw(34) << r.name << std::setw(6) << (r.pass ? "PASS" : "FAIL") << std::setw(16)
           << io::fmt(r.statistic).substr(0, 14) << pz << '\n';
    }
}

}  // namespace cmd_detail

/// Checks w, the offspring law and the grid. Exit 1 names the first failing
/// invariant.
inline CommandResult cmd_validate(const RunConfig& c, const CommandOptions& o = {}) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult res;
    res.manifest.command = "validate";
    res.manifest.fingerprint = fingerprint(c);
    const auto& fp = res.manifest.fingerprint;
    const auto m = build_model(c);
    const Grid& g = m.motion.grid();
    res.manifest.reports.push_back(cmd_detail::make_report(
        "grid", g.size() >= 3 && g.dx > 0.0,
        {{"nodes", g.size()}, {"dx", g.dx}, {"mode", std::string(to_string(m.domain.mode))}}, fp));

    TestReport wr;
    wr.fingerprint = fp;
    const auto w = cmd_detail::checked_w(c, m, wr);
    res.manifest.reports.push_back(wr);
    if (w) {
        const auto law = build_offspring_law(m.mechanism, *w, c.numerics.n_max, c.numerics.tail_tol);
        double q_min = 0.0, sum_err = 0.0;
        bool first = true;
        for (double x : g.nodes) {
            const double q = law.q(x);
            double s = law.tail_mass(x);
            for (int n = 0; n <= law.n_max(); ++n) s += law.p(x, n);
            q_min = first ? q : std::min(q_min, q);
            sum_err = std::max(sum_err, std::abs(s - 1.0));
            first = false;
        }
        const double x0 = g.nodes.front();
        Json probs = Json::array();
        for (int n = 0; n <= law.n_max(); ++n) probs.push_back(law.p(x0, n));
        Json d = {{"q_min", q_min},         {"q", law.q(x0)},           {"mean_offspring", law.mean_offspring(x0)},
                  {"n_max", law.n_max()},   {"p", probs},               {"max_sum_error", sum_err},
                  {"w_at_left", (*w)(x0)}};
        res.manifest.reports.push_back(
            cmd_detail::make_report("offspring-law", q_min >= -1e-12 && sum_err <= 1e-10, std::move(d), fp));
    }
    for (const auto& r : res.manifest.reports) {
        if (!r.pass) {
            *o.warn << "validate: invariant '" << r.name << "' failed: " << r.details.dump() << '\n';
            res.exit_code = exit_code::test_failure;
            break;
        }
    }
    if (res.exit_code == exit_code::pass) cmd_detail::print_summary(*o.log, res.manifest.reports);
    cmd_detail::finish(res, c, o, start);
    return res;
}

/// All solver fields for (campaign.solve.f, campaign.solve.h) on one grid.
struct SolveFields {
    SolverField u, u_star, fT, hT, kappa, u_transported;
};

inline SolveFields solve_all(const RunConfig& c, const ModelObjects& m, const MartingaleFunction& w) {
    const double T = c.campaign.T, dt = c.numerics.solver_dt;
    const TestFunction f(c.campaign.solve_f.build()), h(c.campaign.solve_h.build());
    SolveFields s;
    s.u = solve_u(m.mechanism, m.motion, f, T, dt);
    auto sys = solve_v_system(m.mechanism, w, m.motion, f, h, T, dt);
    s.u_star = sys.u_star;
    s.fT = sys.u_star.reversed("fT");
    s.hT = sys.v.reversed("hT");
    s.kappa = kappa(s.fT, s.hT, w);
    s.u_transported =
        solve_u(m.mechanism, m.motion, TestFunction(transported_data(f.f, h.f, w)), T, dt);
    s.u_transported.tag = "u_transported";
    return s;
}

/// Writes u, u*, f^T, h^T, kappa^T and u_{f + w(1 - e^{-h})} as CSV; with
/// campaign.solve.refine also solves on the halved grid and step and reports
/// the change.
inline CommandResult cmd_solve(const RunConfig& c, const CommandOptions& o = {}) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult res;
    res.manifest.command = "solve";
    res.manifest.fingerprint = fingerprint(c);
    const auto& fp = res.manifest.fingerprint;
    const auto dir = cmd_detail::output_dir(c, o);
    const auto m = build_model(c);
    TestReport wr;
    wr.fingerprint = fp;
    const auto w = cmd_detail::checked_w(c, m, wr);
    res.manifest.reports.push_back(wr);
    if (!w) {
        res.exit_code = exit_code::test_failure;
        cmd_detail::finish(res, c, o, start);
        return res;
    }
    auto write_fields = [&](const SolveFields& s, const std::string& name) {
        const auto path = dir / name;
        std::ofstream os(path);
        bool header = true;
        for (const SolverField* f : {&s.u, &s.u_star, &s.fT, &s.hT, &s.kappa, &s.u_transported}) {
            write_csv(os, *f, c.output.csv_stride, header);
            header = false;
        }
        res.manifest.files.push_back(path.string());
    };
    const auto fields = solve_all(c, m, *w);
    write_fields(fields, "solve-" + fp + ".csv");

    const double lhs = fields.kappa.pair(0, m.mu);
    const double rhs = fields.u_transported.pair(fields.u_transported.time_count() - 1, m.mu);
    const double rel = std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300);
    auto tr = cmd_detail::make_report("transport", rel <= 5e-4 || std::abs(lhs - rhs) <= 1e-12,
                                      {{"kappa_pair", lhs}, {"u_pair", rhs}, {"relative_error", rel}}, fp);
    tr.statistic = rel;
    res.manifest.reports.push_back(tr);

    if (c.campaign.refine) {
        RunConfig fine_cfg = c;
        fine_cfg.model.nodes = m.domain.refined_nodes();
        fine_cfg.numerics.solver_dt = c.numerics.solver_dt / 2.0;
        fine_cfg.output.csv_stride = c.output.csv_stride * 2;
        const auto mf = build_model(fine_cfg);
        const auto wf = validate_w(mf.mechanism, mf.motion, w_candidate(fine_cfg, mf.mechanism), c.numerics.w_tol);
        const auto fine = solve_all(fine_cfg, mf, wf);
        write_fields(fine, "solve-" + fp + "-refined.csv");
        auto delta = [&](const SolverField& a, const SolverField& b, std::size_t ka, std::size_t kb) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < a.nodes(); ++i) {
                num = std::max(num, std::abs(a.at(ka, i) - b.interpolate(kb, a.grid.nodes[i])));
                den = std::max(den, std::abs(a.at(ka, i)));
            }
            return den > 0.0 ? num / den : num;
        };
        const double du = delta(fields.u, fine.u, fields.u.time_count() - 1, fine.u.time_count() - 1);
        const double dk = delta(fields.kappa, fine.kappa, 0, 0);
        auto rr = cmd_detail::make_report("refinement", std::max(du, dk) < 1e-3,
                                          {{"u_relative_change", du}, {"kappa_relative_change", dk}}, fp);
        rr.statistic = std::max(du, dk);
        res.manifest.reports.push_back(rr);
    }
    if (!res.manifest.all_pass()) res.exit_code = exit_code::test_failure;
    cmd_detail::print_summary(*o.log, res.manifest.reports);
    cmd_detail::finish(res, c, o, start);
    return res;
}

/// Simulates campaign.replicates paths of the configured kind and writes
/// events and snapshots. Files are named by the config fingerprint; the bytes
/// depend only on (config, seed).
inline CommandResult cmd_simulate(const RunConfig& c, const CommandOptions& o = {}) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult res;
    res.manifest.command = "simulate";
    res.manifest.fingerprint = fingerprint(c);
    const auto& fp = res.manifest.fingerprint;
    const auto dir = cmd_detail::output_dir(c, o);
    const auto m = build_model(c);
    const auto params = sim_params(c);
    const std::string& kind = c.campaign.simulate;

    std::optional<DressedModel> model;
    if (kind != "superprocess") {
        TestReport wr;
        wr.fingerprint = fp;
        const auto w = cmd_detail::checked_w(c, m, wr);
        res.manifest.reports.push_back(wr);
        if (!w) {
            res.exit_code = exit_code::test_failure;
            cmd_detail::finish(res, c, o, start);
            return res;
        }
        model.emplace(make_dressed_model(m.mechanism, *w, c.numerics.n_max, c.numerics.tail_tol));
    }

    const auto events_path = dir / ("events-" + fp + ".csv");
    const auto snap_path = dir / ("snapshots-" + fp + ".csv");
    std::ofstream events(events_path), snaps(snap_path);
    events << io::kEventsHeader << '\n';
    snaps << io::kSnapshotHeader << '\n';
    std::vector<io::binary::Record> records;
    const bool binary = cmd_detail::wants(c, "binary");

    const std::size_t total = c.campaign.replicates;
    if (total == 0) res.manifest.warnings.push_back("replicates = 0: nothing simulated");
    constexpr std::size_t kBatch = 256;
    for (std::size_t first = 0; first < total; first += kBatch) {
        const std::size_t n = std::min(kBatch, total - first);
        const auto paths =
            run_replicate_range(first, n, c.campaign.seed, o.jobs, [&](std::size_t, Rng& rng) -> DressedPath {
                if (kind == "superprocess") return simulate_superprocess(m.mechanism, m.motion, m.mu, params, rng);
                if (kind == "dressed") return simulate_dressed(*model, m.motion, m.mu, params, rng);
                return simulate_skeleton(model->law, m.motion, model->w, sample_initial_skeleton(m.mu, model->w, rng),
                                         params, rng);
            });
        for (std::size_t k = 0; k < n; ++k) {
            io::write_events_csv(events, first + k, paths[k]);
            io::write_snapshot_csv(snaps, first + k, paths[k]);
            if (binary) {
                const auto r = io::binary::records(first + k, paths[k]);
                records.insert(records.end(), r.begin(), r.end());
            }
        }
    }
    res.manifest.files.push_back(events_path.string());
    res.manifest.files.push_back(snap_path.string());
    if (binary) {
        const auto bin_path = dir / ("events-" + fp + ".bin");
        std::ofstream bin(bin_path, std::ios::binary);
        io::binary::write(bin, records);
        res.manifest.files.push_back(bin_path.string());
    }
    for (const auto& wmsg : res.manifest.warnings) *o.warn << "warning: " << wmsg << '\n';
    *o.log << "simulated " << total << " " << kind << " replicate(s) -> " << events_path.string() << '\n';
    cmd_detail::finish(res, c, o, start);
    return res;
}

/// One test of the battery. Seeds are derived from the campaign seed and the
/// test's position so tests do not share replicates.
inline TestReport run_test(const RunConfig& c, const ModelObjects& m, const DressedModel& model, const TestSpec& t,
                           std::size_t index, unsigned jobs) {
    CampaignOptions opts;
    opts.replicates = t.replicates.value_or(c.campaign.replicates);
    opts.seed = stream_seed(c.campaign.seed, index + 1);
    opts.jobs = jobs;
    opts.solver_dt = c.numerics.solver_dt;
    opts.thresholds = c.campaign.thresholds;
    const auto params = sim_params(c);
    const double T = c.campaign.T;

    TestReport r;
    if (t.type == "laplace") {
        r = laplace_check(m.mechanism, m.motion, m.mu, t.f.build(), params, opts);
    } else if (t.type == "identity") {
        r = identity_check(model, m.motion, m.mu, t.f.build(), t.h.build(), params, opts);
    } else if (t.type == "martingale") {
        auto times = t.times.empty() ? std::vector<double>{0.0, T} : t.times;
        r = run_martingale_test(m.mechanism, m.motion, m.mu, model.w.fn().scaled(t.w_scale), times, params, opts);
        r.details["w_scale"] = t.w_scale;
    } else if (t.type == "poissonization") {
        SimParams p = params;
        p.snapshot_times = {T};
        p.record_events = false;
        const auto states = run_replicates(opts.replicates, opts.seed, jobs, [&](std::size_t, Rng& rng) {
            return simulate_dressed(model, m.motion, m.mu, p, rng).states.back();
        });
        std::vector<Region> regions;
        for (const auto& [lo, hi] : t.regions) regions.push_back({lo, hi});
        r = poissonization_test(states, model.w.fn(), regions, stream_seed(opts.seed, 0x5eed), opts.thresholds);
    } else if (t.type == "skeleton-moment") {
        if (m.mu.empty()) throw ConfigError("skeleton-moment needs an initial atom position");
        SimParams p = params;
        p.snapshot_times = {T};
        p.record_events = false;
        const double x0 = m.mu.atoms().front().position;
        std::vector<SkeletonParticle> init;
        for (std::size_t i = 0; i < t.initial_particles; ++i)
            init.push_back({i + 1, kNoParent, x0, 0.0, std::nullopt, std::nullopt});
        const auto pops = run_replicates(opts.replicates, opts.seed, jobs, [&](std::size_t, Rng& rng) {
            return static_cast<double>(simulate_skeleton(model.law, m.motion, model.w, init, p, rng).states.back().skeleton.size());
        });
        if (!m.mechanism.homogeneous() || !model.w.constant_value())
            throw PreconditionError("skeleton-moment needs a homogeneous configuration");
        r = skeleton_moment_test(pops, static_cast<double>(t.initial_particles), model.law.q(x0),
                                 model.law.mean_offspring(x0), T, opts.thresholds);
    } else {
        throw ConfigError("unknown test type '" + t.type + "'");
    }
    r.name = t.label.empty() ? t.type : t.label;
    r.details["type"] = t.type;
    r.details["replicates"] = opts.replicates;
    return r;
}

/// Runs the configured battery, writes results-<fingerprint>.jsonl and a
/// summary table. Exit 0 iff every test passes; 3 if any test raised.
inline CommandResult cmd_verify(const RunConfig& c, const CommandOptions& o = {}) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult res;
    res.manifest.command = "verify";
    res.manifest.fingerprint = fingerprint(c);
    const auto& fp = res.manifest.fingerprint;
    const auto dir = cmd_detail::output_dir(c, o);
    const auto results_path = dir / ("results-" + fp + ".jsonl");
    std::ofstream results(results_path);
    res.manifest.files.push_back(results_path.string());

    bool errored = false;
    if (!c.campaign.tests.empty()) {
        const auto m = build_model(c);
        TestReport wr;
        wr.fingerprint = fp;
        const auto w = cmd_detail::checked_w(c, m, wr);
        if (!w) {
            res.manifest.reports.push_back(wr);
            results << wr.to_json().dump() << '\n';
        } else {
            const auto model = make_dressed_model(m.mechanism, *w, c.numerics.n_max, c.numerics.tail_tol);
            for (std::size_t k = 0; k < c.campaign.tests.size(); ++k) {
                const auto& t = c.campaign.tests[k];
                TestReport r;
                try {
                    r = run_test(c, m, model, t, k, o.jobs);
                } catch (const ConfigError&) {
                    throw;
                } catch (const Error& e) {
                    errored = true;
                    r.name = t.label.empty() ? t.type : t.label;
                    r.pass = false;
                    r.details = {{"type", t.type}, {"error", e.what()}};
                }
                r.fingerprint = fp;
                results << r.to_json().dump() << '\n';
                results.flush();
                res.manifest.reports.push_back(std::move(r));
            }
        }
    }
    cmd_detail::print_summary(*o.log, res.manifest.reports);
    if (errored) res.exit_code = exit_code::runtime_error;
    else if (!res.manifest.all_pass()) res.exit_code = exit_code::test_failure;
    cmd_detail::finish(res, c, o, start);
    return res;
}

}  // namespace sksim
