#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/measure.hpp"
#include "sksim/mechanism.hpp"
#include "sksim/motion.hpp"
#include "sksim/spatial_fn.hpp"
#include "sksim/verify.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sksim {

inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

/// A spatial function by family name and parameters, e.g.
/// {"family": "gaussian-bump", "base": 0.1, "amp": 0.5, "center": 3, "width": 0.7}.
/// A bare number is shorthand for a constant.
struct FnSpec {
    std::string family = "constant";
    std::map<std::string, double> params{{"value", 0.0}};

    static FnSpec constant(double v) { return {"constant", {{"value", v}}}; }

    double param(const std::string& key) const {
        const auto it = params.find(key);
        if (it == params.end()) throw ConfigError(family + " needs parameter '" + key + "'");
        return it->second;
    }

    double param_or(const std::string& key, double fallback) const {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }

    SpatialFn build() const {
        if (family == "constant") return SpatialFn::constant(param("value"));
        if (family == "affine") return SpatialFn::affine(param("a"), param("b"));
        if (family == "gaussian-bump")
            return SpatialFn::gaussian_bump(param_or("base", 0.0), param("amp"), param("center"), param("width"));
        if (family == "sine")
            return SpatialFn::sine(param_or("base", 0.0), param("amp"), param_or("k", 1.0), param_or("phase", 0.0));
        if (family == "exponential") return SpatialFn::exponential(param_or("scale", 1.0), param("theta"));
        throw ConfigError("unknown function family '" + family + "'");
    }

    bool operator==(const FnSpec&) const = default;
};

inline void to_json(Json& j, const FnSpec& f) {
    j = Json::object();
    j["family"] = f.family;
    for (const auto& [k, v] : f.params) j[k] = v;
}

inline void from_json(const Json& j, FnSpec& f) {
    if (j.is_number()) {
        f = FnSpec::constant(j.get<double>());
        return;
    }
    if (!j.is_object()) throw ConfigError("function spec must be a number or an object");
    f.family = j.value("family", std::string("constant"));
    f.params.clear();
    for (const auto& [k, v] : j.items()) {
        if (k == "family") continue;
        if (!v.is_number()) throw ConfigError("function parameter '" + k + "' must be numeric");
        f.params[k] = v.get<double>();
    }
}

struct JumpSpec {
    double u = 1.0;
    FnSpec c = FnSpec::constant(0.0);
    bool operator==(const JumpSpec&) const = default;
};

struct ModelConfig {
    std::string domain_mode = "torus";
    double left = 0.0;
    double right = 6.283185307179586;
    int nodes = 201;
    FnSpec alpha = FnSpec::constant(1.0);
    FnSpec beta = FnSpec::constant(1.0);
    std::vector<JumpSpec> jumps;
    FnSpec drift = FnSpec::constant(0.0);
    FnSpec diffusion = FnSpec::constant(1.0);
    std::string w_mode = "w-star";  // "w-star" (homogeneous root) or "explicit"
    double w_scale = 1.0;           // multiplies the w-star root
    FnSpec w_fn = FnSpec::constant(1.0);
    std::vector<Atom> initial{{0.5, 1.0}, {0.5, 4.0}};
    bool operator==(const ModelConfig& o) const {
        auto atoms_eq = [](const std::vector<Atom>& a, const std::vector<Atom>& b) {
            if (a.size() != b.size()) return false;
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a[i].mass != b[i].mass || a[i].position != b[i].position) return false;
            return true;
        };
        return domain_mode == o.domain_mode && left == o.left && right == o.right && nodes == o.nodes &&
               alpha == o.alpha && beta == o.beta && jumps == o.jumps && drift == o.drift &&
               diffusion == o.diffusion && w_mode == o.w_mode && w_scale == o.w_scale && w_fn == o.w_fn &&
               atoms_eq(initial, o.initial);
    }
};

struct NumericsConfig {
    double dt = 1e-3;         // motion sub-step
    double solver_dt = 1e-3;  // PDE time step
    double delta = 1e-2;
    double epsilon = 1e-2;
    int n_max = 2;
    double tail_tol = 1e-12;
    double w_tol = 1e-6;
    std::size_t population_ceiling = 1'000'000;
    bool operator==(const NumericsConfig&) const = default;
};

/// One entry of the verification battery. `type` is one of laplace, identity,
/// martingale, poissonization, skeleton-moment; unused fields are ignored.
struct TestSpec {
    std::string type;
    std::string label;
    FnSpec f = FnSpec::constant(0.0);
    FnSpec h = FnSpec::constant(0.0);
    std::vector<double> times;                       // martingale
    double w_scale = 1.0;                            // martingale: tests exp(-<scale w, X_t>)
    std::vector<std::pair<double, double>> regions;  // poissonization
    std::size_t initial_particles = 10;              // skeleton-moment
    std::optional<std::size_t> replicates;           // per-test override
    bool operator==(const TestSpec&) const = default;
};

struct CampaignConfig {
    double T = 1.0;
    std::size_t replicates = 1000;
    std::uint64_t seed = 1;
    std::string simulate = "dressed";  // skeleton | superprocess | dressed
    std::vector<double> snapshot_times;
    FnSpec solve_f = FnSpec::constant(0.5);
    FnSpec solve_h = FnSpec::constant(0.3);
    bool refine = false;
    Thresholds thresholds;
    std::vector<TestSpec> tests;
    bool operator==(const CampaignConfig& o) const {
        return T == o.T && replicates == o.replicates && seed == o.seed && simulate == o.simulate &&
               snapshot_times == o.snapshot_times && solve_f == o.solve_f && solve_h == o.solve_h &&
               refine == o.refine && thresholds.sigma_k == o.thresholds.sigma_k &&
               thresholds.tol_disc == o.thresholds.tol_disc && thresholds.ks_alpha == o.thresholds.ks_alpha &&
               tests == o.tests;
    }
};

struct OutputConfig {
    std::string dir = "out";
    std::vector<std::string> formats{"csv"};  // csv, binary
    std::size_t csv_stride = 10;              // time stride of solver CSV output
    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    NumericsConfig numerics;
    CampaignConfig campaign;
    OutputConfig output;
    bool operator==(const RunConfig&) const = default;
};

namespace config_detail {

template <class T>
T get_or(const Json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline FnSpec fn_or(const Json& j, const char* key, const FnSpec& fallback) {
    return j.contains(key) ? j.at(key).get<FnSpec>() : fallback;
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

inline void check_known_keys(const Json& j, std::initializer_list<const char*> keys, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* name : keys) ok = ok || k == name;
        if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

}  // namespace config_detail

inline Json to_json(const RunConfig& c) {
    Json j;
    auto& m = j["model"];
    m["domain"] = {{"mode", c.model.domain_mode}, {"left", c.model.left}, {"right", c.model.right},
                   {"nodes", c.model.nodes}};
    m["mechanism"]["alpha"] = c.model.alpha;
    m["mechanism"]["beta"] = c.model.beta;
    m["mechanism"]["jumps"] = Json::array();
    for (const auto& jp : c.model.jumps) m["mechanism"]["jumps"].push_back({{"u", jp.u}, {"c", jp.c}});
    m["motion"] = {{"drift", c.model.drift}, {"diffusion", c.model.diffusion}};
    m["w"] = {{"mode", c.model.w_mode}, {"scale", c.model.w_scale}, {"fn", c.model.w_fn}};
    m["initial"] = Json::array();
    for (const auto& a : c.model.initial) m["initial"].push_back({{"mass", a.mass}, {"position", a.position}});

    const auto& n = c.numerics;
    j["numerics"] = {{"dt", n.dt},           {"solver_dt", n.solver_dt}, {"delta", n.delta},
                     {"epsilon", n.epsilon}, {"n_max", n.n_max},         {"tail_tol", n.tail_tol},
                     {"w_tol", n.w_tol},     {"population_ceiling", n.population_ceiling}};

    const auto& cp = c.campaign;
    auto& jc = j["campaign"];
    jc = {{"T", cp.T},
          {"replicates", cp.replicates},
          {"seed", cp.seed},
          {"simulate", cp.simulate},
          {"snapshot_times", cp.snapshot_times},
          {"solve", {{"f", cp.solve_f}, {"h", cp.solve_h}, {"refine", cp.refine}}},
          {"thresholds",
           {{"sigma_k", cp.thresholds.sigma_k}, {"tol_disc", cp.thresholds.tol_disc}, {"ks_alpha", cp.thresholds.ks_alpha}}}};
    jc["tests"] = Json::array();
    for (const auto& t : cp.tests) {
        Json jt = {{"type", t.type}, {"label", t.label}, {"f", t.f}, {"h", t.h}, {"times", t.times},
                   {"w_scale", t.w_scale}, {"initial_particles", t.initial_particles}};
        jt["regions"] = Json::array();
        for (const auto& [lo, hi] : t.regions) jt["regions"].push_back({lo, hi});
        jt["replicates"] = t.replicates ? Json(*t.replicates) : Json(nullptr);
        jc["tests"].push_back(std::move(jt));
    }
    j["output"] = {{"dir", c.output.dir}, {"formats", c.output.formats}, {"csv_stride", c.output.csv_stride}};
    return j;
}

inline void validate(const RunConfig& c);

/// Parses a config document; absent keys take their defaults and unknown keys
/// are rejected. Numeric ranges are checked here so bad configs fail before
/// any model is built.
inline RunConfig config_from_json(const Json& j) {
    using namespace config_detail;
    RunConfig c;
    try {
        check_known_keys(j, {"model", "numerics", "campaign", "output"}, "config");
        const Json empty = Json::object();
        const Json& m = j.contains("model") ? j.at("model") : empty;
        check_known_keys(m, {"domain", "mechanism", "motion", "w", "initial"}, "model");
        if (m.contains("domain")) {
            const auto& d = m.at("domain");
            check_known_keys(d, {"mode", "left", "right", "nodes"}, "model.domain");
            c.model.domain_mode = get_or(d, "mode", c.model.domain_mode);
            c.model.left = get_or(d, "left", c.model.left);
            c.model.right = get_or(d, "right", c.model.right);
            c.model.nodes = get_or(d, "nodes", c.model.nodes);
        }
        if (m.contains("mechanism")) {
            const auto& mm = m.at("mechanism");
            check_known_keys(mm, {"alpha", "beta", "jumps"}, "model.mechanism");
            c.model.alpha = fn_or(mm, "alpha", c.model.alpha);
            c.model.beta = fn_or(mm, "beta", c.model.beta);
            if (mm.contains("jumps")) {
                for (const auto& jp : mm.at("jumps")) {
                    check_known_keys(jp, {"u", "c"}, "model.mechanism.jumps[]");
                    c.model.jumps.push_back({get_or(jp, "u", 1.0), fn_or(jp, "c", FnSpec::constant(0.0))});
                }
            }
        }
        if (m.contains("motion")) {
            const auto& mo = m.at("motion");
            check_known_keys(mo, {"drift", "diffusion"}, "model.motion");
            c.model.drift = fn_or(mo, "drift", c.model.drift);
            c.model.diffusion = fn_or(mo, "diffusion", c.model.diffusion);
        }
        if (m.contains("w")) {
            const auto& w = m.at("w");
            check_known_keys(w, {"mode", "scale", "fn"}, "model.w");
            c.model.w_mode = get_or(w, "mode", c.model.w_mode);
            c.model.w_scale = get_or(w, "scale", c.model.w_scale);
            c.model.w_fn = fn_or(w, "fn", c.model.w_fn);
        }
        if (m.contains("initial")) {
            c.model.initial.clear();
            for (const auto& a : m.at("initial")) {
                check_known_keys(a, {"mass", "position"}, "model.initial[]");
                c.model.initial.push_back({get_or(a, "mass", 0.0), get_or(a, "position", 0.0)});
            }
        }

        if (j.contains("numerics")) {
            const auto& n = j.at("numerics");
            check_known_keys(n, {"dt", "solver_dt", "delta", "epsilon", "n_max", "tail_tol", "w_tol", "population_ceiling"},
                             "numerics");
            auto& cn = c.numerics;
            cn.dt = get_or(n, "dt", cn.dt);
            cn.solver_dt = get_or(n, "solver_dt", cn.solver_dt);
            cn.delta = get_or(n, "delta", cn.delta);
            cn.epsilon = get_or(n, "epsilon", cn.epsilon);
            cn.n_max = get_or(n, "n_max", cn.n_max);
            cn.tail_tol = get_or(n, "tail_tol", cn.tail_tol);
            cn.w_tol = get_or(n, "w_tol", cn.w_tol);
            cn.population_ceiling = get_or(n, "population_ceiling", cn.population_ceiling);
        }

        if (j.contains("campaign")) {
            const auto& cj = j.at("campaign");
            check_known_keys(cj, {"T", "replicates", "seed", "simulate", "snapshot_times", "solve", "thresholds", "tests"},
                             "campaign");
            auto& cp = c.campaign;
            cp.T = get_or(cj, "T", cp.T);
            cp.replicates = get_or(cj, "replicates", cp.replicates);
            cp.seed = get_or(cj, "seed", cp.seed);
            cp.simulate = get_or(cj, "simulate", cp.simulate);
            cp.snapshot_times = get_or(cj, "snapshot_times", cp.snapshot_times);
            if (cj.contains("solve")) {
                const auto& s = cj.at("solve");
                check_known_keys(s, {"f", "h", "refine"}, "campaign.solve");
                cp.solve_f = fn_or(s, "f", cp.solve_f);
                cp.solve_h = fn_or(s, "h", cp.solve_h);
                cp.refine = get_or(s, "refine", cp.refine);
            }
            if (cj.contains("thresholds")) {
                const auto& t = cj.at("thresholds");
                check_known_keys(t, {"sigma_k", "tol_disc", "ks_alpha"}, "campaign.thresholds");
                cp.thresholds.sigma_k = get_or(t, "sigma_k", cp.thresholds.sigma_k);
                cp.thresholds.tol_disc = get_or(t, "tol_disc", cp.thresholds.tol_disc);
                cp.thresholds.ks_alpha = get_or(t, "ks_alpha", cp.thresholds.ks_alpha);
            }
            if (cj.contains("tests")) {
                for (const auto& t : cj.at("tests")) {
                    check_known_keys(t, {"type", "label", "f", "h", "times", "w_scale", "regions", "initial_particles",
                                         "replicates"},
                                     "campaign.tests[]");
                    TestSpec s;
                    s.type = get_or(t, "type", std::string());
                    s.label = get_or(t, "label", s.type);
                    s.f = fn_or(t, "f", s.f);
                    s.h = fn_or(t, "h", s.h);
                    s.times = get_or(t, "times", s.times);
                    s.w_scale = get_or(t, "w_scale", s.w_scale);
                    if (t.contains("regions"))
                        for (const auto& r : t.at("regions")) {
                            if (!r.is_array() || r.size() != 2) throw ConfigError("regions are [lo, hi] pairs");
                            s.regions.emplace_back(r[0].get<double>(), r[1].get<double>());
                        }
                    s.initial_particles = get_or(t, "initial_particles", s.initial_particles);
                    if (t.contains("replicates") && !t.at("replicates").is_null())
                        s.replicates = t.at("replicates").get<std::size_t>();
                    cp.tests.push_back(std::move(s));
                }
            }
        }

        if (j.contains("output")) {
            const auto& o = j.at("output");
            check_known_keys(o, {"dir", "formats", "csv_stride"}, "output");
            c.output.dir = get_or(o, "dir", c.output.dir);
            c.output.formats = get_or(o, "formats", c.output.formats);
            c.output.csv_stride = get_or(o, "csv_stride", c.output.csv_stride);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    validate(c);
    return c;
}

/// Range checks that do not need a built model.
inline void validate(const RunConfig& c) {
    using config_detail::require_positive;
    parse_domain_mode(c.model.domain_mode);
    if (!(c.model.left < c.model.right)) throw ConfigError("model.domain: left must be < right");
    if (c.model.nodes < 3) throw ConfigError("model.domain.nodes must be >= 3");
    if (c.model.beta.family == "constant" && c.model.beta.param("value") < 0.0)
        throw ConfigError("model.mechanism.beta must be non-negative");
    for (const auto& jp : c.model.jumps) {
        require_positive(jp.u, "jump size u");
        if (jp.c.family == "constant" && jp.c.param("value") < 0.0) throw ConfigError("jump intensity c must be >= 0");
    }
    if (c.model.w_mode != "w-star" && c.model.w_mode != "explicit")
        throw ConfigError("model.w.mode must be 'w-star' or 'explicit'");
    require_positive(c.model.w_scale, "model.w.scale");
    for (const auto& a : c.model.initial) require_positive(a.mass, "initial atom mass");
    const auto& n = c.numerics;
    require_positive(n.dt, "numerics.dt");
    require_positive(n.solver_dt, "numerics.solver_dt");
    require_positive(n.delta, "numerics.delta");
    require_positive(n.epsilon, "numerics.epsilon");
    require_positive(n.tail_tol, "numerics.tail_tol");
    require_positive(n.w_tol, "numerics.w_tol");
    if (n.n_max < 2) throw ConfigError("numerics.n_max must be >= 2");
    if (n.population_ceiling == 0) throw ConfigError("numerics.population_ceiling must be positive");
    const auto& cp = c.campaign;
    require_positive(cp.T, "campaign.T");
    for (double t : cp.snapshot_times)
        if (t < 0.0 || t > cp.T) throw ConfigError("campaign.snapshot_times must lie in [0, T]");
    if (cp.simulate != "skeleton" && cp.simulate != "superprocess" && cp.simulate != "dressed")
        throw ConfigError("campaign.simulate must be skeleton, superprocess or dressed");
    require_positive(cp.thresholds.sigma_k, "thresholds.sigma_k");
    if (!(cp.thresholds.tol_disc >= 0.0)) throw ConfigError("thresholds.tol_disc must be >= 0");
    if (!(cp.thresholds.ks_alpha > 0.0 && cp.thresholds.ks_alpha < 1.0))
        throw ConfigError("thresholds.ks_alpha must lie in (0, 1)");
    for (const auto& t : cp.tests) {
        if (t.type != "laplace" && t.type != "identity" && t.type != "martingale" && t.type != "poissonization" &&
            t.type != "skeleton-moment")
            throw ConfigError("unknown test type '" + t.type + "'");
        for (double s : t.times)
            if (s < 0.0) throw ConfigError("martingale times must be non-negative");
        for (const auto& [lo, hi] : t.regions)
            if (!(lo < hi)) throw ConfigError("region bounds must satisfy lo < hi");
        if (t.type == "poissonization" && t.regions.empty()) throw ConfigError("poissonization needs regions");
        require_positive(t.w_scale, "test w_scale");
    }
    for (const auto& f : c.output.formats)
        if (f != "csv" && f != "binary") throw ConfigError("output.formats entries must be csv or binary");
    if (c.output.csv_stride == 0) throw ConfigError("output.csv_stride must be positive");
}

/// Applies a dotted-path override such as "campaign.replicates=500" or
/// "model.mechanism.beta=2". The value is read as JSON when it parses,
/// otherwise as a string.
inline void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    Json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        const bool is_index = !p.empty() && p.find_first_not_of("0123456789") == std::string::npos;
        if (is_index && node->is_array()) {
            const auto idx = std::stoul(p);
            if (idx >= node->size()) throw ConfigError("--set index out of range in '" + key + "'");
            node = &(*node)[idx];
        } else {
            if (node->is_null()) *node = Json::object();
            if (!node->is_object()) throw ConfigError("--set path '" + key + "' crosses a non-object");
            node = &(*node)[p];
        }
    }
    *node = std::move(value);
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Json j = Json::parse(in, nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    return j;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    Json doc = path.empty() ? Json::object() : read_json_file(path);
    for (const auto& o : overrides) apply_override(doc, o);
    return config_from_json(doc);
}

/// Hex SHA-256 of the canonical serialization (object keys sorted), truncated
/// to 16 characters. Key order in the source file does not matter.
inline std::string fingerprint(const RunConfig& c) {
    const std::string canon = to_json(c).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canon.data(), canon.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < 8; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Objects built from the model block.
struct ModelObjects {
    DomainSpec domain;
    BranchingMechanism mechanism;
    Motion motion;
    AtomicMeasure mu;
};

inline ModelObjects build_model(const RunConfig& c) {
    const auto& m = c.model;
    DomainSpec d(parse_domain_mode(m.domain_mode), m.left, m.right, m.nodes);
    std::vector<JumpAtom> jumps;
    for (const auto& jp : m.jumps) jumps.push_back({jp.u, jp.c.build()});
    BranchingMechanism mech(m.alpha.build(), m.beta.build(), std::move(jumps), d);
    Motion motion(m.drift.build(), m.diffusion.build(), d);
    AtomicMeasure mu;
    for (const auto& a : m.initial) {
        if (!d.contains(a.position)) throw ConfigError("initial atom outside the domain");
        mu.add(a.mass, a.position);
    }
    return {d, std::move(mech), std::move(motion), std::move(mu)};
}

/// The configured w candidate (before the generator check).
inline SpatialFn w_candidate(const RunConfig& c, const BranchingMechanism& mech) {
    if (c.model.w_mode == "explicit") return c.model.w_fn.build().scaled(c.model.w_scale);
    return SpatialFn::constant(c.model.w_scale * find_w_star(mech));
}

inline SimParams sim_params(const RunConfig& c) {
    SimParams p;
    p.dt = c.numerics.dt;
    p.delta = c.numerics.delta;
    p.epsilon = c.numerics.epsilon;
    p.rng_seed = c.campaign.seed;
    p.T = c.campaign.T;
    p.population_ceiling = c.numerics.population_ceiling;
    p.snapshot_times = c.campaign.snapshot_times;
    return p;
}

}  // namespace sksim
