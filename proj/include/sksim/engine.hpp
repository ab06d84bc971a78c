#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/martingale_function.hpp"
#include "sksim/measure.hpp"
#include "sksim/mechanism.hpp"
#include "sksim/motion.hpp"
#include "sksim/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace sksim {

struct SimParams {
    double dt = 1e-3;       // motion sub-step
    double delta = 1e-2;    // superprocess particle mass
    double epsilon = 1e-2;  // excursion surrogate mass
    std::uint64_t rng_seed = 0;
    double T = 1.0;
    std::size_t population_ceiling = 1'000'000;
    std::vector<double> snapshot_times;  // empty means {T}
    bool record_events = true;

    void validate() const {
        if (!(dt > 0.0) || !(delta > 0.0) || !(epsilon > 0.0) || !(T > 0.0))
            throw PreconditionError("dt, delta, epsilon and T must all be positive");
        for (double s : snapshot_times)
            if (s < 0.0 || s > T) throw PreconditionError("snapshot times must lie in [0, T]");
    }

    std::vector<double> output_times() const {
        std::vector<double> t = snapshot_times.empty() ? std::vector<double>{T} : snapshot_times;
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
        return t;
    }
};

inline constexpr std::uint64_t kNoParent = std::numeric_limits<std::uint64_t>::max();

struct SkeletonParticle {
    std::uint64_t id = 0;
    std::uint64_t parent_id = kNoParent;
    double position = 0.0;
    double birth_time = 0.0;
    std::optional<double> death_time;
    std::optional<int> offspring_count;  // >= 2 for a branch, 0 when killed at the boundary
};

enum class ImmigrationKind { continuous, discontinuous, branch_point };

inline std::string_view to_string(ImmigrationKind k) {
    switch (k) {
        case ImmigrationKind::continuous: return "continuous";
        case ImmigrationKind::discontinuous: return "discontinuous";
        case ImmigrationKind::branch_point: return "branch-point";
    }
    return "?";
}

struct ImmigrationEvent {
    double time = 0.0;
    ImmigrationKind kind = ImmigrationKind::continuous;
    double site = 0.0;
    double initial_mass = 0.0;
    std::uint64_t source_particle = 0;
    std::uint32_t component = 0;
};

/// Skeleton particle death: replaced by `offspring_count` children, or
/// killed at the boundary when the count is 0.
struct BranchEvent {
    double time = 0.0;
    double site = 0.0;
    std::uint64_t particle = 0;
    int offspring_count = 0;
};

/// (Lambda_t, Z_t) at one output time. `component[k]` labels atom k of
/// lambda: 0 for the initial X* burst, i >= 1 for the i-th immigrant.
struct DressedState {
    double time = 0.0;
    AtomicMeasure lambda;
    std::vector<std::uint32_t> component;
    std::vector<SkeletonParticle> skeleton;

    double x_star_mass() const {
        double m = 0.0;
        for (std::size_t k = 0; k < lambda.size(); ++k)
            if (component[k] == 0) m += lambda.atoms()[k].mass;
        return m;
    }

    template <class F>
    double skeleton_integral(const F& h) const {
        double s = 0.0;
        for (const auto& p : skeleton) s += h(p.position);
        return s;
    }
};

struct DressedPath {
    std::vector<DressedState> states;
    std::vector<ImmigrationEvent> immigrations;
    std::vector<BranchEvent> branches;
    std::vector<SkeletonParticle> skeleton_history;
};

/// Mechanism, martingale function and everything derived from them that a
/// dressed simulation needs. Built once, shared read-only by all replicates.
struct DressedModel {
    BranchingMechanism mechanism;
    MartingaleFunction w;
    BranchingMechanism tilted;
    OffspringLaw law;
};

inline DressedModel make_dressed_model(const BranchingMechanism& mech, const MartingaleFunction& w, int n_max = 2,
                                       double tail_tol = 1e-12) {
    return DressedModel{mech, w, tilt(mech, w), build_offspring_law(mech, w, n_max, tail_tol)};
}

/// Poisson mark k ~ Poisson(w(x) u) attached to a jump of size u at x.
inline int thin_jump(double x, double u, const MartingaleFunction& w, Rng& rng) {
    if (!(u > 0.0)) throw PreconditionError("thin_jump needs u > 0");
    const double lambda = w(x) * u;
    if (lambda <= 0.0) return 0;
    return std::poisson_distribution<int>(lambda)(rng);
}

/// Stream a marked jump is routed to: k = 0, k = 1, k >= 2.
enum class JumpStream { n0, n1, n2 };

constexpr JumpStream route_jump(int k) noexcept { return k == 0 ? JumpStream::n0 : (k == 1 ? JumpStream::n1 : JumpStream::n2); }

/// Poisson(w(x) m) particles at every atom (m, x) of mu.
inline std::vector<SkeletonParticle> sample_initial_skeleton(const AtomicMeasure& mu, const MartingaleFunction& w,
                                                             Rng& rng) {
    std::vector<SkeletonParticle> out;
    std::uint64_t next = 1;
    for (const auto& a : mu.atoms()) {
        const double lambda = w(a.position) * a.mass;
        const int k = lambda > 0.0 ? std::poisson_distribution<int>(lambda)(rng) : 0;
        for (int i = 0; i < k; ++i) out.push_back({next++, kNoParent, a.position, 0.0, std::nullopt, std::nullopt});
    }
    return out;
}

namespace detail {

struct MassParticle {
    double x;
    double t;
    std::uint32_t component;
};

struct MassClass {
    double mass;
    double bound;
    std::vector<MassParticle> particles;
};

struct SkeletonSlot {
    double x;
    double t;
    std::uint64_t id;
};

/// Event-driven simulation of mass particles (a branching-particle
/// approximation of a superprocess) and, optionally, a skeleton that dresses
/// itself with immigrating mass.
///
/// Every particle carries a proposal clock whose rate is a sup bound of its
/// true event rates; proposals are accepted by thinning at the particle's
/// position at the proposal time. Positions are advanced lazily, only when a
/// particle is touched, by Euler-Maruyama sub-steps of length <= dt (a single
/// exact Gaussian step when the coefficients are constant on the torus).
class Engine {
public:
    struct Setup {
        const Motion* motion = nullptr;
        const BranchingMechanism* mass_mechanism = nullptr;  // drives the mass particles
        const BranchingMechanism* base_mechanism = nullptr;  // immigration rates (beta, c_j)
        const MartingaleFunction* w = nullptr;
        const OffspringLaw* law = nullptr;
        bool dress = false;
        SimParams params;
    };

    Engine(const Setup& setup, Rng& rng) : s_(setup), rng_(rng) {
        s_.params.validate();
        const Grid& grid = s_.motion->grid();
        if (s_.mass_mechanism) {
            const auto& m = *s_.mass_mechanism;
            homogeneous_mass_ = m.homogeneous();
            beta_bound_ = thinning_bound([&](double x) { return m.beta()(x); }, grid, homogeneous_mass_);
            birth_bound_ = thinning_bound([&](double x) { return std::max(m.net_linear_rate(x), 0.0); }, grid,
                                          homogeneous_mass_);
            death_bound_ = thinning_bound([&](double x) { return std::max(-m.net_linear_rate(x), 0.0); }, grid,
                                          homogeneous_mass_);
            for (const auto& j : m.jumps())
                jump_bounds_.push_back(thinning_bound([&](double x) { return j.intensity(x); }, grid, homogeneous_mass_));
            if (homogeneous_mass_) {
                const double x0 = grid.nodes.front();
                h_beta_ = m.beta()(x0);
                h_net_ = m.net_linear_rate(x0);
                for (const auto& j : m.jumps()) h_jumps_.push_back(j.intensity(x0));
            }
        }
        if (s_.law) {
            const bool flat = s_.law->mechanism().homogeneous() && s_.w->constant_value().has_value();
            skeleton_bound_ = thinning_bound([&](double x) { return std::max(s_.law->q(x), 0.0); }, grid, flat);
            if (s_.params.dt > 0.1 / std::max(skeleton_bound_, 1e-300))
                throw PreconditionError("dt must not exceed 0.1 / sup q");
            if (s_.dress) {
                const auto& b = *s_.base_mechanism;
                skeleton_bound_ +=
                    2.0 * thinning_bound([&](double x) { return b.beta()(x); }, grid, flat) / s_.params.epsilon;
                for (const auto& j : b.jumps()) {
                    skeleton_bound_ += thinning_bound(
                        [&](double x) { return j.intensity(x) * j.size * std::exp(-(*s_.w)(x) * j.size); }, grid,
                        flat);
                }
            }
            skeleton_fast_motion_ = s_.motion->homogeneous() && s_.motion->domain().periodic() &&
                                    s_.w->constant_value().has_value();
        }
        mass_fast_motion_ = s_.motion->homogeneous() && s_.motion->domain().periodic();
    }

    void add_mass(double mass, double x, double t, std::uint32_t component) {
        const double n = std::max(1.0, std::ceil(mass / s_.params.delta - 1e-9));
        const double m = mass / n;
        MassClass& cls = class_for(m);
        for (int k = 0; k < static_cast<int>(n); ++k) cls.particles.push_back({x, t, component});
        population_ += static_cast<std::size_t>(n);
        check_ceiling();
    }

    void add_skeleton(const SkeletonParticle& p) {
        skeleton_.push_back({p.position, p.birth_time, p.id});
        next_id_ = std::max(next_id_, p.id + 1);
        if (s_.params.record_events) history_index(p.id) = push_history(p);
        ++population_;
        check_ceiling();
    }

    DressedPath run() {
        const auto outputs = s_.params.output_times();
        std::size_t next_output = 0;
        double t = 0.0;
        while (true) {
            const double rate = total_rate();
            const double t_next = rate > 0.0 ? t + exponential_(rng_) / rate : std::numeric_limits<double>::infinity();
            while (next_output < outputs.size() && outputs[next_output] <= t_next) {
                path_.states.push_back(snapshot(outputs[next_output]));
                ++next_output;
            }
            if (next_output == outputs.size()) break;
            t = t_next;
            dispatch(t, uniform_(rng_) * rate);
        }
        if (s_.params.record_events) path_.skeleton_history = std::move(history_);
        return std::move(path_);
    }

private:
    MassClass& class_for(double m) {
        for (auto& c : classes_)
            if (std::abs(c.mass - m) <= 1e-12 * m) return c;
        double bound = 2.0 * beta_bound_ / m + birth_bound_ + death_bound_;
        for (double b : jump_bounds_) bound += b * m;
        classes_.push_back({m, bound, {}});
        return classes_.back();
    }

    void check_ceiling() const {
        if (population_ > s_.params.population_ceiling)
            throw GrowthError("population ceiling of " + std::to_string(s_.params.population_ceiling) + " breached");
    }

    double total_rate() const {
        double r = 0.0;
        for (const auto& c : classes_) r += static_cast<double>(c.particles.size()) * c.bound;
        r += static_cast<double>(skeleton_.size()) * skeleton_bound_;
        return r;
    }

    void dispatch(double t, double u) {
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            const double block = static_cast<double>(classes_[c].particles.size()) * classes_[c].bound;
            if (u < block) {
                const double s = u / classes_[c].bound;
                auto i = static_cast<std::size_t>(s);
                if (i >= classes_[c].particles.size()) i = classes_[c].particles.size() - 1;
                mass_event(c, i, t, std::clamp(s - static_cast<double>(i), 0.0, 1.0));
                return;
            }
            u -= block;
        }
        if (skeleton_.empty()) return;
        const double s = u / skeleton_bound_;
        auto i = static_cast<std::size_t>(s);
        if (i >= skeleton_.size()) i = skeleton_.size() - 1;
        skeleton_event(i, t, std::clamp(s - static_cast<double>(i), 0.0, 1.0));
    }

    bool advance_mass(MassParticle& p, double t) {
        const double elapsed = t - p.t;
        if (elapsed <= 0.0) return true;
        const Motion& motion = *s_.motion;
        PathState st{p.x, p.t, true, std::nullopt};
        if (mass_fast_motion_) {
            st = step(motion, st, elapsed, normal_(rng_));
        } else {
            const double n = std::ceil(elapsed / s_.params.dt - 1e-9);
            const double h = elapsed / n;
            for (int k = 0; k < static_cast<int>(n) && st.alive; ++k) st = step(motion, st, h, normal_(rng_));
        }
        p.x = st.position;
        p.t = t;
        return st.alive;
    }

    bool advance_skeleton(SkeletonSlot& p, double t, double& kill_time) {
        const double elapsed = t - p.t;
        if (elapsed <= 0.0) return true;
        const Motion& motion = *s_.motion;
        PathState st{p.x, p.t, true, std::nullopt};
        if (skeleton_fast_motion_) {
            st = step_htransformed(motion, *s_.w, st, elapsed, normal_(rng_));
        } else {
            const double n = std::ceil(elapsed / s_.params.dt - 1e-9);
            const double h = elapsed / n;
            for (int k = 0; k < static_cast<int>(n) && st.alive; ++k)
                st = step_htransformed(motion, *s_.w, st, h, normal_(rng_));
        }
        p.x = st.position;
        p.t = t;
        if (!st.alive) kill_time = *st.kill_time;
        return st.alive;
    }

    void remove_mass(std::size_t c, std::size_t i) {
        auto& v = classes_[c].particles;
        v[i] = v.back();
        v.pop_back();
        --population_;
    }

    void duplicate_mass(std::size_t c, std::size_t i) {
        const MassParticle copy = classes_[c].particles[i];
        classes_[c].particles.push_back(copy);
        ++population_;
        check_ceiling();
    }

    void mass_event(std::size_t c, std::size_t i, double t, double v) {
        MassParticle& p = classes_[c].particles[i];
        if (!advance_mass(p, t)) {
            remove_mass(c, i);
            return;
        }
        const double x = p.x;
        const double m = classes_[c].mass;
        const auto& mech = *s_.mass_mechanism;
        const double beta = homogeneous_mass_ ? h_beta_ : mech.beta()(x);
        const double net = homogeneous_mass_ ? h_net_ : mech.net_linear_rate(x);
        double r = v * classes_[c].bound;

        const double binary = 2.0 * beta / m;
        if (r < binary) {
            if (r < 0.5 * binary)
                remove_mass(c, i);
            else
                duplicate_mass(c, i);
            return;
        }
        r -= binary;
        const double birth = std::max(net, 0.0);
        if (r < birth) {
            duplicate_mass(c, i);
            return;
        }
        r -= birth;
        const double death = std::max(-net, 0.0);
        if (r < death) {
            remove_mass(c, i);
            return;
        }
        r -= death;
        double total = binary + birth + death;
        const auto& jumps = mech.jumps();
        for (std::size_t j = 0; j < jumps.size(); ++j) {
            const double rate = (homogeneous_mass_ ? h_jumps_[j] : jumps[j].intensity(x)) * m;
            if (r < rate) {
                const std::uint32_t comp = p.component;
                add_mass(jumps[j].size, x, t, comp);
                return;
            }
            r -= rate;
            total += rate;
        }
        if (total > classes_[c].bound * (1.0 + 1e-9))
            throw ModelError("thinning bound exceeded for a mass particle at x = " + std::to_string(x));
    }

    void skeleton_event(std::size_t i, double t, double v) {
        SkeletonSlot& p = skeleton_[i];
        double kill_time = 0.0;
        if (!advance_skeleton(p, t, kill_time)) {
            record_death(p.id, kill_time, p.x, 0);
            remove_skeleton(i);
            return;
        }
        const double x = p.x;
        const OffspringLaw& law = *s_.law;
        double r = v * skeleton_bound_;
        const double q = std::max(law.q(x), 0.0);
        double total = q;
        if (r < q) {
            branch(i, t);
            return;
        }
        r -= q;
        if (s_.dress) {
            const auto& base = *s_.base_mechanism;
            const double cont = 2.0 * base.beta()(x) / s_.params.epsilon;
            total += cont;
            if (r < cont) {
                immigrate(ImmigrationKind::continuous, s_.params.epsilon, x, t, p.id);
                return;
            }
            r -= cont;
            const double wx = (*s_.w)(x);
            for (const auto& j : base.jumps()) {
                const double rate = j.intensity(x) * j.size * std::exp(-wx * j.size);
                total += rate;
                if (r < rate) {
                    immigrate(ImmigrationKind::discontinuous, j.size, x, t, p.id);
                    return;
                }
                r -= rate;
            }
        }
        if (total > skeleton_bound_ * (1.0 + 1e-9))
            throw ModelError("thinning bound exceeded for a skeleton particle at x = " + std::to_string(x));
    }

    void branch(std::size_t i, double t) {
        const SkeletonSlot parent = skeleton_[i];
        const OffspringLaw& law = *s_.law;
        const int n = law.sample_offspring(parent.x, uniform_(rng_));
        const double y = s_.dress ? law.sample_branch_mass(parent.x, n, uniform_(rng_)) : 0.0;
        record_death(parent.id, t, parent.x, n);
        remove_skeleton(i);
        for (int k = 0; k < n; ++k) {
            const std::uint64_t id = next_id_++;
            skeleton_.push_back({parent.x, t, id});
            ++population_;
            if (s_.params.record_events)
                history_index(id) = push_history({id, parent.id, parent.x, t, std::nullopt, std::nullopt});
        }
        check_ceiling();
        if (y > 0.0) immigrate(ImmigrationKind::branch_point, y, parent.x, t, parent.id);
    }

    void immigrate(ImmigrationKind kind, double mass, double x, double t, std::uint64_t source) {
        const std::uint32_t comp = next_component_++;
        if (s_.params.record_events) path_.immigrations.push_back({t, kind, x, mass, source, comp});
        add_mass(mass, x, t, comp);
    }

    void remove_skeleton(std::size_t i) {
        skeleton_[i] = skeleton_.back();
        skeleton_.pop_back();
        --population_;
    }

    void record_death(std::uint64_t id, double t, double x, int offspring) {
        if (!s_.params.record_events) return;
        path_.branches.push_back({t, x, id, offspring});
        auto& h = history_[history_index(id)];
        h.death_time = t;
        h.offspring_count = offspring;
        h.position = x;
    }

    std::size_t push_history(const SkeletonParticle& p) {
        history_.push_back(p);
        return history_.size() - 1;
    }

    std::size_t& history_index(std::uint64_t id) {
        if (id >= index_of_.size()) index_of_.resize(std::max<std::size_t>(id + 1, index_of_.size() * 2), 0);
        return index_of_[id];
    }

    DressedState snapshot(double t) {
        DressedState st;
        st.time = t;
        std::size_t total = 0;
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            auto& v = classes_[c].particles;
            for (std::size_t i = v.size(); i-- > 0;)
                if (!advance_mass(v[i], t)) remove_mass(c, i);
            total += v.size();
        }
        st.lambda.reserve(total);
        st.component.reserve(total);
        for (const auto& c : classes_) {
            for (const auto& p : c.particles) {
                st.lambda.add(c.mass, p.x);
                st.component.push_back(p.component);
            }
        }
        for (std::size_t i = skeleton_.size(); i-- > 0;) {
            double kill_time = 0.0;
            if (!advance_skeleton(skeleton_[i], t, kill_time)) {
                record_death(skeleton_[i].id, kill_time, skeleton_[i].x, 0);
                remove_skeleton(i);
            }
        }
        st.skeleton.reserve(skeleton_.size());
        for (const auto& p : skeleton_) {
            SkeletonParticle sp;
            sp.id = p.id;
            sp.position = p.x;
            if (s_.params.record_events) {
                const auto& h = history_[index_of_[p.id]];
                sp.parent_id = h.parent_id;
                sp.birth_time = h.birth_time;
            }
            st.skeleton.push_back(sp);
        }
        return st;
    }

    Setup s_;
    Rng& rng_;
    std::exponential_distribution<double> exponential_{1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};

    std::vector<MassClass> classes_;
    std::vector<SkeletonSlot> skeleton_;
    std::size_t population_ = 0;
    std::uint32_t next_component_ = 1;
    std::uint64_t next_id_ = 1;

    bool homogeneous_mass_ = false;
    bool mass_fast_motion_ = false;
    bool skeleton_fast_motion_ = false;
    double beta_bound_ = 0.0, birth_bound_ = 0.0, death_bound_ = 0.0;
    std::vector<double> jump_bounds_;
    double h_beta_ = 0.0, h_net_ = 0.0;
    std::vector<double> h_jumps_;
    double skeleton_bound_ = 0.0;

    DressedPath path_;
    std::vector<SkeletonParticle> history_;
    std::vector<std::size_t> index_of_;
};

}  // namespace detail

/// Skeleton Z alone: h-transformed motion, branching at rate q with law p.
inline DressedPath simulate_skeleton(const OffspringLaw& law, const Motion& motion, const MartingaleFunction& w,
                                     const std::vector<SkeletonParticle>& init, const SimParams& params, Rng& rng) {
    detail::Engine::Setup setup;
    setup.motion = &motion;
    setup.w = &w;
    setup.law = &law;
    setup.params = params;
    detail::Engine engine(setup, rng);
    for (const auto& p : init) engine.add_skeleton(p);
    return engine.run();
}

/// Branching-particle approximation of the (P, psi)-superprocess from mu.
/// Each atom (m, x) becomes ceil(m / delta) particles of equal mass.
inline DressedPath simulate_superprocess(const BranchingMechanism& mech, const Motion& motion, const AtomicMeasure& mu,
                                         const SimParams& params, Rng& rng) {
    detail::Engine::Setup setup;
    setup.motion = &motion;
    setup.mass_mechanism = &mech;
    setup.params = params;
    detail::Engine engine(setup, rng);
    for (const auto& a : mu.atoms()) engine.add_mass(a.mass, a.position, 0.0, 0);
    return engine.run();
}

/// Dressed skeleton (Lambda, Z): an X* burst from mu under the tilted
/// mechanism, a skeleton started from Poisson(w mu), and three immigration
/// streams grafted along it (continuous at rate 2 beta / epsilon with mass
/// epsilon, discontinuous at rate c_j u_j exp(-w u_j) with mass u_j, and
/// branch-point mass drawn from eta).
inline DressedPath simulate_dressed(const DressedModel& model, const Motion& motion, const AtomicMeasure& mu,
                                    const SimParams& params, Rng& rng) {
    detail::Engine::Setup setup;
    setup.motion = &motion;
    setup.mass_mechanism = &model.tilted;
    setup.base_mechanism = &model.mechanism;
    setup.w = &model.w;
    setup.law = &model.law;
    setup.dress = true;
    setup.params = params;
    detail::Engine engine(setup, rng);
    for (const auto& a : mu.atoms()) engine.add_mass(a.mass, a.position, 0.0, 0);
    for (const auto& p : sample_initial_skeleton(mu, model.w, rng)) engine.add_skeleton(p);
    return engine.run();
}

inline DressedPath simulate_dressed(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                                    const AtomicMeasure& mu, const SimParams& params, Rng& rng) {
    return simulate_dressed(make_dressed_model(mech, w), motion, mu, params, rng);
}

/// Runs replicates `first .. first + count - 1` on up to `jobs` threads.
/// Replicate i draws from make_stream(seed, i) and results come back in index
/// order, so the output does not depend on `jobs` or on how a campaign is
/// split into batches.
template <class Fn>
auto run_replicate_range(std::size_t first, std::size_t count, std::uint64_t seed, unsigned jobs, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, std::size_t, Rng&>> {
    using R = std::invoke_result_t<Fn&, std::size_t, Rng&>;
    std::vector<std::optional<R>> slots(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            try {
                Rng rng = make_stream(seed, first + k);
                slots[k].emplace(fn(first + k, rng));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Replicates 0 .. count - 1; see run_replicate_range.
template <class Fn>
auto run_replicates(std::size_t count, std::uint64_t seed, unsigned jobs, Fn&& fn) {
    return run_replicate_range(0, count, seed, jobs, std::forward<Fn>(fn));
}

}  // namespace sksim
