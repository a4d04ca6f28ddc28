#pragma once

// Pattern-oriented calibration of the behavioural parameters against
// scenario-level dropout targets.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capire/error.hpp"
#include "capire/metrics.hpp"
#include "capire/parameters.hpp"
#include "capire/rng.hpp"
#include "capire/scenario.hpp"

namespace capire {

struct Target {
    std::string name;
    double value = 0;
    double weight = 1;
    double tolerance = 0.03;
};

struct CalibrationTargets {
    std::vector<Target> targets;

    /// Reference scenario outcomes. Baseline targets carry weight 2. The
    /// median is in semesters, so its weight converts a 0.5-semester miss
    /// into the same penalty as a 3pp miss on a baseline rate.
    static CalibrationTargets reference() {
        return {{
            {"s0_total", 0.382, 2, 0.03},
            {"s0_early", 0.183, 2, 0.03},
            {"s0_late_conditional", 0.244, 2, 0.03},
            {"s0_median_ttd", 5.3, 2 * 0.03 / 0.5, 0.5},
            {"s1_total", 0.335, 1, 0.03},
            {"s2_total", 0.312, 1, 0.03},
            {"s3_total", 0.358, 1, 0.03},
            {"s4_total", 0.279, 1, 0.03},
            {"s5_total", 0.437, 1, 0.03},
            {"s6_total", 0.468, 1, 0.03},
            {"s6_early", 0.289, 1, 0.03},
            {"s7_total", 0.543, 1, 0.035},
        }};
    }

    static const std::vector<std::string>& known_names() {
        static const std::vector<std::string> names{"s0_total", "s0_early", "s0_late_conditional", "s0_median_ttd",
                                                    "s1_total", "s2_total", "s3_total", "s4_total",
                                                    "s5_total", "s6_total", "s6_early", "s7_total"};
        return names;
    }

    const Target* find(const std::string& name) const {
        for (const auto& t : targets)
            if (t.name == name) return &t;
        return nullptr;
    }

    void validate() const {
        for (const auto& t : targets) {
            const auto& k = known_names();
            if (std::find(k.begin(), k.end(), t.name) == k.end())
                throw InvalidInput("unknown target '" + t.name + "'", "targets");
            if (!(t.tolerance > 0)) throw InvalidInput("tolerance must be > 0", "targets." + t.name);
            if (!(t.weight >= 0)) throw InvalidInput("weight must be >= 0", "targets." + t.name);
            if (t.name != "s0_median_ttd" && !(t.value >= 0 && t.value <= 1))
                throw InvalidInput("rate target must lie in [0,1]", "targets." + t.name);
        }
    }

    /// Scenario ids whose ensembles the targets read.
    std::vector<std::string> scenarios() const {
        std::vector<std::string> ids;
        for (const auto& t : targets) {
            std::string id = "S" + t.name.substr(1, 1);
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }
};

using Observations = std::map<std::string, double>;

/// Weighted absolute error over the targets present in `obs`. Targets with
/// no observation (e.g. an undefined median) contribute their tolerance
/// times ten, so they are never mistaken for a fit.
inline double score(const Observations& obs, const CalibrationTargets& targets) {
    double s = 0;
    for (const auto& t : targets.targets) {
        auto it = obs.find(t.name);
        s += t.weight * (it == obs.end() ? 10 * t.tolerance : std::abs(it->second - t.value));
    }
    return s;
}

inline void record_observations(const std::string& scenario, const RunMetrics& m, Observations& out) {
    std::string p = "s" + scenario.substr(1);
    std::transform(p.begin(), p.end(), p.begin(), [](unsigned char c) { return std::tolower(c); });
    out[p + "_total"] = m.d_total.mean;
    out[p + "_early"] = m.d_early.mean;
    out[p + "_late_conditional"] = m.d_late_conditional.mean;
    if (m.median_time_to_dropout) out[p + "_median_ttd"] = *m.median_time_to_dropout;
}

struct EvaluationSettings {
    int n_realisations = 100;
    std::uint64_t base_seed = kDefaultBaseSeed;
    int workers = 1;
};

/// Runs the scenarios the targets need and collects their observables.
inline Observations observe(const FreeParameters& params, const CalibrationTargets& targets,
                            const EvaluationSettings& settings) {
    Observations obs;
    for (const auto& id : targets.scenarios()) {
        auto spec = builtin_scenario(id, params);
        spec.n_realisations = settings.n_realisations;
        spec.base_seed = settings.base_seed;
        const auto stats = run_ensemble_stats(spec, settings.workers);
        record_observations(id, aggregate_stats(stats, 0), obs);
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Search space

struct ParameterBound {
    std::string name;
    double lo = 0;
    double hi = 1;
};

inline double& parameter_ref(FreeParameters& p, const std::string& name) {
    if (name == "beta0") return p.coefficients.beta0;
    if (name == "beta1") return p.coefficients.beta1;
    if (name == "beta2") return p.coefficients.beta2;
    if (name == "beta3") return p.coefficients.beta3;
    if (name == "beta4") return p.coefficients.beta4;
    if (name == "d_fail") return p.dynamics.d_fail;
    if (name == "r_gain") return p.dynamics.r_gain;
    if (name == "external_hazard_base") return p.dynamics.external_hazard_base;
    if (name == "rho_mean") return p.rho_mean;
    if (name == "rho_sd") return p.rho_sd;
    if (name == "tau_mean") return p.tau_mean;
    if (name == "tau_sd") return p.tau_sd;
    if (name == "academic_support_factor") return p.academic_support_factor;
    if (name == "curriculum_redesign_factor") return p.curriculum_redesign_factor;
    if (name == "financial_support_boost") return p.financial_support_boost;
    throw InvalidInput("unknown parameter '" + name + "'", "bounds");
}

inline double parameter_value(const FreeParameters& p, const std::string& name) {
    auto copy = p;
    return parameter_ref(copy, name);
}

/// Behavioural parameters that shape the baseline and shock responses.
inline std::vector<ParameterBound> default_core_bounds() {
    return {{"beta0", -10, 8},       {"beta1", 0, 12},       {"beta2", 0, 30},
            {"beta3", 0, 150},       {"beta4", -0.4, 0},     {"d_fail", 0, 0.25},
            {"r_gain", 0, 0.8},      {"external_hazard_base", 0, 0.06},
            {"rho_mean", 0.3, 0.9},  {"rho_sd", 0.05, 0.3},  {"tau_mean", 0.02, 0.5},
            {"tau_sd", 0, 0.15}};
}

/// Intervention magnitudes, fitted after the core block is frozen.
inline std::vector<ParameterBound> default_intervention_bounds() {
    return {{"academic_support_factor", 0.3, 1.0},
            {"curriculum_redesign_factor", 0.3, 1.0},
            {"financial_support_boost", 0.0, 0.2}};
}

inline void validate_bounds(const std::vector<ParameterBound>& bounds) {
    FreeParameters probe;
    for (const auto& b : bounds) {
        parameter_ref(probe, b.name);
        if (!(b.lo <= b.hi)) throw InvalidInput("lower bound exceeds upper bound", "bounds." + b.name);
    }
}

// ---------------------------------------------------------------------------
// Search

struct CalibrationOptions {
    int budget = 200;  // evaluations across both stages and the intervention block
    int stage1_realisations = 30;
    int stage2_realisations = 100;
    std::uint64_t search_seed = 7;
    std::uint64_t base_seed = kDefaultBaseSeed;
    int workers = 1;
    std::vector<ParameterBound> core_bounds = default_core_bounds();
    std::vector<ParameterBound> intervention_bounds = default_intervention_bounds();
    FreeParameters start = calibrated_parameters();

    void validate() const {
        if (budget < 1) throw InvalidInput("must be >= 1", "budget");
        if (stage1_realisations < 1 || stage2_realisations < 1) throw InvalidInput("must be >= 1", "realisations");
        validate_bounds(core_bounds);
        validate_bounds(intervention_bounds);
        start.validate();
    }
};

struct Residual {
    std::string name;
    double target = 0;
    std::optional<double> simulated;
    double tolerance = 0;

    std::optional<double> residual() const {
        return simulated ? std::optional<double>(*simulated - target) : std::nullopt;
    }
    bool within() const { return simulated && std::abs(*simulated - target) <= tolerance + 1e-12; }
};

struct CalibrationResult {
    FreeParameters params;
    std::vector<Residual> residuals;  // re-scored at stage-2 ensemble size
    double score = 0;
    double stage1_best_score = 0;   // at stage-1 ensemble size
    double stage2_start_score = 0;  // stage-1 best, re-scored at stage-2 size
    double stage2_best_score = 0;   // core targets after coordinate descent
    int evaluations = 0;
    bool success = false;  // every target within tolerance
};

namespace detail {

struct Evaluator {
    const CalibrationTargets& targets;
    const CalibrationOptions& options;
    int used = 0;

    bool exhausted() const { return used >= options.budget; }

    double operator()(const FreeParameters& p, int realisations) {
        ++used;
        try {
            p.validate();
        } catch (const InvalidInput&) {
            return std::numeric_limits<double>::infinity();
        }
        return score(observe(p, targets, {realisations, options.base_seed, options.workers}), targets);
    }
};

inline CalibrationTargets subset(const CalibrationTargets& t, const std::vector<std::string>& scenarios) {
    CalibrationTargets out;
    for (const auto& x : t.targets)
        for (const auto& s : scenarios)
            if (x.name.rfind("s" + s.substr(1) + "_", 0) == 0) out.targets.push_back(x);
    return out;
}

/// Coordinate descent with step halving. Accepts strictly improving moves
/// only, so the returned score never exceeds `best_score`.
inline void coordinate_descent(FreeParameters& best, double& best_score, const std::vector<ParameterBound>& bounds,
                               const std::function<double(const FreeParameters&)>& eval,
                               const std::function<bool()>& exhausted) {
    std::vector<double> step;
    for (const auto& b : bounds) step.push_back(0.25 * (b.hi - b.lo));
    for (int round = 0; round < 8 && !exhausted(); ++round) {
        bool improved = false;
        for (std::size_t i = 0; i < bounds.size() && !exhausted(); ++i) {
            for (double dir : {+1.0, -1.0}) {
                if (exhausted()) break;
                auto cand = best;
                auto& v = parameter_ref(cand, bounds[i].name);
                const double nv = std::clamp(v + dir * step[i], bounds[i].lo, bounds[i].hi);
                if (nv == v) continue;
                v = nv;
                const double s = eval(cand);
                if (s < best_score) {
                    best = cand;
                    best_score = s;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved)
            for (auto& s : step) s *= 0.5;
    }
}

}  // namespace detail

/// Two-stage search. Stage 1 scores the start point plus a Latin hypercube
/// over the core bounds with reduced ensembles; stage 2 refines the best
/// point by coordinate descent at full ensemble size. Intervention
/// magnitudes are then fitted with the core parameters frozen. Never throws
/// for a poor fit; `success` reports whether every target is in tolerance.
inline CalibrationResult calibrate(const CalibrationTargets& targets, const CalibrationOptions& options) {
    targets.validate();
    options.validate();
    const auto core_targets = detail::subset(targets, {"S0", "S5", "S6", "S7"});
    const auto intervention_targets = detail::subset(targets, {"S1", "S2", "S3", "S4"});
    detail::Evaluator ev{core_targets, options};
    auto exhausted = [&] { return ev.exhausted(); };

    CalibrationResult result;
    FreeParameters best = options.start;
    double best1 = ev(best, options.stage1_realisations);

    // Stage 1: Latin hypercube, a third of the budget.
    const int n_lhs = std::max(0, options.budget / 3 - 1);
    if (n_lhs > 0 && !options.core_bounds.empty()) {
        rng::Stream s(options.search_seed);
        const std::size_t d = options.core_bounds.size();
        std::vector<std::vector<int>> strata(d);
        for (auto& col : strata) {
            col.resize(static_cast<std::size_t>(n_lhs));
            for (int k = 0; k < n_lhs; ++k) col[static_cast<std::size_t>(k)] = k;
            for (std::size_t k = col.size(); k > 1; --k) std::swap(col[k - 1], col[s.below(k)]);
        }
        for (int k = 0; k < n_lhs && !exhausted(); ++k) {
            auto cand = options.start;
            for (std::size_t i = 0; i < d; ++i) {
                const auto& b = options.core_bounds[i];
                const double u = (strata[i][static_cast<std::size_t>(k)] + s.uniform()) / n_lhs;
                parameter_ref(cand, b.name) = b.lo + u * (b.hi - b.lo);
            }
            const double sc = ev(cand, options.stage1_realisations);
            if (sc < best1) {
                best1 = sc;
                best = cand;
            }
        }
    }
    result.stage1_best_score = best1;

    // Stage 2: coordinate descent at full size on the core block.
    double best2 = best1;
    if (!exhausted() && options.stage2_realisations != options.stage1_realisations)
        best2 = ev(best, options.stage2_realisations);
    result.stage2_start_score = best2;
    const int reserve = intervention_targets.targets.empty() ? 0 : 3 * 8;
    auto core_exhausted = [&] { return ev.used >= std::max(options.budget - reserve, 1); };
    detail::coordinate_descent(
        best, best2, options.core_bounds, [&](const FreeParameters& p) { return ev(p, options.stage2_realisations); },
        core_exhausted);
    result.stage2_best_score = best2;

    // Intervention block: each magnitude is fitted by bisection to its own
    // single-lever scenario, which responds monotonically to it.
    const std::vector<std::pair<std::string, std::string>> levers{{"academic_support_factor", "s1_total"},
                                                                  {"curriculum_redesign_factor", "s2_total"},
                                                                  {"financial_support_boost", "s3_total"}};
    for (const auto& [name, target_name] : levers) {
        const Target* t = targets.find(target_name);
        auto bound = std::find_if(options.intervention_bounds.begin(), options.intervention_bounds.end(),
                                  [&](const ParameterBound& b) { return b.name == name; });
        if (!t || bound == options.intervention_bounds.end()) continue;
        CalibrationTargets single{{*t}};
        // Stronger support lowers dropout: factors act downward, the boost upward.
        const bool increasing_is_stronger = name == "financial_support_boost";
        double lo = bound->lo, hi = bound->hi;
        for (int it = 0; it < 8 && !exhausted(); ++it) {
            const double mid = 0.5 * (lo + hi);
            auto cand = best;
            parameter_ref(cand, name) = mid;
            ++ev.used;
            const auto obs = observe(cand, single, {options.stage2_realisations, options.base_seed, options.workers});
            const double d = obs.at(target_name);
            const bool too_strong = d < t->value;
            if (too_strong == increasing_is_stronger) hi = mid;
            else lo = mid;
            parameter_ref(best, name) = mid;
        }
    }

    result.params = best;
    result.evaluations = ev.used;
    const auto obs = observe(best, targets, {options.stage2_realisations, options.base_seed, options.workers});
    result.score = score(obs, targets);
    result.success = true;
    for (const auto& t : targets.targets) {
        Residual r{t.name, t.value, std::nullopt, t.tolerance};
        if (auto it = obs.find(t.name); it != obs.end()) r.simulated = it->second;
        result.success = result.success && r.within();
        result.residuals.push_back(r);
    }
    return result;
}

}  // namespace capire
