#pragma once

// Named scenarios, ensembles, the two-dimensional shock sweep and the
// robustness reruns.

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capire/curriculum.hpp"
#include "capire/engine.hpp"
#include "capire/error.hpp"
#include "capire/metrics.hpp"
#include "capire/parallel.hpp"
#include "capire/parameters.hpp"

namespace capire {

constexpr std::uint64_t kDefaultBaseSeed = 42;
constexpr int kMaxHorizon = 12;

inline std::shared_ptr<const CurriculumGraph> shared_default_curriculum() {
    static const auto g = std::make_shared<const CurriculumGraph>(default_curriculum());
    return g;
}

struct ScenarioSpec {
    std::string id = "custom";
    ShockConfig shock;
    InterventionModifiers interventions;
    int n_agents = 300;
    int n_realisations = 100;
    int horizon = kMaxHorizon;
    std::uint64_t base_seed = kDefaultBaseSeed;
    PopulationParams population;
    DecisionCoefficients coefficients;
    ResilienceDynamics dynamics;
    EngineOptions options;
    std::shared_ptr<const CurriculumGraph> curriculum = shared_default_curriculum();

    void validate() const {
        if (n_agents < 1) throw InvalidInput("must be >= 1", "n_agents");
        if (n_realisations < 1) throw InvalidInput("must be >= 1", "n_realisations");
        if (horizon < 1 || horizon > kMaxHorizon) throw InvalidInput("must lie in [1, 12]", "horizon");
        if (!curriculum) throw InvalidInput("missing curriculum", "curriculum");
        if (options.course_load < 1) throw InvalidInput("must be >= 1", "options.course_load");
        shock.validate();
        interventions.validate();
        coefficients.validate();
        dynamics.validate();
        population.validate();
    }

    void apply(const FreeParameters& p) {
        coefficients = p.coefficients;
        dynamics = p.dynamics;
        p.apply_to(population);
    }

    RealisationSetup setup() const {
        auto pop = population;
        pop.n_agents = n_agents;
        return RealisationSetup{*curriculum, pop,     shock,   interventions, dynamics,
                                coefficients, options, horizon, base_seed};
    }
};

inline const std::vector<std::string>& builtin_scenario_ids() {
    static const std::vector<std::string> ids{"S0", "S1", "S2", "S3", "S4", "S5", "S6", "S7"};
    return ids;
}

inline InterventionModifiers intervention_for(const std::string& id, const FreeParameters& p) {
    InterventionModifiers m;
    if (id == "S1" || id == "S4") m.academic_support_factor = p.academic_support_factor;
    if (id == "S2" || id == "S4") m.curriculum_redesign_factor = p.curriculum_redesign_factor;
    if (id == "S3" || id == "S4") m.financial_support_boost = p.financial_support_boost;
    return m;
}

/// Canonical scenario. S1-S4 carry the calibrated intervention magnitudes
/// with neutral shocks; S5-S7 pin the mid-grid shock levels.
inline ScenarioSpec builtin_scenario(const std::string& id, const FreeParameters& params = calibrated_parameters()) {
    const auto& ids = builtin_scenario_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        std::string list;
        for (const auto& v : ids) list += (list.empty() ? "" : ", ") + v;
        throw InvalidInput("unknown scenario '" + id + "'; valid ids: " + list, "scenario");
    }
    ScenarioSpec s;
    s.id = id;
    s.apply(params);
    s.interventions = intervention_for(id, params);
    if (id == "S5" || id == "S7") s.shock.lambda_inf = 1.2;
    if (id == "S6" || id == "S7") s.shock.lambda_str = 2.0;
    return s;
}

/// Realisation-level statistics in index order.
inline std::vector<RealisationStats> run_ensemble_stats(const ScenarioSpec& spec, int workers = 1) {
    spec.validate();
    const auto setup = spec.setup();
    std::vector<RealisationStats> out(static_cast<std::size_t>(spec.n_realisations));
    parallel_for(out.size(), workers, [&](std::size_t i) { out[i] = realisation_stats(run_realisation(setup, i)); });
    return out;
}

inline RunMetrics run_ensemble(const ScenarioSpec& spec, int workers = 1,
                               int resamples = kDefaultBootstrapResamples) {
    const auto stats = run_ensemble_stats(spec, workers);
    return aggregate_stats(stats, resamples);
}

struct SweepSpec {
    std::vector<double> lambda_inf_grid{1.0, 1.05, 1.10, 1.15, 1.20, 1.25, 1.30};
    std::vector<double> lambda_str_grid{1.0, 1.25, 1.50, 1.75, 2.00, 2.25, 2.50};
    ScenarioSpec base = builtin_scenario("S0");
    int bootstrap_resamples = kDefaultBootstrapResamples;

    void validate() const {
        auto check = [](const std::vector<double>& g, const char* name) {
            if (g.empty()) throw InvalidInput("grid is empty", name);
            if (g.front() != 1.0) throw InvalidInput("grid must start at 1.0", name);
            for (std::size_t i = 1; i < g.size(); ++i)
                if (!(g[i] > g[i - 1])) throw InvalidInput("grid must be strictly ascending", name);
        };
        check(lambda_inf_grid, "lambda_inf_grid");
        check(lambda_str_grid, "lambda_str_grid");
        if (bootstrap_resamples < 0) throw InvalidInput("must be >= 0", "bootstrap_resamples");
        base.validate();
    }
};

struct SweepPoint {
    double lambda_inf = 1.0;
    double lambda_str = 1.0;
    Estimate d_total;
    Estimate d_early;
    Estimate amplification;
};

struct SweepResult {
    std::vector<double> lambda_inf_grid;
    std::vector<double> lambda_str_grid;
    std::vector<SweepPoint> points;  // row-major: inflation index, then strike index
    std::uint64_t base_seed = 0;
    int n_realisations = 0;

    const SweepPoint& at(std::size_t i_inf, std::size_t i_str) const {
        return points.at(i_inf * lambda_str_grid.size() + i_str);
    }
};

/// Every grid point reuses the base seed, so realisation r sees the same
/// cohort and the same uniforms everywhere (common random numbers), and the
/// amplification interval is a paired bootstrap over realisations.
inline SweepResult run_sweep(const SweepSpec& sweep, int workers = 1) {
    sweep.validate();
    const std::size_t ni = sweep.lambda_inf_grid.size(), ns = sweep.lambda_str_grid.size();
    const auto nr = static_cast<std::size_t>(sweep.base.n_realisations);

    std::vector<RealisationSetup> setups;
    setups.reserve(ni * ns);
    for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t j = 0; j < ns; ++j) {
            auto s = sweep.base.setup();
            s.shock.lambda_inf = sweep.lambda_inf_grid[i];
            s.shock.lambda_str = sweep.lambda_str_grid[j];
            setups.push_back(std::move(s));
        }
    std::vector<RealisationStats> cells(ni * ns * nr);
    parallel_for(cells.size(), workers, [&](std::size_t k) {
        cells[k] = realisation_stats(run_realisation(setups[k / nr], k % nr));
    });

    auto column = [&](std::size_t i, std::size_t j, bool early) {
        std::vector<double> v(nr);
        for (std::size_t r = 0; r < nr; ++r) {
            const auto& c = cells[(i * ns + j) * nr + r];
            v[r] = early ? c.d_early : c.d_total;
        }
        return v;
    };

    SweepResult res;
    res.lambda_inf_grid = sweep.lambda_inf_grid;
    res.lambda_str_grid = sweep.lambda_str_grid;
    res.base_seed = sweep.base.base_seed;
    res.n_realisations = sweep.base.n_realisations;
    const auto base = column(0, 0, false);
    for (std::size_t i = 0; i < ni; ++i) {
        const auto inf_only = column(i, 0, false);
        for (std::size_t j = 0; j < ns; ++j) {
            SweepPoint p;
            p.lambda_inf = sweep.lambda_inf_grid[i];
            p.lambda_str = sweep.lambda_str_grid[j];
            const auto both = column(i, j, false);
            const auto early = column(i, j, true);
            const std::uint64_t key = kBootstrapSeed ^ (i * 1000 + j);
            p.d_total = bootstrap_mean(both, sweep.bootstrap_resamples, key);
            p.d_early = bootstrap_mean(early, sweep.bootstrap_resamples, key ^ 0x5A5A);
            if (i == 0 || j == 0) {
                p.amplification = {};  // identically zero on both axes
            } else {
                p.amplification = amplification_estimate(both, inf_only, column(0, j, false), base,
                                                         sweep.bootstrap_resamples, key ^ 0xA11);
            }
            res.points.push_back(p);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Robustness reruns

struct SensitivityOverrides {
    double rho_mean_scale = 1.0;
    double rho_sd_scale = 1.0;
    double tau_scale = 1.0;
    int n_realisations = 0;  // 0 keeps the scenario count; otherwise 100 or 500
    ShockForm shock_form = ShockForm::LinearCentred;

    void validate() const {
        auto in = [](double v, const char* name) {
            if (!(v >= 0.8 && v <= 1.2)) throw InvalidInput("must lie in [0.8, 1.2]", name);
        };
        in(rho_mean_scale, "rho_mean_scale");
        in(rho_sd_scale, "rho_sd_scale");
        in(tau_scale, "tau_scale");
        if (n_realisations != 0 && n_realisations != 100 && n_realisations != 500)
            throw InvalidInput("must be 100 or 500", "n_realisations");
    }

    bool neutral() const {
        return rho_mean_scale == 1.0 && rho_sd_scale == 1.0 && tau_scale == 1.0 && n_realisations == 0 &&
               shock_form == ShockForm::LinearCentred;
    }
};

/// The qualitative signatures checked under perturbation.
struct QualitativeProfile {
    Estimate d_base, d_inf, d_str, d_both;
    Estimate amplification;
    double early_increase = 0;  // strike-only early minus baseline early
    double late_increase = 0;   // same for late-conditional
    std::optional<int> lag_peak;  // pooled hazard-excess argmax under a semester-1 pulse

    bool amplification_positive() const { return amplification.mean > 0; }
    bool cycle_concentrated() const { return early_increase > late_increase; }
    bool lag_in_window() const { return lag_peak && (*lag_peak == 3 || *lag_peak == 4); }
};

struct ProfileLevels {
    double lambda_inf = 1.2;
    double lambda_str = 2.0;
    double pulse = 2.5;
};

inline QualitativeProfile qualitative_profile(const ScenarioSpec& base_spec, int workers = 1,
                                              const ProfileLevels& lv = {}) {
    auto with = [&](double li, double ls) {
        auto s = base_spec;
        s.shock.lambda_inf = li;
        s.shock.lambda_str = ls;
        s.shock.strike_schedule.clear();
        return run_ensemble_stats(s, workers);
    };
    const auto b = with(1.0, 1.0), i = with(lv.lambda_inf, 1.0), s = with(1.0, lv.lambda_str),
               c = with(lv.lambda_inf, lv.lambda_str);
    auto pulse_spec = base_spec;
    pulse_spec.shock.lambda_inf = 1.0;
    pulse_spec.shock.lambda_str = 1.0;
    pulse_spec.shock.strike_schedule = {{1, lv.pulse}};
    const auto p = run_ensemble_stats(pulse_spec, workers);

    auto totals = [](const std::vector<RealisationStats>& v) {
        std::vector<double> out;
        for (const auto& r : v) out.push_back(r.d_total);
        return out;
    };
    QualitativeProfile q;
    const auto tb = totals(b), ti = totals(i), ts = totals(s), tc = totals(c);
    q.d_base = bootstrap_mean(tb);
    q.d_inf = bootstrap_mean(ti);
    q.d_str = bootstrap_mean(ts);
    q.d_both = bootstrap_mean(tc);
    q.amplification = amplification_estimate(tc, ti, ts, tb);
    const auto mb = aggregate_stats(b, 0), ms = aggregate_stats(s, 0), mp = aggregate_stats(p, 0);
    q.early_increase = ms.d_early.mean - mb.d_early.mean;
    q.late_increase = ms.d_late_conditional.mean - mb.d_late_conditional.mean;
    q.lag_peak = hazard_excess(mp.hazard, mb.hazard).peak_semester;
    return q;
}

struct SensitivityReport {
    SensitivityOverrides overrides;
    QualitativeProfile base;
    QualitativeProfile perturbed;

    bool amplification_sign_survives() const {
        return base.amplification_positive() == perturbed.amplification_positive();
    }
    bool cycle_concentration_survives() const {
        return base.cycle_concentrated() == perturbed.cycle_concentrated();
    }
    bool lag_peak_survives() const { return base.lag_in_window() == perturbed.lag_in_window(); }
};

inline ScenarioSpec apply_overrides(ScenarioSpec spec, const SensitivityOverrides& o) {
    o.validate();
    spec.population.rho_mean *= o.rho_mean_scale;
    spec.population.rho_sd *= o.rho_sd_scale;
    spec.population.tau_mean *= o.tau_scale;
    spec.population.tau_sd *= o.tau_scale;
    if (o.n_realisations != 0) spec.n_realisations = o.n_realisations;
    spec.shock.form = o.shock_form;
    return spec;
}

inline SensitivityReport sensitivity_run(const ScenarioSpec& spec, const SensitivityOverrides& overrides,
                                         int workers = 1) {
    overrides.validate();
    SensitivityReport r;
    r.overrides = overrides;
    r.base = qualitative_profile(spec, workers);
    r.perturbed = overrides.neutral() ? r.base : qualitative_profile(apply_overrides(spec, overrides), workers);
    return r;
}

}  // namespace capire
