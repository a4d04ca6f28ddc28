#pragma once

// Semester-by-semester agent dynamics.
//
// Per active agent and semester: enroll, attempt courses, update
// resilience, draw the external-circumstance hazard, then either graduate
// or evaluate the continuation rule. All randomness is keyed by
// (realisation seed, agent, semester, event), see rng.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "capire/curriculum.hpp"
#include "capire/error.hpp"
#include "capire/population.hpp"
#include "capire/rng.hpp"

namespace capire {

/// How shock multipliers map onto the friction and depletion factors.
enum class ShockForm : std::uint8_t {
    /// 1 + alpha (lambda - 1) and 1 - delta (lambda - 1): neutral at lambda = 1.
    LinearCentred,
    /// 1 + alpha lambda and 1 - delta lambda with alpha = 0.25, delta = 0.03,
    /// normalised by their lambda = 1 values so baseline stays neutral.
    Uncentred,
};

struct ShockConfig {
    double lambda_inf = 1.0;
    double lambda_str = 1.0;
    double delta_inf_eff = 0.3;
    double alpha_str_eff = 0.5;
    /// Per-semester strike multiplier; replaces lambda_str where present.
    std::map<int, double> strike_schedule;
    ShockForm form = ShockForm::LinearCentred;

    void validate() const {
        if (!(lambda_inf >= 1.0)) throw InvalidInput("must be >= 1", "shock.lambda_inf");
        if (!(lambda_str >= 1.0)) throw InvalidInput("must be >= 1", "shock.lambda_str");
        if (!(delta_inf_eff >= 0)) throw InvalidInput("must be >= 0", "shock.delta_inf_eff");
        if (!(alpha_str_eff >= 0)) throw InvalidInput("must be >= 0", "shock.alpha_str_eff");
        for (const auto& [sem, lam] : strike_schedule) {
            if (sem < 1) throw InvalidInput("semester must be >= 1", "shock.strike_schedule");
            if (!(lam >= 1.0)) throw InvalidInput("multiplier must be >= 1", "shock.strike_schedule");
        }
    }
};

/// Policy levers. Neutral values reproduce the no-intervention baseline.
struct InterventionModifiers {
    double academic_support_factor = 1.0;     // scales every fail probability
    double curriculum_redesign_factor = 1.0;  // scales basic-cycle fail rate and IFC
    double financial_support_boost = 0.0;     // added to rho each semester, parental_education <= 2

    void validate() const {
        if (!(academic_support_factor > 0 && academic_support_factor <= 1))
            throw InvalidInput("must lie in (0,1]", "interventions.academic_support_factor");
        if (!(curriculum_redesign_factor > 0 && curriculum_redesign_factor <= 1))
            throw InvalidInput("must lie in (0,1]", "interventions.curriculum_redesign_factor");
        if (!(financial_support_boost >= 0 && financial_support_boost <= 0.2))
            throw InvalidInput("must lie in [0,0.2]", "interventions.financial_support_boost");
    }

    bool neutral() const {
        return academic_support_factor == 1.0 && curriculum_redesign_factor == 1.0 && financial_support_boost == 0.0;
    }
};

/// Logistic continuation model over (GPA/10, progress, resilience, failures).
struct DecisionCoefficients {
    double beta0 = 0.0;
    double beta1 = 0.0;  // GPA
    double beta2 = 0.0;  // progress
    double beta3 = 0.0;  // resilience
    double beta4 = 0.0;  // failures

    void validate() const {
        if (beta1 < 0 || beta2 < 0 || beta3 < 0) throw InvalidInput("beta1..beta3 must be >= 0", "coefficients");
        if (beta4 > 0) throw InvalidInput("beta4 must be <= 0", "coefficients.beta4");
    }
};

struct ResilienceDynamics {
    double d_fail = 0.08;
    double r_gain = 0.05;
    double rho_floor = 0.10;
    double external_hazard_base = 0.01;
    /// Test hook: fixed per-semester external hazard for every agent.
    std::optional<double> external_hazard_override;

    void validate() const {
        auto unit = [](double v) { return v >= 0 && v <= 1; };
        if (!unit(d_fail)) throw InvalidInput("must lie in [0,1]", "dynamics.d_fail");
        if (!unit(r_gain)) throw InvalidInput("must lie in [0,1]", "dynamics.r_gain");
        if (!unit(rho_floor)) throw InvalidInput("must lie in [0,1]", "dynamics.rho_floor");
        if (!unit(external_hazard_base)) throw InvalidInput("must lie in [0,1]", "dynamics.external_hazard_base");
        if (external_hazard_override && !unit(*external_hazard_override))
            throw InvalidInput("must lie in [0,1]", "dynamics.external_hazard_override");
    }
};

struct EngineOptions {
    int course_load = 5;
    double max_fail_probability = 0.95;
};

/// Everything a semester step needs besides the agents.
struct SimulationContext {
    const CurriculumGraph& graph;
    ShockConfig shock;
    InterventionModifiers modifiers;
    ResilienceDynamics dynamics;
    DecisionCoefficients coefficients;
    EngineOptions options;
    std::uint64_t seed = 0;
};

inline double strike_lambda(const ShockConfig& config, int semester) {
    auto it = config.strike_schedule.find(semester);
    return it != config.strike_schedule.end() ? it->second : config.lambda_str;
}

/// Multiplier on a course's fail probability from strike activity.
/// Advanced-cycle courses are never affected.
inline double strike_friction_multiplier(const ShockConfig& config, const Course& course, int semester) {
    if (course.cycle != Cycle::Basic) return 1.0;
    const double lam = strike_lambda(config, semester);
    if (config.form == ShockForm::Uncentred) return (1.0 + 0.25 * lam) / 1.25;
    return std::max(1.0, 1.0 + config.alpha_str_eff * (lam - 1.0));
}

/// Per-semester multiplicative factor on resilience from inflation.
inline double inflation_depletion_factor(const ShockConfig& config) {
    if (config.form == ShockForm::Uncentred)
        return std::clamp((1.0 - 0.03 * config.lambda_inf) / 0.97, 0.0, 1.0);
    return std::clamp(1.0 - config.delta_inf_eff * (config.lambda_inf - 1.0), 0.0, 1.0);
}

inline double fail_probability(const Course& course, const ShockConfig& config, const InterventionModifiers& mods,
                               int semester, double max_p = 0.95) {
    double base = course.base_fail_rate;
    if (course.cycle == Cycle::Basic) base *= mods.curriculum_redesign_factor;
    const double p = base * strike_friction_multiplier(config, course, semester) * mods.academic_support_factor;
    return std::clamp(p, 0.0, max_p);
}

struct AttemptOutcome {
    bool passed = false;
    double grade = 2.0;  // grade recorded for GPA purposes; 2 on failure
};

namespace keys {
constexpr std::uint64_t kFail = 1;
constexpr std::uint64_t kGrade = 2;
constexpr std::uint64_t kExternal = 3;
}  // namespace keys

/// Attempts one course and folds the result into the agent's record.
inline AttemptOutcome attempt_course(AgentState& agent, std::size_t course_index, const SimulationContext& ctx,
                                     int semester) {
    const auto& graph = ctx.graph;
    const Course& course = graph[course_index];
    if (!agent.active()) throw ContractViolation("attempt_course on inactive agent");
    if ((graph.prereq_mask(course_index) & ~agent.passed) != 0)
        throw ContractViolation("attempt_course: prerequisites of " + course.id + " not passed");

    const double p = fail_probability(course, ctx.shock, ctx.modifiers, semester, ctx.options.max_fail_probability);
    const double u = rng::keyed_uniform({ctx.seed, agent.id, static_cast<std::uint64_t>(semester), course_index, keys::kFail});
    AttemptOutcome out;
    if (u < p) {
        out.passed = false;
        out.grade = 2.0;
        ++agent.failed_attempts[course_index];
        ++agent.total_failures;
    } else {
        const double z = rng::keyed_normal({ctx.seed, agent.id, static_cast<std::uint64_t>(semester), course_index, keys::kGrade});
        out.passed = true;
        out.grade = std::clamp(4.0 + 0.6 * agent.profile.secondary_gpa + z, 4.0, 10.0);
        agent.passed |= 1ULL << course_index;
    }
    ++agent.attempts;
    agent.grade_sum += out.grade;
    agent.gpa = agent.grade_sum / agent.attempts;
    return out;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double continuation_probability(const AgentState& agent, const CurriculumGraph& graph,
                                       const DecisionCoefficients& b) {
    const double progress =
        graph.size() == 0 ? 0.0 : static_cast<double>(agent.passed_count()) / static_cast<double>(graph.size());
    return logistic(b.beta0 + b.beta1 * agent.gpa / 10.0 + b.beta2 * progress + b.beta3 * agent.resilience +
                    b.beta4 * agent.total_failures);
}

inline double external_hazard(const AgentState& agent, const ResilienceDynamics& d) {
    if (d.external_hazard_override) return *d.external_hazard_override;
    return std::clamp(d.external_hazard_base * (6.0 - agent.profile.parental_education) / 3.0, 0.0, 1.0);
}

/// Courses the agent would enroll in this semester: unresolved failures
/// first, then new eligible courses, each in schedule order.
inline std::vector<std::size_t> select_courses(const AgentState& agent, const CurriculumGraph& graph, int load) {
    std::vector<std::size_t> chosen;
    chosen.reserve(static_cast<std::size_t>(load));
    for (int pass = 0; pass < 2 && static_cast<int>(chosen.size()) < load; ++pass) {
        for (auto i : graph.schedule_order()) {
            if (static_cast<int>(chosen.size()) >= load) break;
            if (agent.passed & (1ULL << i)) continue;
            if ((graph.prereq_mask(i) & ~agent.passed) != 0) continue;
            const bool retry = agent.failed_attempts[i] > 0;
            if ((pass == 0) == retry) chosen.push_back(i);
        }
    }
    return chosen;
}

/// One row of the trajectory log.
struct SemesterRecord {
    std::uint32_t agent = 0;
    int semester = 0;
    Status status = Status::Active;
    DropoutCause cause = DropoutCause::Academic;
    double gpa = 0.0;
    double resilience = 0.0;
    int attempted = 0;
    int failed = 0;
    std::uint64_t attempted_mask = 0;  // bit i set when course i was attempted
    std::uint64_t failed_mask = 0;
    double continuation = 0.0;  // NaN when no decision was evaluated
};

/// Advances one agent through `semester`. Returns its log row.
inline SemesterRecord step_agent(AgentState& a, const SimulationContext& ctx, int semester) {
    SemesterRecord rec;
    rec.agent = a.id;
    rec.semester = semester;
    rec.continuation = std::nan("");
    const auto& graph = ctx.graph;

    auto finish = [&](Status s, DropoutCause c = DropoutCause::Academic) {
        a.status = s;
        a.cause = c;
        a.exit_semester = semester;
    };

    if ((a.passed & graph.all_mask()) == graph.all_mask()) {
        finish(Status::Graduated);
    } else {
        const auto courses = select_courses(a, graph, ctx.options.course_load);
        int failed = 0;
        for (auto ci : courses) {
            rec.attempted_mask |= std::uint64_t{1} << ci;
            if (!attempt_course(a, ci, ctx, semester).passed) {
                ++failed;
                rec.failed_mask |= std::uint64_t{1} << ci;
            }
        }
        rec.attempted = static_cast<int>(courses.size());
        rec.failed = failed;

        const auto& d = ctx.dynamics;
        double rho = a.resilience * inflation_depletion_factor(ctx.shock);
        rho -= d.d_fail * failed;
        if (failed == 0) rho += d.r_gain * (1.0 - rho);
        if (a.profile.parental_education <= 2) rho += ctx.modifiers.financial_support_boost;
        a.resilience = std::clamp(rho, 0.0, 1.0);

        const double eps = external_hazard(a, d);
        const double u = rng::keyed_uniform({ctx.seed, a.id, static_cast<std::uint64_t>(semester), keys::kExternal});
        if (u < eps) {
            finish(Status::Dropout, DropoutCause::External);
        } else if ((a.passed & graph.all_mask()) == graph.all_mask()) {
            finish(Status::Graduated);
        } else {
            const double p = continuation_probability(a, graph, ctx.coefficients);
            rec.continuation = p;
            if (p < a.threshold)
                finish(Status::Dropout,
                       a.resilience < d.rho_floor ? DropoutCause::ResilienceDepletion : DropoutCause::Academic);
        }
    }
    a.semester = semester + 1;
    rec.status = a.status;
    rec.cause = a.cause;
    rec.gpa = a.gpa;
    rec.resilience = a.resilience;
    return rec;
}

struct SemesterLog {
    int semester = 0;
    std::vector<SemesterRecord> records;  // active-at-start agents, in id order
};

/// Steps every active agent once.
inline SemesterLog step_semester(std::span<AgentState> agents, const SimulationContext& ctx, int semester) {
    SemesterLog log;
    log.semester = semester;
    for (auto& a : agents)
        if (a.active()) log.records.push_back(step_agent(a, ctx, semester));
    return log;
}

/// Terminal (or right-censored) state of one agent.
struct AgentOutcome {
    std::uint32_t id = 0;
    Status status = Status::Active;
    DropoutCause cause = DropoutCause::Academic;
    int exit_semester = 0;
    double initial_resilience = 0.0;
    int parental_education = 3;
    int total_failures = 0;
};

/// Everything recorded for one realisation.
struct TrajectoryLog {
    std::uint64_t seed = 0;
    int horizon = 0;
    std::vector<AgentOutcome> outcomes;
    std::vector<SemesterRecord> rows;  // agent-semester rows; empty unless requested
};

/// Inputs for a single realisation, independent of how scenarios are named.
struct RealisationSetup {
    const CurriculumGraph& graph;
    PopulationParams population;
    ShockConfig shock;
    InterventionModifiers modifiers;
    ResilienceDynamics dynamics;
    DecisionCoefficients coefficients;
    EngineOptions options;
    int horizon = 12;
    std::uint64_t base_seed = 0;
};

constexpr std::uint64_t kEventStreamTag = 0xE7E47;

inline std::uint64_t realisation_seed(std::uint64_t base_seed, std::uint64_t index) { return base_seed ^ index; }

/// Generates the cohort for (base_seed XOR index) and steps it through the
/// horizon. Pure function of its arguments.
inline TrajectoryLog run_realisation(const RealisationSetup& setup, std::uint64_t index, bool keep_rows = false) {
    TrajectoryLog log;
    log.seed = realisation_seed(setup.base_seed, index);
    log.horizon = setup.horizon;
    auto agents = generate_cohort(setup.population, log.seed, setup.graph.size());
    SimulationContext ctx{setup.graph,    setup.shock,   setup.modifiers, setup.dynamics,
                          setup.coefficients, setup.options, rng::hash_keys({log.seed, kEventStreamTag})};
    for (int t = 1; t <= setup.horizon; ++t) {
        bool any = false;
        for (auto& a : agents) {
            if (!a.active()) continue;
            any = true;
            auto rec = step_agent(a, ctx, t);
            if (keep_rows) log.rows.push_back(rec);
        }
        if (!any) break;
    }
    log.outcomes.reserve(agents.size());
    for (const auto& a : agents)
        log.outcomes.push_back({a.id, a.status, a.cause, a.exit_semester, a.initial_resilience,
                                a.profile.parental_education, a.total_failures});
    return log;
}

}  // namespace capire
