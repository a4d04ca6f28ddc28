#pragma once

// Synthetic student cohorts.
//
// Pre-entry attributes follow the descriptive moments of the institution's
// intake (age, gender, secondary GPA, relocation, parental education). All
// attributes are driven by one latent standard-normal vector per agent; an
// optional correlation matrix couples them through a Gaussian copula, which
// preserves rank correlations. The default is independence.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capire/error.hpp"
#include "capire/rng.hpp"

namespace capire {

struct SocioProfile {
    double age_at_entry = 19.0;
    bool male = false;
    double secondary_gpa = 7.8;
    bool displaced = false;
    int parental_education = 3;  // 1..5
};

enum class DropoutCause : std::uint8_t { Academic, ResilienceDepletion, External };

inline const char* to_string(DropoutCause c) {
    switch (c) {
        case DropoutCause::Academic: return "Academic";
        case DropoutCause::ResilienceDepletion: return "ResilienceDepletion";
        case DropoutCause::External: return "External";
    }
    return "?";
}

enum class Status : std::uint8_t { Active, Dropout, Graduated };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Active: return "Active";
        case Status::Dropout: return "Dropout";
        case Status::Graduated: return "Graduated";
    }
    return "?";
}

/// One simulated student.
struct AgentState {
    std::uint32_t id = 0;
    SocioProfile profile;
    int semester = 1;  // next semester to be played
    std::uint64_t passed = 0;  // bitmask over curriculum indices
    std::vector<std::uint16_t> failed_attempts;  // per course index
    int total_failures = 0;
    int attempts = 0;
    double grade_sum = 0.0;
    double gpa = 0.0;
    double resilience = 0.5;
    double initial_resilience = 0.5;
    double threshold = 0.2;
    Status status = Status::Active;
    DropoutCause cause = DropoutCause::Academic;
    int exit_semester = 0;  // semester of dropout or graduation; 0 while active

    bool active() const noexcept { return status == Status::Active; }
    int passed_count() const noexcept { return std::popcount(passed); }
};

enum class Tercile : std::uint8_t { Low, Mid, High };

inline const char* to_string(Tercile t) {
    switch (t) {
        case Tercile::Low: return "Low";
        case Tercile::Mid: return "Mid";
        case Tercile::High: return "High";
    }
    return "?";
}

/// Low below 0.4, Mid on the closed band [0.4, 0.6], High above 0.6.
constexpr Tercile resilience_tercile(double rho) noexcept {
    if (rho < 0.4) return Tercile::Low;
    if (rho <= 0.6) return Tercile::Mid;
    return Tercile::High;
}

inline Tercile resilience_tercile(const AgentState& a) noexcept { return resilience_tercile(a.resilience); }

/// Marginal distributions of the pre-entry attributes.
struct AttributeDistributions {
    double age_mean = 19.2, age_sd = 2.8, age_min = 17.0, age_max = 34.0;
    double male_share = 0.73;
    double gpa_mean = 7.8, gpa_sd = 1.2, gpa_min = 5.0, gpa_max = 10.0;
    double displaced_share = 0.42;
    // P(level = 1..5). Mean 2.80, sd 1.09.
    std::array<double, 5> parental_education_probs{0.12, 0.28, 0.35, 0.18, 0.07};
};

struct PopulationParams {
    int n_agents = 300;
    double rho_mean = 0.5;
    double rho_sd = 0.15;
    double tau_mean = 0.20;
    double tau_sd = 0.05;
    AttributeDistributions attributes;
    /// Optional 5x5 correlation of the latent normals, ordered
    /// (age, gender, gpa, displaced, parental_education).
    std::optional<std::array<std::array<double, 5>, 5>> correlation;

    void validate() const {
        if (n_agents < 1) throw InvalidInput("must be >= 1", "population.n_agents");
        if (!(rho_sd >= 0)) throw InvalidInput("must be >= 0", "population.rho_sd");
        if (!(tau_sd >= 0)) throw InvalidInput("must be >= 0", "population.tau_sd");
        if (!std::isfinite(rho_mean)) throw InvalidInput("must be finite", "population.rho_mean");
        if (!std::isfinite(tau_mean)) throw InvalidInput("must be finite", "population.tau_mean");
        const auto& a = attributes;
        if (a.age_sd < 0 || a.gpa_sd < 0) throw InvalidInput("sd must be >= 0", "population.attributes");
        if (!(a.age_min <= a.age_mean && a.age_mean <= a.age_max))
            throw InvalidInput("age mean must lie within [age_min, age_max]", "population.attributes");
        if (a.male_share < 0 || a.male_share > 1 || a.displaced_share < 0 || a.displaced_share > 1)
            throw InvalidInput("shares must lie in [0,1]", "population.attributes");
        double s = 0;
        for (double p : a.parental_education_probs) {
            if (p < 0) throw InvalidInput("negative probability", "population.attributes.parental_education_probs");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw InvalidInput("probabilities must sum to 1", "population.attributes.parental_education_probs");
        if (correlation) cholesky(*correlation);
    }

    /// Lower-triangular factor of the correlation matrix. Throws if the
    /// matrix is not a symmetric positive-definite correlation matrix.
    static std::array<std::array<double, 5>, 5> cholesky(const std::array<std::array<double, 5>, 5>& c) {
        std::array<std::array<double, 5>, 5> l{};
        for (int i = 0; i < 5; ++i) {
            if (std::abs(c[i][i] - 1.0) > 1e-9)
                throw InvalidInput("diagonal must be 1", "population.correlation");
            for (int j = 0; j < 5; ++j)
                if (std::abs(c[i][j] - c[j][i]) > 1e-9)
                    throw InvalidInput("matrix must be symmetric", "population.correlation");
        }
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = c[i][j];
                for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
                if (i == j) {
                    if (s <= 0) throw InvalidInput("matrix is not positive definite", "population.correlation");
                    l[i][i] = std::sqrt(s);
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        return l;
    }
};

namespace detail {
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct LognormalShape {
    double mu = 0;
    double sigma = 0;
};

// Moments of min(X, cap) for X lognormal(mu, sigma).
inline std::pair<double, double> capped_lognormal_moments(const LognormalShape& ln, double cap) {
    const double lc = std::log(cap), s = ln.sigma, mu = ln.mu;
    const double above = 1.0 - normal_cdf((lc - mu) / s);
    const double m1 = std::exp(mu + 0.5 * s * s) * normal_cdf((lc - mu - s * s) / s) + cap * above;
    const double m2 = std::exp(2 * mu + 2 * s * s) * normal_cdf((lc - mu - 2 * s * s) / s) + cap * cap * above;
    return {m1, std::sqrt(std::max(0.0, m2 - m1 * m1))};
}

inline LognormalShape lognormal_from_moments(double mean, double sd) {
    const double s2 = std::log1p((sd * sd) / (mean * mean));
    return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
}

// Age is right-skewed with a hard lower bound and an upper cap. The excess
// over the floor is lognormal, with parameters chosen so that the capped
// variable has the requested mean and sd (fixed-point iteration on the
// uncapped moments).
inline LognormalShape capped_age_shape(double mean, double sd, double floor, double cap) {
    const double m = mean - floor, c = cap - floor;
    if (m <= 0 || sd <= 0) return {};
    double um = m, usd = sd;
    auto shape = lognormal_from_moments(um, usd);
    for (int it = 0; it < 500; ++it) {
        const auto [cm, csd] = capped_lognormal_moments(shape, c);
        if (std::abs(cm - m) < 1e-12 && std::abs(csd - sd) < 1e-12) break;
        um = std::max(1e-9, um + (m - cm));
        usd = std::max(1e-9, usd + (sd - csd));
        shape = lognormal_from_moments(um, usd);
    }
    return shape;
}

inline double capped_age(double z, const LognormalShape& shape, double mean, double floor, double cap) {
    if (shape.sigma <= 0) return std::min(cap, mean);
    return std::min(cap, floor + std::exp(shape.mu + shape.sigma * z));
}
}  // namespace detail

constexpr std::uint64_t kCohortStreamTag = 0xC0401;

/// Deterministic cohort for (params, seed). Agent i depends only on
/// (seed, i), so growing n_agents never changes existing agents.
inline std::vector<AgentState> generate_cohort(const PopulationParams& params, std::uint64_t seed,
                                               std::size_t n_courses = 0) {
    params.validate();
    std::optional<std::array<std::array<double, 5>, 5>> chol;
    if (params.correlation) chol = PopulationParams::cholesky(*params.correlation);
    const auto& a = params.attributes;
    const auto age_shape = detail::capped_age_shape(a.age_mean, a.age_sd, a.age_min, a.age_max);

    std::vector<AgentState> out(static_cast<std::size_t>(params.n_agents));
    for (std::size_t i = 0; i < out.size(); ++i) {
        rng::Stream s(rng::hash_keys({seed, i, kCohortStreamTag}));
        std::array<double, 5> z{};
        for (auto& v : z) v = s.normal();
        if (chol) {
            std::array<double, 5> y{};
            for (int r = 0; r < 5; ++r)
                for (int k = 0; k <= r; ++k) y[r] += (*chol)[r][k] * z[k];
            z = y;
        }
        const double rho_z = s.normal();
        const double tau_z = s.normal();

        AgentState& ag = out[i];
        ag.id = static_cast<std::uint32_t>(i);
        ag.profile.age_at_entry = detail::capped_age(z[0], age_shape, a.age_mean, a.age_min, a.age_max);
        ag.profile.male = detail::normal_cdf(z[1]) < a.male_share;
        ag.profile.secondary_gpa = std::clamp(a.gpa_mean + a.gpa_sd * z[2], a.gpa_min, a.gpa_max);
        ag.profile.displaced = detail::normal_cdf(z[3]) < a.displaced_share;
        const double u = detail::normal_cdf(z[4]);
        double cum = 0;
        ag.profile.parental_education = 5;
        for (int lvl = 0; lvl < 5; ++lvl) {
            cum += a.parental_education_probs[static_cast<std::size_t>(lvl)];
            if (u < cum) {
                ag.profile.parental_education = lvl + 1;
                break;
            }
        }
        ag.resilience = std::clamp(params.rho_mean + params.rho_sd * rho_z, 0.0, 1.0);
        ag.initial_resilience = ag.resilience;
        ag.threshold = std::clamp(params.tau_mean + params.tau_sd * tau_z, 0.01, 0.5);
        ag.failed_attempts.assign(n_courses, 0);
    }
    return out;
}

}  // namespace capire
