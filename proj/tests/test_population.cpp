#include "catch_amalgamated.hpp"

#include <cmath>

#include "capire/population.hpp"

using namespace capire;

namespace {

struct Moments {
    double mean = 0, sd = 0;
};

template <class F>
Moments moments(const std::vector<AgentState>& a, F f) {
    Moments m;
    for (const auto& x : a) m.mean += f(x);
    m.mean /= static_cast<double>(a.size());
    for (const auto& x : a) m.sd += (f(x) - m.mean) * (f(x) - m.mean);
    m.sd = std::sqrt(m.sd / static_cast<double>(a.size() - 1));
    return m;
}

}  // namespace

TEST_CASE("population: cohorts are deterministic per seed", "[population]") {
    PopulationParams p;
    const auto a = generate_cohort(p, 42, 40), b = generate_cohort(p, 42, 40), c = generate_cohort(p, 43, 40);
    REQUIRE(a.size() == 300);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].resilience == b[i].resilience);
        REQUIRE(a[i].threshold == b[i].threshold);
        REQUIRE(a[i].profile.secondary_gpa == b[i].profile.secondary_gpa);
        REQUIRE(a[i].profile.parental_education == b[i].profile.parental_education);
        differs = differs || a[i].resilience != c[i].resilience;
    }
    REQUIRE(differs);
}

TEST_CASE("population: attribute moments converge to their targets", "[population][property]") {
    PopulationParams p;
    p.n_agents = 10000;
    const auto a = generate_cohort(p, 2024);
    const double n = p.n_agents;

    const auto gpa = moments(a, [](auto& x) { return x.profile.secondary_gpa; });
    REQUIRE(std::abs(gpa.mean - 7.8) < 0.1);

    // Bernoulli shares within 3 sd
    const auto male = moments(a, [](auto& x) { return x.profile.male ? 1.0 : 0.0; });
    REQUIRE(std::abs(male.mean - 0.73) < 3 * std::sqrt(0.73 * 0.27 / n));
    const auto disp = moments(a, [](auto& x) { return x.profile.displaced ? 1.0 : 0.0; });
    REQUIRE(std::abs(disp.mean - 0.42) < 3 * std::sqrt(0.42 * 0.58 / n));

    // Age: floor 17, cap 34, mean 19.2, sd 2.8 after capping.
    const auto age = moments(a, [](auto& x) { return x.profile.age_at_entry; });
    REQUIRE(std::abs(age.mean - 19.2) < 4 * 2.8 / std::sqrt(n));
    REQUIRE(std::abs(age.sd - 2.8) < 0.15);
    REQUIRE(std::max_element(a.begin(), a.end(), [](auto& x, auto& y) {
        return x.profile.age_at_entry < y.profile.age_at_entry;
    })->profile.age_at_entry <= 34.0);
    REQUIRE(age.mean > 17.0);

    // Categorical parental education: E = sum k p_k
    const std::array<double, 5> probs{0.12, 0.28, 0.35, 0.18, 0.07};
    double e = 0, e2 = 0;
    for (int k = 0; k < 5; ++k) {
        e += (k + 1) * probs[static_cast<std::size_t>(k)];
        e2 += (k + 1) * (k + 1) * probs[static_cast<std::size_t>(k)];
    }
    const auto pe = moments(a, [](auto& x) { return static_cast<double>(x.profile.parental_education); });
    REQUIRE(std::abs(pe.mean - e) < 3 * std::sqrt(e2 - e * e) / std::sqrt(n));

    const auto rho = moments(a, [](auto& x) { return x.resilience; });
    REQUIRE(std::abs(rho.mean - 0.5) < 3 * 0.15 / std::sqrt(n));
}

TEST_CASE("population: generated values respect their bounds", "[population][property]") {
    PopulationParams p;
    p.n_agents = 5000;
    p.rho_sd = 0.6;  // heavy clipping on both sides
    p.tau_sd = 0.4;
    for (const auto& a : generate_cohort(p, 5)) {
        REQUIRE(a.profile.secondary_gpa >= 5.0);
        REQUIRE(a.profile.secondary_gpa <= 10.0);
        REQUIRE(a.profile.age_at_entry >= 17.0);
        REQUIRE(a.profile.age_at_entry <= 34.0);
        REQUIRE(a.profile.parental_education >= 1);
        REQUIRE(a.profile.parental_education <= 5);
        REQUIRE(a.resilience >= 0.0);
        REQUIRE(a.resilience <= 1.0);
        REQUIRE(a.threshold >= 0.01);
        REQUIRE(a.threshold <= 0.5);
        REQUIRE(a.status == Status::Active);
    }
}

TEST_CASE("population: zero resilience spread gives every agent the mean", "[population]") {
    PopulationParams p;
    p.rho_sd = 0;
    p.rho_mean = 0.37;
    for (const auto& a : generate_cohort(p, 1)) REQUIRE(a.resilience == 0.37);
}

TEST_CASE("population: growing the cohort keeps existing agents", "[population]") {
    PopulationParams small, large;
    small.n_agents = 10;
    large.n_agents = 50;
    const auto a = generate_cohort(small, 8), b = generate_cohort(large, 8);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].resilience == b[i].resilience);
}

TEST_CASE("population: resilience terciles use a closed middle interval", "[population]") {
    REQUIRE(resilience_tercile(0.5) == Tercile::Mid);
    REQUIRE(resilience_tercile(0.4) == Tercile::Mid);
    REQUIRE(resilience_tercile(0.6) == Tercile::Mid);
    REQUIRE(resilience_tercile(0.61) == Tercile::High);
    REQUIRE(resilience_tercile(0.39) == Tercile::Low);
}

TEST_CASE("population: invalid parameters are rejected", "[population]") {
    PopulationParams p;
    p.n_agents = 0;
    REQUIRE_THROWS_AS(generate_cohort(p, 1), InvalidInput);
    p = {};
    p.rho_sd = -0.1;
    REQUIRE_THROWS_AS(p.validate(), InvalidInput);
    p = {};
    p.attributes.parental_education_probs = {0.5, 0.5, 0.5, 0, 0};
    REQUIRE_THROWS_AS(p.validate(), InvalidInput);
    p = {};
    std::array<std::array<double, 5>, 5> c{};
    for (int i = 0; i < 5; ++i) c[i][i] = 1;
    c[0][1] = c[1][0] = 1.5;  // not positive definite
    p.correlation = c;
    REQUIRE_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("population: a rank correlation hook couples attributes", "[population]") {
    PopulationParams p;
    p.n_agents = 5000;
    std::array<std::array<double, 5>, 5> c{};
    for (int i = 0; i < 5; ++i) c[i][i] = 1;
    c[2][4] = c[4][2] = 0.6;  // secondary GPA with parental education
    p.correlation = c;
    const auto a = generate_cohort(p, 3);
    const auto g = moments(a, [](auto& x) { return x.profile.secondary_gpa; });
    const auto e = moments(a, [](auto& x) { return static_cast<double>(x.profile.parental_education); });
    double cov = 0;
    for (const auto& x : a) cov += (x.profile.secondary_gpa - g.mean) * (x.profile.parental_education - e.mean);
    cov /= static_cast<double>(a.size() - 1);
    REQUIRE(cov / (g.sd * e.sd) > 0.4);
}
