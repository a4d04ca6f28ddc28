#include "catch_amalgamated.hpp"

#include "capire/scenario.hpp"

using namespace capire;

namespace {

ScenarioSpec small(const std::string& id, int realisations = 4, int agents = 60) {
    auto s = builtin_scenario(id);
    s.n_realisations = realisations;
    s.n_agents = agents;
    return s;
}

}  // namespace

TEST_CASE("scenario: builtin shock levels", "[scenario]") {
    REQUIRE(builtin_scenario("S0").shock.lambda_inf == 1.0);
    REQUIRE(builtin_scenario("S0").interventions.neutral());
    REQUIRE(builtin_scenario("S5").shock.lambda_inf == 1.2);
    REQUIRE(builtin_scenario("S5").shock.lambda_str == 1.0);
    REQUIRE(builtin_scenario("S6").shock.lambda_inf == 1.0);
    REQUIRE(builtin_scenario("S6").shock.lambda_str == 2.0);
    REQUIRE(builtin_scenario("S7").shock.lambda_inf == 1.2);
    REQUIRE(builtin_scenario("S7").shock.lambda_str == 2.0);
    for (const auto& id : {"S1", "S2", "S3", "S4"}) {
        const auto s = builtin_scenario(id);
        REQUIRE(s.shock.lambda_inf == 1.0);
        REQUIRE(s.shock.lambda_str == 1.0);
        REQUIRE(s.n_realisations == 100);
        REQUIRE(s.n_agents == 300);
        REQUIRE(s.horizon == 12);
    }
}

TEST_CASE("scenario: S4 composes the three interventions", "[scenario]") {
    FreeParameters p;
    p.academic_support_factor = 0.8;
    p.curriculum_redesign_factor = 0.7;
    p.financial_support_boost = 0.05;
    const auto s1 = builtin_scenario("S1", p), s2 = builtin_scenario("S2", p), s3 = builtin_scenario("S3", p),
               s4 = builtin_scenario("S4", p);
    REQUIRE(s1.interventions.academic_support_factor == 0.8);
    REQUIRE(s1.interventions.curriculum_redesign_factor == 1.0);
    REQUIRE(s2.interventions.curriculum_redesign_factor == 0.7);
    REQUIRE(s2.interventions.financial_support_boost == 0.0);
    REQUIRE(s3.interventions.financial_support_boost == 0.05);
    REQUIRE(s3.interventions.academic_support_factor == 1.0);
    REQUIRE(s4.interventions.academic_support_factor == 0.8);
    REQUIRE(s4.interventions.curriculum_redesign_factor == 0.7);
    REQUIRE(s4.interventions.financial_support_boost == 0.05);
}

TEST_CASE("scenario: unknown ids list the valid ones", "[scenario]") {
    try {
        builtin_scenario("S9");
        FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("S9") != std::string::npos);
        REQUIRE(msg.find("S0, S1, S2, S3, S4, S5, S6, S7") != std::string::npos);
    }
}

TEST_CASE("scenario: spec validation", "[scenario]") {
    auto s = builtin_scenario("S0");
    s.horizon = 13;
    REQUIRE_THROWS_AS(s.validate(), InvalidInput);
    s = builtin_scenario("S0");
    s.n_realisations = 0;
    REQUIRE_THROWS_AS(s.validate(), InvalidInput);
    s = builtin_scenario("S0");
    s.interventions.academic_support_factor = 1.5;
    REQUIRE_THROWS_AS(s.validate(), InvalidInput);
    s = builtin_scenario("S0");
    s.curriculum = nullptr;
    REQUIRE_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("scenario: a one-agent one-semester ensemble runs", "[scenario]") {
    auto s = builtin_scenario("S0");
    s.n_agents = 1;
    s.n_realisations = 1;
    s.horizon = 1;
    const auto m = run_ensemble(s, 1, 10);
    REQUIRE(m.horizon == 1);
    REQUIRE(m.n_realisations == 1);
    REQUIRE((m.d_total.mean == 0.0 || m.d_total.mean == 1.0));
}

TEST_CASE("scenario: ensembles do not depend on the worker count", "[scenario]") {
    const auto s = small("S7", 6);
    const auto a = run_ensemble_stats(s, 1), b = run_ensemble_stats(s, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].d_total == b[i].d_total);
        REQUIRE(a[i].dropouts_by_semester == b[i].dropouts_by_semester);
    }
}

TEST_CASE("scenario: sweep structure and axis identities", "[scenario][sweep]") {
    SweepSpec sw;
    sw.base = small("S0", 3, 40);
    sw.lambda_inf_grid = {1.0, 1.3};
    sw.lambda_str_grid = {1.0, 1.5, 2.5};
    sw.bootstrap_resamples = 50;
    const auto r = run_sweep(sw, 2);
    REQUIRE(r.points.size() == 6);
    REQUIRE(r.at(1, 2).lambda_inf == 1.3);
    REQUIRE(r.at(1, 2).lambda_str == 2.5);
    for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE(r.at(0, j).amplification.mean == 0.0);
        REQUIRE(r.at(0, j).amplification.lo == 0.0);
    }
    REQUIRE(r.at(1, 0).amplification.mean == 0.0);
    // Common random numbers: the (1,1) cell is the plain baseline ensemble.
    const auto base = run_ensemble(sw.base, 1, 0);
    REQUIRE(r.at(0, 0).d_total.mean == base.d_total.mean);
    // Worker count does not change the grid.
    const auto r1 = run_sweep(sw, 1);
    for (std::size_t k = 0; k < r.points.size(); ++k) {
        REQUIRE(r.points[k].d_total.mean == r1.points[k].d_total.mean);
        REQUIRE(r.points[k].amplification.lo == r1.points[k].amplification.lo);
    }
}

TEST_CASE("scenario: sweep grids must start at 1 and ascend", "[scenario][sweep]") {
    SweepSpec sw;
    sw.lambda_inf_grid = {1.1, 1.2};
    REQUIRE_THROWS_AS(sw.validate(), InvalidInput);
    sw.lambda_inf_grid = {1.0, 1.2, 1.2};
    REQUIRE_THROWS_AS(sw.validate(), InvalidInput);
    sw.lambda_inf_grid = {};
    REQUIRE_THROWS_AS(sw.validate(), InvalidInput);
    sw = {};
    REQUIRE_NOTHROW(sw.validate());
}

TEST_CASE("scenario: sensitivity overrides", "[scenario][sensitivity]") {
    SensitivityOverrides o;
    REQUIRE(o.neutral());
    o.tau_scale = 1.3;
    REQUIRE_THROWS_AS(o.validate(), InvalidInput);
    o = {};
    o.n_realisations = 250;
    REQUIRE_THROWS_AS(o.validate(), InvalidInput);

    o = {};
    o.tau_scale = 0.8;
    o.rho_mean_scale = 1.2;
    o.n_realisations = 500;
    const auto base = builtin_scenario("S0");
    const auto s = apply_overrides(base, o);
    REQUIRE(s.population.tau_mean == Catch::Approx(0.8 * base.population.tau_mean).margin(1e-15));
    REQUIRE(s.population.tau_sd == Catch::Approx(0.8 * base.population.tau_sd).margin(1e-15));
    REQUIRE(s.population.rho_mean == Catch::Approx(1.2 * base.population.rho_mean).margin(1e-15));
    REQUIRE(s.population.rho_sd == base.population.rho_sd);
    REQUIRE(s.n_realisations == 500);
}

TEST_CASE("scenario: neutral sensitivity reproduces the base profile", "[scenario][sensitivity]") {
    const auto spec = small("S0", 3, 50);
    const auto r = sensitivity_run(spec, {}, 1);
    REQUIRE(r.perturbed.d_both.mean == r.base.d_both.mean);
    REQUIRE(r.amplification_sign_survives());
    REQUIRE(r.cycle_concentration_survives());
    REQUIRE(r.lag_peak_survives());
}
