// capire: command-line front end for the dropout simulation laboratory.
//
// Exit codes: 0 success, 1 invalid input (message names the location),
// 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capire/calibration.hpp"
#include "capire/curriculum.hpp"
#include "capire/featurelab.hpp"
#include "capire/io.hpp"
#include "capire/scenario.hpp"

namespace fs = std::filesystem;
using capire::io::Json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct Common {
    std::string scenario;
    std::string spec;
    std::string params;
    std::string out = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int workers = 1;
    std::vector<std::string> overrides;
};

/// A spec file may be a manifest from an earlier run; its embedded spec is
/// then used verbatim so the run can be replayed.
Json load_spec(const std::string& path, const std::string& command) {
    auto j = capire::io::read_json_file(path);
    if (j.is_object() && j.contains("manifest_version")) {
        if (j.value("command", "") != command)
            throw capire::InvalidInput("manifest was written by '" + j.value("command", "") + "'", path);
        return j.at("spec");
    }
    return j;
}

capire::FreeParameters load_params(const Common& c) {
    if (c.params.empty()) return capire::calibrated_parameters();
    return capire::io::read_free_parameters(capire::io::read_json_file(c.params), c.params);
}

void apply_overrides(Json& doc, const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        auto [k, v] = capire::io::split_override(kv);
        capire::io::set_path(doc, k, v);
    }
}

Json base_manifest(const std::string& command, const Json& spec, std::uint64_t seed,
                   const capire::FreeParameters& params) {
    return {{"manifest_version", 1},
            {"tool", "capire"},
            {"tool_version", kToolVersion},
            {"command", command},
            {"seed", seed},
            {"spec_hash", capire::io::spec_hash(spec)},
            {"spec", spec},
            {"parameters", capire::io::to_json(params)}};
}

// Resolves the scenario for run/sensitivity: builtin id, spec file, then
// overrides and --seed on top. Returns the effective spec as JSON too.
std::pair<capire::ScenarioSpec, Json> resolve_scenario(const Common& c, const std::string& command,
                                                       const capire::FreeParameters& params,
                                                       bool* trajectories = nullptr) {
    if (!c.scenario.empty() && !c.spec.empty())
        throw capire::InvalidInput("give either --scenario or --spec, not both", "arguments");
    Json doc;
    if (!c.spec.empty()) {
        doc = load_spec(c.spec, command);
        if (command == "sensitivity" && doc.contains("scenario")) doc = doc.at("scenario");
    } else {
        doc = Json{{"base", c.scenario.empty() ? "S0" : c.scenario}};
    }
    apply_overrides(doc, c.overrides);
    if (c.seed_given) doc["base_seed"] = c.seed;
    if (trajectories && doc.is_object() && doc.contains("trajectories")) {
        if (!doc["trajectories"].is_boolean()) throw capire::InvalidInput("expected true or false", "trajectories");
        *trajectories = *trajectories || doc["trajectories"].get<bool>();
        doc.erase("trajectories");
    }
    auto spec = capire::io::read_scenario(doc, "", params);
    return {spec, capire::io::to_json(spec)};
}

// ---------------------------------------------------------------------------

int cmd_validate(const Common& c, const std::string& kind_opt) {
    capire::io::ArtifactSet out;
    Json spec_json;
    std::string kind = kind_opt;
    if (c.spec.empty()) {
        kind = "curriculum";
        spec_json = capire::io::curriculum_to_json(*capire::shared_default_curriculum());
    } else {
        spec_json = capire::io::read_json_file(c.spec);
        if (kind == "auto") {
            if (spec_json.contains("manifest_version")) kind = "manifest";
            else if (spec_json.contains("courses")) kind = "curriculum";
            else if (spec_json.contains("lambda_inf_grid") || spec_json.contains("lambda_str_grid")) kind = "sweep";
            else kind = "scenario";
        }
    }
    const auto params = load_params(c);
    std::string summary;
    if (kind == "curriculum") {
        const auto g = capire::io::read_curriculum(spec_json, "");
        out.add("ifc_table.csv", capire::io::ifc_table_csv(g));
        summary = "curriculum ok: " + std::to_string(g.size()) + " courses";
    } else if (kind == "scenario") {
        const auto s = capire::io::read_scenario(spec_json, "", params);
        summary = "scenario ok: " + s.id;
    } else if (kind == "sweep") {
        const auto s = capire::io::read_sweep(spec_json, params);
        summary = "sweep ok: " + std::to_string(s.lambda_inf_grid.size() * s.lambda_str_grid.size()) + " grid points";
    } else if (kind == "params") {
        capire::io::read_free_parameters(spec_json);
        summary = "parameters ok";
    } else if (kind == "manifest") {
        summary = "manifest ok: command " + spec_json.value("command", "?");
    } else {
        throw capire::InvalidInput("unknown kind '" + kind + "'", "--kind");
    }
    std::cout << summary << "\n";
    if (!out.files().empty()) {
        out.write(c.out, base_manifest("validate", spec_json, 0, params));
        std::cout << "wrote " << (fs::path(c.out) / "ifc_table.csv").string() << "\n";
    }
    return 0;
}

int cmd_run(const Common& c, bool trajectories) {
    const auto params = load_params(c);
    auto [spec, spec_json] = resolve_scenario(c, "run", params, &trajectories);
    spec_json["trajectories"] = trajectories;

    const auto setup = spec.setup();
    std::vector<capire::TrajectoryLog> logs(static_cast<std::size_t>(spec.n_realisations));
    capire::parallel_for(logs.size(), c.workers,
                         [&](std::size_t i) { logs[i] = capire::run_realisation(setup, i, trajectories); });
    const auto metrics = capire::aggregate(logs);

    capire::io::ArtifactSet out;
    out.add("curve.csv", capire::io::curve_csv(metrics));
    out.add("summary.csv", capire::io::summary_csv(spec.id, metrics));
    auto pop = spec.population;
    pop.n_agents = spec.n_agents;
    out.add("cohort_r0.csv", capire::io::cohort_csv(capire::generate_cohort(
                                 pop, capire::realisation_seed(spec.base_seed, 0), spec.curriculum->size())));
    if (trajectories) out.add("trajectories.csv", capire::io::trajectory_csv(logs));
    out.write(c.out, base_manifest("run", spec_json, spec.base_seed, params));

    std::cout << "scenario " << spec.id << ": d_total " << capire::io::fmt(metrics.d_total.mean) << " ["
              << capire::io::fmt(metrics.d_total.lo) << ", " << capire::io::fmt(metrics.d_total.hi) << "], d_early "
              << capire::io::fmt(metrics.d_early.mean) << ", median ttd "
              << capire::io::fmt(metrics.median_time_to_dropout) << "\n";
    return 0;
}

int cmd_sweep(const Common& c) {
    const auto params = load_params(c);
    Json doc = c.spec.empty() ? Json::object() : load_spec(c.spec, "sweep");
    if (!c.scenario.empty()) doc["base"] = Json{{"base", c.scenario}};
    apply_overrides(doc, c.overrides);
    if (c.seed_given) {
        if (!doc.contains("base")) doc["base"] = Json{{"base", "S0"}};
        doc["base"]["base_seed"] = c.seed;
    }
    const auto sweep = capire::io::read_sweep(doc, params);
    const auto spec_json = capire::io::to_json(sweep);
    const auto result = capire::run_sweep(sweep, c.workers);

    capire::io::ArtifactSet out;
    out.add("sweep.csv", capire::io::sweep_csv(result));
    auto manifest = base_manifest("sweep", spec_json, sweep.base.base_seed, params);
    manifest["grid_points"] = result.points.size();
    out.write(c.out, manifest);
    std::cout << "sweep: " << result.points.size() << " grid points x " << result.n_realisations
              << " realisations\n";
    return 0;
}

int cmd_calibrate(const Common& c, int budget, int stage1, int stage2) {
    const auto start = load_params(c);
    capire::CalibrationTargets targets = capire::CalibrationTargets::reference();
    capire::CalibrationOptions opt;
    Json doc = c.spec.empty() ? Json::object() : load_spec(c.spec, "calibrate");
    apply_overrides(doc, c.overrides);
    {
        capire::io::Reader r(doc, "");
        r.only({"targets", "budget", "stage1_realisations", "stage2_realisations", "search_seed", "base_seed",
                "fit_core"});
        if (r.has("targets")) {
            auto t = r.object("targets");
            for (auto& target : targets.targets)
                if (t.has(target.name)) target.value = t.number(target.name);
            for (const auto& [k, v] : doc.at("targets").items())
                if (!targets.find(k)) throw capire::InvalidInput("unknown target", "targets." + k);
        }
        opt.budget = static_cast<int>(r.integer("budget", budget));
        opt.stage1_realisations = static_cast<int>(r.integer("stage1_realisations", stage1));
        opt.stage2_realisations = static_cast<int>(r.integer("stage2_realisations", stage2));
        opt.search_seed = r.seed("search_seed", opt.search_seed);
        opt.base_seed = r.seed("base_seed", opt.base_seed);
        // With fit_core false the behavioural block stays at the start
        // parameters and only the intervention magnitudes are fitted.
        if (!r.boolean("fit_core", true)) opt.core_bounds.clear();
    }
    if (c.seed_given) opt.search_seed = c.seed;
    opt.workers = c.workers;
    opt.start = start;

    Json spec_json{{"budget", opt.budget},
                   {"stage1_realisations", opt.stage1_realisations},
                   {"stage2_realisations", opt.stage2_realisations},
                   {"search_seed", opt.search_seed},
                   {"base_seed", opt.base_seed},
                   {"fit_core", !opt.core_bounds.empty()},
                   {"targets", Json::object()}};
    for (const auto& t : targets.targets) spec_json["targets"][t.name] = t.value;

    const auto res = capire::calibrate(targets, opt);

    capire::io::Csv residuals({"target", "value", "simulated", "residual", "tolerance", "within"});
    Json report{{"score", res.score},
                {"stage1_best_score", res.stage1_best_score},
                {"stage2_start_score", res.stage2_start_score},
                {"evaluations", res.evaluations},
                {"success", res.success},
                {"parameters", capire::io::to_json(res.params)},
                {"residuals", Json::array()}};
    for (const auto& r : res.residuals) {
        residuals.cell(r.name).cell(r.target).cell(r.simulated).cell(r.residual()).cell(r.tolerance);
        residuals.cell(r.within() ? 1 : 0);
        residuals.end_row();
        report["residuals"].push_back({{"target", r.name},
                                       {"value", r.target},
                                       {"simulated", r.simulated ? Json(*r.simulated) : Json(nullptr)},
                                       {"within", r.within()}});
    }
    capire::io::ArtifactSet out;
    out.add("calibration_report.json", report.dump(2) + "\n");
    out.add("residuals.csv", residuals.str());
    out.add("calibrated_params.json", capire::io::to_json(res.params).dump(2) + "\n");
    out.write(c.out, base_manifest("calibrate", spec_json, opt.search_seed, start));
    std::cout << "calibration " << (res.success ? "converged" : "did not reach tolerance") << ": score "
              << capire::io::fmt(res.score) << " after " << res.evaluations << " evaluations\n";
    return 0;
}

// Simulated enrolment records: one small cohort per entry year, entering in
// March, with course takings read off the engine's trajectory rows.
std::vector<capire::features::StudentRecord> simulate_students(const capire::io::Reader& r,
                                                               const capire::FreeParameters& params,
                                                               const capire::CurriculumGraph& graph) {
    r.only({"scenario", "first_cohort", "last_cohort", "agents_per_cohort", "seed"});
    auto spec = capire::builtin_scenario(r.string("scenario", "S0"), params);
    const int first = static_cast<int>(r.integer("first_cohort", 2004));
    const int last = static_cast<int>(r.integer("last_cohort", 2019));
    const int n = static_cast<int>(r.integer("agents_per_cohort", 20));
    const auto seed = r.seed("seed", capire::kDefaultBaseSeed);
    if (first > last) throw capire::InvalidInput("first_cohort after last_cohort", r.path());
    if (n < 1) throw capire::InvalidInput("must be >= 1", r.child_path("agents_per_cohort"));
    spec.n_agents = n;
    auto setup = spec.setup();
    std::vector<capire::features::StudentRecord> out;
    for (int y = first; y <= last; ++y) {
        setup.base_seed = capire::rng::hash_keys({seed, static_cast<std::uint64_t>(y)});
        const auto log = capire::run_realisation(setup, 0, true);
        const auto entry_month = capire::features::month_index(y, 3);
        std::vector<capire::features::StudentRecord> cohort(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto& st = cohort[static_cast<std::size_t>(i)];
            st.id = std::to_string(y) + "-" + std::to_string(i);
            st.cohort_year = y;
            st.entry_month = entry_month;
            st.entry_semester = entry_month / 6;
        }
        for (const auto& row : log.rows)
            for (std::size_t k = 0; k < graph.size(); ++k)
                if (row.attempted_mask >> k & 1U)
                    cohort[row.agent].takings.push_back({graph[k].id, cohort[row.agent].entry_semester + row.semester - 1});
        for (auto& st : cohort) out.push_back(std::move(st));
    }
    return out;
}

int cmd_features(const Common& c) {
    if (c.spec.empty()) throw capire::InvalidInput("features needs --spec", "--spec");
    const auto params = load_params(c);
    Json doc = load_spec(c.spec, "features");
    apply_overrides(doc, c.overrides);
    const fs::path base_dir = fs::path(c.spec).parent_path();
    capire::io::Reader r(doc, "");
    r.only({"inflation_csv", "strikes_csv", "students_csv", "takings_csv", "simulate", "prediction_times",
            "curriculum"});
    auto resolve = [&](const std::string& key) {
        fs::path p = r.string(key);
        if (p.is_relative()) p = base_dir / p;
        return p.lexically_normal();
    };
    auto graph = r.has("curriculum")
                     ? capire::io::read_curriculum(capire::io::read_json_file(resolve("curriculum")), "curriculum")
                     : *capire::shared_default_curriculum();
    const auto inf_path = resolve("inflation_csv"), str_path = resolve("strikes_csv");
    const auto series = capire::io::read_macro_series(capire::io::read_file(inf_path), inf_path.string(),
                                                      capire::io::read_file(str_path), str_path.string());
    std::vector<capire::features::StudentRecord> students;
    if (r.has("simulate")) {
        if (r.has("students_csv")) throw capire::InvalidInput("give students_csv or simulate, not both", "simulate");
        students = simulate_students(r.object("simulate"), params, graph);
    } else {
        const auto sp = resolve("students_csv"), tp = resolve("takings_csv");
        students = capire::io::read_students(capire::io::read_file(sp), sp.string(), capire::io::read_file(tp),
                                             tp.string(), graph);
    }
    std::vector<int> times{0, 1, 2, 3, 4, 5, 6};
    if (r.has("prediction_times")) {
        times.clear();
        for (double t : r.numbers("prediction_times")) {
            if (t != std::floor(t) || t < 0) throw capire::InvalidInput("must be non-negative integers", "prediction_times");
            times.push_back(static_cast<int>(t));
        }
    }

    const auto catalog = capire::features::default_catalog();
    capire::io::ArtifactSet out;
    for (int t : times) {
        const auto fm = capire::features::build_feature_view(catalog, students, t, graph, series);
        out.add("features_t" + std::to_string(t) + ".csv", capire::io::feature_matrix_csv(fm));
    }
    out.add("feature_mask.csv", capire::io::feature_mask_csv(catalog, times));
    std::vector<int> years;
    for (const auto& s : students) years.push_back(s.cohort_year);
    Json spec_json = doc;
    spec_json["prediction_times"] = times;
    auto manifest = base_manifest("features", spec_json, 0, params);
    try {
        out.add("folds.csv", capire::io::folds_csv(capire::features::make_cohort_folds(years)));
    } catch (const capire::InvalidInput& e) {
        manifest["folds"] = std::string("not written: ") + e.what();
    }
    out.write(c.out, manifest);
    std::cout << "features: " << students.size() << " students x " << times.size() << " prediction times\n";
    return 0;
}

int cmd_sensitivity(const Common& c, const std::vector<std::string>& perturb) {
    const auto params = load_params(c);
    auto [spec, spec_json] = resolve_scenario(c, "sensitivity", params);
    capire::SensitivityOverrides o;
    Json pj = Json::object();
    for (const auto& kv : perturb) {
        auto [k, v] = capire::io::split_override(kv);
        const std::string where = "--perturb " + k;
        if (k == "rho_mean_scale") o.rho_mean_scale = capire::io::parse_double(v, where);
        else if (k == "rho_sd_scale") o.rho_sd_scale = capire::io::parse_double(v, where);
        else if (k == "tau_scale") o.tau_scale = capire::io::parse_double(v, where);
        else if (k == "n_realisations") o.n_realisations = capire::io::parse_int(v, where);
        else if (k == "shock_form") o.shock_form = capire::io::parse_shock_form(v, where);
        else throw capire::InvalidInput("unknown perturbation", where);
        pj[k] = v;
    }
    o.validate();
    const auto rep = capire::sensitivity_run(spec, o, c.workers);

    capire::io::Csv csv({"profile", "d_base", "d_inf", "d_str", "d_both", "A", "A_lo", "A_hi", "early_increase",
                         "late_increase", "lag_peak", "amplification_positive", "cycle_concentrated",
                         "lag_in_window"});
    auto row = [&](const char* name, const capire::QualitativeProfile& q) {
        csv.cell(std::string(name)).cell(q.d_base.mean).cell(q.d_inf.mean).cell(q.d_str.mean).cell(q.d_both.mean);
        csv.cell(q.amplification.mean).cell(q.amplification.lo).cell(q.amplification.hi);
        csv.cell(q.early_increase).cell(q.late_increase);
        csv.cell(q.lag_peak ? std::optional<double>(*q.lag_peak) : std::nullopt);
        csv.cell(q.amplification_positive() ? 1 : 0).cell(q.cycle_concentrated() ? 1 : 0);
        csv.cell(q.lag_in_window() ? 1 : 0);
        csv.end_row();
    };
    row("base", rep.base);
    row("perturbed", rep.perturbed);
    capire::io::ArtifactSet out;
    out.add("sensitivity.csv", csv.str());
    Json full{{"scenario", spec_json}, {"perturbations", pj}};
    out.write(c.out, base_manifest("sensitivity", full, spec.base_seed, params));
    std::cout << "sensitivity: amplification sign " << (rep.amplification_sign_survives() ? "survives" : "changes")
              << ", cycle concentration " << (rep.cycle_concentration_survives() ? "survives" : "changes")
              << ", lag peak " << (rep.lag_peak_survives() ? "survives" : "changes") << "\n";
    return 0;
}

void add_common(CLI::App* app, Common& c, bool scenario_flag) {
    if (scenario_flag) app->add_option("--scenario", c.scenario, "builtin scenario id (S0-S7)");
    app->add_option("--spec", c.spec, "JSON spec file (or a manifest to replay)");
    app->add_option("--params", c.params, "frozen parameters JSON");
    app->add_option("--out", c.out, "output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "base seed")->each([&c](const std::string&) { c.seed_given = true; });
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--override", c.overrides, "key=value applied to the input document (dotted path)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agent-based dropout simulation laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Common c;
    std::string kind = "auto";
    bool trajectories = false;
    int budget = 200, stage1 = 30, stage2 = 100;
    std::vector<std::string> perturb;

    auto* validate = app.add_subcommand("validate", "validate a spec; echoes the IFC table for curricula");
    add_common(validate, c, false);
    validate->add_option("--kind", kind, "auto|curriculum|scenario|sweep|params|manifest")->capture_default_str();

    auto* run = app.add_subcommand("run", "run a scenario ensemble");
    add_common(run, c, true);
    run->add_flag("--trajectories", trajectories, "also write agent-semester rows");

    auto* sweep = app.add_subcommand("sweep", "two-dimensional shock sweep with amplification");
    add_common(sweep, c, true);

    auto* calibrate = app.add_subcommand("calibrate", "fit behavioural parameters to scenario targets");
    add_common(calibrate, c, false);
    calibrate->add_option("--budget", budget, "evaluation budget")->capture_default_str();
    calibrate->add_option("--stage1-realisations", stage1)->capture_default_str();
    calibrate->add_option("--stage2-realisations", stage2)->capture_default_str();

    auto* features = app.add_subcommand("features", "build leak-aware macro feature matrices");
    add_common(features, c, false);

    auto* sensitivity = app.add_subcommand("sensitivity", "robustness rerun of the qualitative signatures");
    add_common(sensitivity, c, true);
    sensitivity->add_option("--perturb", perturb,
                            "rho_mean_scale|rho_sd_scale|tau_scale|n_realisations|shock_form=value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(c, kind);
        if (run->parsed()) return cmd_run(c, trajectories);
        if (sweep->parsed()) return cmd_sweep(c);
        if (calibrate->parsed()) return cmd_calibrate(c, budget, stage1, stage2);
        if (features->parsed()) return cmd_features(c);
        if (sensitivity->parsed()) return cmd_sensitivity(c, perturb);
    } catch (const capire::InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
