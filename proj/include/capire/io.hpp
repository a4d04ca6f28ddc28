#pragma once

// JSON input specs, CSV artifacts and run manifests.
//
// Readers are strict: unknown keys and wrong types are rejected with the
// JSON path of the offending field. Writers are deterministic: numbers use
// the shortest round-trip representation and JSON objects are key-sorted.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capire/curriculum.hpp"
#include "capire/error.hpp"
#include "capire/featurelab.hpp"
#include "capire/metrics.hpp"
#include "capire/parameters.hpp"
#include "capire/scenario.hpp"

namespace capire::io {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal text that parses back to exactly `v`.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    if (v == 0.0) return "0";  // folds -0 into 0
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot open file", p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json parse_json_text(const std::string& text, const std::string& where) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw InvalidInput(std::string("malformed JSON: ") + e.what(), where);
    }
}

inline Json read_json_file(const std::filesystem::path& p) { return parse_json_text(read_file(p), p.string()); }

/// Compact dump with sorted keys (nlohmann objects are ordered maps).
inline std::string canonical(const Json& j) { return j.dump(); }

// ---------------------------------------------------------------------------
// Strict reader

/// Cursor over a JSON object that tracks its path for error messages and
/// refuses keys nobody asked about.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InvalidInput("expected an object", path_);
    }

    const std::string& path() const { return path_; }
    bool has(const std::string& key) const { return j_.contains(key); }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json& raw(const std::string& key) const {
        if (!j_.contains(key)) throw InvalidInput("missing required field", child_path(key));
        return j_.at(key);
    }

    Reader object(const std::string& key) const { return Reader(raw(key), child_path(key)); }

    double number(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_number()) throw InvalidInput("expected a number", child_path(key));
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    long long integer(const std::string& key) const {
        const auto& v = raw(key);
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
        }
        throw InvalidInput("expected an integer", child_path(key));
    }
    long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
        throw InvalidInput("expected a non-negative integer", child_path(key));
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw InvalidInput("expected true or false", child_path(key));
        return v.get<bool>();
    }

    std::string string(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_string()) throw InvalidInput("expected a string", child_path(key));
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::vector<double> numbers(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array()) throw InvalidInput("expected an array of numbers", child_path(key));
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number())
                throw InvalidInput("expected a number", child_path(key) + "[" + std::to_string(i) + "]");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array()) throw InvalidInput("expected an array of strings", child_path(key));
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string())
                throw InvalidInput("expected a string", child_path(key) + "[" + std::to_string(i) + "]");
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }

    void only(std::initializer_list<const char*> allowed) const {
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw InvalidInput("unknown field", child_path(it.key()));
    }

private:
    const Json& j_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Curriculum

inline Cycle parse_cycle(const std::string& s, const std::string& where) {
    if (s == "Basic" || s == "basic") return Cycle::Basic;
    if (s == "Advanced" || s == "advanced") return Cycle::Advanced;
    throw InvalidInput("cycle must be 'Basic' or 'Advanced'", where);
}

inline CurriculumGraph read_curriculum(const Json& j, const std::string& path = "curriculum") {
    Reader r(j, path);
    r.only({"courses", "ifc_weights"});
    IFCWeights w;
    if (r.has("ifc_weights")) {
        auto wr = r.object("ifc_weights");
        wr.only({"w1", "w2", "w3"});
        w.w1 = wr.number("w1");
        w.w2 = wr.number("w2");
        w.w3 = wr.number("w3");
        if (!w.valid()) throw InvalidInput("weights must be >= 0 and sum to 1", wr.path());
    }
    const auto& arr = r.raw("courses");
    if (!arr.is_array()) throw InvalidInput("expected an array", r.child_path("courses"));
    std::vector<Course> courses;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader c(arr[i], r.child_path("courses") + "[" + std::to_string(i) + "]");
        c.only({"id", "name", "cycle", "semester", "prereqs", "fail_rate", "retake_rate"});
        Course course;
        course.id = c.string("id");
        course.name = c.string("name", course.id);
        course.cycle = parse_cycle(c.string("cycle"), c.child_path("cycle"));
        course.scheduled_semester = static_cast<int>(c.integer("semester"));
        course.prerequisites = c.has("prereqs") ? c.strings("prereqs") : std::vector<std::string>{};
        course.base_fail_rate = c.number("fail_rate");
        course.retake_rate = c.number("retake_rate");
        courses.push_back(std::move(course));
    }
    return make_curriculum(std::move(courses), w);
}

inline Json curriculum_to_json(const CurriculumGraph& g, const IFCWeights& w = {}) {
    Json courses = Json::array();
    for (const auto& c : g.courses())
        courses.push_back({{"id", c.id},
                           {"name", c.name},
                           {"cycle", to_string(c.cycle)},
                           {"semester", c.scheduled_semester},
                           {"prereqs", c.prerequisites},
                           {"fail_rate", c.base_fail_rate},
                           {"retake_rate", c.retake_rate}});
    return {{"courses", courses}, {"ifc_weights", {{"w1", w.w1}, {"w2", w.w2}, {"w3", w.w3}}}};
}

// ---------------------------------------------------------------------------
// Parameter blocks

inline const char* to_string(ShockForm f) { return f == ShockForm::LinearCentred ? "linear-centred" : "uncentred"; }

inline ShockForm parse_shock_form(const std::string& s, const std::string& where) {
    if (s == "linear-centred") return ShockForm::LinearCentred;
    if (s == "uncentred") return ShockForm::Uncentred;
    throw InvalidInput("must be 'linear-centred' or 'uncentred'", where);
}

inline Json to_json(const ShockConfig& s) {
    Json sched = Json::object();
    for (const auto& [sem, lam] : s.strike_schedule) sched[std::to_string(sem)] = lam;
    return {{"lambda_inf", s.lambda_inf},       {"lambda_str", s.lambda_str}, {"delta_inf_eff", s.delta_inf_eff},
            {"alpha_str_eff", s.alpha_str_eff}, {"strike_schedule", sched},   {"form", to_string(s.form)}};
}

inline void read_into(const Reader& r, ShockConfig& s) {
    r.only({"lambda_inf", "lambda_str", "delta_inf_eff", "alpha_str_eff", "strike_schedule", "form"});
    s.lambda_inf = r.number("lambda_inf", s.lambda_inf);
    s.lambda_str = r.number("lambda_str", s.lambda_str);
    s.delta_inf_eff = r.number("delta_inf_eff", s.delta_inf_eff);
    s.alpha_str_eff = r.number("alpha_str_eff", s.alpha_str_eff);
    if (r.has("form")) s.form = parse_shock_form(r.string("form"), r.child_path("form"));
    if (r.has("strike_schedule")) {
        const auto& sj = r.raw("strike_schedule");
        if (!sj.is_object()) throw InvalidInput("expected an object of semester -> multiplier", r.child_path("strike_schedule"));
        s.strike_schedule.clear();
        for (auto it = sj.begin(); it != sj.end(); ++it) {
            const auto where = r.child_path("strike_schedule") + "." + it.key();
            int sem = 0;
            auto [p, ec] = std::from_chars(it.key().data(), it.key().data() + it.key().size(), sem);
            if (ec != std::errc{} || p != it.key().data() + it.key().size())
                throw InvalidInput("semester key must be an integer", where);
            if (!it.value().is_number()) throw InvalidInput("expected a number", where);
            s.strike_schedule[sem] = it.value().get<double>();
        }
    }
}

inline Json to_json(const InterventionModifiers& m) {
    return {{"academic_support_factor", m.academic_support_factor},
            {"curriculum_redesign_factor", m.curriculum_redesign_factor},
            {"financial_support_boost", m.financial_support_boost}};
}

inline void read_into(const Reader& r, InterventionModifiers& m) {
    r.only({"academic_support_factor", "curriculum_redesign_factor", "financial_support_boost"});
    m.academic_support_factor = r.number("academic_support_factor", m.academic_support_factor);
    m.curriculum_redesign_factor = r.number("curriculum_redesign_factor", m.curriculum_redesign_factor);
    m.financial_support_boost = r.number("financial_support_boost", m.financial_support_boost);
}

inline Json to_json(const DecisionCoefficients& c) {
    return {{"beta0", c.beta0}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"beta3", c.beta3}, {"beta4", c.beta4}};
}

inline void read_into(const Reader& r, DecisionCoefficients& c) {
    r.only({"beta0", "beta1", "beta2", "beta3", "beta4"});
    c.beta0 = r.number("beta0", c.beta0);
    c.beta1 = r.number("beta1", c.beta1);
    c.beta2 = r.number("beta2", c.beta2);
    c.beta3 = r.number("beta3", c.beta3);
    c.beta4 = r.number("beta4", c.beta4);
}

inline Json to_json(const ResilienceDynamics& d) {
    Json j{{"d_fail", d.d_fail},
           {"r_gain", d.r_gain},
           {"rho_floor", d.rho_floor},
           {"external_hazard_base", d.external_hazard_base}};
    if (d.external_hazard_override) j["external_hazard_override"] = *d.external_hazard_override;
    return j;
}

inline void read_into(const Reader& r, ResilienceDynamics& d) {
    r.only({"d_fail", "r_gain", "rho_floor", "external_hazard_base", "external_hazard_override"});
    d.d_fail = r.number("d_fail", d.d_fail);
    d.r_gain = r.number("r_gain", d.r_gain);
    d.rho_floor = r.number("rho_floor", d.rho_floor);
    d.external_hazard_base = r.number("external_hazard_base", d.external_hazard_base);
    if (r.has("external_hazard_override")) d.external_hazard_override = r.number("external_hazard_override");
}

inline Json to_json(const EngineOptions& o) {
    return {{"course_load", o.course_load}, {"max_fail_probability", o.max_fail_probability}};
}

inline void read_into(const Reader& r, EngineOptions& o) {
    r.only({"course_load", "max_fail_probability"});
    o.course_load = static_cast<int>(r.integer("course_load", o.course_load));
    o.max_fail_probability = r.number("max_fail_probability", o.max_fail_probability);
    if (!(o.max_fail_probability >= 0 && o.max_fail_probability <= 1))
        throw InvalidInput("must lie in [0,1]", r.child_path("max_fail_probability"));
}

inline Json to_json(const PopulationParams& p) {
    const auto& a = p.attributes;
    Json j{{"rho_mean", p.rho_mean},
           {"rho_sd", p.rho_sd},
           {"tau_mean", p.tau_mean},
           {"tau_sd", p.tau_sd},
           {"attributes",
            {{"age_mean", a.age_mean},
             {"age_sd", a.age_sd},
             {"age_min", a.age_min},
             {"age_max", a.age_max},
             {"male_share", a.male_share},
             {"gpa_mean", a.gpa_mean},
             {"gpa_sd", a.gpa_sd},
             {"gpa_min", a.gpa_min},
             {"gpa_max", a.gpa_max},
             {"displaced_share", a.displaced_share},
             {"parental_education_probs", a.parental_education_probs}}}};
    if (p.correlation) j["correlation"] = *p.correlation;
    return j;
}

inline void read_into(const Reader& r, PopulationParams& p) {
    r.only({"rho_mean", "rho_sd", "tau_mean", "tau_sd", "attributes", "correlation"});
    p.rho_mean = r.number("rho_mean", p.rho_mean);
    p.rho_sd = r.number("rho_sd", p.rho_sd);
    p.tau_mean = r.number("tau_mean", p.tau_mean);
    p.tau_sd = r.number("tau_sd", p.tau_sd);
    if (r.has("attributes")) {
        auto a = r.object("attributes");
        a.only({"age_mean", "age_sd", "age_min", "age_max", "male_share", "gpa_mean", "gpa_sd", "gpa_min", "gpa_max",
                "displaced_share", "parental_education_probs"});
        auto& t = p.attributes;
        t.age_mean = a.number("age_mean", t.age_mean);
        t.age_sd = a.number("age_sd", t.age_sd);
        t.age_min = a.number("age_min", t.age_min);
        t.age_max = a.number("age_max", t.age_max);
        t.male_share = a.number("male_share", t.male_share);
        t.gpa_mean = a.number("gpa_mean", t.gpa_mean);
        t.gpa_sd = a.number("gpa_sd", t.gpa_sd);
        t.gpa_min = a.number("gpa_min", t.gpa_min);
        t.gpa_max = a.number("gpa_max", t.gpa_max);
        t.displaced_share = a.number("displaced_share", t.displaced_share);
        if (a.has("parental_education_probs")) {
            auto v = a.numbers("parental_education_probs");
            if (v.size() != 5) throw InvalidInput("expected 5 probabilities", a.child_path("parental_education_probs"));
            std::copy(v.begin(), v.end(), t.parental_education_probs.begin());
        }
    }
    if (r.has("correlation")) {
        const auto& m = r.raw("correlation");
        const auto where = r.child_path("correlation");
        if (!m.is_array() || m.size() != 5) throw InvalidInput("expected a 5x5 matrix", where);
        std::array<std::array<double, 5>, 5> c{};
        for (std::size_t i = 0; i < 5; ++i) {
            if (!m[i].is_array() || m[i].size() != 5) throw InvalidInput("expected a 5x5 matrix", where);
            for (std::size_t k = 0; k < 5; ++k) {
                if (!m[i][k].is_number()) throw InvalidInput("expected a number", where);
                c[i][k] = m[i][k].get<double>();
            }
        }
        p.correlation = c;
    }
}

inline Json to_json(const FreeParameters& p) {
    return {{"coefficients", to_json(p.coefficients)},
            {"dynamics", to_json(p.dynamics)},
            {"population", {{"rho_mean", p.rho_mean}, {"rho_sd", p.rho_sd}, {"tau_mean", p.tau_mean}, {"tau_sd", p.tau_sd}}},
            {"interventions",
             {{"academic_support_factor", p.academic_support_factor},
              {"curriculum_redesign_factor", p.curriculum_redesign_factor},
              {"financial_support_boost", p.financial_support_boost}}}};
}

inline FreeParameters read_free_parameters(const Json& j, const std::string& path = "") {
    Reader r(j, path);
    r.only({"coefficients", "dynamics", "population", "interventions"});
    FreeParameters p = calibrated_parameters();
    if (r.has("coefficients")) read_into(r.object("coefficients"), p.coefficients);
    if (r.has("dynamics")) read_into(r.object("dynamics"), p.dynamics);
    if (r.has("population")) {
        auto pr = r.object("population");
        pr.only({"rho_mean", "rho_sd", "tau_mean", "tau_sd"});
        p.rho_mean = pr.number("rho_mean", p.rho_mean);
        p.rho_sd = pr.number("rho_sd", p.rho_sd);
        p.tau_mean = pr.number("tau_mean", p.tau_mean);
        p.tau_sd = pr.number("tau_sd", p.tau_sd);
    }
    if (r.has("interventions")) {
        InterventionModifiers m{p.academic_support_factor, p.curriculum_redesign_factor, p.financial_support_boost};
        read_into(r.object("interventions"), m);
        p.academic_support_factor = m.academic_support_factor;
        p.curriculum_redesign_factor = m.curriculum_redesign_factor;
        p.financial_support_boost = m.financial_support_boost;
    }
    try {
        p.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(e.what(), path.empty() ? "parameters" : path);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Scenario and sweep specs

inline Json to_json(const ScenarioSpec& s) {
    Json j{{"id", s.id},
           {"shock", to_json(s.shock)},
           {"interventions", to_json(s.interventions)},
           {"n_agents", s.n_agents},
           {"n_realisations", s.n_realisations},
           {"horizon", s.horizon},
           {"base_seed", s.base_seed},
           {"population", to_json(s.population)},
           {"coefficients", to_json(s.coefficients)},
           {"dynamics", to_json(s.dynamics)},
           {"options", to_json(s.options)}};
    if (s.curriculum && s.curriculum != shared_default_curriculum()) j["curriculum"] = curriculum_to_json(*s.curriculum);
    return j;
}

/// Reads a scenario. A "base" field names a builtin scenario to start from;
/// every other field overrides it. `params` seeds the builtin templates.
inline ScenarioSpec read_scenario(const Json& j, const std::string& path = "",
                                  const FreeParameters& params = calibrated_parameters()) {
    Reader r(j, path);
    r.only({"id", "base", "shock", "interventions", "n_agents", "n_realisations", "horizon", "base_seed", "population",
            "coefficients", "dynamics", "options", "curriculum"});
    ScenarioSpec s;
    s.apply(params);
    if (r.has("base")) {
        try {
            s = builtin_scenario(r.string("base"), params);
        } catch (const InvalidInput& e) {
            throw InvalidInput(e.what(), r.child_path("base"));
        }
    }
    s.id = r.string("id", s.id);
    if (r.has("shock")) read_into(r.object("shock"), s.shock);
    if (r.has("interventions")) read_into(r.object("interventions"), s.interventions);
    s.n_agents = static_cast<int>(r.integer("n_agents", s.n_agents));
    s.n_realisations = static_cast<int>(r.integer("n_realisations", s.n_realisations));
    s.horizon = static_cast<int>(r.integer("horizon", s.horizon));
    s.base_seed = r.seed("base_seed", s.base_seed);
    if (r.has("population")) read_into(r.object("population"), s.population);
    if (r.has("coefficients")) read_into(r.object("coefficients"), s.coefficients);
    if (r.has("dynamics")) read_into(r.object("dynamics"), s.dynamics);
    if (r.has("options")) read_into(r.object("options"), s.options);
    if (r.has("curriculum"))
        s.curriculum = std::make_shared<const CurriculumGraph>(read_curriculum(r.raw("curriculum"), r.child_path("curriculum")));
    try {
        s.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(e.what(), path.empty() ? "scenario" : path);
    }
    return s;
}

inline Json to_json(const SweepSpec& s) {
    return {{"lambda_inf_grid", s.lambda_inf_grid},
            {"lambda_str_grid", s.lambda_str_grid},
            {"bootstrap_resamples", s.bootstrap_resamples},
            {"base", to_json(s.base)}};
}

inline SweepSpec read_sweep(const Json& j, const FreeParameters& params = calibrated_parameters()) {
    Reader r(j, "");
    r.only({"lambda_inf_grid", "lambda_str_grid", "bootstrap_resamples", "base"});
    SweepSpec s;
    s.base = builtin_scenario("S0", params);
    if (r.has("lambda_inf_grid")) s.lambda_inf_grid = r.numbers("lambda_inf_grid");
    if (r.has("lambda_str_grid")) s.lambda_str_grid = r.numbers("lambda_str_grid");
    s.bootstrap_resamples = static_cast<int>(r.integer("bootstrap_resamples", s.bootstrap_resamples));
    if (r.has("base")) s.base = read_scenario(r.raw("base"), "base", params);
    s.validate();
    return s;
}

/// Sets a dotted path ("shock.lambda_inf") inside a JSON document. The value
/// text is parsed as JSON when possible, else taken as a string.
inline void set_path(Json& doc, const std::string& dotted, const std::string& value_text) {
    if (dotted.empty()) throw InvalidInput("empty override key", "--override");
    Json value;
    try {
        value = Json::parse(value_text);
    } catch (const Json::parse_error&) {
        value = value_text;
    }
    Json* cur = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const auto key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw InvalidInput("malformed override key", dotted);
        if (!cur->is_object()) throw InvalidInput("cannot descend into a non-object", dotted);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        if (cur->is_null()) *cur = Json::object();
        start = dot + 1;
    }
}

inline std::pair<std::string, std::string> split_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidInput("expected key=value", "--override " + kv);
    return {kv.substr(0, eq), kv.substr(eq + 1)};
}

inline std::string spec_hash(const Json& spec) { return hex64(fnv1a(canonical(spec))); }

// ---------------------------------------------------------------------------
// CSV

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { row_strings(header); }

    Csv& cell(const std::string& s) {
        cells_.push_back(quote(s));
        return *this;
    }
    Csv& cell(double v) {
        cells_.push_back(fmt(v));
        return *this;
    }
    Csv& cell(const std::optional<double>& v) {
        cells_.push_back(fmt(v));
        return *this;
    }
    Csv& cell(long long v) {
        cells_.push_back(std::to_string(v));
        return *this;
    }
    Csv& cell(int v) { return cell(static_cast<long long>(v)); }
    Csv& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
    Csv& cell(std::uint64_t v, bool) {
        cells_.push_back(std::to_string(v));
        return *this;
    }

    void end_row() {
        if (cells_.size() != width_)
            throw ContractViolation("CSV row has " + std::to_string(cells_.size()) + " cells, header has " +
                                    std::to_string(width_));
        row_strings(cells_, false);
        cells_.clear();
    }

    const std::string& str() const { return out_; }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }

    void row_strings(const std::vector<std::string>& cells, bool do_quote = true) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ += (i ? "," : "") + (do_quote ? quote(cells[i]) : cells[i]);
        out_ += "\n";
    }

    std::size_t width_;
    std::vector<std::string> cells_;
    std::string out_;
};

inline std::string ifc_table_csv(const CurriculumGraph& g) {
    Csv c({"id", "name", "cycle", "semester", "prereqs", "in_degree", "fail_rate", "retake_rate", "ifc_raw", "ifc"});
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& k = g[i];
        std::string pre;
        for (const auto& p : k.prerequisites) pre += (pre.empty() ? "" : ";") + p;
        c.cell(k.id).cell(k.name).cell(std::string(to_string(k.cycle))).cell(k.scheduled_semester).cell(pre);
        c.cell(g.in_degree(i)).cell(k.base_fail_rate).cell(k.retake_rate).cell(k.ifc_raw).cell(k.ifc);
        c.end_row();
    }
    return c.str();
}

inline std::string cohort_csv(const std::vector<AgentState>& agents) {
    Csv c({"agent", "age_at_entry", "male", "secondary_gpa", "displaced", "parental_education", "resilience",
           "threshold"});
    for (const auto& a : agents) {
        c.cell(static_cast<long long>(a.id)).cell(a.profile.age_at_entry).cell(a.profile.male ? 1 : 0);
        c.cell(a.profile.secondary_gpa).cell(a.profile.displaced ? 1 : 0).cell(a.profile.parental_education);
        c.cell(a.resilience).cell(a.threshold);
        c.end_row();
    }
    return c.str();
}

inline std::string trajectory_csv(const std::vector<TrajectoryLog>& logs) {
    Csv c({"realisation", "seed", "agent", "semester", "status", "cause", "gpa", "resilience", "attempted", "failed",
           "continuation"});
    for (std::size_t r = 0; r < logs.size(); ++r)
        for (const auto& row : logs[r].rows) {
            c.cell(r).cell(logs[r].seed, true).cell(static_cast<long long>(row.agent)).cell(row.semester);
            c.cell(std::string(to_string(row.status)));
            c.cell(row.status == Status::Dropout ? std::string(to_string(row.cause)) : std::string());
            c.cell(row.gpa).cell(row.resilience).cell(row.attempted).cell(row.failed).cell(row.continuation);
            c.end_row();
        }
    return c.str();
}

inline std::string curve_csv(const RunMetrics& m) {
    Csv c({"semester", "cumulative_dropout", "ci_lo", "ci_hi", "hazard"});
    for (std::size_t t = 0; t < m.dropout_curve.size(); ++t) {
        const auto& e = m.dropout_curve[t];
        c.cell(t + 1).cell(e.mean).cell(e.lo).cell(e.hi).cell(m.hazard[t]);
        c.end_row();
    }
    return c.str();
}

inline std::string summary_csv(const std::string& scenario, const RunMetrics& m) {
    Csv c({"scenario", "n_realisations", "horizon", "d_total", "d_total_lo", "d_total_hi", "d_early", "d_early_lo",
           "d_early_hi", "d_late_conditional", "d_late_lo", "d_late_hi", "median_time_to_dropout",
           "mean_time_to_dropout", "share_academic", "share_resilience_depletion", "share_external",
           "tercile_low", "tercile_mid", "tercile_high", "graduated_share"});
    c.cell(scenario).cell(m.n_realisations).cell(m.horizon);
    for (const auto* e : {&m.d_total, &m.d_early, &m.d_late_conditional}) c.cell(e->mean).cell(e->lo).cell(e->hi);
    c.cell(m.median_time_to_dropout).cell(m.mean_time_to_dropout);
    for (int k = 0; k < 3; ++k)
        c.cell(m.cause_shares ? std::optional<double>((*m.cause_shares)[static_cast<std::size_t>(k)]) : std::nullopt);
    for (const auto& t : m.tercile_breakdown) c.cell(t);
    c.cell(m.graduated_share);
    c.end_row();
    return c.str();
}

inline std::string sweep_csv(const SweepResult& s) {
    Csv c({"lambda_inf", "lambda_str", "d_total", "d_total_lo", "d_total_hi", "d_early", "A", "A_lo", "A_hi"});
    for (const auto& p : s.points) {
        c.cell(p.lambda_inf).cell(p.lambda_str).cell(p.d_total.mean).cell(p.d_total.lo).cell(p.d_total.hi);
        c.cell(p.d_early.mean).cell(p.amplification.mean).cell(p.amplification.lo).cell(p.amplification.hi);
        c.end_row();
    }
    return c.str();
}

inline std::string feature_matrix_csv(const features::FeatureMatrix& fm) {
    std::vector<std::string> header{"student_id", "cohort_year", "t"};
    header.insert(header.end(), fm.columns.begin(), fm.columns.end());
    Csv c(header);
    for (const auto& row : fm.rows) {
        c.cell(row.student_id).cell(row.cohort_year).cell(fm.prediction_time);
        for (double v : row.values) c.cell(v);
        c.end_row();
    }
    return c.str();
}

/// Availability sidecar: one row per (t, catalog feature).
inline std::string feature_mask_csv(const features::FeatureCatalog& catalog, const std::vector<int>& times) {
    Csv c({"t", "feature", "level", "available_from", "available"});
    for (int t : times)
        for (const auto& f : catalog.features) {
            c.cell(t).cell(f.name).cell(f.level).cell(f.available_from).cell(catalog.available(f, t) ? 1 : 0);
            c.end_row();
        }
    return c.str();
}

inline std::string folds_csv(const std::vector<features::CohortFold>& folds) {
    Csv c({"fold", "role", "cohort_year"});
    for (std::size_t k = 0; k < folds.size(); ++k) {
        for (int y : folds[k].train) c.cell(k + 1).cell(std::string("train")).cell(y), c.end_row();
        for (int y : folds[k].test) c.cell(k + 1).cell(std::string("test")).cell(y), c.end_row();
    }
    return c.str();
}

// ---------------------------------------------------------------------------
// CSV input (macro series and enrolment records)

/// Splits simple comma-separated text into trimmed fields, skipping blank
/// lines and the header row.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& text, const std::string& where,
                                                           std::size_t expected_width) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t"), e = cell.find_last_not_of(" \t");
            f.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
        }
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != expected_width)
            throw InvalidInput("expected " + std::to_string(expected_width) + " fields", where + ":" + std::to_string(lineno));
        rows.push_back(std::move(f));
    }
    return rows;
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw InvalidInput("not a number: '" + s + "'", where);
    return v;
}

inline int parse_int(const std::string& s, const std::string& where) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw InvalidInput("not an integer: '" + s + "'", where);
    return v;
}

/// "YYYY-MM" to a month index.
inline features::MonthIndex parse_month(const std::string& s, const std::string& where) {
    if (s.size() != 7 || s[4] != '-') throw InvalidInput("month must be YYYY-MM", where);
    const int y = parse_int(s.substr(0, 4), where), m = parse_int(s.substr(5, 2), where);
    if (m < 1 || m > 12) throw InvalidInput("month must be 01..12", where);
    return features::month_index(y, m);
}

/// Absolute semester index: the first half of year y is 2y, the second 2y + 1.
constexpr int semester_index(int year, int half) { return 2 * year + (half - 1); }

/// "YYYY-H" (H = 1 or 2) to an absolute semester index.
inline int parse_semester(const std::string& s, const std::string& where) {
    if (s.size() != 6 || s[4] != '-') throw InvalidInput("semester must be YYYY-1 or YYYY-2", where);
    const int y = parse_int(s.substr(0, 4), where), h = parse_int(s.substr(5, 1), where);
    if (h != 1 && h != 2) throw InvalidInput("semester half must be 1 or 2", where);
    return semester_index(y, h);
}

/// Inflation CSV (month,inflation) and strike CSV (semester,strike_intensity).
/// Both must be gapless and strictly increasing.
inline features::MacroSeries read_macro_series(const std::string& inflation_csv, const std::string& inflation_where,
                                               const std::string& strikes_csv, const std::string& strikes_where) {
    features::MacroSeries s;
    const auto inf = read_csv_rows(inflation_csv, inflation_where, 2);
    for (std::size_t i = 0; i < inf.size(); ++i) {
        const auto where = inflation_where + ":row " + std::to_string(i + 1);
        const auto m = parse_month(inf[i][0], where);
        if (i == 0) s.first_month = m;
        else if (m != s.end_month()) throw InvalidInput("months must be consecutive", where);
        s.monthly_inflation.push_back(parse_double(inf[i][1], where));
    }
    const auto str = read_csv_rows(strikes_csv, strikes_where, 2);
    for (std::size_t i = 0; i < str.size(); ++i) {
        const auto where = strikes_where + ":row " + std::to_string(i + 1);
        const auto sem = parse_semester(str[i][0], where);
        if (i == 0) s.first_semester = sem;
        else if (sem != s.end_semester()) throw InvalidInput("semesters must be consecutive", where);
        s.strike_intensity.push_back(parse_double(str[i][1], where));
    }
    s.validate();
    return s;
}

/// Students CSV (student_id,cohort_year,entry_month) plus takings CSV
/// (student_id,course_id,semester). Entry semester is derived from the
/// entry month.
inline std::vector<features::StudentRecord> read_students(const std::string& students_csv,
                                                          const std::string& students_where,
                                                          const std::string& takings_csv,
                                                          const std::string& takings_where,
                                                          const CurriculumGraph& graph) {
    std::vector<features::StudentRecord> out;
    std::map<std::string, std::size_t> by_id;
    const auto rows = read_csv_rows(students_csv, students_where, 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto where = students_where + ":row " + std::to_string(i + 1);
        features::StudentRecord st;
        st.id = rows[i][0];
        st.cohort_year = parse_int(rows[i][1], where);
        st.entry_month = parse_month(rows[i][2], where);
        st.entry_semester = st.entry_month / 6;
        if (!by_id.emplace(st.id, out.size()).second) throw InvalidInput("duplicate student '" + st.id + "'", where);
        out.push_back(std::move(st));
    }
    const auto tk = read_csv_rows(takings_csv, takings_where, 3);
    for (std::size_t i = 0; i < tk.size(); ++i) {
        const auto where = takings_where + ":row " + std::to_string(i + 1);
        auto it = by_id.find(tk[i][0]);
        if (it == by_id.end()) throw InvalidInput("unknown student '" + tk[i][0] + "'", where);
        if (!graph.index_of(tk[i][1])) throw InvalidInput("unknown course '" + tk[i][1] + "'", where);
        out[it->second].takings.push_back({tk[i][1], parse_semester(tk[i][2], where)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts and manifest

/// Collects named outputs, writes them and the manifest into a directory.
class ArtifactSet {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

    /// Writes every artifact plus manifest.json. The manifest lists each
    /// artifact with its byte count and FNV-1a digest.
    void write(const std::filesystem::path& dir, Json manifest) const {
        std::filesystem::create_directories(dir);
        Json list = Json::array();
        for (const auto& [name, content] : files_) {
            write_text(dir / name, content);
            list.push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a", hex64(fnv1a(content))}});
        }
        manifest["artifacts"] = list;
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    }

    static void write_text(const std::filesystem::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + p.string());
        out << content;
        if (!out) throw Error("write failed for " + p.string());
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace capire::io
