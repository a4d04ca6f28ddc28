#pragma once

// Leak-aware macro features.
//
// A prediction made at student time t (end of the student's semester t,
// forecasting semester t + 1; t = 0 is entry) may use macro data only up to
// the end of semester t. Each catalog feature declares the earliest t at
// which it may be computed; build_feature_view() emits only those columns,
// so unavailable features are structurally absent rather than null-filled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "capire/curriculum.hpp"
#include "capire/error.hpp"

namespace capire::features {

/// Months are counted as year * 12 + (month - 1).
using MonthIndex = int;

constexpr MonthIndex month_index(int year, int month) { return year * 12 + (month - 1); }

/// Monthly inflation (% per month) and per-semester strike intensity
/// (fraction of instructional days lost). Both series are gapless.
struct MacroSeries {
    MonthIndex first_month = 0;
    std::vector<double> monthly_inflation;
    int first_semester = 0;
    std::vector<double> strike_intensity;

    MonthIndex end_month() const { return first_month + static_cast<int>(monthly_inflation.size()); }
    int end_semester() const { return first_semester + static_cast<int>(strike_intensity.size()); }

    void validate() const {
        for (std::size_t i = 0; i < strike_intensity.size(); ++i)
            if (!(strike_intensity[i] >= 0 && strike_intensity[i] <= 1))
                throw InvalidInput("strike intensity outside [0,1]",
                                   "strikes[semester " + std::to_string(first_semester + static_cast<int>(i)) + "]");
        for (std::size_t i = 0; i < monthly_inflation.size(); ++i)
            if (!std::isfinite(monthly_inflation[i]))
                throw InvalidInput("non-finite inflation value",
                                   "inflation[month " + std::to_string(first_month + static_cast<int>(i)) + "]");
    }

    double inflation_at(MonthIndex m) const {
        if (m < first_month || m >= end_month())
            throw InsufficientHistory("month " + std::to_string(m) + " outside inflation coverage");
        return monthly_inflation[static_cast<std::size_t>(m - first_month)];
    }

    double strike_at(int semester) const {
        if (semester < first_semester || semester >= end_semester())
            throw InsufficientHistory("semester " + std::to_string(semester) + " outside strike coverage");
        return strike_intensity[static_cast<std::size_t>(semester - first_semester)];
    }
};

/// Sample standard deviation (n - 1) of the 24 monthly rates strictly
/// preceding `entry_month`.
inline double inflation_volatility_24m(const MacroSeries& s, MonthIndex entry_month) {
    if (entry_month - 24 < s.first_month || entry_month > s.end_month())
        throw InsufficientHistory("24 months of inflation history required before entry", "inflation");
    double mean = 0;
    for (int m = entry_month - 24; m < entry_month; ++m) mean += s.inflation_at(m);
    mean /= 24.0;
    double ss = 0;
    for (int m = entry_month - 24; m < entry_month; ++m) ss += (s.inflation_at(m) - mean) * (s.inflation_at(m) - mean);
    return std::sqrt(ss / 23.0);
}

/// Compounded inflation (%) over months [from, to).
inline double compounded_inflation(const MacroSeries& s, MonthIndex from, MonthIndex to) {
    if (from < s.first_month || to > s.end_month())
        throw InsufficientHistory("inflation series does not cover the requested window", "inflation");
    double g = 1.0;
    for (int m = from; m < to; ++m) g *= 1.0 + s.inflation_at(m) / 100.0;
    return (g - 1.0) * 100.0;
}

/// Trailing-12-month compounded rate (%) ending just before `month`.
inline double annual_inflation_before(const MacroSeries& s, MonthIndex month) {
    return compounded_inflation(s, month - 12, month);
}

/// Strike intensity lagged k semesters relative to the semester being
/// predicted. `t` is the last completed semester, so lag 1 is semester t.
inline double strike_lag(const MacroSeries& s, int t, int k) {
    if (k < 1) throw InvalidInput("lag must be >= 1", "lag");
    const int sem = t + 1 - k;
    if (sem < s.first_semester || sem >= s.end_semester())
        throw InsufficientHistory("lag " + std::to_string(k) + " at semester " + std::to_string(t) +
                                  " reaches outside strike coverage");
    return s.strike_at(sem);
}

/// One enrolment in a course during an absolute (series) semester.
struct CourseTaking {
    std::string course_id;
    int semester = 0;
};

/// Sum over basic-cycle takings of IFC times the strike intensity of the
/// semester the course was taken. Retakes count once per taking.
inline double ifc_weighted_strike_index(const std::vector<CourseTaking>& history, const CurriculumGraph& graph,
                                        const MacroSeries& series) {
    double total = 0;
    for (const auto& t : history) {
        const Course& c = graph.at(t.course_id);
        if (c.cycle != Cycle::Basic) continue;
        total += c.ifc * series.strike_at(t.semester);
    }
    return total;
}

/// Student as seen by the feature builder. `entry_semester` is an absolute
/// series semester; student semester n (1-based) is entry_semester + n - 1
/// and spans months [entry_month + 6 (n - 1), entry_month + 6 n).
struct StudentRecord {
    std::string id;
    int cohort_year = 0;
    MonthIndex entry_month = 0;
    int entry_semester = 0;
    std::vector<CourseTaking> takings;
};

struct FeatureDef {
    std::string name;
    std::string level;
    int available_from = 0;  // first student time t at which the feature may be used
    std::string description;
};

struct FeatureCatalog {
    std::vector<FeatureDef> features;

    bool available(const FeatureDef& f, int t) const { return t >= f.available_from; }

    const FeatureDef* find(const std::string& name) const {
        for (const auto& f : features)
            if (f.name == name) return &f;
        return nullptr;
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& f : features) {
            if (!seen.insert(f.name).second) throw InvalidInput("duplicate feature '" + f.name + "'", "catalog");
            if (f.available_from < 0) throw InvalidInput("negative availability for '" + f.name + "'", "catalog");
        }
    }
};

// Basic cycle spans student semesters 1-4.
constexpr int kBasicCycleSemesters = 4;

/// The macro feature set. Availability is monotone: once usable, always
/// usable. The entry-time inflation features stay available after entry
/// because their value is fixed at entry.
inline FeatureCatalog default_catalog() {
    return FeatureCatalog{{
        {"MACRO_inflacion_entrada", "N4", 0, "trailing 12-month compounded inflation (%) before entry"},
        {"MACRO_inflacion_volatilidad_24m", "N4", 0, "sample sd of the 24 monthly rates before entry"},
        {"MACRO_inflacion_acum_entrada", "N4", 1, "compounded inflation (%) from entry to end of semester t"},
        {"MACRO_inflacion_pct_cambio", "N4", 1,
         "relative change (%) of trailing annual inflation at end of t versus at entry"},
        {"MACRO_paros_lag_sem_1", "N4", 1, "strike intensity of student semester t"},
        {"MACRO_paros_lag_sem_2", "N4", 2, "strike intensity of student semester t - 1"},
        {"MACRO_paros_lag_sem_3", "N4", 3, "strike intensity of student semester t - 2"},
        {"MACRO_paros_acum_ciclo", "N4", 1, "sum of strike intensity over student semesters 1..t"},
        {"MACRO_paros_basico_vs_superior", "N4", kBasicCycleSemesters + 1,
         "mean strike intensity in basic-cycle semesters minus mean in advanced-cycle semesters through t"},
        {"MACRO_IFC_pond_paros_basico", "N4", 1, "IFC-weighted strike exposure over basic-cycle takings through t"},
        {"MACRO_inflacion_x_paros", "N4", 1, "24-month volatility at entry times cumulative strike exposure through t"},
    }};
}

/// Value of one catalog feature for a student at time t. Reads macro data
/// only from months before entry_month + 6 t and semesters up to the
/// student's semester t.
inline double compute_feature(const std::string& name, const StudentRecord& st, int t, const CurriculumGraph& graph,
                              const MacroSeries& series) {
    const MonthIndex horizon_month = st.entry_month + 6 * t;
    const int last_sem = st.entry_semester + t - 1;  // absolute semester of student semester t
    auto cumulative_strikes = [&] {
        double s = 0;
        for (int n = 1; n <= t; ++n) s += series.strike_at(st.entry_semester + n - 1);
        return s;
    };

    if (name == "MACRO_inflacion_entrada") return annual_inflation_before(series, st.entry_month);
    if (name == "MACRO_inflacion_volatilidad_24m") return inflation_volatility_24m(series, st.entry_month);
    if (name == "MACRO_inflacion_acum_entrada") return compounded_inflation(series, st.entry_month, horizon_month);
    if (name == "MACRO_inflacion_pct_cambio") {
        const double at_entry = annual_inflation_before(series, st.entry_month);
        const double now = annual_inflation_before(series, horizon_month);
        if (at_entry == 0.0) throw InvalidInput("entry inflation is zero; relative change undefined", name);
        return (now - at_entry) / at_entry * 100.0;
    }
    if (name == "MACRO_paros_lag_sem_1") return strike_lag(series, last_sem, 1);
    if (name == "MACRO_paros_lag_sem_2") return strike_lag(series, last_sem, 2);
    if (name == "MACRO_paros_lag_sem_3") return strike_lag(series, last_sem, 3);
    if (name == "MACRO_paros_acum_ciclo") return cumulative_strikes();
    if (name == "MACRO_paros_basico_vs_superior") {
        double basic = 0, adv = 0;
        int nb = 0, na = 0;
        for (int n = 1; n <= t; ++n) {
            const double v = series.strike_at(st.entry_semester + n - 1);
            if (n <= kBasicCycleSemesters) {
                basic += v;
                ++nb;
            } else {
                adv += v;
                ++na;
            }
        }
        if (nb == 0 || na == 0) throw InvalidInput("requires both basic and advanced semesters", name);
        return basic / nb - adv / na;
    }
    if (name == "MACRO_IFC_pond_paros_basico") {
        std::vector<CourseTaking> upto;
        for (const auto& tk : st.takings)
            if (tk.semester <= last_sem) upto.push_back(tk);
        return ifc_weighted_strike_index(upto, graph, series);
    }
    if (name == "MACRO_inflacion_x_paros")
        return inflation_volatility_24m(series, st.entry_month) * cumulative_strikes();
    throw InvalidInput("unknown feature '" + name + "'", "catalog");
}

struct FeatureRow {
    std::string student_id;
    int cohort_year = 0;
    std::vector<double> values;  // aligned with FeatureMatrix::columns
};

/// Observations at one prediction time. Only admissible features appear
/// as columns; `masked` lists catalog features withheld at this time.
struct FeatureMatrix {
    int prediction_time = 0;
    std::vector<std::string> columns;
    std::vector<std::string> masked;
    std::vector<FeatureRow> rows;

    bool has(const std::string& name) const { return std::find(columns.begin(), columns.end(), name) != columns.end(); }

    std::optional<double> value(std::size_t row, const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) return std::nullopt;
        return rows.at(row).values[static_cast<std::size_t>(it - columns.begin())];
    }
};

inline FeatureMatrix build_feature_view(const FeatureCatalog& catalog, const std::vector<StudentRecord>& students,
                                        int t, const CurriculumGraph& graph, const MacroSeries& series) {
    catalog.validate();
    if (t < 0) throw InvalidInput("prediction time must be >= 0", "t");
    FeatureMatrix fm;
    fm.prediction_time = t;
    for (const auto& f : catalog.features) (catalog.available(f, t) ? fm.columns : fm.masked).push_back(f.name);
    for (const auto& st : students) {
        FeatureRow row{st.id, st.cohort_year, {}};
        row.values.reserve(fm.columns.size());
        for (const auto& c : fm.columns) row.values.push_back(compute_feature(c, st, t, graph, series));
        fm.rows.push_back(std::move(row));
    }
    return fm;
}

struct CohortFold {
    std::vector<int> train;
    std::vector<int> test;
};

/// Five expanding-window folds over entry cohorts 2004-2019: train on
/// 2004..(2010 + 2k), test on the next two cohorts (the last fold tests
/// on 2019 alone).
inline std::vector<CohortFold> make_cohort_folds(const std::vector<int>& cohort_years) {
    std::set<int> present(cohort_years.begin(), cohort_years.end());
    std::string missing;
    for (int y = 2004; y <= 2019; ++y)
        if (!present.count(y)) missing += (missing.empty() ? "" : ",") + std::to_string(y);
    if (!missing.empty()) throw InvalidInput("missing cohort years: " + missing, "cohort_years");

    std::vector<CohortFold> folds;
    for (int k = 0; k < 5; ++k) {
        CohortFold f;
        const int last_train = 2010 + 2 * k;
        for (int y = 2004; y <= last_train; ++y) f.train.push_back(y);
        for (int y = last_train + 1; y <= std::min(last_train + 2, 2019); ++y) f.test.push_back(y);
        folds.push_back(std::move(f));
    }
    return folds;
}

}  // namespace capire::features
