#pragma once

// Prerequisite curriculum graph and Instructional Friction Coefficients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "capire/error.hpp"

namespace capire {

enum class Cycle : std::uint8_t { Basic, Advanced };

inline const char* to_string(Cycle c) { return c == Cycle::Basic ? "Basic" : "Advanced"; }

struct Course {
    std::string id;
    std::string name;
    Cycle cycle = Cycle::Basic;
    int scheduled_semester = 1;
    std::vector<std::string> prerequisites;
    double base_fail_rate = 0.0;
    double retake_rate = 0.0;
    double ifc_raw = 0.0;
    double ifc = 0.5;
};

/// Weights of the friction composite: difficulty, structural dependency,
/// repeat behaviour.
struct IFCWeights {
    double w1 = 0.5;
    double w2 = 0.3;
    double w3 = 0.2;

    bool valid() const {
        return w1 >= 0 && w2 >= 0 && w3 >= 0 && std::abs(w1 + w2 + w3 - 1.0) < 1e-9;
    }
};

struct GraphViolation {
    enum class Kind { Cycle, DanglingPrerequisite, SemesterOrdering, DuplicateId, FieldRange };
    Kind kind;
    std::string course;
    std::string detail;
};

inline const char* to_string(GraphViolation::Kind k) {
    switch (k) {
        case GraphViolation::Kind::Cycle: return "cycle";
        case GraphViolation::Kind::DanglingPrerequisite: return "dangling-prerequisite";
        case GraphViolation::Kind::SemesterOrdering: return "semester-ordering";
        case GraphViolation::Kind::DuplicateId: return "duplicate-id";
        case GraphViolation::Kind::FieldRange: return "field-range";
    }
    return "?";
}

/// Directed prerequisite graph over at most 64 courses. Course indices are
/// positions in `courses()`; prerequisite sets are also kept as bitmasks so
/// the engine can test eligibility with one AND.
class CurriculumGraph {
public:
    static constexpr std::size_t kMaxCourses = 64;

    CurriculumGraph() = default;

    /// Builds without validating. Call validate_graph() (or make()) to check.
    explicit CurriculumGraph(std::vector<Course> courses) : courses_(std::move(courses)) { reindex(); }

    const std::vector<Course>& courses() const noexcept { return courses_; }
    std::size_t size() const noexcept { return courses_.size(); }
    const Course& operator[](std::size_t i) const { return courses_[i]; }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const Course& at(const std::string& id) const {
        auto i = index_of(id);
        if (!i) throw UnknownCourse(id);
        return courses_[*i];
    }

    int in_degree(std::size_t i) const { return static_cast<int>(courses_[i].prerequisites.size()); }

    int max_in_degree() const {
        int m = 0;
        for (std::size_t i = 0; i < courses_.size(); ++i) m = std::max(m, in_degree(i));
        return std::max(m, 1);
    }

    /// Bitmask of prerequisite indices; dangling ids are skipped.
    std::uint64_t prereq_mask(std::size_t i) const { return masks_[i]; }

    std::uint64_t all_mask() const noexcept {
        return courses_.size() == 64 ? ~0ULL : ((1ULL << courses_.size()) - 1);
    }

    /// Kahn's algorithm, ties broken by (scheduled_semester, index).
    /// Returns nullopt if the graph has a cycle.
    std::optional<std::vector<std::size_t>> topological_order() const {
        const std::size_t n = courses_.size();
        std::vector<int> indeg(n, 0);
        std::vector<std::vector<std::size_t>> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& p : courses_[i].prerequisites) {
                if (auto j = index_of(p)) {
                    out[*j].push_back(i);
                    ++indeg[i];
                }
            }
        }
        auto before = [&](std::size_t a, std::size_t b) {
            if (courses_[a].scheduled_semester != courses_[b].scheduled_semester)
                return courses_[a].scheduled_semester > courses_[b].scheduled_semester;
            return a > b;
        };
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] == 0) ready.push_back(i);
        std::make_heap(ready.begin(), ready.end(), before);
        std::vector<std::size_t> order;
        while (!ready.empty()) {
            std::pop_heap(ready.begin(), ready.end(), before);
            auto u = ready.back();
            ready.pop_back();
            order.push_back(u);
            for (auto v : out[u]) {
                if (--indeg[v] == 0) {
                    ready.push_back(v);
                    std::push_heap(ready.begin(), ready.end(), before);
                }
            }
        }
        if (order.size() != n) return std::nullopt;
        return order;
    }

    /// Course indices ordered by scheduled semester then declaration order.
    /// This is the enrollment priority order.
    const std::vector<std::size_t>& schedule_order() const noexcept { return schedule_order_; }

    Course& mutable_course(std::size_t i) { return courses_[i]; }

private:
    void reindex() {
        if (courses_.size() > kMaxCourses)
            throw InvalidInput("curriculum exceeds " + std::to_string(kMaxCourses) + " courses", "courses");
        index_.clear();
        for (std::size_t i = 0; i < courses_.size(); ++i) index_.emplace(courses_[i].id, i);
        masks_.assign(courses_.size(), 0);
        for (std::size_t i = 0; i < courses_.size(); ++i)
            for (const auto& p : courses_[i].prerequisites)
                if (auto j = index_of(p)) masks_[i] |= 1ULL << *j;
        schedule_order_.resize(courses_.size());
        std::iota(schedule_order_.begin(), schedule_order_.end(), std::size_t{0});
        std::stable_sort(schedule_order_.begin(), schedule_order_.end(), [&](auto a, auto b) {
            return courses_[a].scheduled_semester < courses_[b].scheduled_semester;
        });
    }

    std::vector<Course> courses_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::uint64_t> masks_;
    std::vector<std::size_t> schedule_order_;
};

/// All violated structural invariants. Empty means the graph is valid.
inline std::vector<GraphViolation> validate_graph(const CurriculumGraph& g) {
    using K = GraphViolation::Kind;
    std::vector<GraphViolation> out;
    std::map<std::string, int> seen;
    for (const auto& c : g.courses())
        if (++seen[c.id] == 2) out.push_back({K::DuplicateId, c.id, "course id declared more than once"});

    for (const auto& c : g.courses()) {
        if (!(c.base_fail_rate >= 0 && c.base_fail_rate <= 1))
            out.push_back({K::FieldRange, c.id, "fail_rate outside [0,1]"});
        if (!(c.retake_rate >= 0 && c.retake_rate <= 1))
            out.push_back({K::FieldRange, c.id, "retake_rate outside [0,1]"});
        if (c.scheduled_semester < 1 || c.scheduled_semester > 12)
            out.push_back({K::FieldRange, c.id, "semester outside 1..12"});
        else if (c.cycle == Cycle::Basic && c.scheduled_semester > 4)
            out.push_back({K::FieldRange, c.id, "basic-cycle course scheduled after semester 4"});
        else if (c.cycle == Cycle::Advanced && c.scheduled_semester < 5)
            out.push_back({K::FieldRange, c.id, "advanced-cycle course scheduled before semester 5"});

        for (const auto& p : c.prerequisites) {
            auto j = g.index_of(p);
            if (!j) {
                out.push_back({K::DanglingPrerequisite, c.id, "requires unknown course '" + p + "'"});
                continue;
            }
            if (g[*j].scheduled_semester >= c.scheduled_semester)
                out.push_back({K::SemesterOrdering, c.id,
                               "semester " + std::to_string(c.scheduled_semester) + " requires '" + p +
                                   "' scheduled in semester " + std::to_string(g[*j].scheduled_semester)});
        }
    }
    if (!g.topological_order()) out.push_back({K::Cycle, {}, "prerequisite relation contains a cycle"});
    return out;
}

/// Weighted friction composite before standardisation.
inline double compute_ifc_raw(const Course& course, const CurriculumGraph& graph, const IFCWeights& w) {
    auto idx = graph.index_of(course.id);
    if (!idx) throw UnknownCourse(course.id);
    const double complexity =
        static_cast<double>(graph.in_degree(*idx)) / static_cast<double>(graph.max_in_degree());
    return w.w1 * course.base_fail_rate + w.w2 * complexity + w.w3 * course.retake_rate;
}

/// Rescales raw friction within each cycle to 0.5 + 0.5 (x - mean) / max|x - mean|,
/// clipped to [0, 1]. A cycle whose raw values are all equal maps to 0.5.
inline CurriculumGraph standardise_ifc_within_cycle(CurriculumGraph graph) {
    for (Cycle cyc : {Cycle::Basic, Cycle::Advanced}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < graph.size(); ++i)
            if (graph[i].cycle == cyc) members.push_back(i);
        if (members.empty()) continue;
        double mean = 0;
        for (auto i : members) mean += graph[i].ifc_raw;
        mean /= static_cast<double>(members.size());
        double max_dev = 0;
        for (auto i : members) max_dev = std::max(max_dev, std::abs(graph[i].ifc_raw - mean));
        for (auto i : members) {
            auto& c = graph.mutable_course(i);
            c.ifc = max_dev <= 1e-15 ? 0.5 : std::clamp(0.5 + 0.5 * (c.ifc_raw - mean) / max_dev, 0.0, 1.0);
        }
    }
    return graph;
}

/// Validates, then fills ifc_raw and the standardised ifc for every course.
/// Throws InvalidInput listing every violation.
inline CurriculumGraph make_curriculum(std::vector<Course> courses, const IFCWeights& weights = {}) {
    if (!weights.valid()) throw InvalidInput("weights must be non-negative and sum to 1", "ifc_weights");
    CurriculumGraph g(std::move(courses));
    auto violations = validate_graph(g);
    if (!violations.empty()) {
        std::string msg;
        for (const auto& v : violations)
            msg += std::string(msg.empty() ? "" : "; ") + to_string(v.kind) + (v.course.empty() ? "" : " at " + v.course) +
                   ": " + v.detail;
        throw InvalidInput(msg, "courses");
    }
    for (std::size_t i = 0; i < g.size(); ++i) g.mutable_course(i).ifc_raw = compute_ifc_raw(g[i], g, weights);
    return standardise_ifc_within_cycle(std::move(g));
}

/// Synthetic 40-course engineering programme: 16 foundational courses in
/// semesters 1-4, 24 advanced courses in semesters 5-12. Every course after
/// semester 1 has at least one prerequisite, so the schedule is enforced by
/// the graph itself. B01 and B02 are the two high-friction gateways.
inline std::vector<Course> default_courses() {
    // The table column is relative difficulty. Per-attempt fail rates for the
    // non-gateway courses are the difficulty times a cycle-level scale fitted
    // together with the behavioural parameters; retake rates follow the raw
    // difficulty.
    constexpr double kBasicFailScale = 0.38896;
    constexpr double kAdvancedFailScale = 0.84796;
    struct Row {
        const char* id;
        const char* name;
        int sem;
        std::vector<std::string> pre;
        double fail;
    };
    // clang-format off
    const std::vector<Row> rows = {
        {"B01", "Analisis Matematico I",          1, {},                 0.45},
        {"B02", "Fisica I",                       1, {},                 0.40},
        {"B03", "Algebra y Geometria Analitica",  1, {},                 0.32},
        {"B04", "Quimica General",                1, {},                 0.26},
        {"B05", "Analisis Matematico II",         2, {"B01"},            0.36},
        {"B06", "Fisica II",                      2, {"B01", "B02"},     0.34},
        {"B07", "Sistemas de Representacion",     2, {"B02", "B03"},     0.18},
        {"B08", "Programacion",                   2, {"B03"},            0.22},
        {"B09", "Analisis Matematico III",        3, {"B05"},            0.32},
        {"B10", "Probabilidad y Estadistica",     3, {"B01", "B03"},     0.28},
        {"B11", "Mecanica Racional",              3, {"B02", "B06"},     0.30},
        {"B12", "Quimica Aplicada",               3, {"B04"},            0.20},
        {"B13", "Calculo Numerico",               4, {"B08", "B09"},     0.26},
        {"B14", "Fisica III",                     4, {"B06", "B09"},     0.28},
        {"B15", "Termodinamica",                  4, {"B11", "B12"},     0.27},
        {"B16", "Ciencia de los Materiales",      4, {"B12"},            0.18},
        {"A17", "Estabilidad I",                  5, {"B11", "B14"},     0.24},
        {"A18", "Electrotecnia",                  5, {"B14"},            0.22},
        {"A19", "Mecanica de Fluidos",            5, {"B13", "B15"},     0.22},
        {"A20", "Estabilidad II",                 6, {"A17"},            0.22},
        {"A21", "Maquinas Electricas",            6, {"A18"},            0.20},
        {"A22", "Hidraulica",                     6, {"A19"},            0.18},
        {"A23", "Tecnologia de Materiales",       7, {"A20", "B16"},     0.18},
        {"A24", "Electronica",                    7, {"A21"},            0.20},
        {"A25", "Transferencia de Calor",         7, {"A22", "B15"},     0.18},
        {"A26", "Estructuras",                    8, {"A23"},            0.18},
        {"A27", "Control Automatico",             8, {"A24", "B13"},     0.20},
        {"A28", "Economia",                       8, {"A20"},            0.10},
        {"A29", "Instalaciones",                  9, {"A25", "A27"},     0.16},
        {"A30", "Gestion de Proyectos",           9, {"A28"},            0.10},
        {"A31", "Diseno Mecanico",                9, {"A26"},            0.17},
        {"A32", "Organizacion Industrial",       10, {"A30"},            0.10},
        {"A33", "Sistemas Energeticos",          10, {"A29"},            0.15},
        {"A34", "Construcciones",                10, {"A31"},            0.15},
        {"A35", "Legislacion",                   11, {"A32"},            0.08},
        {"A36", "Seguridad e Higiene",           11, {"A33"},            0.10},
        {"A37", "Optativa Tecnica",              11, {"A34"},            0.12},
        {"A38", "Practica Profesional",          12, {"A35", "A36"},     0.08},
        {"A39", "Evaluacion de Proyectos",       12, {"A30", "A36"},     0.10},
        {"A40", "Proyecto Final",                12, {"A37", "A33"},     0.15},
    };
    // clang-format on
    std::vector<Course> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        Course c;
        c.id = r.id;
        c.name = r.name;
        c.scheduled_semester = r.sem;
        c.cycle = r.sem <= 4 ? Cycle::Basic : Cycle::Advanced;
        c.prerequisites = r.pre;
        const bool gateway = c.id == "B01" || c.id == "B02";
        const double scale = gateway ? 1.0 : (c.cycle == Cycle::Basic ? kBasicFailScale : kAdvancedFailScale);
        c.base_fail_rate = std::min(1.0, scale * r.fail);
        c.retake_rate = std::min(1.0, 0.85 * r.fail);
        out.push_back(std::move(c));
    }
    return out;
}

inline CurriculumGraph default_curriculum() { return make_curriculum(default_courses()); }

}  // namespace capire
