#include "catch_amalgamated.hpp"

#include <algorithm>
#include <map>

#include "capire/curriculum.hpp"

using namespace capire;

namespace {

Course course(std::string id, Cycle cyc, int sem, std::vector<std::string> pre = {}, double fail = 0.2,
              double retake = 0.1) {
    Course c;
    c.id = id;
    c.name = id;
    c.cycle = cyc;
    c.scheduled_semester = sem;
    c.prerequisites = std::move(pre);
    c.base_fail_rate = fail;
    c.retake_rate = retake;
    return c;
}

bool has_kind(const std::vector<GraphViolation>& v, GraphViolation::Kind k) {
    return std::any_of(v.begin(), v.end(), [&](const GraphViolation& g) { return g.kind == k; });
}

}  // namespace

TEST_CASE("curriculum: IFC raw is the weighted friction composite", "[curriculum][ifc]") {
    // Ten semester-1 courses; W takes all ten as prerequisites (max in-degree
    // 10), T takes three, so T's normalised in-degree is 0.3.
    std::vector<Course> cs;
    std::vector<std::string> all;
    for (int i = 0; i < 10; ++i) {
        cs.push_back(course("P" + std::to_string(i), Cycle::Basic, 1));
        all.push_back("P" + std::to_string(i));
    }
    cs.push_back(course("W", Cycle::Basic, 2, all));
    cs.push_back(course("T", Cycle::Basic, 2, {"P0", "P1", "P2"}, 0.5, 0.2));
    CurriculumGraph g(cs);
    // 0.5*0.5 + 0.3*0.3 + 0.2*0.2 = 0.25 + 0.09 + 0.04
    REQUIRE(compute_ifc_raw(g.at("T"), g, {}) == Catch::Approx(0.38).margin(1e-12));

    CurriculumGraph zero({course("Z", Cycle::Basic, 1, {}, 0.0, 0.0)});
    REQUIRE(compute_ifc_raw(zero.at("Z"), zero, {}) == 0.0);

    CurriculumGraph one({course("A", Cycle::Basic, 1, {}, 1, 1), course("B", Cycle::Basic, 2, {"A"}, 1.0, 1.0)});
    REQUIRE(compute_ifc_raw(one.at("B"), one, {}) == Catch::Approx(1.0).margin(1e-12));

    REQUIRE_THROWS_AS(compute_ifc_raw(course("X", Cycle::Basic, 1), one, {}), UnknownCourse);
}

TEST_CASE("curriculum: IFC raw is monotone in each input", "[curriculum][ifc][property]") {
    std::vector<Course> cs{course("A", Cycle::Basic, 1), course("B", Cycle::Basic, 1),
                           course("C", Cycle::Basic, 2, {"A"}), course("D", Cycle::Basic, 2, {"A", "B"})};
    CurriculumGraph g(cs);
    const IFCWeights w;
    for (double f = 0; f < 1.0; f += 0.1) {
        auto lo = g.at("C"), hi = g.at("C");
        lo.base_fail_rate = f;
        hi.base_fail_rate = f + 0.1;
        REQUIRE(compute_ifc_raw(lo, g, w) <= compute_ifc_raw(hi, g, w));
        lo.base_fail_rate = hi.base_fail_rate = 0.3;
        lo.retake_rate = f;
        hi.retake_rate = f + 0.1;
        REQUIRE(compute_ifc_raw(lo, g, w) <= compute_ifc_raw(hi, g, w));
    }
    // D has the larger in-degree, everything else equal.
    REQUIRE(compute_ifc_raw(g.at("C"), g, w) < compute_ifc_raw(g.at("D"), g, w));
}

TEST_CASE("curriculum: within-cycle standardisation", "[curriculum][ifc]") {
    std::vector<Course> cs{course("A", Cycle::Basic, 1), course("B", Cycle::Basic, 1), course("C", Cycle::Basic, 1),
                           course("X", Cycle::Advanced, 5), course("Y", Cycle::Advanced, 5)};
    cs[0].ifc_raw = 0.2;
    cs[1].ifc_raw = 0.4;
    cs[2].ifc_raw = 0.6;
    cs[3].ifc_raw = 0.3;
    cs[4].ifc_raw = 0.3;
    const auto g = standardise_ifc_within_cycle(CurriculumGraph(cs));
    // mean 0.4, max |dev| 0.2: 0.5 + 0.5 * (-0.2, 0, 0.2) / 0.2
    REQUIRE(g.at("A").ifc == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(g.at("B").ifc == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(g.at("C").ifc == Catch::Approx(1.0).margin(1e-12));
    // Identical raw values in a cycle map to 0.5.
    REQUIRE(g.at("X").ifc == 0.5);
    REQUIRE(g.at("Y").ifc == 0.5);

    SECTION("idempotent on its own output") {
        std::vector<Course> again = g.courses();
        for (auto& c : again) c.ifc_raw = c.ifc;
        const auto g2 = standardise_ifc_within_cycle(CurriculumGraph(again));
        for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(g2[i].ifc == Catch::Approx(g[i].ifc).margin(1e-12));
    }
}

TEST_CASE("curriculum: standardised IFC has mean 0.5 per cycle on the default programme", "[curriculum][ifc]") {
    const auto g = default_curriculum();
    std::map<Cycle, std::pair<double, int>> acc;
    for (const auto& c : g.courses()) {
        REQUIRE(c.ifc >= 0.0);
        REQUIRE(c.ifc <= 1.0);
        acc[c.cycle].first += c.ifc;
        acc[c.cycle].second += 1;
    }
    // max-abs-dev scaling never clips, so the mean is exactly 0.5
    for (const auto& [cyc, s] : acc) REQUIRE(s.first / s.second == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("curriculum: graph validation reports every violation", "[curriculum][validate]") {
    using K = GraphViolation::Kind;
    REQUIRE(validate_graph(CurriculumGraph()).empty());

    const auto cyc = validate_graph(
        CurriculumGraph({course("A", Cycle::Basic, 2, {"B"}), course("B", Cycle::Basic, 2, {"A"})}));
    REQUIRE(has_kind(cyc, K::Cycle));

    const auto order = validate_graph(
        CurriculumGraph({course("A", Cycle::Basic, 1, {"B"}), course("B", Cycle::Basic, 2)}));
    REQUIRE(has_kind(order, K::SemesterOrdering));
    REQUIRE_FALSE(has_kind(order, K::Cycle));

    const auto dangling = validate_graph(CurriculumGraph({course("A", Cycle::Basic, 2, {"Q"})}));
    REQUIRE(has_kind(dangling, K::DanglingPrerequisite));

    const auto range = validate_graph(CurriculumGraph(
        {course("A", Cycle::Basic, 5), course("B", Cycle::Advanced, 3), course("C", Cycle::Basic, 1, {}, 1.5)}));
    REQUIRE(std::count_if(range.begin(), range.end(), [](auto& v) { return v.kind == K::FieldRange; }) == 3);

    REQUIRE_THROWS_AS(make_curriculum({course("A", Cycle::Basic, 1, {"A"})}), InvalidInput);
}

TEST_CASE("curriculum: topological order puts prerequisites first", "[curriculum][property]") {
    const auto g = default_curriculum();
    const auto order = g.topological_order();
    REQUIRE(order);
    REQUIRE(order->size() == g.size());
    std::vector<std::size_t> pos(g.size());
    for (std::size_t k = 0; k < order->size(); ++k) pos[(*order)[k]] = k;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (const auto& p : g[i].prerequisites) REQUIRE(pos[*g.index_of(p)] < pos[i]);
}

TEST_CASE("curriculum: default programme shape", "[curriculum]") {
    const auto g = default_curriculum();
    REQUIRE(g.size() == 40);
    int basic = 0;
    for (const auto& c : g.courses()) {
        if (c.cycle == Cycle::Basic) {
            ++basic;
            REQUIRE(c.scheduled_semester <= 4);
        } else {
            REQUIRE(c.scheduled_semester >= 5);
        }
    }
    REQUIRE(basic == 16);
    REQUIRE(g.at("B01").base_fail_rate == 0.45);
    REQUIRE(g.at("B02").base_fail_rate == 0.40);
    for (const char* gate : {"B01", "B02"}) {
        int dependents = 0;
        for (const auto& c : g.courses())
            dependents += std::count(c.prerequisites.begin(), c.prerequisites.end(), std::string(gate));
        REQUIRE(dependents >= 3);
    }
    REQUIRE(validate_graph(g).empty());
    REQUIRE(g.max_in_degree() >= 1);
}

TEST_CASE("curriculum: weights must form a convex combination", "[curriculum]") {
    REQUIRE(IFCWeights{}.valid());
    REQUIRE_FALSE(IFCWeights{0.5, 0.5, 0.5}.valid());
    REQUIRE_FALSE(IFCWeights{1.2, -0.1, -0.1}.valid());
    REQUIRE_THROWS_AS(make_curriculum(default_courses(), {0.6, 0.3, 0.2}), InvalidInput);
}
