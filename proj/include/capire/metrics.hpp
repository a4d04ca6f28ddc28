#pragma once

// Output measures over ensembles of realisations.
//
// Rates are computed per realisation first; ensemble estimates are the
// mean over realisations with a percentile-bootstrap 95% interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "capire/engine.hpp"
#include "capire/error.hpp"
#include "capire/rng.hpp"

namespace capire {

constexpr int kEarlyCycleEnd = 4;

struct Estimate {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    double half_width() const { return 0.5 * (hi - lo); }
    bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Linear-interpolated quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidInput("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean_of(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

constexpr int kDefaultBootstrapResamples = 1000;
constexpr std::uint64_t kBootstrapSeed = 0xB0075;

/// Percentile bootstrap for the mean of `values`.
inline Estimate bootstrap_mean(std::span<const double> values, int resamples = kDefaultBootstrapResamples,
                               std::uint64_t seed = kBootstrapSeed, double level = 0.95) {
    Estimate e;
    if (values.empty()) return e;
    e.mean = mean_of(values);
    if (values.size() == 1 || resamples < 1) {
        e.lo = e.hi = e.mean;
        return e;
    }
    rng::Stream s(rng::hash_keys({seed, values.size()}));
    std::vector<double> stats(static_cast<std::size_t>(resamples));
    for (auto& st : stats) {
        double sum = 0;
        for (std::size_t k = 0; k < values.size(); ++k) sum += values[s.below(values.size())];
        st = sum / static_cast<double>(values.size());
    }
    std::sort(stats.begin(), stats.end());
    e.lo = quantile_sorted(stats, (1.0 - level) / 2.0);
    e.hi = quantile_sorted(stats, 1.0 - (1.0 - level) / 2.0);
    return e;
}

/// Rates for one realisation.
struct RealisationStats {
    int n_agents = 0;
    int horizon = 0;
    double d_total = 0;
    double d_early = 0;
    double d_late_conditional = 0;
    std::vector<int> dropouts_by_semester;  // index t-1
    std::vector<int> active_at_start;       // index t-1
    std::vector<double> cumulative_curve;   // fraction dropped by end of t
    std::array<int, 3> cause_counts{};
    std::array<int, 3> tercile_agents{};
    std::array<int, 3> tercile_dropouts{};
    int graduated = 0;

    std::vector<double> hazard() const {
        std::vector<double> h(dropouts_by_semester.size(), 0.0);
        for (std::size_t t = 0; t < h.size(); ++t)
            h[t] = active_at_start[t] > 0 ? static_cast<double>(dropouts_by_semester[t]) / active_at_start[t] : 0.0;
        return h;
    }
};

inline RealisationStats realisation_stats(const TrajectoryLog& log) {
    RealisationStats r;
    r.horizon = log.horizon;
    r.n_agents = static_cast<int>(log.outcomes.size());
    const auto h = static_cast<std::size_t>(std::max(log.horizon, 0));
    r.dropouts_by_semester.assign(h, 0);
    r.active_at_start.assign(h, 0);
    int early = 0, total = 0;
    for (const auto& o : log.outcomes) {
        const auto terc = static_cast<std::size_t>(resilience_tercile(o.initial_resilience));
        ++r.tercile_agents[terc];
        // Active through semester t iff no exit before t.
        const int last = o.status == Status::Active ? log.horizon : o.exit_semester;
        for (int t = 1; t <= std::min(last, log.horizon); ++t) ++r.active_at_start[static_cast<std::size_t>(t - 1)];
        if (o.status == Status::Graduated) ++r.graduated;
        if (o.status != Status::Dropout) continue;
        ++total;
        ++r.tercile_dropouts[terc];
        ++r.cause_counts[static_cast<std::size_t>(o.cause)];
        ++r.dropouts_by_semester[static_cast<std::size_t>(o.exit_semester - 1)];
        if (o.exit_semester <= kEarlyCycleEnd) ++early;
    }
    if (r.n_agents > 0) {
        r.d_total = static_cast<double>(total) / r.n_agents;
        r.d_early = static_cast<double>(early) / r.n_agents;
        const int survivors = r.n_agents - early;
        r.d_late_conditional = survivors > 0 ? static_cast<double>(total - early) / survivors : 0.0;
    }
    r.cumulative_curve.assign(h, 0.0);
    int cum = 0;
    for (std::size_t t = 0; t < h; ++t) {
        cum += r.dropouts_by_semester[t];
        r.cumulative_curve[t] = r.n_agents > 0 ? static_cast<double>(cum) / r.n_agents : 0.0;
    }
    return r;
}

/// Median of integer-valued event times, interpolated within the median
/// class (grouped-data median with unit classes centred on each semester).
inline std::optional<double> grouped_median(std::span<const int> counts_by_semester) {
    long total = 0;
    for (int c : counts_by_semester) total += c;
    if (total == 0) return std::nullopt;
    const double half = 0.5 * static_cast<double>(total);
    long below = 0;
    for (std::size_t i = 0; i < counts_by_semester.size(); ++i) {
        const int f = counts_by_semester[i];
        if (f > 0 && static_cast<double>(below + f) >= half) {
            const double lower = static_cast<double>(i + 1) - 0.5;
            return lower + (half - static_cast<double>(below)) / f;
        }
        below += f;
    }
    return std::nullopt;
}

struct RunMetrics {
    int horizon = 0;
    int n_realisations = 0;
    std::vector<Estimate> dropout_curve;
    Estimate d_total, d_early, d_late_conditional;
    std::vector<double> hazard;  // pooled: sum dropouts / sum active, per semester
    std::optional<double> median_time_to_dropout;
    std::optional<double> mean_time_to_dropout;
    std::optional<std::array<double, 3>> cause_shares;  // Academic, ResilienceDepletion, External
    std::array<std::optional<double>, 3> tercile_breakdown;  // Low, Mid, High by initial rho
    std::vector<double> realisation_d_total;
    std::vector<double> realisation_d_early;
    double graduated_share = 0.0;
};

/// Ensemble aggregation over per-realisation statistics.
inline RunMetrics aggregate_stats(std::span<const RealisationStats> stats, int resamples = kDefaultBootstrapResamples) {
    if (stats.empty()) throw InvalidInput("aggregate: no realisations");
    const int horizon = stats.front().horizon;
    for (const auto& s : stats)
        if (s.horizon != horizon) throw InvalidInput("aggregate: inconsistent horizons");

    RunMetrics m;
    m.horizon = horizon;
    m.n_realisations = static_cast<int>(stats.size());
    std::vector<double> tot, early, late;
    for (const auto& s : stats) {
        tot.push_back(s.d_total);
        early.push_back(s.d_early);
        late.push_back(s.d_late_conditional);
    }
    m.d_total = bootstrap_mean(tot, resamples, kBootstrapSeed ^ 1);
    m.d_early = bootstrap_mean(early, resamples, kBootstrapSeed ^ 2);
    m.d_late_conditional = bootstrap_mean(late, resamples, kBootstrapSeed ^ 3);
    m.realisation_d_total = tot;
    m.realisation_d_early = early;

    const auto h = static_cast<std::size_t>(horizon);
    std::vector<int> pooled_drop(h, 0);
    std::vector<long> pooled_active(h, 0);
    std::array<long, 3> causes{}, terc_n{}, terc_d{};
    long grads = 0, agents = 0;
    for (const auto& s : stats) {
        for (std::size_t t = 0; t < h; ++t) {
            pooled_drop[t] += s.dropouts_by_semester[t];
            pooled_active[t] += s.active_at_start[t];
        }
        for (std::size_t k = 0; k < 3; ++k) {
            causes[k] += s.cause_counts[k];
            terc_n[k] += s.tercile_agents[k];
            terc_d[k] += s.tercile_dropouts[k];
        }
        grads += s.graduated;
        agents += s.n_agents;
    }
    m.graduated_share = agents > 0 ? static_cast<double>(grads) / agents : 0.0;

    m.dropout_curve.resize(h);
    m.hazard.resize(h);
    for (std::size_t t = 0; t < h; ++t) {
        std::vector<double> v;
        v.reserve(stats.size());
        for (const auto& s : stats) v.push_back(s.cumulative_curve[t]);
        m.dropout_curve[t] = bootstrap_mean(v, resamples, kBootstrapSeed ^ (0x100 + t));
        m.hazard[t] = pooled_active[t] > 0 ? static_cast<double>(pooled_drop[t]) / pooled_active[t] : 0.0;
    }

    m.median_time_to_dropout = grouped_median(pooled_drop);
    long n_drop = 0, sum_t = 0;
    for (std::size_t t = 0; t < h; ++t) {
        n_drop += pooled_drop[t];
        sum_t += static_cast<long>(t + 1) * pooled_drop[t];
    }
    if (n_drop > 0) {
        m.mean_time_to_dropout = static_cast<double>(sum_t) / n_drop;
        std::array<double, 3> shares{};
        for (std::size_t k = 0; k < 3; ++k) shares[k] = static_cast<double>(causes[k]) / n_drop;
        m.cause_shares = shares;
    }
    for (std::size_t k = 0; k < 3; ++k)
        if (terc_n[k] > 0) m.tercile_breakdown[k] = static_cast<double>(terc_d[k]) / terc_n[k];
    return m;
}

inline RunMetrics aggregate(std::span<const TrajectoryLog> logs, int resamples = kDefaultBootstrapResamples) {
    if (logs.empty()) throw InvalidInput("aggregate: no realisations");
    std::vector<RealisationStats> stats;
    stats.reserve(logs.size());
    for (const auto& l : logs) stats.push_back(realisation_stats(l));
    return aggregate_stats(stats, resamples);
}

/// Excess of combined-shock dropout over the additive prediction.
constexpr double amplification(double d_both, double d_inf_only, double d_str_only, double d_base) noexcept {
    return d_both - (d_inf_only + d_str_only - d_base);
}

/// Amplification with a paired percentile-bootstrap interval. The four
/// vectors hold realisation-level rates for the same realisation indices.
inline Estimate amplification_estimate(std::span<const double> both, std::span<const double> inf_only,
                                       std::span<const double> str_only, std::span<const double> base,
                                       int resamples = kDefaultBootstrapResamples,
                                       std::uint64_t seed = kBootstrapSeed) {
    const std::size_t n = both.size();
    if (inf_only.size() != n || str_only.size() != n || base.size() != n)
        throw InvalidInput("amplification: realisation counts differ");
    std::vector<double> per(n);
    for (std::size_t i = 0; i < n; ++i) per[i] = amplification(both[i], inf_only[i], str_only[i], base[i]);
    return bootstrap_mean(per, resamples, seed);
}

struct HazardExcess {
    std::vector<double> excess;
    std::optional<int> peak_semester;  // 1-based; absent when no positive excess
};

inline HazardExcess hazard_excess(std::span<const double> shocked, std::span<const double> baseline) {
    if (shocked.size() != baseline.size()) throw InvalidInput("hazard_excess: curve lengths differ");
    HazardExcess out;
    out.excess.resize(shocked.size());
    double best = 0.0;
    for (std::size_t t = 0; t < shocked.size(); ++t) {
        out.excess[t] = shocked[t] - baseline[t];
        if (out.excess[t] > best) {
            best = out.excess[t];
            out.peak_semester = static_cast<int>(t + 1);
        }
    }
    return out;
}

}  // namespace capire
