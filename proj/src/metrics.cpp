#include "tsrca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tsrca {

bool RankedAttribution::in_top_k(int sensor, int K) const {
    const int limit = std::min<int>(K, static_cast<int>(ranking.size()));
    for (int i = 0; i < limit; ++i) {
        if (ranking[i] == sensor) return true;
    }
    return false;
}

RankedAttribution rank_attributions(const Eigen::VectorXd& phi, bool signed_ranking) {
    if (!phi.allFinite()) throw std::invalid_argument("rank_attributions: non-finite scores");
    RankedAttribution ranked;
    ranked.scores = phi.cwiseAbs();
    ranked.ranking.resize(phi.size());
    std::iota(ranked.ranking.begin(), ranked.ranking.end(), 0);
    const Eigen::VectorXd& key = signed_ranking ? phi : ranked.scores;
    std::stable_sort(ranked.ranking.begin(), ranked.ranking.end(),
                     [&](int a, int b) { return key[a] > key[b]; });
    return ranked;
}

double recall_at_k(const RankedAttribution& ranked, const std::vector<int>& truth, int K) {
    if (truth.empty()) throw std::invalid_argument("recall_at_k: empty ground-truth set");
    if (K < 1 || K > static_cast<int>(ranked.ranking.size())) {
        throw std::invalid_argument("recall_at_k: K out of range");
    }
    int hits = 0;
    for (int j : truth) hits += ranked.in_top_k(j, K) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double cw_rcs_at_k(const RankedAttribution& ranked, const std::vector<int>& truth, int K) {
    if (truth.empty()) throw std::invalid_argument("cw_rcs_at_k: empty ground-truth set");
    if (K < 1 || K > static_cast<int>(ranked.ranking.size())) {
        throw std::invalid_argument("cw_rcs_at_k: K out of range");
    }
    const double mass = ranked.scores.sum();
    if (mass <= 0.0) return 0.0;
    double weighted = 0.0;
    for (int j : truth) {
        if (ranked.in_top_k(j, K)) weighted += ranked.scores[j] / mass;
    }
    return weighted / static_cast<double>(truth.size());
}

EarlyPersistence early_and_persistence(std::span<const RankedAttribution> per_timestep,
                                       const std::vector<int>& truth, int K) {
    if (per_timestep.empty()) throw std::invalid_argument("early_and_persistence: no rankings");
    const double Ta = static_cast<double>(per_timestep.size());

    EarlyPersistence out;
    std::int64_t first_hit = -1;
    std::int64_t hit_count = 0;
    for (std::size_t i = 0; i < per_timestep.size(); ++i) {
        bool hit = false;
        for (int j : truth) {
            if (per_timestep[i].in_top_k(j, K)) {
                hit = true;
                break;
            }
        }
        if (hit) {
            ++hit_count;
            if (first_hit < 0) first_hit = static_cast<std::int64_t>(i);
        }
    }
    out.persistence = static_cast<double>(hit_count) / Ta;
    out.early = first_hit < 0 ? 0.0 : std::max(0.0, 1.0 - static_cast<double>(first_hit) / Ta);
    return out;
}

double temporal_hm(double early, double persistence, double beta, double eps) {
    if (beta <= 0.0) throw std::invalid_argument("temporal_hm: beta must be > 0");
    if (eps < 0.0) throw std::invalid_argument("temporal_hm: eps must be >= 0");
    const double b2 = beta * beta;
    const double denom = b2 * early + persistence + eps;
    if (denom == 0.0) return 0.0;
    return (1.0 + b2) * early * persistence / denom;
}

EventEvaluation evaluate_event(const AnomalyEvent& event,
                               std::vector<std::pair<std::int64_t, RankedAttribution>> per_window,
                               int window_length, const std::vector<int>& metric_ks, double beta,
                               double eps, int feature_id_k) {
    if (per_window.empty()) throw std::invalid_argument("evaluate_event: no windows");

    EventEvaluation ev;
    ev.event = event;
    std::sort(per_window.begin(), per_window.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ev.per_window = std::move(per_window);

    const double n = static_cast<double>(ev.per_window.size());
    for (int K : metric_ks) {
        double recall_sum = 0.0;
        double cw_sum = 0.0;
        for (const auto& [start, ranked] : ev.per_window) {
            recall_sum += recall_at_k(ranked, event.ground_truth, K);
            cw_sum += cw_rcs_at_k(ranked, event.ground_truth, K);
        }
        ev.recall_at[K] = recall_sum / n;
        ev.cw_rcs_at[K] = cw_sum / n;
    }

    for (const auto& [start, ranked] : ev.per_window) {
        for (int j : event.ground_truth) {
            if (ranked.in_top_k(j, feature_id_k)) ev.identified_sensors.insert(j);
        }
    }

    // causal convention: the ranking at timestep t comes from the window
    // ending at t, i.e. starting at t - w + 1
    std::vector<RankedAttribution> per_timestep;
    per_timestep.reserve(static_cast<std::size_t>(event.duration));
    std::size_t cursor = 0;
    for (std::int64_t t = event.onset; t < event.onset + event.duration; ++t) {
        const std::int64_t want = t - window_length + 1;
        while (cursor < ev.per_window.size() && ev.per_window[cursor].first < want) ++cursor;
        if (cursor >= ev.per_window.size() || ev.per_window[cursor].first != want) {
            throw std::runtime_error("evaluate_event: missing ranking for timestep " +
                                     std::to_string(t) + " (window start " +
                                     std::to_string(want) + ")");
        }
        per_timestep.push_back(ev.per_window[cursor].second);
    }

    bool first = true;
    for (int K : metric_ks) {
        const EarlyPersistence ep = early_and_persistence(per_timestep, event.ground_truth, K);
        if (first) {
            // E and A are reported at the primary (first configured) K
            ev.early = ep.early;
            ev.persistence = ep.persistence;
            first = false;
        }
        ev.temporal_hm_at[K] = temporal_hm(ep.early, ep.persistence, beta, eps);
    }
    return ev;
}

MetricsReport evaluate_dataset(std::vector<EventEvaluation> events) {
    if (events.empty()) throw std::invalid_argument("evaluate_dataset: no events");

    MetricsReport report;
    report.per_event = std::move(events);

    std::map<int, double> window_recall_sum, window_cw_sum;
    std::size_t window_count = 0;
    for (const EventEvaluation& ev : report.per_event) {
        for (const auto& [start, ranked] : ev.per_window) {
            for (const auto& [K, unused] : ev.recall_at) {
                window_recall_sum[K] += recall_at_k(ranked, ev.event.ground_truth, K);
                window_cw_sum[K] += cw_rcs_at_k(ranked, ev.event.ground_truth, K);
            }
        }
        window_count += ev.per_window.size();
    }
    for (const auto& [K, sum] : window_recall_sum) {
        report.window_recall_at[K] = sum / static_cast<double>(window_count);
    }
    for (const auto& [K, sum] : window_cw_sum) {
        report.window_cw_rcs_at[K] = sum / static_cast<double>(window_count);
    }

    const double n_events = static_cast<double>(report.per_event.size());
    for (const EventEvaluation& ev : report.per_event) {
        for (const auto& [K, v] : ev.recall_at) report.event_recall_at[K] += v / n_events;
        for (const auto& [K, v] : ev.cw_rcs_at) report.event_cw_rcs_at[K] += v / n_events;
        for (const auto& [K, v] : ev.temporal_hm_at) {
            report.event_temporal_hm_at[K] += v / n_events;
        }
        report.event_early += ev.early / n_events;
        report.event_persistence += ev.persistence / n_events;
    }
    return report;
}

}  // namespace tsrca
