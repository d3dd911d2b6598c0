#pragma once

#include "tsrca/series.hpp"

#include <map>
#include <set>
#include <span>
#include <vector>

namespace tsrca {

/// Sensors ordered by descending attribution magnitude, ties by ascending
/// sensor index.
struct RankedAttribution {
    Eigen::VectorXd scores;    // |phi|, nonnegative
    std::vector<int> ranking;  // permutation of 0..d-1

    bool in_top_k(int sensor, int K) const;
};

/// `signed_ranking` ranks by raw value instead of magnitude; scores stay
/// absolute either way so the confidence weights match the magnitude
/// normalization.
RankedAttribution rank_attributions(const Eigen::VectorXd& phi, bool signed_ranking = false);

double recall_at_k(const RankedAttribution& ranked, const std::vector<int>& truth, int K);
double cw_rcs_at_k(const RankedAttribution& ranked, const std::vector<int>& truth, int K);

struct EarlyPersistence {
    double early = 0.0;        // E
    double persistence = 0.0;  // A
};

/// `per_timestep[i]` is the ranking at event timestep t0+i (from the window
/// ending there). Requires one ranking per event timestep.
EarlyPersistence early_and_persistence(std::span<const RankedAttribution> per_timestep,
                                       const std::vector<int>& truth, int K);

/// (1+beta^2) E A / (beta^2 E + A + eps).
double temporal_hm(double early, double persistence, double beta = 1.0, double eps = 1e-8);

struct EventEvaluation {
    AnomalyEvent event;
    std::vector<std::pair<std::int64_t, RankedAttribution>> per_window;  // (window start, ranking)
    std::map<int, double> recall_at;      // K -> mean over the event's windows
    std::map<int, double> cw_rcs_at;      // K -> mean over the event's windows
    double early = 0.0;
    double persistence = 0.0;
    std::map<int, double> temporal_hm_at;  // K -> TemporalHM_beta at the run's beta
    std::set<int> identified_sensors;      // ground-truth sensors seen in any window's top-K
};

/// Builds the per-event metric block from per-window rankings. Rankings for
/// the event's timesteps (windows ending inside the event) must be present
/// in per_window for the temporal metrics.
EventEvaluation evaluate_event(const AnomalyEvent& event,
                               std::vector<std::pair<std::int64_t, RankedAttribution>> per_window,
                               int window_length, const std::vector<int>& metric_ks, double beta,
                               double eps, int feature_id_k);

struct MetricsReport {
    std::vector<EventEvaluation> per_event;
    // dataset-level aggregation conventions, both reported:
    std::map<int, double> window_recall_at;   // mean over all anomalous windows
    std::map<int, double> window_cw_rcs_at;
    std::map<int, double> event_recall_at;    // mean of per-event means
    std::map<int, double> event_cw_rcs_at;
    std::map<int, double> event_temporal_hm_at;
    double event_early = 0.0;
    double event_persistence = 0.0;
};

MetricsReport evaluate_dataset(std::vector<EventEvaluation> events);

}  // namespace tsrca
