#pragma once

#include "tsrca/detector.hpp"
#include "tsrca/retrieval.hpp"
#include "tsrca/series.hpp"

#include <cstdint>
#include <vector>

namespace tsrca {

enum class Conditioning { conditional, unconditional };

/// Mean over the given donors of f(W) - f(W with column j spliced from the
/// donor). Positive values mean replacing the sensor with normal behavior
/// lowers the anomaly score.
double replacement_attribution(const Detector& detector, const NeighborIndex& index,
                               const Window& window, int j,
                               const std::vector<int>& donor_indices);

/// Counterfactual sensor attribution against conditionally retrieved donors.
double conditional_attribution(const Detector& detector, const NeighborIndex& index,
                               const Window& window, int j, int K);

/// Same replacement arithmetic with unconditionally sampled donors.
double marginal_attribution(const Detector& detector, const NeighborIndex& index,
                            const Window& window, int j, int K, std::uint64_t seed);

/// Time-resolved attribution: per offset tau, splice the s-length segment of
/// column j centered at tau (segment placement clamped inside the window)
/// and average the score differences over the same donors used for
/// sensor-level attribution.
Eigen::VectorXd temporal_attribution(const Detector& detector, const NeighborIndex& index,
                                     const Window& window, int j, int segment_length, int K);

struct AttributionTensor {
    std::int64_t window_start = 0;
    Eigen::MatrixXd values;  // w x d
    int segment_length = 1;

    /// Sensor-level aggregation: column sums of the tensor.
    Eigen::VectorXd sensor_totals() const { return values.colwise().sum(); }
    /// Per-offset aggregation across sensors: row sums.
    Eigen::VectorXd time_totals() const { return values.rowwise().sum(); }
    /// In-window offset with the largest cross-sensor attribution; added to
    /// window_start this is the onset estimate of the explanation map.
    int peak_offset() const;
};

AttributionTensor attribution_tensor(const Detector& detector, const NeighborIndex& index,
                                     const Window& window, int segment_length, int K);

/// Per-sensor attributions for ranking, conditional or unconditional donors.
/// The seed is only consulted for unconditional draws.
Eigen::VectorXd sensor_attributions(const Detector& detector, const NeighborIndex& index,
                                    const Window& window, int K, Conditioning conditioning,
                                    std::uint64_t seed = 0);

/// Exact Wasserstein-1 between two same-size empirical measures of
/// trajectories, l2 ground metric, solved as a min-cost perfect matching.
double wasserstein1_empirical(const std::vector<Eigen::VectorXd>& samples_p,
                              const std::vector<Eigen::VectorXd>& samples_q);

/// Min-cost assignment of a square cost matrix; returns per-row column
/// choices and the optimal total cost.
double solve_assignment(const Eigen::MatrixXd& cost, std::vector<int>& row_to_col);

struct BiasBoundReport {
    int sensor = -1;
    double bias = 0.0;       // |phi_cond - phi_marg|
    double lipschitz = 0.0;  // L of the detector w.r.t. column j
    double w1 = 0.0;         // between the two empirical donor-column measures
    double bound = 0.0;      // L * w1
    bool holds = false;      // bias <= bound + 1e-9
};

/// Empirical check of the dependency-preserving attribution bound for a
/// detector with a known column Lipschitz constant.
BiasBoundReport check_bias_bound(const Detector& detector, const NeighborIndex& index,
                                 const Window& window, int j, int K, std::uint64_t seed = 0);

}  // namespace tsrca
