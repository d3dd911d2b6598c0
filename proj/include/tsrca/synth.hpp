#pragma once

#include "tsrca/series.hpp"

#include <cstdint>
#include <string>

namespace tsrca {

/// Correlated-normal generator: x_t = loading * f_t + noise, with AR(1)
/// latent factors f_t shared across sensors.
struct LatentFactorSystem {
    int sensors = 10;
    int factors = 2;
    Eigen::MatrixXd loading;        // sensors x factors
    double factor_smoothness = 0.9; // AR(1) coefficient in (0,1)
    double noise_scale = 0.1;
    Eigen::VectorXd baseline;       // per-sensor operating point; empty = zeros
    std::uint64_t seed = 0;
};

/// Block loading matrix: each sensor is driven by one factor, with seeded
/// per-sensor gains in [0.7, 1.3] and random signs.
Eigen::MatrixXd block_loading(int sensors, int factors, std::uint64_t seed);

/// Convenience constructor with block loading. baseline_scale > 0 gives each
/// sensor a seeded operating point in [0.8, 1.2] * baseline_scale, so raw
/// zero is far from normal operation (as for physical sensors).
LatentFactorSystem make_latent_factor_system(int sensors, int factors, std::uint64_t seed,
                                             double factor_smoothness = 0.9,
                                             double noise_scale = 0.1,
                                             double baseline_scale = 0.0);

SeriesMatrix generate(const LatentFactorSystem& system, std::int64_t T);

enum class AnomalyKind { spike, shift, noise, drift, dropout, saturation };

std::string to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(const std::string& name);

struct InjectionSpec {
    AnomalyKind kind = AnomalyKind::shift;
    std::vector<int> sensors;       // one or a small correlated group
    IndexRange interval;
    double magnitude = 1.0;         // in units of training sigma; ignored for dropout
    std::uint64_t seed = 0;
    double saturation_quantile = 0.5;  // upper clip level quantile within the interval
    bool saturate_lower = false;       // also clip from below
};

struct InjectionResult {
    SeriesMatrix series;
    AnomalyEvent event;
};

/// Perturbs only (interval x sensors) cells; everything else is bit-identical.
/// `stats` supplies the per-sensor training mean/sigma that scale the
/// magnitude.
InjectionResult inject(const SeriesMatrix& series, const InjectionSpec& spec,
                       const NormalizationStats& stats);

}  // namespace tsrca
