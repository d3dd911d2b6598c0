#include "tsrca/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tsrca {

Eigen::MatrixXd block_loading(int sensors, int factors, std::uint64_t seed) {
    if (factors < 1 || factors >= sensors) {
        throw std::invalid_argument("block_loading: need 1 <= factors < sensors");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> gain(0.7, 1.3);
    std::bernoulli_distribution flip(0.5);
    Eigen::MatrixXd loading = Eigen::MatrixXd::Zero(sensors, factors);
    for (int i = 0; i < sensors; ++i) {
        const int f = i * factors / sensors;
        loading(i, f) = gain(rng) * (flip(rng) ? -1.0 : 1.0);
    }
    return loading;
}

LatentFactorSystem make_latent_factor_system(int sensors, int factors, std::uint64_t seed,
                                             double factor_smoothness, double noise_scale,
                                             double baseline_scale) {
    LatentFactorSystem system;
    system.sensors = sensors;
    system.factors = factors;
    system.loading = block_loading(sensors, factors, seed ^ 0x9e3779b97f4a7c15ULL);
    system.factor_smoothness = factor_smoothness;
    system.noise_scale = noise_scale;
    system.seed = seed;
    if (baseline_scale != 0.0) {
        std::mt19937_64 rng(seed ^ 0xd1342543de82ef95ULL);
        std::uniform_real_distribution<double> level(0.8, 1.2);
        system.baseline.resize(sensors);
        for (int j = 0; j < sensors; ++j) system.baseline[j] = baseline_scale * level(rng);
    }
    return system;
}

SeriesMatrix generate(const LatentFactorSystem& system, std::int64_t T) {
    if (T < 2) throw std::invalid_argument("generate: need T >= 2");
    if (system.factors >= system.sensors) {
        throw std::invalid_argument("generate: need factors < sensors");
    }
    if (system.loading.rows() != system.sensors || system.loading.cols() != system.factors) {
        throw std::invalid_argument("generate: loading shape mismatch");
    }
    if (system.baseline.size() != 0 && system.baseline.size() != system.sensors) {
        throw std::invalid_argument("generate: baseline size mismatch");
    }
    const double phi = system.factor_smoothness;
    if (phi <= 0.0 || phi >= 1.0) {
        throw std::invalid_argument("generate: factor_smoothness must be in (0,1)");
    }

    std::mt19937_64 rng(system.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Stationary AR(1): innovation std sqrt(1 - phi^2) keeps factor variance 1.
    const double innov = std::sqrt(1.0 - phi * phi);
    Eigen::VectorXd f(system.factors);
    for (int k = 0; k < system.factors; ++k) f[k] = gauss(rng);

    SeriesMatrix series;
    series.values.resize(T, system.sensors);
    for (int j = 0; j < system.sensors; ++j) {
        series.sensor_names.push_back("s" + std::to_string(j));
    }
    for (std::int64_t t = 0; t < T; ++t) {
        if (t > 0) {
            for (int k = 0; k < system.factors; ++k) f[k] = phi * f[k] + innov * gauss(rng);
        }
        Eigen::VectorXd x = system.loading * f;
        for (int j = 0; j < system.sensors; ++j) x[j] += system.noise_scale * gauss(rng);
        if (system.baseline.size() > 0) x += system.baseline;
        series.values.row(t) = x.transpose();
    }
    return series;
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::spike: return "spike";
        case AnomalyKind::shift: return "shift";
        case AnomalyKind::noise: return "noise";
        case AnomalyKind::drift: return "drift";
        case AnomalyKind::dropout: return "dropout";
        case AnomalyKind::saturation: return "saturation";
    }
    throw std::invalid_argument("unknown anomaly kind");
}

AnomalyKind parse_anomaly_kind(const std::string& name) {
    if (name == "spike") return AnomalyKind::spike;
    if (name == "shift") return AnomalyKind::shift;
    if (name == "noise") return AnomalyKind::noise;
    if (name == "drift") return AnomalyKind::drift;
    if (name == "dropout") return AnomalyKind::dropout;
    if (name == "saturation") return AnomalyKind::saturation;
    throw std::invalid_argument("unknown anomaly kind '" + name + "'");
}

namespace {

double interval_quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

InjectionResult inject(const SeriesMatrix& series, const InjectionSpec& spec,
                       const NormalizationStats& stats) {
    if (stats.dim() != series.dim()) throw std::invalid_argument("inject: stats dim mismatch");
    if (spec.sensors.empty()) throw std::invalid_argument("inject: no target sensors");
    for (int j : spec.sensors) {
        if (j < 0 || j >= series.dim()) throw std::invalid_argument("inject: sensor out of range");
    }
    const std::int64_t lo = spec.interval.begin;
    const std::int64_t hi = spec.interval.end;
    if (lo < 0 || hi > series.length() || lo >= hi) {
        throw std::invalid_argument("inject: interval out of bounds");
    }
    if (spec.kind != AnomalyKind::dropout && spec.magnitude <= 0) {
        throw std::invalid_argument("inject: magnitude must be > 0");
    }
    const std::int64_t len = hi - lo;

    InjectionResult result;
    result.series = series;
    result.event.onset = lo;
    result.event.duration = len;
    result.event.ground_truth = spec.sensors;
    std::sort(result.event.ground_truth.begin(), result.event.ground_truth.end());

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution flip(0.5);
    Eigen::MatrixXd& v = result.series.values;

    for (int j : spec.sensors) {
        const double sigma = stats.stddev[j];
        const double amp = spec.magnitude * sigma;
        switch (spec.kind) {
            case AnomalyKind::spike: {
                const std::int64_t count =
                    static_cast<std::int64_t>(std::ceil(0.1 * static_cast<double>(len)));
                // seeded partial Fisher-Yates for distinct positions
                std::vector<std::int64_t> pos(len);
                for (std::int64_t i = 0; i < len; ++i) pos[i] = lo + i;
                for (std::int64_t i = 0; i < count; ++i) {
                    std::uniform_int_distribution<std::int64_t> pick(i, len - 1);
                    std::swap(pos[i], pos[pick(rng)]);
                }
                for (std::int64_t i = 0; i < count; ++i) {
                    v(pos[i], j) += (flip(rng) ? amp : -amp);
                }
                break;
            }
            case AnomalyKind::shift:
                for (std::int64_t t = lo; t < hi; ++t) v(t, j) += amp;
                break;
            case AnomalyKind::noise:
                for (std::int64_t t = lo; t < hi; ++t) v(t, j) += amp * gauss(rng);
                break;
            case AnomalyKind::drift:
                if (len == 1) {
                    v(lo, j) += amp;
                } else {
                    for (std::int64_t t = lo; t < hi; ++t) {
                        v(t, j) += amp * static_cast<double>(t - lo) /
                                   static_cast<double>(len - 1);
                    }
                }
                break;
            case AnomalyKind::dropout:
                for (std::int64_t t = lo; t < hi; ++t) v(t, j) = 0.0;
                break;
            case AnomalyKind::saturation: {
                std::vector<double> clean(v.col(j).segment(lo, len).begin(),
                                          v.col(j).segment(lo, len).end());
                // Upper clip level: interval quantile, capped at mean + magnitude*sigma.
                const double upper = std::min(interval_quantile(clean, spec.saturation_quantile),
                                              stats.mean[j] + amp);
                for (std::int64_t t = lo; t < hi; ++t) v(t, j) = std::min(v(t, j), upper);
                if (spec.saturate_lower) {
                    const double lower =
                        std::max(interval_quantile(clean, 1.0 - spec.saturation_quantile),
                                 stats.mean[j] - amp);
                    for (std::int64_t t = lo; t < hi; ++t) v(t, j) = std::max(v(t, j), lower);
                }
                break;
            }
        }
    }
    return result;
}

}  // namespace tsrca
