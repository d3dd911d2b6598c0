#include "tsrca/series.hpp"

#include <cmath>
#include <stdexcept>

namespace tsrca {

int SeriesMatrix::sensor_index(const std::string& name) const {
    for (std::size_t i = 0; i < sensor_names.size(); ++i) {
        if (sensor_names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

void SeriesMatrix::validate() const {
    if (static_cast<int>(sensor_names.size()) != dim()) {
        throw std::runtime_error("series: sensor name count does not match column count");
    }
    if (!values.allFinite()) {
        for (std::int64_t t = 0; t < length(); ++t) {
            for (int j = 0; j < dim(); ++j) {
                if (!std::isfinite(values(t, j))) {
                    throw std::runtime_error("series: non-finite value at row " + std::to_string(t) +
                                             ", sensor '" + sensor_names[j] + "'");
                }
            }
        }
    }
    if (!timestamps.empty()) {
        if (static_cast<std::int64_t>(timestamps.size()) != length()) {
            throw std::runtime_error("series: timestamp count does not match row count");
        }
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            if (timestamps[i] <= timestamps[i - 1]) {
                throw std::runtime_error("series: timestamps not strictly increasing at row " +
                                         std::to_string(i));
            }
        }
    }
}

NormalizationStats fit_normalization(const SeriesMatrix& series, IndexRange range,
                                     double std_floor) {
    if (range.empty()) throw std::invalid_argument("fit_normalization: empty range");
    if (range.begin < 0 || range.end > series.length()) {
        throw std::invalid_argument("fit_normalization: range out of bounds");
    }
    if (std_floor <= 0) throw std::invalid_argument("fit_normalization: std_floor must be > 0");

    const auto block = series.values.middleRows(range.begin, range.size());
    const double n = static_cast<double>(range.size());

    NormalizationStats stats;
    stats.mean = block.colwise().mean();
    stats.stddev.resize(series.dim());
    stats.constant_mask.assign(series.dim(), false);
    for (int j = 0; j < series.dim(); ++j) {
        // population convention
        const double var = (block.col(j).array() - stats.mean[j]).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd < std_floor) {
            stats.constant_mask[j] = true;
            stats.stddev[j] = 1.0;
        } else {
            stats.stddev[j] = sd;
        }
    }
    return stats;
}

SeriesMatrix apply_normalization(const SeriesMatrix& series, const NormalizationStats& stats) {
    if (stats.dim() != series.dim()) {
        throw std::invalid_argument("apply_normalization: dimension mismatch");
    }
    SeriesMatrix out = series;
    out.values = (series.values.rowwise() - stats.mean.transpose()).array().rowwise() /
                 stats.stddev.transpose().array();
    return out;
}

SeriesMatrix invert_normalization(const SeriesMatrix& series, const NormalizationStats& stats) {
    if (stats.dim() != series.dim()) {
        throw std::invalid_argument("invert_normalization: dimension mismatch");
    }
    SeriesMatrix out = series;
    out.values = (series.values.array().rowwise() * stats.stddev.transpose().array()).matrix()
                     .rowwise() +
                 stats.mean.transpose();
    return out;
}

std::vector<std::int64_t> window_starts(std::int64_t T, int w, int stride) {
    if (w < 1 || w > T) throw std::invalid_argument("window_starts: need 1 <= w <= T");
    if (stride < 1) throw std::invalid_argument("window_starts: stride must be >= 1");
    std::vector<std::int64_t> starts;
    starts.reserve(static_cast<std::size_t>((T - w) / stride + 1));
    for (std::int64_t s = 0; s + w <= T; s += stride) starts.push_back(s);
    return starts;
}

Window window_at(const SeriesMatrix& series, std::int64_t start, int w) {
    if (start < 0 || start + w > series.length()) {
        throw std::invalid_argument("window_at: window out of bounds");
    }
    return Window{start, series.values.middleRows(start, w)};
}

std::vector<Window> sliding_windows(const SeriesMatrix& series, int w, int stride) {
    std::vector<Window> windows;
    for (std::int64_t s : window_starts(series.length(), w, stride)) {
        windows.push_back(window_at(series, s, w));
    }
    return windows;
}

MaskedContext mask_sensor(const Window& window, int j) {
    if (j < 0 || j >= window.dim()) throw std::invalid_argument("mask_sensor: sensor out of range");
    MaskedContext ctx;
    ctx.base = window;
    ctx.masked_sensor = j;
    ctx.representation = window.data;
    ctx.representation.col(j).setZero();
    return ctx;
}

Eigen::VectorXd flatten_matrix(const Eigen::MatrixXd& data) {
    const Eigen::Index w = data.rows();
    const Eigen::Index d = data.cols();
    Eigen::VectorXd flat(w * d);
    for (Eigen::Index t = 0; t < w; ++t) {
        for (Eigen::Index j = 0; j < d; ++j) flat[t * d + j] = data(t, j);
    }
    return flat;
}

Eigen::VectorXd flatten_window(const Window& window) { return flatten_matrix(window.data); }

Eigen::MatrixXd flatten_windows(const std::vector<Window>& windows) {
    if (windows.empty()) return {};
    const Eigen::Index n = static_cast<Eigen::Index>(windows.size());
    const Eigen::Index wd =
        static_cast<Eigen::Index>(windows.front().length()) * windows.front().dim();
    Eigen::MatrixXd flat(n, wd);
    for (Eigen::Index i = 0; i < n; ++i) {
        flat.row(i) = flatten_window(windows[static_cast<std::size_t>(i)]).transpose();
    }
    return flat;
}

std::vector<Window> windows_of_event(const SeriesMatrix& series, const AnomalyEvent& event,
                                     int w, int stride) {
    std::vector<Window> windows;
    const IndexRange iv = event.interval();
    for (std::int64_t s : window_starts(series.length(), w, stride)) {
        if (IndexRange{s, s + w}.intersects(iv)) windows.push_back(window_at(series, s, w));
    }
    return windows;
}

void validate_dataset(const LabeledDataset& dataset) {
    dataset.series.validate();
    for (std::size_t i = 0; i < dataset.events.size(); ++i) {
        const AnomalyEvent& ev = dataset.events[i];
        if (ev.duration < 1) {
            throw std::runtime_error("event " + std::to_string(i) + ": duration must be >= 1");
        }
        if (ev.onset < 0 || ev.onset + ev.duration > dataset.series.length()) {
            throw std::runtime_error("event " + std::to_string(i) + ": outside series bounds");
        }
        if (ev.ground_truth.empty()) {
            throw std::runtime_error("event " + std::to_string(i) + ": empty ground-truth set");
        }
        for (int j : ev.ground_truth) {
            if (j < 0 || j >= dataset.series.dim()) {
                throw std::runtime_error("event " + std::to_string(i) +
                                         ": ground-truth sensor out of range");
            }
        }
        if (dataset.train_range.intersects(ev.interval())) {
            throw std::runtime_error("train range overlaps event " + std::to_string(i) +
                                     " at [" + std::to_string(ev.onset) + ", " +
                                     std::to_string(ev.onset + ev.duration) + ")");
        }
    }
}

}  // namespace tsrca
