#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsrca {

/// Half-open index interval [begin, end).
struct IndexRange {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t size() const { return end > begin ? end - begin : 0; }
    bool empty() const { return size() == 0; }
    bool contains(std::int64_t t) const { return t >= begin && t < end; }
    bool intersects(const IndexRange& other) const {
        return begin < other.end && other.begin < end;
    }
};

/// A T x d multivariate series. Rows are timesteps, columns are sensors.
struct SeriesMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> sensor_names;
    std::vector<std::int64_t> timestamps;  // empty, or one per row, strictly increasing

    std::int64_t length() const { return values.rows(); }
    int dim() const { return static_cast<int>(values.cols()); }

    /// Index of a sensor by name, -1 if absent.
    int sensor_index(const std::string& name) const;

    /// Throws std::runtime_error on NaN/Inf values, name/width mismatch,
    /// or non-monotone timestamps.
    void validate() const;
};

/// Per-sensor z-score statistics fit on a reference range.
struct NormalizationStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;             // 1.0 where constant_mask is set
    std::vector<bool> constant_mask;    // true where training std fell below the floor

    int dim() const { return static_cast<int>(mean.size()); }
};

/// A w x d slice of a series starting at time index `start`.
struct Window {
    std::int64_t start = 0;
    Eigen::MatrixXd data;

    int length() const { return static_cast<int>(data.rows()); }
    int dim() const { return static_cast<int>(data.cols()); }
};

/// A window with one sensor's trajectory removed (column zeroed after
/// z-scoring, i.e. imputed with the training mean).
struct MaskedContext {
    Window base;
    int masked_sensor = -1;
    Eigen::MatrixXd representation;
};

struct AnomalyEvent {
    std::int64_t onset = 0;
    std::int64_t duration = 1;
    std::vector<int> ground_truth;  // sorted, distinct sensor indices

    IndexRange interval() const { return {onset, onset + duration}; }
};

struct LabeledDataset {
    SeriesMatrix series;
    std::vector<AnomalyEvent> events;
    IndexRange train_range;
};

NormalizationStats fit_normalization(const SeriesMatrix& series, IndexRange range,
                                     double std_floor = 1e-8);
SeriesMatrix apply_normalization(const SeriesMatrix& series, const NormalizationStats& stats);
SeriesMatrix invert_normalization(const SeriesMatrix& series, const NormalizationStats& stats);

/// Window start indices 0, stride, 2*stride, ... with start + w <= T.
std::vector<std::int64_t> window_starts(std::int64_t T, int w, int stride);
Window window_at(const SeriesMatrix& series, std::int64_t start, int w);
std::vector<Window> sliding_windows(const SeriesMatrix& series, int w, int stride = 1);

MaskedContext mask_sensor(const Window& window, int j);

/// Row-major (time-major) flattening: cell (t, j) -> index t*d + j.
Eigen::VectorXd flatten_window(const Window& window);
Eigen::VectorXd flatten_matrix(const Eigen::MatrixXd& data);
/// One flattened window per row.
Eigen::MatrixXd flatten_windows(const std::vector<Window>& windows);

/// All stride-grid windows whose index range intersects the event interval.
std::vector<Window> windows_of_event(const SeriesMatrix& series, const AnomalyEvent& event,
                                     int w, int stride = 1);

/// Throws if the training range overlaps any labeled event, or an event
/// falls outside the series.
void validate_dataset(const LabeledDataset& dataset);

}  // namespace tsrca
