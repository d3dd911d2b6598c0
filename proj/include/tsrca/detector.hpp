#pragma once

#include "tsrca/nn.hpp"
#include "tsrca/series.hpp"
#include "tsrca/subprocess.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tsrca {

/// Principal-subspace reconstruction model on flattened windows.
/// score(W) = squared residual norm after projecting onto the basis.
struct PcaReconModel {
    Eigen::MatrixXd basis;  // components x (w*d), orthonormal rows
    Eigen::VectorXd mean;   // w*d
};

struct DenseAeModel {
    DenseNet net;  // (w*d) -> (w*d)
};

/// f(W) = <coeffs, W> + offset. Exposes an exact per-column Lipschitz
/// constant, used by the bias-bound verifier.
struct LinearScoreModel {
    Eigen::MatrixXd coeffs;  // w x d
    double offset = 0.0;
};

/// Scores windows through a child process speaking line-delimited JSON:
///   handshake: {"type":"hello"} -> {"name":..., "version":...}
///   scoring:   {"type":"score","w":int,"d":int,"windows":[[row-major]...]}
///              -> {"scores":[...]} in the same order.
/// Access is serialized; failures restart the child, two retries then abort.
class ExternalScorer {
public:
    explicit ExternalScorer(std::string command);

    std::vector<double> score_batch(std::span<const Window> windows);
    const std::string& name() const { return name_; }
    const std::string& version() const { return version_; }

private:
    void ensure_process();
    std::vector<double> try_batch(std::span<const Window> windows);

    std::string command_;
    std::string name_;
    std::string version_;
    std::unique_ptr<LineProcess> process_;
    std::mutex mutex_;
};

struct Detector {
    std::variant<PcaReconModel, DenseAeModel, LinearScoreModel, std::shared_ptr<ExternalScorer>>
        model;
    int window_length = 0;
    int dim = 0;
    std::string provenance;

    /// Exact Lipschitz constant of the score with respect to column j,
    /// available for linear models only.
    std::optional<double> column_lipschitz(int j) const;
};

double score(const Detector& detector, const Window& window);
std::vector<double> score_batch(const Detector& detector, std::span<const Window> windows);

Detector train_pca_detector(const std::vector<Window>& normal_windows, int components);
Detector train_ae_detector(const std::vector<Window>& normal_windows,
                           const std::vector<int>& hidden_dims, const TrainConfig& config,
                           Activation hidden_activation = Activation::tanh);
Detector make_linear_detector(const Eigen::MatrixXd& coeffs, double offset = 0.0);
Detector make_external_detector(const std::string& command, int window_length, int dim);

/// Empirical q-quantile with linear interpolation.
double choose_threshold(std::vector<double> scores, double quantile = 0.995);

struct DetectionResult {
    std::vector<double> scores;
    double threshold = 0.0;
    std::vector<bool> flags;  // flag <=> score > threshold
};

DetectionResult detect(const Detector& detector, std::span<const Window> windows,
                       double threshold);

struct DetectionQuality {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> roc_auc;  // absent when labels are single-class
};

DetectionQuality detection_metrics(const std::vector<bool>& flags,
                                   const std::vector<bool>& labels);
DetectionQuality detection_metrics(const std::vector<double>& scores, double threshold,
                                   const std::vector<bool>& labels);

}  // namespace tsrca
