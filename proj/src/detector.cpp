#include "tsrca/detector.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsrca {

namespace {

void check_dims(const Detector& detector, const Window& window) {
    if (window.length() != detector.window_length || window.dim() != detector.dim) {
        throw std::invalid_argument("score: window is " + std::to_string(window.length()) + "x" +
                                    std::to_string(window.dim()) + ", detector expects " +
                                    std::to_string(detector.window_length) + "x" +
                                    std::to_string(detector.dim));
    }
}

}  // namespace

ExternalScorer::ExternalScorer(std::string command) : command_(std::move(command)) {}

void ExternalScorer::ensure_process() {
    if (process_ && process_->running()) return;
    process_ = std::make_unique<LineProcess>(command_);
    process_->write_line(nlohmann::json{{"type", "hello"}}.dump());
    const nlohmann::json reply = nlohmann::json::parse(process_->read_line());
    name_ = reply.at("name").get<std::string>();
    version_ = reply.at("version").get<std::string>();
}

std::vector<double> ExternalScorer::try_batch(std::span<const Window> windows) {
    ensure_process();
    nlohmann::json request;
    request["type"] = "score";
    request["w"] = windows.front().length();
    request["d"] = windows.front().dim();
    nlohmann::json rows = nlohmann::json::array();
    for (const Window& window : windows) {
        const Eigen::VectorXd flat = flatten_window(window);
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index i = 0; i < flat.size(); ++i) row.push_back(flat[i]);
        rows.push_back(std::move(row));
    }
    request["windows"] = std::move(rows);
    process_->write_line(request.dump());
    const nlohmann::json reply = nlohmann::json::parse(process_->read_line());
    std::vector<double> scores = reply.at("scores").get<std::vector<double>>();
    if (scores.size() != windows.size()) {
        throw std::runtime_error("external detector: got " + std::to_string(scores.size()) +
                                 " scores for " + std::to_string(windows.size()) + " windows");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::runtime_error("external detector: non-finite score");
    }
    return scores;
}

std::vector<double> ExternalScorer::score_batch(std::span<const Window> windows) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        try {
            return try_batch(windows);
        } catch (const std::exception& e) {
            last_error = e.what();
            if (process_) process_->terminate();
            process_.reset();
        }
    }
    throw std::runtime_error("external detector failed after 2 retries: " + last_error);
}

std::optional<double> Detector::column_lipschitz(int j) const {
    if (const auto* linear = std::get_if<LinearScoreModel>(&model)) {
        if (j < 0 || j >= linear->coeffs.cols()) {
            throw std::invalid_argument("column_lipschitz: sensor out of range");
        }
        return linear->coeffs.col(j).norm();
    }
    return std::nullopt;
}

double score(const Detector& detector, const Window& window) {
    check_dims(detector, window);
    if (const auto* pca = std::get_if<PcaReconModel>(&detector.model)) {
        const Eigen::VectorXd centered = flatten_window(window) - pca->mean;
        const Eigen::VectorXd coords = pca->basis * centered;
        return (centered - pca->basis.transpose() * coords).squaredNorm();
    }
    if (const auto* ae = std::get_if<DenseAeModel>(&detector.model)) {
        const Eigen::VectorXd flat = flatten_window(window);
        return (forward(ae->net, flat) - flat).squaredNorm();
    }
    if (const auto* linear = std::get_if<LinearScoreModel>(&detector.model)) {
        return linear->coeffs.cwiseProduct(window.data).sum() + linear->offset;
    }
    const auto& external = std::get<std::shared_ptr<ExternalScorer>>(detector.model);
    return external->score_batch(std::span<const Window>(&window, 1)).front();
}

std::vector<double> score_batch(const Detector& detector, std::span<const Window> windows) {
    if (windows.empty()) return {};
    if (const auto* external =
            std::get_if<std::shared_ptr<ExternalScorer>>(&detector.model)) {
        for (const Window& w : windows) check_dims(detector, w);
        return (*external)->score_batch(windows);
    }
    std::vector<double> scores;
    scores.reserve(windows.size());
    for (const Window& w : windows) scores.push_back(score(detector, w));
    return scores;
}

Detector train_pca_detector(const std::vector<Window>& normal_windows, int components) {
    if (normal_windows.empty()) throw std::invalid_argument("train_pca_detector: no windows");
    const Eigen::Index wd = static_cast<Eigen::Index>(normal_windows.front().length()) *
                            normal_windows.front().dim();
    if (components < 1 || components > wd) {
        throw std::invalid_argument("train_pca_detector: components out of range");
    }
    if (static_cast<Eigen::Index>(normal_windows.size()) < components) {
        throw std::runtime_error("train_pca_detector: degenerate covariance (" +
                                 std::to_string(normal_windows.size()) + " windows < " +
                                 std::to_string(components) + " components)");
    }

    const Eigen::MatrixXd flat = flatten_windows(normal_windows);
    PcaReconModel model;
    model.mean = flat.colwise().mean();
    const Eigen::MatrixXd centered = flat.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(flat.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("train_pca_detector: eigendecomposition failed");
    }
    // eigenvalues ascending; take the top `components` in descending order
    model.basis.resize(components, wd);
    for (int i = 0; i < components; ++i) {
        model.basis.row(i) = solver.eigenvectors().col(wd - 1 - i).transpose();
    }

    Detector detector;
    detector.window_length = normal_windows.front().length();
    detector.dim = normal_windows.front().dim();
    detector.model = std::move(model);
    detector.provenance = "pca(components=" + std::to_string(components) +
                          ", windows=" + std::to_string(normal_windows.size()) + ")";
    return detector;
}

Detector train_ae_detector(const std::vector<Window>& normal_windows,
                           const std::vector<int>& hidden_dims, const TrainConfig& config,
                           Activation hidden_activation) {
    if (normal_windows.empty()) throw std::invalid_argument("train_ae_detector: no windows");
    if (hidden_dims.empty()) throw std::invalid_argument("train_ae_detector: no hidden dims");
    const int wd = normal_windows.front().length() * normal_windows.front().dim();

    // symmetric encoder-decoder around the last hidden size as bottleneck
    std::vector<int> dims;
    dims.push_back(wd);
    for (int h : hidden_dims) dims.push_back(h);
    for (auto it = hidden_dims.rbegin() + 1; it != hidden_dims.rend(); ++it) dims.push_back(*it);
    dims.push_back(wd);
    std::vector<Activation> acts(dims.size() - 1, hidden_activation);
    acts.back() = Activation::linear;

    DenseAeModel model;
    model.net = DenseNet::make(dims, acts, config.seed);

    std::vector<Eigen::VectorXd> samples;
    samples.reserve(normal_windows.size());
    for (const Window& w : normal_windows) samples.push_back(flatten_window(w));
    train(model.net, samples, samples, mse_loss, config);

    Detector detector;
    detector.window_length = normal_windows.front().length();
    detector.dim = normal_windows.front().dim();
    detector.model = std::move(model);
    detector.provenance = "dense_ae(windows=" + std::to_string(normal_windows.size()) + ")";
    return detector;
}

Detector make_linear_detector(const Eigen::MatrixXd& coeffs, double offset) {
    Detector detector;
    detector.window_length = static_cast<int>(coeffs.rows());
    detector.dim = static_cast<int>(coeffs.cols());
    detector.model = LinearScoreModel{coeffs, offset};
    detector.provenance = "linear";
    return detector;
}

Detector make_external_detector(const std::string& command, int window_length, int dim) {
    Detector detector;
    detector.window_length = window_length;
    detector.dim = dim;
    detector.model = std::make_shared<ExternalScorer>(command);
    detector.provenance = "external(" + command + ")";
    return detector;
}

double choose_threshold(std::vector<double> scores, double quantile) {
    if (scores.empty()) throw std::invalid_argument("choose_threshold: empty score set");
    if (quantile <= 0.0 || quantile >= 1.0) {
        throw std::invalid_argument("choose_threshold: quantile must be in (0,1)");
    }
    std::sort(scores.begin(), scores.end());
    const double h = quantile * static_cast<double>(scores.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    return scores[lo] + (h - static_cast<double>(lo)) * (scores[hi] - scores[lo]);
}

DetectionResult detect(const Detector& detector, std::span<const Window> windows,
                       double threshold) {
    DetectionResult result;
    result.scores = score_batch(detector, windows);
    result.threshold = threshold;
    result.flags.reserve(result.scores.size());
    for (double s : result.scores) result.flags.push_back(s > threshold);
    return result;
}

DetectionQuality detection_metrics(const std::vector<bool>& flags,
                                   const std::vector<bool>& labels) {
    if (flags.size() != labels.size()) {
        throw std::invalid_argument("detection_metrics: size mismatch");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i] && labels[i]) ++tp;
        else if (flags[i]) ++fp;
        else if (labels[i]) ++fn;
    }
    DetectionQuality q;
    q.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    q.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    q.f1 = (q.precision + q.recall > 0) ? 2.0 * q.precision * q.recall / (q.precision + q.recall)
                                        : 0.0;
    return q;
}

DetectionQuality detection_metrics(const std::vector<double>& scores, double threshold,
                                   const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("detection_metrics: size mismatch");
    }
    std::vector<bool> flags;
    flags.reserve(scores.size());
    for (double s : scores) flags.push_back(s > threshold);
    DetectionQuality q = detection_metrics(flags, labels);

    // ROC-AUC via the rank statistic; ties contribute half credit.
    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return q;

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]]) rank_sum_pos += mid_rank;
        }
        i = j + 1;
    }
    q.roc_auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                    static_cast<double>(n_pos + 1)) /
                (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return q;
}

}  // namespace tsrca
