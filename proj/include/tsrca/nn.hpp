#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tsrca {

enum class Activation { linear, tanh, relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::linear;
};

struct DenseNet {
    std::vector<DenseLayer> layers;

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
    std::size_t parameter_count() const;

    /// Glorot-uniform initialization in +-sqrt(6/(fan_in+fan_out)), seeded.
    /// dims = {input, hidden..., output}; one activation per layer.
    static DenseNet make(const std::vector<int>& dims,
                         const std::vector<Activation>& activations, std::uint64_t seed);
};

struct ForwardCache {
    Eigen::VectorXd input;
    std::vector<Eigen::VectorXd> pre;   // pre-activation per layer
    std::vector<Eigen::VectorXd> post;  // activation output per layer
};

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input,
                        ForwardCache* cache = nullptr);

struct NetGradients {
    std::vector<Eigen::MatrixXd> dweight;
    std::vector<Eigen::VectorXd> dbias;

    static NetGradients zeros_like(const DenseNet& net);
    void accumulate(const NetGradients& other);
    void scale(double s);
};

/// Exact reverse-mode gradients of the scalar loss whose d(loss)/d(output)
/// is `output_gradient`. Accumulates into `grads` and returns d(loss)/d(input).
Eigen::VectorXd backward(const DenseNet& net, const ForwardCache& cache,
                         const Eigen::VectorXd& output_gradient, NetGradients& grads);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::adam;
    AdamParams adam;
};

/// Optimizer state shared by the detector and embedding trainers.
class AdamState {
public:
    explicit AdamState(const DenseNet& net);
    void step(DenseNet& net, const NetGradients& grads, double learning_rate,
              const AdamParams& params);

private:
    NetGradients m_;
    NetGradients v_;
    std::int64_t t_ = 0;
};

void sgd_step(DenseNet& net, const NetGradients& grads, double learning_rate);

/// Per-sample loss: fill grad_out with d(loss)/d(output) and return the loss.
using LossFn = std::function<double(const Eigen::VectorXd& output, const Eigen::VectorXd& target,
                                    Eigen::VectorXd& grad_out)>;

double mse_loss(const Eigen::VectorXd& output, const Eigen::VectorXd& target,
                Eigen::VectorXd& grad_out);

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
};

/// Mini-batch training, deterministic given config.seed. Throws on
/// non-finite loss.
TrainResult train(DenseNet& net, const std::vector<Eigen::VectorXd>& inputs,
                  const std::vector<Eigen::VectorXd>& targets, const LossFn& loss,
                  const TrainConfig& config);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

/// Central-difference check of backward() against the supplied loss for one
/// sample. Relative error uses max(|analytic|, |numeric|, 1e-2) as the
/// denominator so finite-difference roundoff on near-zero gradients does not
/// raise false alarms.
FiniteDiffReport finite_diff_check(const DenseNet& net, const LossFn& loss,
                                   const Eigen::VectorXd& input, const Eigen::VectorXd& target,
                                   double h = 1e-5, double tolerance = 1e-4);

}  // namespace tsrca
