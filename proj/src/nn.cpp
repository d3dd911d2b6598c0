#include "tsrca/nn.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tsrca {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    throw std::invalid_argument("unknown activation");
}

Activation parse_activation(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& layer : layers) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

DenseNet DenseNet::make(const std::vector<int>& dims, const std::vector<Activation>& activations,
                        std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("DenseNet::make: need at least two dims");
    if (activations.size() != dims.size() - 1) {
        throw std::invalid_argument("DenseNet::make: one activation per layer required");
    }
    std::mt19937_64 rng(seed);
    DenseNet net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("DenseNet::make: bad dims");
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> uniform(-limit, limit);
        DenseLayer layer;
        layer.weight.resize(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform(rng);
        }
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = activations[l];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

Eigen::VectorXd apply_activation(Activation a, const Eigen::VectorXd& z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::tanh: return z.array().tanh();
        case Activation::relu: return z.cwiseMax(0.0);
    }
    throw std::invalid_argument("unknown activation");
}

// Derivative in terms of pre-activation z (relu') and output y (tanh').
Eigen::VectorXd activation_grad(Activation a, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& y) {
    switch (a) {
        case Activation::linear: return Eigen::VectorXd::Ones(z.size());
        case Activation::tanh: return 1.0 - y.array().square();
        case Activation::relu: return (z.array() > 0.0).cast<double>();
    }
    throw std::invalid_argument("unknown activation");
}

}  // namespace

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input, ForwardCache* cache) {
    if (net.layers.empty()) throw std::invalid_argument("forward: empty net");
    if (input.size() != net.input_dim()) {
        throw std::invalid_argument("forward: input size " + std::to_string(input.size()) +
                                    " != " + std::to_string(net.input_dim()));
    }
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }
    Eigen::VectorXd x = input;
    for (const DenseLayer& layer : net.layers) {
        Eigen::VectorXd z = layer.weight * x + layer.bias;
        x = apply_activation(layer.activation, z);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(x);
        }
    }
    return x;
}

NetGradients NetGradients::zeros_like(const DenseNet& net) {
    NetGradients g;
    for (const DenseLayer& layer : net.layers) {
        g.dweight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
        g.dbias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return g;
}

void NetGradients::accumulate(const NetGradients& other) {
    for (std::size_t l = 0; l < dweight.size(); ++l) {
        dweight[l] += other.dweight[l];
        dbias[l] += other.dbias[l];
    }
}

void NetGradients::scale(double s) {
    for (std::size_t l = 0; l < dweight.size(); ++l) {
        dweight[l] *= s;
        dbias[l] *= s;
    }
}

Eigen::VectorXd backward(const DenseNet& net, const ForwardCache& cache,
                         const Eigen::VectorXd& output_gradient, NetGradients& grads) {
    const std::size_t L = net.layers.size();
    if (cache.pre.size() != L || cache.post.size() != L) {
        throw std::invalid_argument("backward: cache does not match net");
    }
    if (output_gradient.size() != net.output_dim()) {
        throw std::invalid_argument("backward: output gradient size mismatch");
    }
    Eigen::VectorXd delta = output_gradient;
    for (std::size_t l = L; l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        delta = delta.cwiseProduct(activation_grad(layer.activation, cache.pre[l], cache.post[l]));
        const Eigen::VectorXd& below = (l == 0) ? cache.input : cache.post[l - 1];
        grads.dweight[l] += delta * below.transpose();
        grads.dbias[l] += delta;
        delta = layer.weight.transpose() * delta;
    }
    return delta;
}

AdamState::AdamState(const DenseNet& net)
    : m_(NetGradients::zeros_like(net)), v_(NetGradients::zeros_like(net)) {}

void AdamState::step(DenseNet& net, const NetGradients& grads, double learning_rate,
                     const AdamParams& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        m_.dweight[l] = params.beta1 * m_.dweight[l] + (1.0 - params.beta1) * grads.dweight[l];
        v_.dweight[l] = params.beta2 * v_.dweight[l] +
                        (1.0 - params.beta2) * grads.dweight[l].array().square().matrix();
        net.layers[l].weight.array() -=
            learning_rate * (m_.dweight[l].array() / bc1) /
            ((v_.dweight[l].array() / bc2).sqrt() + params.epsilon);

        m_.dbias[l] = params.beta1 * m_.dbias[l] + (1.0 - params.beta1) * grads.dbias[l];
        v_.dbias[l] = params.beta2 * v_.dbias[l] +
                      (1.0 - params.beta2) * grads.dbias[l].array().square().matrix();
        net.layers[l].bias.array() -= learning_rate * (m_.dbias[l].array() / bc1) /
                                      ((v_.dbias[l].array() / bc2).sqrt() + params.epsilon);
    }
}

void sgd_step(DenseNet& net, const NetGradients& grads, double learning_rate) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].weight -= learning_rate * grads.dweight[l];
        net.layers[l].bias -= learning_rate * grads.dbias[l];
    }
}

double mse_loss(const Eigen::VectorXd& output, const Eigen::VectorXd& target,
                Eigen::VectorXd& grad_out) {
    const Eigen::VectorXd diff = output - target;
    grad_out = 2.0 * diff;
    return diff.squaredNorm();
}

TrainResult train(DenseNet& net, const std::vector<Eigen::VectorXd>& inputs,
                  const std::vector<Eigen::VectorXd>& targets, const LossFn& loss,
                  const TrainConfig& config) {
    if (inputs.empty()) throw std::invalid_argument("train: empty dataset");
    if (inputs.size() != targets.size()) throw std::invalid_argument("train: size mismatch");
    if (config.learning_rate < 0) throw std::invalid_argument("train: negative learning rate");
    if (config.epochs < 1 || config.batch_size < 1) {
        throw std::invalid_argument("train: epochs and batch_size must be positive");
    }

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    AdamState adam(net);
    TrainResult result;
    ForwardCache cache;
    Eigen::VectorXd grad_out;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t i = 0;
        while (i < order.size()) {
            const std::size_t batch_begin = i;
            const std::size_t batch_end =
                std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
            NetGradients grads = NetGradients::zeros_like(net);
            for (; i < batch_end; ++i) {
                const Eigen::VectorXd out = forward(net, inputs[order[i]], &cache);
                const double sample_loss = loss(out, targets[order[i]], grad_out);
                if (!std::isfinite(sample_loss)) {
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", sample " +
                                             std::to_string(order[i]));
                }
                epoch_loss += sample_loss;
                backward(net, cache, grad_out, grads);
            }
            grads.scale(1.0 / static_cast<double>(batch_end - batch_begin));
            if (config.optimizer == Optimizer::adam) {
                adam.step(net, grads, config.learning_rate, config.adam);
            } else {
                sgd_step(net, grads, config.learning_rate);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(inputs.size()));
    }
    return result;
}

FiniteDiffReport finite_diff_check(const DenseNet& net, const LossFn& loss,
                                   const Eigen::VectorXd& input, const Eigen::VectorXd& target,
                                   double h, double tolerance) {
    if (h <= 0) throw std::invalid_argument("finite_diff_check: h must be > 0");

    ForwardCache cache;
    Eigen::VectorXd grad_out;
    const Eigen::VectorXd out = forward(net, input, &cache);
    loss(out, target, grad_out);
    NetGradients analytic = NetGradients::zeros_like(net);
    backward(net, cache, grad_out, analytic);

    DenseNet probe = net;
    Eigen::VectorXd unused;
    auto eval = [&]() {
        const Eigen::VectorXd o = forward(probe, input, nullptr);
        return loss(o, target, unused);
    };

    FiniteDiffReport report;
    auto check_param = [&](double& param, double analytic_grad) {
        const double saved = param;
        param = saved + h;
        const double up = eval();
        param = saved - h;
        const double down = eval();
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic_grad), std::abs(numeric), 1e-2});
        report.max_rel_error =
            std::max(report.max_rel_error, std::abs(analytic_grad - numeric) / denom);
        ++report.checked;
    };

    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        for (Eigen::Index r = 0; r < probe.layers[l].weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < probe.layers[l].weight.cols(); ++c) {
                check_param(probe.layers[l].weight(r, c), analytic.dweight[l](r, c));
            }
        }
        for (Eigen::Index r = 0; r < probe.layers[l].bias.size(); ++r) {
            check_param(probe.layers[l].bias(r), analytic.dbias[l](r));
        }
    }
    report.pass = report.max_rel_error < tolerance;
    return report;
}

}  // namespace tsrca
