#include "tsrca/embedding.hpp"

#include "tsrca/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsrca {

Embedding fit_pca_embedding(const std::vector<Window>& normal_windows, int k) {
    if (normal_windows.empty()) throw std::invalid_argument("fit_pca_embedding: no windows");
    const Eigen::Index wd = static_cast<Eigen::Index>(normal_windows.front().length()) *
                            normal_windows.front().dim();
    if (k < 1 || k > wd) throw std::invalid_argument("fit_pca_embedding: k out of range");
    if (static_cast<Eigen::Index>(normal_windows.size()) < k) {
        throw std::runtime_error("fit_pca_embedding: insufficient samples (" +
                                 std::to_string(normal_windows.size()) + " < k=" +
                                 std::to_string(k) + ")");
    }

    const Eigen::MatrixXd flat = flatten_windows(normal_windows);
    PcaEmbedding model;
    model.mean = flat.colwise().mean();
    const Eigen::MatrixXd centered = flat.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(flat.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("fit_pca_embedding: eigendecomposition failed");
    }
    model.basis.resize(k, wd);
    for (int i = 0; i < k; ++i) {
        model.basis.row(i) = solver.eigenvectors().col(wd - 1 - i).transpose();
    }

    Embedding embedding;
    embedding.output_dim = k;
    embedding.model = std::move(model);
    return embedding;
}

namespace {

Eigen::VectorXd vae_mu(const VaeEmbedding& vae, const Eigen::VectorXd& flat) {
    return forward(vae.encoder, flat).head(vae.latent_dim);
}

}  // namespace

Eigen::VectorXd embed_flat(const Embedding& embedding, const Eigen::VectorXd& flat) {
    if (const auto* pca = std::get_if<PcaEmbedding>(&embedding.model)) {
        return pca->basis * (flat - pca->mean);
    }
    if (const auto* vae = std::get_if<VaeEmbedding>(&embedding.model)) {
        return vae_mu(*vae, flat);
    }
    throw std::invalid_argument("embed_flat: imported embeddings have no map");
}

Eigen::VectorXd embed(const Embedding& embedding, const Window& window) {
    if (const auto* imported = std::get_if<ImportedEmbedding>(&embedding.model)) {
        const auto it = imported->table.find(window.start);
        if (it == imported->table.end()) {
            throw std::runtime_error("embed: window_id " + std::to_string(window.start) +
                                     " not in imported table");
        }
        return it->second;
    }
    return embed_flat(embedding, flatten_window(window));
}

Eigen::VectorXd embed(const Embedding& embedding, const MaskedContext& context) {
    if (std::holds_alternative<ImportedEmbedding>(embedding.model)) {
        throw std::runtime_error("embed: imported embeddings cannot embed masked contexts");
    }
    return embed_flat(embedding, flatten_matrix(context.representation));
}

namespace {

struct VaeForward {
    ForwardCache enc_cache;
    ForwardCache dec_cache;
    Eigen::VectorXd mu;
    Eigen::VectorXd logvar;
    Eigen::VectorXd z;
    Eigen::VectorXd xhat;
};

VaeLossBreakdown vae_terms(const VaeEmbedding& vae, const Eigen::VectorXd& flat,
                           const Eigen::VectorXd& eps, VaeForward& fwd) {
    const Eigen::VectorXd enc_out = forward(vae.encoder, flat, &fwd.enc_cache);
    fwd.mu = enc_out.head(vae.latent_dim);
    fwd.logvar = enc_out.tail(vae.latent_dim);
    if (!fwd.logvar.allFinite()) throw std::runtime_error("vae: non-finite log-variance");
    fwd.z = fwd.mu + (0.5 * fwd.logvar).array().exp().matrix().cwiseProduct(eps);
    fwd.xhat = forward(vae.decoder, fwd.z, &fwd.dec_cache);

    VaeLossBreakdown out;
    out.rec = (flat - fwd.xhat).squaredNorm();
    out.kl = -0.5 * (1.0 + fwd.logvar.array() - fwd.mu.array().square() -
                     fwd.logvar.array().exp())
                        .sum();
    const int w = vae.window_length;
    const int d = vae.dim;
    for (int t = 0; t < w; ++t) {
        const double e = flat.segment(static_cast<Eigen::Index>(t) * d, d).mean() -
                         fwd.xhat.segment(static_cast<Eigen::Index>(t) * d, d).mean();
        out.time += e * e;
    }
    out.total = vae.lambda_rec * out.rec + vae.lambda_kl * out.kl + vae.lambda_time * out.time;
    if (!std::isfinite(out.total)) throw std::runtime_error("vae: non-finite loss");
    return out;
}

}  // namespace

VaeLossBreakdown vae_loss(const Embedding& embedding, const Window& window) {
    const auto* vae = std::get_if<VaeEmbedding>(&embedding.model);
    if (!vae) throw std::invalid_argument("vae_loss: not a VAE embedding");
    VaeForward fwd;
    const Eigen::VectorXd eps = Eigen::VectorXd::Zero(vae->latent_dim);
    return vae_terms(*vae, flatten_window(window), eps, fwd);
}

VaeLossBreakdown vae_loss_backward(const VaeEmbedding& vae, const Eigen::VectorXd& flat,
                                   const Eigen::VectorXd& eps, NetGradients* encoder_grads,
                                   NetGradients* decoder_grads) {
    VaeForward fwd;
    const VaeLossBreakdown breakdown = vae_terms(vae, flat, eps, fwd);
    if (!encoder_grads && !decoder_grads) return breakdown;

    const int w = vae.window_length;
    const int d = vae.dim;

    // d(total)/d(xhat): reconstruction plus the per-timestep mean discrepancy
    Eigen::VectorXd dxhat = vae.lambda_rec * 2.0 * (fwd.xhat - flat);
    for (int t = 0; t < w; ++t) {
        const double e = flat.segment(static_cast<Eigen::Index>(t) * d, d).mean() -
                         fwd.xhat.segment(static_cast<Eigen::Index>(t) * d, d).mean();
        dxhat.segment(static_cast<Eigen::Index>(t) * d, d).array() +=
            vae.lambda_time * (-2.0 * e / static_cast<double>(d));
    }

    NetGradients dec_local = NetGradients::zeros_like(vae.decoder);
    const Eigen::VectorXd dz = backward(vae.decoder, fwd.dec_cache, dxhat, dec_local);
    if (decoder_grads) decoder_grads->accumulate(dec_local);

    if (encoder_grads) {
        // z = mu + exp(logvar/2) * eps
        const Eigen::VectorXd dmu =
            dz + vae.lambda_kl * fwd.mu;
        const Eigen::VectorXd dlogvar =
            dz.cwiseProduct(eps).cwiseProduct((0.5 * fwd.logvar).array().exp().matrix()) * 0.5 +
            vae.lambda_kl * 0.5 * (fwd.logvar.array().exp() - 1.0).matrix();
        Eigen::VectorXd denc(2 * vae.latent_dim);
        denc.head(vae.latent_dim) = dmu;
        denc.tail(vae.latent_dim) = dlogvar;
        backward(vae.encoder, fwd.enc_cache, denc, *encoder_grads);
    }
    return breakdown;
}

FiniteDiffReport vae_finite_diff_check(const VaeEmbedding& vae, const Eigen::VectorXd& flat,
                                       const Eigen::VectorXd& eps, double h, double tolerance) {
    if (h <= 0) throw std::invalid_argument("vae_finite_diff_check: h must be > 0");
    NetGradients enc_grads = NetGradients::zeros_like(vae.encoder);
    NetGradients dec_grads = NetGradients::zeros_like(vae.decoder);
    vae_loss_backward(vae, flat, eps, &enc_grads, &dec_grads);

    VaeEmbedding probe = vae;
    auto eval = [&]() { return vae_loss_backward(probe, flat, eps, nullptr, nullptr).total; };

    FiniteDiffReport report;
    auto check_param = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = eval();
        param = saved - h;
        const double down = eval();
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
        report.max_rel_error = std::max(report.max_rel_error,
                                        std::abs(analytic - numeric) / denom);
        ++report.checked;
    };
    auto sweep = [&](DenseNet& net, const NetGradients& grads) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            for (Eigen::Index r = 0; r < net.layers[l].weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < net.layers[l].weight.cols(); ++c) {
                    check_param(net.layers[l].weight(r, c), grads.dweight[l](r, c));
                }
            }
            for (Eigen::Index r = 0; r < net.layers[l].bias.size(); ++r) {
                check_param(net.layers[l].bias(r), grads.dbias[l](r));
            }
        }
    };
    sweep(probe.encoder, enc_grads);
    sweep(probe.decoder, dec_grads);
    report.pass = report.max_rel_error < tolerance;
    return report;
}

VaeTrainResult train_vae(const std::vector<Window>& normal_windows,
                         const std::vector<int>& hidden_dims, int latent_dim, double lambda_rec,
                         double lambda_kl, double lambda_time, const TrainConfig& config) {
    if (normal_windows.empty()) throw std::invalid_argument("train_vae: no windows");
    if (latent_dim < 1) throw std::invalid_argument("train_vae: latent_dim must be >= 1");

    const int w = normal_windows.front().length();
    const int d = normal_windows.front().dim();
    const int wd = w * d;

    VaeEmbedding vae;
    vae.latent_dim = latent_dim;
    vae.window_length = w;
    vae.dim = d;
    vae.lambda_rec = lambda_rec;
    vae.lambda_kl = lambda_kl;
    vae.lambda_time = lambda_time;

    std::vector<int> enc_dims;
    enc_dims.push_back(wd);
    for (int h : hidden_dims) enc_dims.push_back(h);
    enc_dims.push_back(2 * latent_dim);
    std::vector<Activation> enc_acts(enc_dims.size() - 1, Activation::tanh);
    enc_acts.back() = Activation::linear;
    vae.encoder = DenseNet::make(enc_dims, enc_acts, config.seed);

    std::vector<int> dec_dims;
    dec_dims.push_back(latent_dim);
    for (auto it = hidden_dims.rbegin(); it != hidden_dims.rend(); ++it) dec_dims.push_back(*it);
    dec_dims.push_back(wd);
    std::vector<Activation> dec_acts(dec_dims.size() - 1, Activation::tanh);
    dec_acts.back() = Activation::linear;
    vae.decoder = DenseNet::make(dec_dims, dec_acts, config.seed ^ 0x517cc1b727220a95ULL);

    std::vector<Eigen::VectorXd> samples;
    samples.reserve(normal_windows.size());
    for (const Window& win : normal_windows) samples.push_back(flatten_window(win));

    std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    AdamState enc_adam(vae.encoder);
    AdamState dec_adam(vae.decoder);
    VaeTrainResult result;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t i = 0;
        while (i < order.size()) {
            const std::size_t batch_begin = i;
            const std::size_t batch_end =
                std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
            NetGradients enc_grads = NetGradients::zeros_like(vae.encoder);
            NetGradients dec_grads = NetGradients::zeros_like(vae.decoder);
            for (; i < batch_end; ++i) {
                Eigen::VectorXd eps(latent_dim);
                for (int l = 0; l < latent_dim; ++l) eps[l] = gauss(rng);
                const VaeLossBreakdown loss =
                    vae_loss_backward(vae, samples[order[i]], eps, &enc_grads, &dec_grads);
                epoch_loss += loss.total;
            }
            const double inv = 1.0 / static_cast<double>(batch_end - batch_begin);
            enc_grads.scale(inv);
            dec_grads.scale(inv);
            if (config.optimizer == Optimizer::adam) {
                enc_adam.step(vae.encoder, enc_grads, config.learning_rate, config.adam);
                dec_adam.step(vae.decoder, dec_grads, config.learning_rate, config.adam);
            } else {
                sgd_step(vae.encoder, enc_grads, config.learning_rate);
                sgd_step(vae.decoder, dec_grads, config.learning_rate);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
    }

    result.embedding.output_dim = latent_dim;
    result.embedding.model = std::move(vae);
    return result;
}

Embedding import_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("import_embeddings: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("import_embeddings: empty file");

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) header.push_back(field);
    }
    if (header.size() < 2 || header[0] != "window_id") {
        throw std::runtime_error("import_embeddings: expected header window_id,e0,...");
    }
    const int k = static_cast<int>(header.size()) - 1;

    ImportedEmbedding model;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (static_cast<int>(fields.size()) != k + 1) {
            throw std::runtime_error("import_embeddings: ragged row at line " +
                                     std::to_string(line_no));
        }
        const std::int64_t id = std::stoll(fields[0]);
        Eigen::VectorXd vec(k);
        for (int i = 0; i < k; ++i) vec[i] = std::stod(fields[i + 1]);
        if (!model.table.emplace(id, std::move(vec)).second) {
            throw std::runtime_error("import_embeddings: duplicate window_id " +
                                     std::to_string(id));
        }
    }
    if (model.table.empty()) throw std::runtime_error("import_embeddings: no rows");

    Embedding embedding;
    embedding.output_dim = k;
    embedding.model = std::move(model);
    return embedding;
}

void export_embeddings(const Embedding& embedding, std::span<const Window> windows,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_embeddings: cannot write '" + path + "'");
    out << "window_id";
    for (int i = 0; i < embedding.output_dim; ++i) out << ",e" << i;
    out << "\n";
    for (const Window& window : windows) {
        const Eigen::VectorXd vec = embed(embedding, window);
        out << window.start;
        for (Eigen::Index i = 0; i < vec.size(); ++i) out << "," << format_double(vec[i]);
        out << "\n";
    }
}

}  // namespace tsrca
