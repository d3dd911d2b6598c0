#pragma once

#include "tsrca/nn.hpp"
#include "tsrca/series.hpp"

#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace tsrca {

struct PcaEmbedding {
    Eigen::MatrixXd basis;  // k x (w*d), orthonormal rows, descending variance
    Eigen::VectorXd mean;   // w*d
};

struct VaeEmbedding {
    DenseNet encoder;  // (w*d) -> 2L, first L = mu, last L = log sigma^2
    DenseNet decoder;  // L -> (w*d)
    int latent_dim = 0;
    int window_length = 0;
    int dim = 0;
    double lambda_rec = 3.0;
    double lambda_kl = 1.0;
    double lambda_time = 1.0;
};

/// Precomputed lookup table keyed by window start index. Cannot embed
/// masked contexts; retrieval built on it runs in shared-neighborhood mode.
struct ImportedEmbedding {
    std::unordered_map<std::int64_t, Eigen::VectorXd> table;
};

struct Embedding {
    std::variant<PcaEmbedding, VaeEmbedding, ImportedEmbedding> model;
    int output_dim = 0;

    bool supports_masking() const {
        return !std::holds_alternative<ImportedEmbedding>(model);
    }
};

Embedding fit_pca_embedding(const std::vector<Window>& normal_windows, int k);

Eigen::VectorXd embed(const Embedding& embedding, const Window& window);
Eigen::VectorXd embed(const Embedding& embedding, const MaskedContext& context);
/// Pca/Vae only: embed an already-flattened representation.
Eigen::VectorXd embed_flat(const Embedding& embedding, const Eigen::VectorXd& flat);

struct VaeLossBreakdown {
    double total = 0.0;
    double rec = 0.0;
    double kl = 0.0;
    double time = 0.0;
};

/// Deterministic evaluation at z = mu (no sampling).
VaeLossBreakdown vae_loss(const Embedding& embedding, const Window& window);

/// Loss and exact parameter gradients for one flattened window at
/// z = mu + exp(logvar/2) * eps. Gradients accumulate.
VaeLossBreakdown vae_loss_backward(const VaeEmbedding& vae, const Eigen::VectorXd& flat,
                                   const Eigen::VectorXd& eps, NetGradients* encoder_grads,
                                   NetGradients* decoder_grads);

/// Central-difference check of vae_loss_backward over every encoder and
/// decoder parameter, at fixed reparameterization noise.
FiniteDiffReport vae_finite_diff_check(const VaeEmbedding& vae, const Eigen::VectorXd& flat,
                                       const Eigen::VectorXd& eps, double h = 1e-5,
                                       double tolerance = 1e-4);

struct VaeTrainResult {
    Embedding embedding;
    std::vector<double> epoch_loss;
};

VaeTrainResult train_vae(const std::vector<Window>& normal_windows,
                         const std::vector<int>& hidden_dims, int latent_dim, double lambda_rec,
                         double lambda_kl, double lambda_time, const TrainConfig& config);

/// Embedding table CSV: header `window_id,e0,...,e{k-1}`; window_id is the
/// window's start index in the source series.
Embedding import_embeddings(const std::string& path);
void export_embeddings(const Embedding& embedding, std::span<const Window> windows,
                       const std::string& path);

}  // namespace tsrca
