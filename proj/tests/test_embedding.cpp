#include "tsrca/embedding.hpp"

#include "tsrca/io.hpp"
#include "tsrca/synth.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace tsrca;

namespace {

std::vector<Window> random_windows(int n, int w, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Window> windows;
    for (int i = 0; i < n; ++i) {
        Window window;
        window.start = i;
        window.data.resize(w, d);
        for (int t = 0; t < w; ++t) {
            for (int j = 0; j < d; ++j) window.data(t, j) = gauss(rng);
        }
        windows.push_back(std::move(window));
    }
    return windows;
}

// encoder with zero weights emits exactly its bias: pins (mu, logvar)
VaeEmbedding rigged_vae(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar, int w, int d) {
    const int L = static_cast<int>(mu.size());
    VaeEmbedding vae;
    vae.latent_dim = L;
    vae.window_length = w;
    vae.dim = d;
    DenseLayer enc;
    enc.weight = Eigen::MatrixXd::Zero(2 * L, w * d);
    enc.bias.resize(2 * L);
    enc.bias.head(L) = mu;
    enc.bias.tail(L) = logvar;
    enc.activation = Activation::linear;
    vae.encoder.layers.push_back(std::move(enc));
    DenseLayer dec;
    dec.weight = Eigen::MatrixXd::Zero(w * d, L);
    dec.bias = Eigen::VectorXd::Zero(w * d);
    dec.activation = Activation::linear;
    vae.decoder.layers.push_back(std::move(dec));
    return vae;
}

}  // namespace

TEST_CASE("pca embedding: full-dimension embedding is an isometry") {
    const auto windows = random_windows(40, 2, 3, 1);
    const Embedding embedding = fit_pca_embedding(windows, 6);
    for (int a = 0; a < 5; ++a) {
        for (int b = a + 1; b < 5; ++b) {
            const double input_dist =
                (flatten_window(windows[a]) - flatten_window(windows[b])).norm();
            const double embed_dist =
                (embed(embedding, windows[a]) - embed(embedding, windows[b])).norm();
            CHECK(embed_dist == doctest::Approx(input_dist).epsilon(1e-10));
        }
    }
}

TEST_CASE("pca embedding: rank-2 data reconstructs with k=2") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd u(6), v(6);
    for (int i = 0; i < 6; ++i) {
        u[i] = gauss(rng);
        v[i] = gauss(rng);
    }
    std::vector<Window> windows;
    for (int i = 0; i < 30; ++i) {
        Eigen::VectorXd flat = gauss(rng) * u + gauss(rng) * v;
        Window w;
        w.start = i;
        w.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(flat.data(), 2, 3);
        windows.push_back(std::move(w));
    }
    const Embedding embedding = fit_pca_embedding(windows, 2);
    const auto& model = std::get<PcaEmbedding>(embedding.model);
    for (const Window& w : windows) {
        const Eigen::VectorXd flat = flatten_window(w);
        const Eigen::VectorXd coords = embed(embedding, w);
        const Eigen::VectorXd recon = model.basis.transpose() * coords + model.mean;
        CHECK((flat - recon).squaredNorm() < 1e-10);
    }
}

TEST_CASE("pca embedding: captured variance per component is non-increasing") {
    const auto windows = random_windows(80, 3, 3, 3);
    const Embedding embedding = fit_pca_embedding(windows, 6);
    Eigen::MatrixXd coords(80, 6);
    for (int i = 0; i < 80; ++i) coords.row(i) = embed(embedding, windows[i]).transpose();
    const Eigen::RowVectorXd mean = coords.colwise().mean();
    Eigen::VectorXd variance(6);
    for (int c = 0; c < 6; ++c) {
        variance[c] = (coords.col(c).array() - mean[c]).square().mean();
    }
    for (int c = 1; c < 6; ++c) CHECK(variance[c] <= variance[c - 1] + 1e-12);
}

TEST_CASE("pca embedding: training mean maps to zero") {
    const auto windows = random_windows(50, 2, 2, 4);
    const Embedding embedding = fit_pca_embedding(windows, 3);
    Eigen::VectorXd mean_flat = Eigen::VectorXd::Zero(4);
    for (const Window& w : windows) mean_flat += flatten_window(w);
    mean_flat /= 50.0;
    CHECK(embed_flat(embedding, mean_flat).norm() < 1e-9);
}

TEST_CASE("embed: identity-basis embedding returns the flattened prefix") {
    Embedding embedding;
    PcaEmbedding model;
    model.basis = Eigen::MatrixXd::Identity(3, 6);
    model.mean = Eigen::VectorXd::Zero(6);
    embedding.model = std::move(model);
    embedding.output_dim = 3;
    const auto windows = random_windows(1, 2, 3, 5);
    const Eigen::VectorXd e = embed(embedding, windows[0]);
    CHECK(e == flatten_window(windows[0]).head(3));
}

TEST_CASE("embed: masked context equals window with zeroed column") {
    const auto windows = random_windows(20, 3, 4, 6);
    const Embedding embedding = fit_pca_embedding(windows, 4);
    Window zeroed = windows[7];
    zeroed.data.col(2).setZero();
    const MaskedContext ctx = mask_sensor(windows[7], 2);
    CHECK(embed(embedding, zeroed) == embed(embedding, ctx));
}

TEST_CASE("vae: posterior mean equals the encoder mu head") {
    const auto windows = random_windows(1, 2, 2, 7);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    VaeEmbedding vae;
    vae.latent_dim = 3;
    vae.window_length = 2;
    vae.dim = 2;
    vae.encoder = DenseNet::make({4, 5, 6}, {Activation::tanh, Activation::linear}, 8);
    vae.decoder = DenseNet::make({3, 5, 4}, {Activation::tanh, Activation::linear}, 9);
    Embedding embedding;
    embedding.output_dim = 3;
    embedding.model = vae;

    // oracle: direct forward pass through the encoder
    const Eigen::VectorXd enc_out = forward(vae.encoder, flatten_window(windows[0]));
    CHECK(embed(embedding, windows[0]) == enc_out.head(3));
}

TEST_CASE("vae_loss: standard-normal posterior has zero kl") {
    const VaeEmbedding vae = rigged_vae(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 2, 2);
    Embedding embedding;
    embedding.output_dim = 2;
    embedding.model = vae;
    Window w;
    w.start = 0;
    w.data = Eigen::MatrixXd::Zero(2, 2);
    const VaeLossBreakdown loss = vae_loss(embedding, w);
    CHECK(loss.kl == 0.0);
    // decoder emits zeros and the window is zero: perfect reconstruction
    CHECK(loss.rec == 0.0);
    CHECK(loss.time == 0.0);
    CHECK(loss.total == 0.0);
}

TEST_CASE("vae_loss: breakdown total equals weighted sum and kl is nonnegative") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::Vector2d mu(gauss(rng), gauss(rng));
        Eigen::Vector2d logvar(2.0 * gauss(rng), 2.0 * gauss(rng));
        VaeEmbedding vae = rigged_vae(mu, logvar, 1, 2);
        vae.lambda_rec = 3.0;
        vae.lambda_kl = 1.0;
        vae.lambda_time = 1.0;
        Embedding embedding;
        embedding.output_dim = 2;
        embedding.model = vae;
        Window w;
        w.start = 0;
        w.data.resize(1, 2);
        w.data << gauss(rng), gauss(rng);
        const VaeLossBreakdown loss = vae_loss(embedding, w);
        CHECK(loss.kl >= 0.0);
        CHECK(loss.total ==
              doctest::Approx(3.0 * loss.rec + loss.kl + loss.time).epsilon(1e-9));
    }
}

TEST_CASE("vae gradients match finite differences for all three loss terms") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        VaeEmbedding vae;
        vae.latent_dim = 2;
        vae.window_length = 3;
        vae.dim = 2;
        vae.lambda_rec = 3.0;
        vae.lambda_kl = 1.0;
        vae.lambda_time = 1.0;
        vae.encoder = DenseNet::make({6, 5, 4}, {Activation::tanh, Activation::linear},
                                     20 + trial);
        vae.decoder = DenseNet::make({2, 5, 6}, {Activation::tanh, Activation::linear},
                                     30 + trial);
        Eigen::VectorXd flat(6), eps(2);
        for (int i = 0; i < 6; ++i) flat[i] = gauss(rng);
        for (int i = 0; i < 2; ++i) eps[i] = gauss(rng);
        const FiniteDiffReport report = vae_finite_diff_check(vae, flat, eps);
        CHECK(report.pass);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("train_vae: deterministic, loss improves, strong kl collapses the posterior") {
    const LatentFactorSystem system = make_latent_factor_system(3, 1, 40, 0.9, 0.1);
    const SeriesMatrix series = generate(system, 400);
    const NormalizationStats stats = fit_normalization(series, {0, 400});
    const SeriesMatrix normalized = apply_normalization(series, stats);
    std::vector<Window> windows;
    for (std::int64_t s = 0; s + 6 <= 400; s += 6) windows.push_back(window_at(normalized, s, 6));

    TrainConfig config;
    config.epochs = 40;
    config.learning_rate = 2e-3;
    config.batch_size = 16;
    config.seed = 13;

    SUBCASE("deterministic given seed") {
        const VaeTrainResult a = train_vae(windows, {12}, 2, 3.0, 1.0, 1.0, config);
        const VaeTrainResult b = train_vae(windows, {12}, 2, 3.0, 1.0, 1.0, config);
        CHECK(a.epoch_loss == b.epoch_loss);
        const auto& net_a = std::get<VaeEmbedding>(a.embedding.model).encoder;
        const auto& net_b = std::get<VaeEmbedding>(b.embedding.model).encoder;
        for (std::size_t l = 0; l < net_a.layers.size(); ++l) {
            CHECK(net_a.layers[l].weight == net_b.layers[l].weight);
        }
    }
    SUBCASE("epoch-mean loss improves") {
        const VaeTrainResult result = train_vae(windows, {12}, 2, 3.0, 1.0, 1.0, config);
        CHECK(result.epoch_loss.back() < result.epoch_loss.front());
    }
    SUBCASE("dominant kl weight collapses mu toward zero") {
        const VaeTrainResult result = train_vae(windows, {12}, 2, 1.0, 200.0, 1.0, config);
        double mean_abs_mu = 0.0;
        for (const Window& w : windows) {
            mean_abs_mu += embed(result.embedding, w).cwiseAbs().mean();
        }
        mean_abs_mu /= static_cast<double>(windows.size());
        CHECK(mean_abs_mu < 0.1);
    }
}

TEST_CASE("import_embeddings: lookup table semantics") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsrca_embed_table.csv").string();
    {
        std::ofstream out(path);
        out << "window_id,e0,e1\n0,1.5,2.5\n10,-1.25,0.5\n20,0.1,0.2\n";
    }
    const Embedding embedding = import_embeddings(path);
    CHECK(embedding.output_dim == 2);
    Window w;
    w.start = 10;
    w.data = Eigen::MatrixXd::Zero(1, 1);
    CHECK(embed(embedding, w) == Eigen::Vector2d(-1.25, 0.5));
    w.start = 11;
    CHECK_THROWS_WITH_AS(embed(embedding, w), doctest::Contains("11"), std::runtime_error);
    CHECK_FALSE(embedding.supports_masking());
    std::remove(path.c_str());
}

TEST_CASE("import_embeddings: rejects duplicates and ragged rows") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsrca_embed_bad.csv").string();
    SUBCASE("duplicate id") {
        std::ofstream(path) << "window_id,e0\n3,1.0\n3,2.0\n";
        CHECK_THROWS_WITH_AS(import_embeddings(path), doctest::Contains("duplicate"),
                             std::runtime_error);
    }
    SUBCASE("ragged row") {
        std::ofstream(path) << "window_id,e0,e1\n3,1.0\n";
        CHECK_THROWS_WITH_AS(import_embeddings(path), doctest::Contains("ragged"),
                             std::runtime_error);
    }
    std::remove(path.c_str());
}

TEST_CASE("export/import round-trip preserves embedding vectors exactly") {
    const auto windows = random_windows(25, 2, 3, 14);
    const Embedding pca = fit_pca_embedding(windows, 4);
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsrca_embed_rt.csv").string();
    export_embeddings(pca, windows, path);
    const Embedding imported = import_embeddings(path);
    REQUIRE(imported.output_dim == 4);
    for (const Window& w : windows) {
        // shortest round-trip decimals: reload is bit-exact
        CHECK(embed(imported, w) == embed(pca, w));
    }
    std::remove(path.c_str());
}
