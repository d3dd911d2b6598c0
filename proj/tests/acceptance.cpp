// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion carries its runtime budget.

#include "tsrca/attribution.hpp"
#include "tsrca/metrics.hpp"
#include "tsrca/pipeline.hpp"
#include "tsrca/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace tsrca;

namespace {

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------------------
// 1. CW-RCS is bounded by Recall@K, exact comparison
// ---------------------------------------------------------------------------
bool metric_bound(std::string& detail) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 16);
        Eigen::VectorXd phi(d);
        for (int j = 0; j < d; ++j) {
            phi[j] = uniform(rng) < 0.1 ? 0.0 : uniform(rng) * 2.0 - 1.0;
        }
        std::vector<int> truth;
        for (int j = 0; j < d; ++j) {
            if (uniform(rng) < 0.3) truth.push_back(j);
        }
        if (truth.empty()) truth.push_back(static_cast<int>(rng() % d));
        const int K = 1 + static_cast<int>(rng() % d);
        const RankedAttribution ranked = rank_attributions(phi);
        if (cw_rcs_at_k(ranked, truth, K) > recall_at_k(ranked, truth, K)) ++violations;
    }
    detail = "violations " + std::to_string(violations) + "/1000";
    return violations == 0;
}

// ---------------------------------------------------------------------------
// 2. bias-bound verifier on random linear detectors
// ---------------------------------------------------------------------------
bool bias_bound_trials(std::string& detail) {
    LabeledDataset dataset;
    dataset.series = generate(make_latent_factor_system(10, 2, 31, 0.95, 0.1), 4000);
    dataset.train_range = {0, 3000};
    const NeighborIndex index = NeighborIndex::build(dataset, 20, 2, RetrievalSpace::input);

    std::mt19937_64 rng(32);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int holds = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd coeffs(20, 10);
        for (int t = 0; t < 20; ++t) {
            for (int j = 0; j < 10; ++j) coeffs(t, j) = gauss(rng);
        }
        const Detector detector = make_linear_detector(coeffs);
        const std::int64_t start = 3000 + static_cast<std::int64_t>(rng() % 950);
        const Window window = window_at(dataset.series, start, 20);
        const int j = static_cast<int>(rng() % 10);
        const BiasBoundReport report =
            check_bias_bound(detector, index, window, j, 8, mix_seed(9, trial));
        if (report.holds) ++holds;
    }
    detail = "holds " + std::to_string(holds) + "/100";
    return holds == 100;
}

// ---------------------------------------------------------------------------
// 3. exact W1 vs brute-force permutation minimization
// ---------------------------------------------------------------------------
bool w1_exactness(std::string& detail) {
    std::mt19937_64 rng(51);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 6);
        auto draw = [&]() {
            std::vector<Eigen::VectorXd> samples;
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd v(5);
                for (int c = 0; c < 5; ++c) v[c] = gauss(rng);
                samples.push_back(std::move(v));
            }
            return samples;
        };
        const auto p = draw();
        const auto q = draw();

        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double total = 0.0;
            for (int i = 0; i < n; ++i) total += (p[i] - q[perm[i]]).norm();
            best = std::min(best, total);
        } while (std::next_permutation(perm.begin(), perm.end()));

        worst = std::max(worst, std::abs(wasserstein1_empirical(p, q) - best / n));
    }
    std::ostringstream out;
    out.precision(3);
    out << "max deviation " << worst;
    detail = out.str();
    return worst < 1e-10;
}

// ---------------------------------------------------------------------------
// 4. VAE loss gradients vs central finite differences
// ---------------------------------------------------------------------------
bool vae_gradients(std::string& detail) {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst = 0.0;
    int passed = 0;
    for (int trial = 0; trial < 10; ++trial) {
        VaeEmbedding vae;
        vae.latent_dim = 2 + static_cast<int>(rng() % 2);
        vae.window_length = 3;
        vae.dim = 2;
        vae.lambda_rec = 3.0;
        vae.lambda_kl = 1.0;
        vae.lambda_time = 1.0;
        const int hidden = 4 + static_cast<int>(rng() % 3);
        vae.encoder = DenseNet::make({6, hidden, 2 * vae.latent_dim},
                                     {Activation::tanh, Activation::linear}, 500 + trial);
        vae.decoder = DenseNet::make({vae.latent_dim, hidden, 6},
                                     {Activation::tanh, Activation::linear}, 600 + trial);
        Eigen::VectorXd flat(6), eps(vae.latent_dim);
        for (int i = 0; i < 6; ++i) flat[i] = gauss(rng);
        for (int i = 0; i < vae.latent_dim; ++i) eps[i] = gauss(rng);
        const FiniteDiffReport report = vae_finite_diff_check(vae, flat, eps, 1e-5, 1e-4);
        worst = std::max(worst, report.max_rel_error);
        passed += report.pass ? 1 : 0;
    }
    std::ostringstream out;
    out.precision(3);
    out << "pass " << passed << "/10, max rel err " << worst;
    detail = out.str();
    return passed == 10;
}

// ---------------------------------------------------------------------------
// 5 & 6 share the synthetic RCA suite
// ---------------------------------------------------------------------------
RunConfig rca_suite_config(std::uint64_t seed, std::int64_t length, std::int64_t train_end,
                           int sensors, int window, int count_per_kind, std::int64_t duration,
                           std::int64_t drift_duration, std::int64_t gap) {
    RunConfig config;
    SynthConfig synth;
    synth.sensors = sensors;
    synth.factors = 2;
    synth.length = length;
    synth.factor_smoothness = 0.98;
    synth.noise_scale = 0.05;
    synth.seed = seed;

    std::mt19937_64 rng(mix_seed(seed, 5000));
    std::uniform_int_distribution<int> pick_sensor(0, sensors - 1);
    const AnomalyKind kinds[] = {AnomalyKind::spike,   AnomalyKind::shift,
                                 AnomalyKind::noise,   AnomalyKind::drift,
                                 AnomalyKind::dropout, AnomalyKind::saturation};
    std::int64_t cursor = train_end + window + 32;
    for (int rep = 0; rep < count_per_kind; ++rep) {
        for (AnomalyKind kind : kinds) {
            InjectionSpec spec;
            spec.kind = kind;
            spec.sensors = {pick_sensor(rng)};
            const std::int64_t len =
                kind == AnomalyKind::drift ? drift_duration : duration;
            spec.interval = {cursor, cursor + len};
            spec.magnitude = 3.0;
            spec.seed = mix_seed(seed, 6000 + rep * 6 + static_cast<int>(kind));
            synth.events.push_back(spec);
            cursor += len + gap;
        }
    }
    config.synth = synth;
    config.train_range = {0, train_end};
    config.window = window;
    config.detector.type = "pca";
    config.detector.components = window * 2 + 10;  // factor window subspace plus slack
    config.embedding.k = 8;
    config.retrieval_space = "pca";
    config.neighbors = 3;
    config.metric_ks = {1, 3};
    config.seed = seed;
    return config;
}

bool synthetic_rca_recovery(std::string& detail) {
    const RunConfig config = rca_suite_config(/*seed=*/407, /*length=*/20000,
                                              /*train_end=*/10000, /*sensors=*/10,
                                              /*window=*/50, /*count_per_kind=*/10,
                                              /*duration=*/60, /*drift_duration=*/5,
                                              /*gap=*/60);
    const RunReport report = cmd_evaluate(config);
    const double top1 = report.metrics.event_recall_at.at(1);

    // temporal onset estimate on the shift and drift events
    const PipelineState state = prepare_pipeline(config);
    int onset_checked = 0;
    int onset_ok = 0;
    for (std::size_t e = 0; e < state.normalized.events.size(); ++e) {
        const InjectionSpec& spec = config.synth->events[e];
        if (spec.kind != AnomalyKind::shift && spec.kind != AnomalyKind::drift) continue;
        const AnomalyEvent& event = state.normalized.events[e];
        const std::vector<Window> windows =
            windows_of_event(state.normalized.series, event, config.window, 1);
        std::int64_t first = -1;
        for (const Window& w : windows) {
            if (score(state.detector, w) > state.threshold) {
                first = w.start;
                break;
            }
        }
        ++onset_checked;
        if (first < 0) continue;
        const AttributionTensor tensor =
            attribution_tensor(state.detector, state.index,
                               window_at(state.normalized.series, first, config.window), 1,
                               config.neighbors);
        const std::int64_t estimate = first + tensor.peak_offset();
        if (std::llabs(estimate - event.onset) <= 2) ++onset_ok;
    }
    const double onset_rate =
        onset_checked ? static_cast<double>(onset_ok) / onset_checked : 0.0;

    std::ostringstream out;
    out.precision(4);
    out << "event-level Top@1 " << top1 << " (need >= 0.9), onset within +-2: " << onset_ok
        << "/" << onset_checked << " (need >= 0.8)";
    detail = out.str();
    return top1 >= 0.9 && onset_rate >= 0.8;
}

bool conditional_beats_unconditional(std::string& detail) {
    int wins = 0;
    double mean_gap = 0.0;
    for (int rep = 0; rep < 30; ++rep) {
        RunConfig config = rca_suite_config(/*seed=*/900 + rep, /*length=*/4200,
                                            /*train_end=*/2000, /*sensors=*/10,
                                            /*window=*/25, /*count_per_kind=*/1,
                                            /*duration=*/40, /*drift_duration=*/5,
                                            /*gap=*/30);
        config.metric_ks = {3};
        const RunReport conditional = cmd_evaluate(config);
        config.conditioning = Conditioning::unconditional;
        const RunReport unconditional = cmd_evaluate(config);
        const double cond = conditional.metrics.window_cw_rcs_at.at(3);
        const double uncond = unconditional.metrics.window_cw_rcs_at.at(3);
        if (cond > uncond) ++wins;
        mean_gap += (cond - uncond) / 30.0;
    }
    std::ostringstream out;
    out.precision(4);
    out << "conditional wins " << wins << "/30 (need >= 24), mean CW@3 gap " << mean_gap;
    detail = out.str();
    return wins >= 24;
}

// ---------------------------------------------------------------------------
// 7. retrieval complexity: embedded >= 5x faster at N=10,000, w*d=500, k=8
// ---------------------------------------------------------------------------
bool complexity_probe(std::string& detail) {
    LabeledDataset dataset;
    dataset.series = generate(make_latent_factor_system(10, 2, 61, 0.95, 0.1), 10150);
    dataset.train_range = {0, 10049};  // exactly 10,000 windows of length 50

    std::vector<Window> fit_windows;
    for (std::int64_t s = 0; s + 50 <= 10049; s += 10) {
        fit_windows.push_back(window_at(dataset.series, s, 50));
    }
    const Embedding embedding = fit_pca_embedding(fit_windows, 8);
    const NeighborIndex index =
        NeighborIndex::build(dataset, 50, 1, RetrievalSpace::embedded, embedding);

    std::vector<Window> queries;
    for (std::int64_t s = 10050; s + 50 <= 10150 && queries.size() < 20; s += 2) {
        queries.push_back(window_at(dataset.series, s, 50));
    }
    const QueryCostReport report = query_cost_probe(index, queries, 5, 0, 3);

    std::ostringstream out;
    out.precision(4);
    out << "N=" << report.reference_count << " input " << report.input_mean_us
        << "us, embedded " << report.embedded_mean_us << "us, speedup " << report.speedup
        << "x (need >= 5)";
    detail = out.str();
    return report.reference_count == 10000 && report.speedup >= 5.0;
}

// ---------------------------------------------------------------------------
// 8. knn exactness vs brute-force scan, including tie order
// ---------------------------------------------------------------------------
bool knn_exactness(std::string& detail) {
    std::mt19937_64 rng(81);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int matched = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 3);
        const int w = 3 + static_cast<int>(rng() % 5);
        const std::int64_t T = 60 + static_cast<std::int64_t>(rng() % 80);
        const bool quantized = trial % 2 == 1;  // coarse alphabet forces real ties

        LabeledDataset dataset;
        dataset.series.values.resize(T, d);
        for (std::int64_t t = 0; t < T; ++t) {
            for (int j = 0; j < d; ++j) {
                const double v = gauss(rng);
                dataset.series.values(t, j) =
                    quantized ? std::round(v) * 0.5 : v;
            }
        }
        for (int j = 0; j < d; ++j) dataset.series.sensor_names.push_back("s" + std::to_string(j));
        dataset.train_range = {0, T - w};

        const bool embedded = trial % 4 >= 2;
        std::optional<Embedding> embedding;
        if (embedded) {
            embedding = fit_pca_embedding(sliding_windows(dataset.series, w, 1),
                                          std::min(4, w * d));
        }
        const NeighborIndex index = NeighborIndex::build(
            dataset, w, 1, embedded ? RetrievalSpace::embedded : RetrievalSpace::input,
            embedding);

        const Window query =
            window_at(dataset.series, static_cast<std::int64_t>(rng() % (T - w)), w);
        const int j = static_cast<int>(rng() % d);
        const int K = 1 + static_cast<int>(rng() % std::min(10, index.size()));

        // brute-force oracle in the same space, ties by ascending index
        std::vector<std::pair<double, int>> oracle;
        for (int i = 0; i < index.size(); ++i) {
            double dist = 0.0;
            if (embedded) {
                dist = (embed(*embedding, mask_sensor(query, j)) -
                        embed(*embedding, mask_sensor(index.reference(i), j)))
                           .norm();
            } else {
                dist = (mask_sensor(query, j).representation -
                        mask_sensor(index.reference(i), j).representation)
                           .norm();
            }
            oracle.emplace_back(dist, i);
        }
        std::sort(oracle.begin(), oracle.end());

        const NeighborQueryResult result = index.knn_conditional(query, j, K);
        bool ok = true;
        for (int i = 0; i < K; ++i) {
            if (result.indices[i] != oracle[i].second) ok = false;
        }
        matched += ok ? 1 : 0;
    }
    detail = "matched " + std::to_string(matched) + "/" + std::to_string(trials);
    return matched == trials;
}

// ---------------------------------------------------------------------------
// 9. end-to-end determinism across jobs counts
// ---------------------------------------------------------------------------
bool evaluate_determinism(std::string& detail) {
    RunConfig config = rca_suite_config(/*seed=*/777, /*length=*/6000, /*train_end=*/3000,
                                        /*sensors=*/8, /*window=*/30, /*count_per_kind=*/1,
                                        /*duration=*/40, /*drift_duration=*/5, /*gap=*/40);
    config.metric_ks = {1, 3};
    config.jobs = 1;
    nlohmann::json first = cmd_evaluate(config).to_json();
    config.jobs = 8;
    nlohmann::json second = cmd_evaluate(config).to_json();
    first.erase("timing");
    second.erase("timing");
    const bool identical = first.dump() == second.dump();
    detail = identical ? "jobs=1 and jobs=8 reports byte-identical (timings excluded)"
                       : "reports differ";
    return identical;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "CW-RCS bounded by Recall@K on 1000 random instances", 1.0, metric_bound},
        {2, "bias bound holds for 100 random linear detectors", 30.0, bias_bound_trials},
        {3, "exact W1 matches brute-force permutations (n<=6, 50 trials)", 10.0, w1_exactness},
        {4, "VAE loss gradients match finite differences (10 nets)", 30.0, vae_gradients},
        {5, "synthetic RCA recovery (60 events, Top@1 and onset)", 300.0,
         synthetic_rca_recovery},
        {6, "conditional beats unconditional CW-RCS@3 (30 repetitions)", 600.0,
         conditional_beats_unconditional},
        {7, "embedded retrieval >= 5x faster at N=10k, w*d=500, k=8", 120.0, complexity_probe},
        {8, "knn matches the brute-force oracle on 200 random pairs", 30.0, knn_exactness},
        {9, "evaluate runs identical across jobs counts", 300.0, evaluate_determinism},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = criterion.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = elapsed < criterion.limit_s;
        if (!ok || !in_budget) ++failures;
        std::printf("[%s] %d. %s — %s [%.1fs / %.0fs]\n",
                    ok && in_budget ? "PASS" : "FAIL", criterion.id, criterion.name.c_str(),
                    detail.c_str(), elapsed, criterion.limit_s);
        std::fflush(stdout);
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
