#include "tsrca/pipeline.hpp"

#include "tsrca/io.hpp"
#include "tsrca/model_io.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tsrca {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the combined key
    std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (a + 1)) ^ (0xbf58476d1ce4e5b9ULL * (b + 1));
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void parallel_for(std::int64_t count, int jobs, const std::function<void(std::int64_t)>& fn) {
    if (count <= 0) return;
    if (jobs <= 1 || count == 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = static_cast<int>(std::min<std::int64_t>(jobs, count));
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

namespace {

std::vector<int> json_int_list(const nlohmann::json& doc) {
    std::vector<int> out;
    for (const auto& v : doc) out.push_back(v.get<int>());
    return out;
}

int resolve_sensor_token(const nlohmann::json& token, const std::vector<std::string>& names) {
    if (token.is_number_integer()) {
        const int j = token.get<int>();
        if (j < 0 || j >= static_cast<int>(names.size())) {
            throw std::runtime_error("config: sensor index " + std::to_string(j) +
                                     " out of range");
        }
        return j;
    }
    const std::string name = token.get<std::string>();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("config: unknown sensor '" + name + "'");
}

InjectionSpec injection_from_json(const nlohmann::json& doc,
                                  const std::vector<std::string>& names) {
    InjectionSpec spec;
    spec.kind = parse_anomaly_kind(doc.at("kind").get<std::string>());
    if (doc.contains("sensor")) {
        spec.sensors.push_back(resolve_sensor_token(doc.at("sensor"), names));
    }
    if (doc.contains("sensors")) {
        for (const auto& token : doc.at("sensors")) {
            spec.sensors.push_back(resolve_sensor_token(token, names));
        }
    }
    const auto& interval = doc.at("interval");
    spec.interval = {interval.at(0).get<std::int64_t>(), interval.at(1).get<std::int64_t>()};
    spec.magnitude = doc.value("magnitude", 1.0);
    spec.seed = doc.value("seed", 0ULL);
    spec.saturation_quantile = doc.value("saturation_quantile", 0.5);
    spec.saturate_lower = doc.value("saturate_lower", false);
    return spec;
}

nlohmann::json injection_to_json(const InjectionSpec& spec) {
    nlohmann::json doc;
    doc["kind"] = to_string(spec.kind);
    doc["sensors"] = spec.sensors;
    doc["interval"] = {spec.interval.begin, spec.interval.end};
    doc["magnitude"] = spec.magnitude;
    doc["seed"] = spec.seed;
    if (spec.kind == AnomalyKind::saturation) {
        doc["saturation_quantile"] = spec.saturation_quantile;
        doc["saturate_lower"] = spec.saturate_lower;
    }
    return doc;
}

void atomic_write(const std::string& path, const std::function<void(const std::string&)>& writer) {
    const std::string tmp = path + ".tmp";
    writer(tmp);
    fs::rename(tmp, path);
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc) {
    RunConfig config;
    if (doc.contains("data")) {
        DataConfig data;
        const auto& d = doc.at("data");
        data.series_csv = d.at("series_csv").get<std::string>();
        data.labels_json = d.value("labels_json", "");
        data.has_timestamp = d.value("has_timestamp", false);
        config.data = data;
    }
    if (doc.contains("synth")) {
        SynthConfig synth;
        const auto& s = doc.at("synth");
        synth.sensors = s.value("sensors", 10);
        synth.factors = s.value("factors", 2);
        synth.length = s.value("length", 20000LL);
        synth.factor_smoothness = s.value("factor_smoothness", 0.9);
        synth.noise_scale = s.value("noise_scale", 0.1);
        synth.baseline_scale = s.value("baseline_scale", 0.0);
        synth.seed = s.value("seed", 7ULL);
        if (s.contains("events")) {
            std::vector<std::string> names;
            for (int j = 0; j < synth.sensors; ++j) names.push_back("s" + std::to_string(j));
            for (const auto& ev : s.at("events")) {
                synth.events.push_back(injection_from_json(ev, names));
            }
        }
        if (s.contains("auto_events")) {
            AutoEventConfig auto_events;
            const auto& a = s.at("auto_events");
            auto_events.count_per_kind = a.value("count_per_kind", 10);
            auto_events.magnitude = a.value("magnitude", 3.0);
            auto_events.saturation_quantile = a.value("saturation_quantile", 0.5);
            auto_events.duration = a.value("duration", 60LL);
            auto_events.drift_duration = a.value("drift_duration", 6LL);
            auto_events.gap = a.value("gap", 60LL);
            auto_events.start = a.value("start", -1LL);
            auto_events.seed = a.value("seed", 1ULL);
            synth.auto_events = auto_events;
        }
        config.synth = synth;
    }
    if (doc.contains("train_range")) {
        config.train_range = {doc.at("train_range").at(0).get<std::int64_t>(),
                              doc.at("train_range").at(1).get<std::int64_t>()};
    }
    config.window = doc.value("window", 50);
    config.stride = doc.value("stride", 1);
    config.index_stride = doc.value("index_stride", 1);
    config.train_stride = doc.value("train_stride", 1);
    if (doc.contains("detector")) {
        const auto& d = doc.at("detector");
        config.detector.type = d.value("type", "pca");
        config.detector.components = d.value("components", 0);
        if (d.contains("hidden")) config.detector.hidden = json_int_list(d.at("hidden"));
        config.detector.epochs = d.value("epochs", 200);
        config.detector.batch_size = d.value("batch_size", 64);
        config.detector.learning_rate = d.value("learning_rate", 1e-3);
        config.detector.command = d.value("command", "");
    }
    if (doc.contains("embedding")) {
        const auto& e = doc.at("embedding");
        config.embedding.k = e.value("k", 8);
        config.embedding.latent = e.value("latent", 8);
        if (e.contains("hidden")) config.embedding.hidden = json_int_list(e.at("hidden"));
        config.embedding.lambda_rec = e.value("lambda_rec", 3.0);
        config.embedding.lambda_kl = e.value("lambda_kl", 1.0);
        config.embedding.lambda_time = e.value("lambda_time", 1.0);
        config.embedding.epochs = e.value("epochs", 50);
        config.embedding.batch_size = e.value("batch_size", 64);
        config.embedding.learning_rate = e.value("learning_rate", 1e-3);
        config.embedding.path = e.value("path", "");
    }
    config.retrieval_space = doc.value("retrieval_space", "pca");
    config.conditioning = doc.value("conditioning", "conditional") == "unconditional"
                              ? Conditioning::unconditional
                              : Conditioning::conditional;
    config.shared_neighborhood = doc.value("shared_neighborhood", false);
    config.neighbors = doc.value("K", 3);
    config.segment = doc.value("segment", 1);
    if (doc.contains("metric_ks")) config.metric_ks = json_int_list(doc.at("metric_ks"));
    config.beta = doc.value("beta", 1.0);
    config.epsilon = doc.value("epsilon", 1e-8);
    config.threshold_quantile = doc.value("threshold_quantile", 0.995);
    config.holdout_fraction = doc.value("holdout_fraction", 0.25);
    config.std_floor = doc.value("std_floor", 1e-8);
    config.signed_ranking = doc.value("signed_ranking", false);
    config.seed = doc.value("seed", 42ULL);
    config.jobs = doc.value("jobs", 1);
    config.output_dir = doc.value("output_dir", ".");
    config.detector_artifact = doc.value("detector_artifact", "");
    config.embedding_artifact = doc.value("embedding_artifact", "");
    return config;
}

nlohmann::json config_to_json(const RunConfig& config) {
    nlohmann::json doc;
    if (config.data) {
        doc["data"] = {{"series_csv", config.data->series_csv},
                       {"labels_json", config.data->labels_json},
                       {"has_timestamp", config.data->has_timestamp}};
    }
    if (config.synth) {
        nlohmann::json s;
        s["sensors"] = config.synth->sensors;
        s["factors"] = config.synth->factors;
        s["length"] = config.synth->length;
        s["factor_smoothness"] = config.synth->factor_smoothness;
        s["noise_scale"] = config.synth->noise_scale;
        s["baseline_scale"] = config.synth->baseline_scale;
        s["seed"] = config.synth->seed;
        if (!config.synth->events.empty()) {
            nlohmann::json events = nlohmann::json::array();
            for (const auto& ev : config.synth->events) events.push_back(injection_to_json(ev));
            s["events"] = events;
        }
        if (config.synth->auto_events) {
            const AutoEventConfig& a = *config.synth->auto_events;
            s["auto_events"] = {{"count_per_kind", a.count_per_kind},
                                {"magnitude", a.magnitude},
                                {"saturation_quantile", a.saturation_quantile},
                                {"duration", a.duration},
                                {"drift_duration", a.drift_duration},
                                {"gap", a.gap},
                                {"start", a.start},
                                {"seed", a.seed}};
        }
        doc["synth"] = s;
    }
    doc["train_range"] = {config.train_range.begin, config.train_range.end};
    doc["window"] = config.window;
    doc["stride"] = config.stride;
    doc["index_stride"] = config.index_stride;
    doc["train_stride"] = config.train_stride;
    doc["detector"] = {{"type", config.detector.type},
                       {"components", config.detector.components},
                       {"hidden", config.detector.hidden},
                       {"epochs", config.detector.epochs},
                       {"batch_size", config.detector.batch_size},
                       {"learning_rate", config.detector.learning_rate},
                       {"command", config.detector.command}};
    doc["embedding"] = {{"k", config.embedding.k},
                        {"latent", config.embedding.latent},
                        {"hidden", config.embedding.hidden},
                        {"lambda_rec", config.embedding.lambda_rec},
                        {"lambda_kl", config.embedding.lambda_kl},
                        {"lambda_time", config.embedding.lambda_time},
                        {"epochs", config.embedding.epochs},
                        {"batch_size", config.embedding.batch_size},
                        {"learning_rate", config.embedding.learning_rate},
                        {"path", config.embedding.path}};
    doc["retrieval_space"] = config.retrieval_space;
    doc["conditioning"] =
        config.conditioning == Conditioning::conditional ? "conditional" : "unconditional";
    doc["shared_neighborhood"] = config.shared_neighborhood;
    doc["K"] = config.neighbors;
    doc["segment"] = config.segment;
    doc["metric_ks"] = config.metric_ks;
    doc["beta"] = config.beta;
    doc["epsilon"] = config.epsilon;
    doc["threshold_quantile"] = config.threshold_quantile;
    doc["holdout_fraction"] = config.holdout_fraction;
    doc["std_floor"] = config.std_floor;
    doc["signed_ranking"] = config.signed_ranking;
    doc["seed"] = config.seed;
    doc["jobs"] = config.jobs;
    doc["output_dir"] = config.output_dir;
    doc["detector_artifact"] = config.detector_artifact;
    doc["embedding_artifact"] = config.embedding_artifact;
    return doc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    nlohmann::json doc;
    in >> doc;
    return config_from_json(doc);
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

namespace {

std::vector<InjectionSpec> expand_auto_events(const SynthConfig& synth,
                                              const AutoEventConfig& auto_events,
                                              const RunConfig& config) {
    std::vector<InjectionSpec> specs;
    std::mt19937_64 rng(auto_events.seed);
    std::uniform_int_distribution<int> pick_sensor(0, synth.sensors - 1);

    std::int64_t cursor = auto_events.start >= 0
                              ? auto_events.start
                              : config.train_range.end + std::max<std::int64_t>(128, config.window);
    const AnomalyKind kinds[] = {AnomalyKind::spike,   AnomalyKind::shift,
                                 AnomalyKind::noise,   AnomalyKind::drift,
                                 AnomalyKind::dropout, AnomalyKind::saturation};
    for (int rep = 0; rep < auto_events.count_per_kind; ++rep) {
        for (AnomalyKind kind : kinds) {
            InjectionSpec spec;
            spec.kind = kind;
            spec.sensors = {pick_sensor(rng)};
            const std::int64_t duration =
                kind == AnomalyKind::drift ? auto_events.drift_duration : auto_events.duration;
            spec.interval = {cursor, cursor + duration};
            spec.magnitude = auto_events.magnitude;
            spec.saturation_quantile = auto_events.saturation_quantile;
            spec.seed = mix_seed(auto_events.seed, specs.size());
            specs.push_back(spec);
            cursor += duration + auto_events.gap;
        }
    }
    if (cursor > synth.length) {
        throw std::runtime_error("auto_events: events end at " + std::to_string(cursor) +
                                 " beyond series length " + std::to_string(synth.length));
    }
    return specs;
}

}  // namespace

LabeledDataset assemble_dataset(const RunConfig& config) {
    LabeledDataset dataset;
    dataset.train_range = config.train_range;

    if (config.data) {
        dataset.series = load_csv(config.data->series_csv, config.data->has_timestamp);
        if (!config.data->labels_json.empty()) {
            dataset.events = load_labels_json(config.data->labels_json, dataset.series);
        }
    } else if (config.synth) {
        const SynthConfig& synth = *config.synth;
        const LatentFactorSystem system = make_latent_factor_system(
            synth.sensors, synth.factors, synth.seed, synth.factor_smoothness,
            synth.noise_scale, synth.baseline_scale);
        dataset.series = generate(system, synth.length);

        std::vector<InjectionSpec> specs = synth.events;
        if (synth.auto_events) {
            const auto generated = expand_auto_events(synth, *synth.auto_events, config);
            specs.insert(specs.end(), generated.begin(), generated.end());
        }
        if (!specs.empty()) {
            if (config.train_range.empty()) {
                throw std::runtime_error("assemble_dataset: injection needs a train_range");
            }
            const NormalizationStats stats =
                fit_normalization(dataset.series, config.train_range, config.std_floor);
            for (const InjectionSpec& spec : specs) {
                InjectionResult result = inject(dataset.series, spec, stats);
                dataset.series = std::move(result.series);
                dataset.events.push_back(std::move(result.event));
            }
        }
    } else {
        throw std::runtime_error("assemble_dataset: config has neither data nor synth");
    }

    if (dataset.train_range.empty()) {
        throw std::runtime_error("assemble_dataset: empty train_range");
    }
    validate_dataset(dataset);
    return dataset;
}

// ---------------------------------------------------------------------------
// pipeline preparation
// ---------------------------------------------------------------------------

namespace {

std::vector<Window> train_windows_of(const LabeledDataset& normalized, const RunConfig& config) {
    std::vector<Window> windows;
    for (std::int64_t s = normalized.train_range.begin;
         s + config.window <= normalized.train_range.end; s += config.train_stride) {
        windows.push_back(window_at(normalized.series, s, config.window));
    }
    if (windows.empty()) {
        throw std::runtime_error("prepare: train range shorter than one window");
    }
    return windows;
}

TrainConfig nn_config(int epochs, int batch_size, double learning_rate, std::uint64_t seed) {
    TrainConfig config;
    config.epochs = epochs;
    config.batch_size = batch_size;
    config.learning_rate = learning_rate;
    config.seed = seed;
    return config;
}

}  // namespace

PipelineState prepare_pipeline(const RunConfig& config, bool load_artifacts) {
    PipelineState state;
    state.raw = assemble_dataset(config);
    state.stats = fit_normalization(state.raw.series, config.train_range, config.std_floor);
    state.normalized.series = apply_normalization(state.raw.series, state.stats);
    state.normalized.events = state.raw.events;
    state.normalized.train_range = state.raw.train_range;

    const std::vector<Window> train_windows = train_windows_of(state.normalized, config);
    const std::size_t holdout =
        std::min(train_windows.size() - 1,
                 static_cast<std::size_t>(config.holdout_fraction *
                                          static_cast<double>(train_windows.size())));
    const std::vector<Window> fit_windows(train_windows.begin(),
                                          train_windows.end() - holdout);
    const std::vector<Window> holdout_windows(train_windows.end() - holdout,
                                              train_windows.end());

    const std::string detector_path =
        config.detector_artifact.empty() ? "" : config.detector_artifact;
    if (load_artifacts && !detector_path.empty() && fs::exists(detector_path)) {
        state.detector = load_detector(detector_path);
    } else if (config.detector.type == "pca") {
        int components = config.detector.components;
        if (components <= 0) {
            const int wd = config.window * state.normalized.series.dim();
            components = std::max(
                1, std::min({wd / 2, static_cast<int>(fit_windows.size()) / 2, 128}));
        }
        state.detector = train_pca_detector(fit_windows, components);
    } else if (config.detector.type == "ae") {
        state.detector = train_ae_detector(
            fit_windows, config.detector.hidden,
            nn_config(config.detector.epochs, config.detector.batch_size,
                      config.detector.learning_rate, mix_seed(config.seed, 101)));
    } else if (config.detector.type == "external") {
        if (config.detector.command.empty()) {
            throw std::runtime_error("prepare: external detector needs a command");
        }
        state.detector = make_external_detector(config.detector.command, config.window,
                                                state.normalized.series.dim());
    } else {
        throw std::runtime_error("prepare: unknown detector type '" + config.detector.type + "'");
    }

    const std::vector<Window>& threshold_windows =
        holdout_windows.empty() ? fit_windows : holdout_windows;
    state.threshold = choose_threshold(score_batch(state.detector, threshold_windows),
                                       config.threshold_quantile);

    RetrievalSpace space = RetrievalSpace::embedded;
    const std::string embedding_path =
        config.embedding_artifact.empty() ? "" : config.embedding_artifact;
    if (config.retrieval_space == "input") {
        space = RetrievalSpace::input;
    } else if (load_artifacts && !embedding_path.empty() && fs::exists(embedding_path)) {
        state.embedding = load_embedding(embedding_path);
    } else if (config.retrieval_space == "pca") {
        state.embedding = fit_pca_embedding(fit_windows, config.embedding.k);
    } else if (config.retrieval_space == "vae") {
        state.embedding =
            train_vae(fit_windows, config.embedding.hidden, config.embedding.latent,
                      config.embedding.lambda_rec, config.embedding.lambda_kl,
                      config.embedding.lambda_time,
                      nn_config(config.embedding.epochs, config.embedding.batch_size,
                                config.embedding.learning_rate, mix_seed(config.seed, 202)))
                .embedding;
    } else if (config.retrieval_space == "imported") {
        if (config.embedding.path.empty()) {
            throw std::runtime_error("prepare: imported retrieval needs embedding.path");
        }
        state.embedding = import_embeddings(config.embedding.path);
    } else {
        throw std::runtime_error("prepare: unknown retrieval_space '" + config.retrieval_space +
                                 "'");
    }

    state.index = NeighborIndex::build(state.normalized, config.window, config.index_stride,
                                       space, state.embedding, config.shared_neighborhood);
    return state;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

void cmd_inject(const RunConfig& config) {
    if (!config.synth) throw std::runtime_error("inject: config needs a synth block");
    const LabeledDataset dataset = assemble_dataset(config);
    fs::create_directories(config.output_dir);
    const std::string series_path = (fs::path(config.output_dir) / "series.csv").string();
    const std::string labels_path = (fs::path(config.output_dir) / "labels.json").string();
    atomic_write(series_path, [&](const std::string& tmp) { save_csv(dataset.series, tmp); });
    atomic_write(labels_path, [&](const std::string& tmp) {
        save_labels_json(dataset.events, dataset.series, tmp);
    });
}

void cmd_train(const RunConfig& config) {
    RunConfig effective = config;
    if (effective.detector_artifact.empty()) {
        effective.detector_artifact = (fs::path(config.output_dir) / "detector.json").string();
    }
    if (effective.embedding_artifact.empty() && config.retrieval_space != "input" &&
        config.retrieval_space != "imported") {
        effective.embedding_artifact = (fs::path(config.output_dir) / "embedding.json").string();
    }
    fs::create_directories(config.output_dir);
    const PipelineState state = prepare_pipeline(effective, /*load_artifacts=*/false);
    if (effective.detector.type != "external") {
        atomic_write(effective.detector_artifact,
                     [&](const std::string& tmp) { save_detector(state.detector, tmp); });
    }
    if (state.embedding && config.retrieval_space != "imported") {
        atomic_write(effective.embedding_artifact,
                     [&](const std::string& tmp) { save_embedding(*state.embedding, tmp); });
    }
}

namespace {

struct EventWindows {
    std::vector<Window> windows;
};

std::vector<EventWindows> collect_event_windows(const PipelineState& state,
                                                const RunConfig& config) {
    std::vector<EventWindows> out;
    for (const AnomalyEvent& event : state.normalized.events) {
        EventWindows ew;
        ew.windows =
            windows_of_event(state.normalized.series, event, config.window, config.stride);
        if (ew.windows.empty()) {
            throw std::runtime_error("evaluate: event at " + std::to_string(event.onset) +
                                     " yields no windows");
        }
        out.push_back(std::move(ew));
    }
    return out;
}

std::int64_t first_flagged_start(const PipelineState& state, const std::vector<Window>& windows) {
    for (const Window& w : windows) {
        if (score(state.detector, w) > state.threshold) return w.start;
    }
    return -1;
}

void write_heatmap_csv(const AttributionTensor& tensor,
                       const std::vector<std::string>& sensor_names, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("attribute: cannot write '" + path + "'");
    out << "tau";
    for (const std::string& name : sensor_names) out << "," << name;
    out << "\n";
    for (Eigen::Index tau = 0; tau < tensor.values.rows(); ++tau) {
        out << tau;
        for (Eigen::Index j = 0; j < tensor.values.cols(); ++j) {
            out << "," << format_double(tensor.values(tau, j));
        }
        out << "\n";
    }
}

}  // namespace

void cmd_attribute(const RunConfig& config, int event_index) {
    const PipelineState state = prepare_pipeline(config);
    fs::create_directories(config.output_dir);
    const std::vector<std::string>& names = state.normalized.series.sensor_names;

    for (std::size_t e = 0; e < state.normalized.events.size(); ++e) {
        if (event_index >= 0 && static_cast<int>(e) != event_index) continue;
        const AnomalyEvent& event = state.normalized.events[e];
        const std::vector<Window> windows =
            windows_of_event(state.normalized.series, event, config.window, config.stride);

        // onset localization reads the first window the detector flags;
        // sensor ranking reads the strongest window, where the fault mass
        // dominates the donor-splice mismatch
        std::int64_t first_start = first_flagged_start(state, windows);
        if (first_start < 0) {
            first_start = std::max<std::int64_t>(0, event.onset - config.window + 1);
        }
        const std::vector<double> window_scores = score_batch(state.detector, windows);
        std::size_t peak = 0;
        for (std::size_t i = 1; i < windows.size(); ++i) {
            if (window_scores[i] > window_scores[peak]) peak = i;
        }

        const Window first_window = window_at(state.normalized.series, first_start,
                                              config.window);
        const AttributionTensor tensor = attribution_tensor(
            state.detector, state.index, first_window, config.segment, config.neighbors);

        const Window& peak_window = windows[peak];
        const Eigen::VectorXd phi = sensor_attributions(state.detector, state.index, peak_window,
                                                        config.neighbors,
                                                        Conditioning::conditional);
        const RankedAttribution ranked = rank_attributions(phi, config.signed_ranking);

        const std::string base =
            (fs::path(config.output_dir) / ("event_" + std::to_string(e))).string();
        write_heatmap_csv(tensor, names, base + "_heatmap.csv");

        nlohmann::json sidecar;
        sidecar["window_start"] = tensor.window_start;
        sidecar["method"] = "conditional";
        sidecar["K"] = config.neighbors;
        sidecar["s"] = config.segment;
        std::ofstream(base + "_heatmap.json") << sidecar.dump(2) << "\n";

        nlohmann::json ranking;
        ranking["window_start"] = peak_window.start;
        ranking["first_flagged_window"] = first_window.start;
        ranking["onset_estimate"] = first_window.start + tensor.peak_offset();
        nlohmann::json order = nlohmann::json::array();
        for (int j : ranked.ranking) order.push_back(names[j]);
        ranking["ranking"] = order;
        nlohmann::json values;
        for (int j = 0; j < phi.size(); ++j) values[names[j]] = phi[j];
        ranking["attribution"] = values;
        std::ofstream(base + "_ranking.json") << ranking.dump(2) << "\n";
    }
}

RunReport cmd_evaluate(const RunConfig& config) {
    if (config.stride != 1) {
        throw std::runtime_error("evaluate: per-timestep temporal metrics require stride 1");
    }
    const auto t_start = clock_type::now();
    const PipelineState state = prepare_pipeline(config);
    const auto t_prepared = clock_type::now();

    std::vector<int> metric_ks;
    for (int K : config.metric_ks) {
        if (K >= 1 && K <= state.normalized.series.dim()) metric_ks.push_back(K);
    }
    if (metric_ks.empty()) throw std::runtime_error("evaluate: no usable metric K");

    // window-level detection over the full series
    const std::vector<Window> all_windows =
        sliding_windows(state.normalized.series, config.window, 1);
    std::vector<double> all_scores(all_windows.size());
    parallel_for(static_cast<std::int64_t>(all_windows.size()), config.jobs,
                 [&](std::int64_t i) {
                     all_scores[i] = score(state.detector, all_windows[i]);
                 });
    std::vector<bool> window_labels(all_windows.size(), false);
    for (std::size_t i = 0; i < all_windows.size(); ++i) {
        const IndexRange span{all_windows[i].start, all_windows[i].start + config.window};
        for (const AnomalyEvent& event : state.normalized.events) {
            if (span.intersects(event.interval())) {
                window_labels[i] = true;
                break;
            }
        }
    }
    const auto t_detected = clock_type::now();

    // per-(event, window) attribution grid
    const std::vector<EventWindows> event_windows = collect_event_windows(state, config);
    struct Task {
        int event = 0;
        int window = 0;
    };
    std::vector<Task> tasks;
    for (std::size_t e = 0; e < event_windows.size(); ++e) {
        for (std::size_t w = 0; w < event_windows[e].windows.size(); ++w) {
            tasks.push_back({static_cast<int>(e), static_cast<int>(w)});
        }
    }
    std::vector<std::vector<RankedAttribution>> rankings(event_windows.size());
    for (std::size_t e = 0; e < event_windows.size(); ++e) {
        rankings[e].resize(event_windows[e].windows.size());
    }

    // warm the per-sensor caches up front so worker threads only read
    for (int j = 0; j < state.normalized.series.dim(); ++j) state.index.warm_masked_cache(j);

    std::atomic<std::int64_t> retrieval_ns{0};
    std::atomic<std::int64_t> scoring_ns{0};
    const int d = state.normalized.series.dim();
    parallel_for(static_cast<std::int64_t>(tasks.size()), config.jobs, [&](std::int64_t i) {
        const Task task = tasks[i];
        const Window& window = event_windows[task.event].windows[task.window];
        Eigen::VectorXd phi(d);
        for (int j = 0; j < d; ++j) {
            const auto r0 = clock_type::now();
            NeighborQueryResult donors;
            if (config.conditioning == Conditioning::conditional) {
                donors = state.index.knn_conditional(window, j, config.neighbors);
            } else {
                donors = state.index.knn_unconditional(
                    config.neighbors,
                    mix_seed(config.seed, static_cast<std::uint64_t>(window.start),
                             static_cast<std::uint64_t>(j)));
            }
            const auto r1 = clock_type::now();
            phi[j] = replacement_attribution(state.detector, state.index, window, j,
                                             donors.indices);
            const auto r2 = clock_type::now();
            retrieval_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(r1 - r0).count();
            scoring_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(r2 - r1).count();
        }
        rankings[task.event][task.window] = rank_attributions(phi, config.signed_ranking);
    });
    const auto t_attributed = clock_type::now();

    std::vector<EventEvaluation> evaluations;
    for (std::size_t e = 0; e < event_windows.size(); ++e) {
        std::vector<std::pair<std::int64_t, RankedAttribution>> per_window;
        for (std::size_t w = 0; w < event_windows[e].windows.size(); ++w) {
            per_window.emplace_back(event_windows[e].windows[w].start, rankings[e][w]);
        }
        evaluations.push_back(evaluate_event(state.normalized.events[e], std::move(per_window),
                                             config.window, metric_ks, config.beta,
                                             config.epsilon, metric_ks.front()));
    }

    RunReport report;
    report.config_echo = config_to_json(config);
    report.config_echo.erase("jobs");  // execution knob; reports stay comparable across it
    report.threshold = state.threshold;
    report.detection = detection_metrics(all_scores, state.threshold, window_labels);
    report.metrics = evaluate_dataset(std::move(evaluations));
    for (std::size_t e = 0; e < report.metrics.per_event.size(); ++e) {
        const EventEvaluation& ev = report.metrics.per_event[e];
        EventRow row;
        row.event_index = static_cast<int>(e);
        row.event = ev.event;
        row.recall_at = ev.recall_at;
        row.cw_rcs_at = ev.cw_rcs_at;
        row.temporal_hm_at = ev.temporal_hm_at;
        row.early = ev.early;
        row.persistence = ev.persistence;
        for (int j : ev.identified_sensors) {
            row.identified.push_back(state.normalized.series.sensor_names[j]);
        }
        report.per_event.push_back(std::move(row));
    }

    const auto t_end = clock_type::now();
    auto seconds = [](auto a, auto b) {
        return std::chrono::duration<double>(b - a).count();
    };
    report.timing = {{"prepare_s", seconds(t_start, t_prepared)},
                     {"detection_s", seconds(t_prepared, t_detected)},
                     {"attribution_s", seconds(t_detected, t_attributed)},
                     {"retrieval_s", static_cast<double>(retrieval_ns.load()) * 1e-9},
                     {"detector_eval_s", static_cast<double>(scoring_ns.load()) * 1e-9},
                     {"total_s", seconds(t_start, t_end)}};
    return report;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json doc;
    doc["config"] = config_echo;
    doc["threshold"] = threshold;
    nlohmann::json det;
    det["precision"] = detection.precision;
    det["recall"] = detection.recall;
    det["f1"] = detection.f1;
    if (detection.roc_auc) det["roc_auc"] = *detection.roc_auc;
    doc["detection"] = det;

    nlohmann::json events = nlohmann::json::array();
    for (std::size_t e = 0; e < per_event.size(); ++e) {
        const EventRow& row = per_event[e];
        const EventEvaluation& ev = metrics.per_event[e];
        nlohmann::json item;
        item["event"] = row.event_index;
        item["onset"] = row.event.onset;
        item["duration"] = row.event.duration;
        item["sensors"] = row.event.ground_truth;
        nlohmann::json recall, cw, hm;
        for (const auto& [K, v] : row.recall_at) recall[std::to_string(K)] = v;
        for (const auto& [K, v] : row.cw_rcs_at) cw[std::to_string(K)] = v;
        for (const auto& [K, v] : row.temporal_hm_at) hm[std::to_string(K)] = v;
        item["recall"] = recall;
        item["cw_rcs"] = cw;
        item["temporal_hm"] = hm;
        item["E"] = row.early;
        item["A"] = row.persistence;
        item["feature_id"] = row.identified;
        nlohmann::json windows = nlohmann::json::array();
        for (const auto& [start, ranked] : ev.per_window) {
            nlohmann::json w;
            w["start"] = start;
            nlohmann::json scores = nlohmann::json::array();
            for (Eigen::Index j = 0; j < ranked.scores.size(); ++j) {
                scores.push_back(ranked.scores[j]);
            }
            w["abs_attribution"] = scores;
            windows.push_back(std::move(w));
        }
        item["per_window"] = windows;
        events.push_back(std::move(item));
    }
    doc["per_event"] = events;

    nlohmann::json dataset;
    nlohmann::json window_level, event_level;
    nlohmann::json wr, wc, er, ec, ehm;
    for (const auto& [K, v] : metrics.window_recall_at) wr[std::to_string(K)] = v;
    for (const auto& [K, v] : metrics.window_cw_rcs_at) wc[std::to_string(K)] = v;
    for (const auto& [K, v] : metrics.event_recall_at) er[std::to_string(K)] = v;
    for (const auto& [K, v] : metrics.event_cw_rcs_at) ec[std::to_string(K)] = v;
    for (const auto& [K, v] : metrics.event_temporal_hm_at) ehm[std::to_string(K)] = v;
    window_level["recall"] = wr;
    window_level["cw_rcs"] = wc;
    event_level["recall"] = er;
    event_level["cw_rcs"] = ec;
    event_level["temporal_hm"] = ehm;
    event_level["E"] = metrics.event_early;
    event_level["A"] = metrics.event_persistence;
    dataset["window_level"] = window_level;
    dataset["event_level"] = event_level;
    doc["dataset"] = dataset;
    doc["timing"] = timing;
    return doc;
}

std::string RunReport::render_table() const {
    if (per_event.empty()) return "(no events)\n";
    const int K = per_event.front().recall_at.begin()->first;
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %-10s %-10s %-12s %s\n", "event",
                  ("Top@" + std::to_string(K) + "R").c_str(),
                  ("CW@" + std::to_string(K)).c_str(),
                  ("TempHM@" + std::to_string(K)).c_str(), "FeatureID");
    out << line;
    for (const EventRow& row : per_event) {
        std::string names = "---";
        if (!row.identified.empty()) {
            names.clear();
            for (std::size_t i = 0; i < row.identified.size(); ++i) {
                names += row.identified[i];
                if (i + 1 < row.identified.size()) names += ", ";
            }
        }
        std::snprintf(line, sizeof line, "%-8d %-10.3f %-10.3f %-12.3f %s\n", row.event_index,
                      row.recall_at.at(K), row.cw_rcs_at.at(K), row.temporal_hm_at.at(K),
                      names.c_str());
        out << line;
    }
    const int Kd = metrics.window_recall_at.begin()->first;
    std::snprintf(line, sizeof line,
                  "dataset  window-mean Top@%dR %.3f CW@%d %.3f | event-mean Top@%dR %.3f "
                  "CW@%d %.3f TempHM@%d %.3f\n",
                  Kd, metrics.window_recall_at.at(Kd), Kd, metrics.window_cw_rcs_at.at(Kd), Kd,
                  metrics.event_recall_at.at(Kd), Kd, metrics.event_cw_rcs_at.at(Kd), Kd,
                  metrics.event_temporal_hm_at.at(Kd));
    out << line;
    return out.str();
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::string& axis,
                                const std::vector<std::string>& values) {
    std::vector<std::string> sweep_values = values;
    if (sweep_values.empty()) {
        if (axis == "window_size") sweep_values = {"5", "10", "20", "50", "100"};
        else if (axis == "attribution_size") sweep_values = {"1", "2", "3", "4", "5", "10"};
        else if (axis == "retrieval_space") sweep_values = {"input", "pca"};
        else if (axis == "conditioning") sweep_values = {"conditional", "unconditional"};
        else throw std::runtime_error("sweep: unknown axis '" + axis + "'");
    }

    std::vector<SweepRow> rows;
    for (const std::string& value : sweep_values) {
        RunConfig run = config;
        if (axis == "window_size") run.window = std::stoi(value);
        else if (axis == "attribution_size") run.neighbors = std::stoi(value);
        else if (axis == "retrieval_space") run.retrieval_space = value;
        else if (axis == "conditioning") {
            run.conditioning = value == "unconditional" ? Conditioning::unconditional
                                                        : Conditioning::conditional;
        } else {
            throw std::runtime_error("sweep: unknown axis '" + axis + "'");
        }
        const RunReport report = cmd_evaluate(run);
        SweepRow row;
        row.axis_value = value;
        const int K = report.metrics.window_recall_at.begin()->first;
        row.top_r = report.metrics.window_recall_at.at(K);
        row.cw = report.metrics.window_cw_rcs_at.at(K);
        row.temp_hm = report.metrics.event_temporal_hm_at.at(K);
        rows.push_back(std::move(row));
    }
    return rows;
}

QueryCostReport cmd_probe_cost(const RunConfig& config, int queries, int repetitions) {
    if (config.retrieval_space == "input") {
        throw std::runtime_error("probe-cost: needs an embedded retrieval space");
    }
    const PipelineState state = prepare_pipeline(config);

    std::vector<Window> probe_windows;
    const std::int64_t T = state.normalized.series.length();
    std::int64_t start = state.normalized.train_range.end;
    if (start + config.window > T) start = 0;
    for (int q = 0; q < queries; ++q) {
        const std::int64_t s = start + q;
        if (s + config.window > T) break;
        probe_windows.push_back(window_at(state.normalized.series, s, config.window));
    }
    if (probe_windows.empty()) throw std::runtime_error("probe-cost: no query windows");
    return query_cost_probe(state.index, probe_windows, repetitions, 0, config.neighbors);
}

BoundTrialReport cmd_check_bound(const RunConfig& config, int trials) {
    const PipelineState state = prepare_pipeline(config);
    const int d = state.normalized.series.dim();
    const std::int64_t T = state.normalized.series.length();

    BoundTrialReport report;
    report.trials = trials;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(mix_seed(config.seed, 7000 + trial));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Eigen::MatrixXd coeffs(config.window, d);
        for (int t = 0; t < config.window; ++t) {
            for (int j = 0; j < d; ++j) coeffs(t, j) = gauss(rng);
        }
        const Detector linear = make_linear_detector(coeffs);
        std::uniform_int_distribution<std::int64_t> pick_start(0, T - config.window);
        std::uniform_int_distribution<int> pick_sensor(0, d - 1);
        const Window window =
            window_at(state.normalized.series, pick_start(rng), config.window);
        const int j = pick_sensor(rng);
        const BiasBoundReport r = check_bias_bound(linear, state.index, window, j,
                                                   config.neighbors,
                                                   mix_seed(config.seed, 9000 + trial));
        report.holds += r.holds ? 1 : 0;
        report.reports.push_back(r);
    }
    return report;
}

}  // namespace tsrca
