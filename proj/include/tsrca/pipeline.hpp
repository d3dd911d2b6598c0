#pragma once

#include "tsrca/attribution.hpp"
#include "tsrca/detector.hpp"
#include "tsrca/embedding.hpp"
#include "tsrca/metrics.hpp"
#include "tsrca/retrieval.hpp"
#include "tsrca/synth.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tsrca {

struct DataConfig {
    std::string series_csv;
    std::string labels_json;
    bool has_timestamp = false;
};

struct AutoEventConfig {
    int count_per_kind = 10;
    double magnitude = 3.0;
    double saturation_quantile = 0.5;
    std::int64_t duration = 60;
    std::int64_t drift_duration = 6;  // steep ramps keep drift onsets localizable
    std::int64_t gap = 60;            // clear space between events, >= window length
    std::int64_t start = -1;          // default: train end + window
    std::uint64_t seed = 1;
};

struct SynthConfig {
    int sensors = 10;
    int factors = 2;
    std::int64_t length = 20000;
    double factor_smoothness = 0.9;
    double noise_scale = 0.1;
    double baseline_scale = 0.0;  // nonzero gives sensors raw operating points
    std::uint64_t seed = 7;
    std::vector<InjectionSpec> events;          // explicit specs (sensor indices)
    std::optional<AutoEventConfig> auto_events; // or generated batches per kind
};

struct DetectorConfig {
    std::string type = "pca";  // pca | ae | external
    int components = 0;        // pca; 0 = min(w*d/2, training windows/2)
    std::vector<int> hidden = {64, 32};
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string command;       // external
};

struct EmbeddingConfig {
    int k = 8;                  // pca output dim
    int latent = 8;             // vae bottleneck
    std::vector<int> hidden = {64, 32};
    double lambda_rec = 3.0;
    double lambda_kl = 1.0;
    double lambda_time = 1.0;
    int epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string path;           // imported table csv
};

struct RunConfig {
    std::optional<DataConfig> data;
    std::optional<SynthConfig> synth;
    IndexRange train_range;
    int window = 50;
    int stride = 1;        // evaluation stride; temporal metrics need 1
    int index_stride = 1;
    int train_stride = 1;
    DetectorConfig detector;
    EmbeddingConfig embedding;
    std::string retrieval_space = "pca";  // input | pca | vae | imported
    Conditioning conditioning = Conditioning::conditional;
    bool shared_neighborhood = false;
    int neighbors = 3;     // K donors per attribution
    int segment = 1;       // temporal replacement segment length s
    std::vector<int> metric_ks = {3, 5, 10};
    double beta = 1.0;
    double epsilon = 1e-8;
    double threshold_quantile = 0.995;
    double holdout_fraction = 0.25;  // tail of the training windows kept for the threshold
    double std_floor = 1e-8;
    bool signed_ranking = false;
    std::uint64_t seed = 42;
    int jobs = 1;
    std::string output_dir = ".";
    std::string detector_artifact;
    std::string embedding_artifact;
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

/// Loads the CSV/labels pair or generates the synthetic dataset (raw units).
LabeledDataset assemble_dataset(const RunConfig& config);

/// Everything downstream stages share: normalized data plus artifacts.
struct PipelineState {
    LabeledDataset raw;
    NormalizationStats stats;
    LabeledDataset normalized;
    Detector detector;
    double threshold = 0.0;
    std::optional<Embedding> embedding;
    NeighborIndex index;
};

PipelineState prepare_pipeline(const RunConfig& config, bool load_artifacts = true);

struct EventRow {
    int event_index = 0;
    AnomalyEvent event;
    std::map<int, double> recall_at;
    std::map<int, double> cw_rcs_at;
    std::map<int, double> temporal_hm_at;
    double early = 0.0;
    double persistence = 0.0;
    std::vector<std::string> identified;  // sensor names, Appendix-style FeatureID
};

struct RunReport {
    nlohmann::json config_echo;
    DetectionQuality detection;
    double threshold = 0.0;
    std::vector<EventRow> per_event;
    MetricsReport metrics;
    nlohmann::json timing;

    nlohmann::json to_json() const;
    /// Per-event table in the order: event #, Top@KR, CW@K, TempHM@K,
    /// FeatureID ("---" when none), at the primary metric K.
    std::string render_table() const;
};

/// Writes the perturbed CSV + labels JSON for a synth config.
void cmd_inject(const RunConfig& config);

/// Trains the detector and embedding on the normal split and persists them.
void cmd_train(const RunConfig& config);

/// Heatmap CSV + sidecar JSON + ranking JSON for one event (or all with -1):
/// the exported tensor is the event's first detector-flagged window.
void cmd_attribute(const RunConfig& config, int event_index);

RunReport cmd_evaluate(const RunConfig& config);

struct SweepRow {
    std::string axis_value;
    double top_r = 0.0;
    double cw = 0.0;
    double temp_hm = 0.0;
};

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::string& axis,
                                const std::vector<std::string>& values);

QueryCostReport cmd_probe_cost(const RunConfig& config, int queries, int repetitions);

struct BoundTrialReport {
    int trials = 0;
    int holds = 0;
    std::vector<BiasBoundReport> reports;
};

/// Random linear detectors on the configured data; every trial must satisfy
/// the dependency-preserving attribution bound.
BoundTrialReport cmd_check_bound(const RunConfig& config, int trials);

/// Deterministic per-task seed mixing.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Index-sharded parallel map; results are written into caller slots, so any
/// jobs count produces identical output.
void parallel_for(std::int64_t count, int jobs, const std::function<void(std::int64_t)>& fn);

}  // namespace tsrca
