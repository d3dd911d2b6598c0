#pragma once

#include "tsrca/embedding.hpp"
#include "tsrca/series.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace tsrca {

enum class RetrievalSpace { input, embedded };

struct NeighborQueryResult {
    std::vector<int> indices;      // K distinct reference positions
    std::vector<double> distances; // nondecreasing
};

/// Exact-scan reference store of normal windows. Queries are conditional
/// (masked-context distance) by default; shared_neighborhood retrieves on
/// unmasked representations, which is also the only mode an imported
/// embedding table supports.
class NeighborIndex {
public:
    NeighborIndex() = default;  // empty; populate with build()

    static NeighborIndex build(const LabeledDataset& dataset, int w, int stride,
                               RetrievalSpace space,
                               std::optional<Embedding> embedding = std::nullopt,
                               bool shared_neighborhood = false);

    int size() const { return static_cast<int>(references_.size()); }
    int window_length() const { return w_; }
    int dim() const { return d_; }
    RetrievalSpace space() const { return space_; }
    bool shared_neighborhood() const { return shared_; }
    const std::vector<Window>& references() const { return references_; }
    const Window& reference(int i) const { return references_.at(i); }
    const Embedding& embedding() const;

    /// K nearest references to the query's masked context, ties by ascending
    /// reference index. Input space uses Frobenius distance on masked
    /// windows; embedded space uses Euclidean distance between embeddings of
    /// masked contexts.
    NeighborQueryResult knn_conditional(const Window& query, int j, int K) const;

    /// K distinct uniform draws, reported in ascending reference order with
    /// zero distances.
    NeighborQueryResult knn_unconditional(int K, std::uint64_t seed) const;
    /// Same draw, with masked-context distances to the query for diagnostics;
    /// sorted by distance.
    NeighborQueryResult knn_unconditional(const Window& query, int j, int K,
                                          std::uint64_t seed) const;

    /// Scan with an explicit retrieval space (the index must support it).
    NeighborQueryResult knn_in_space(const Window& query, int j, int K,
                                     RetrievalSpace space) const;

    /// Embedded-space scan for an already-embedded masked query vector.
    NeighborQueryResult knn_embedded_vector(const Eigen::VectorXd& embedded_query, int j,
                                            int K) const;

    /// Precomputes the per-sensor masked reference embeddings (the cache a
    /// first query would otherwise build lazily).
    void warm_masked_cache(int j) const;

    /// Masked Frobenius distance between the query and reference i.
    double masked_input_distance(const Window& query, int i, int j) const;

private:
    const Eigen::MatrixXd& masked_embeddings(int j) const;
    NeighborQueryResult knn_input(const Window& query, int j, int K) const;
    NeighborQueryResult knn_embedded(const Window& query, int j, int K) const;
    NeighborQueryResult select_k(std::vector<std::pair<double, int>>& sqdist, int K) const;

    std::vector<Window> references_;
    Eigen::MatrixXd ref_flat_;  // N x (w*d)
    int w_ = 0;
    int d_ = 0;
    RetrievalSpace space_ = RetrievalSpace::input;
    bool shared_ = false;
    std::optional<Embedding> embedding_;
    Eigen::MatrixXd ref_embed_;  // N x k, unmasked (embedded space only)

    mutable std::unique_ptr<std::mutex> cache_mutex_;
    mutable std::unordered_map<int, Eigen::MatrixXd> masked_embed_cache_;  // j -> N x k
};

struct QueryCostReport {
    double input_mean_us = 0.0;
    double embedded_mean_us = 0.0;
    double speedup = 0.0;
    int queries = 0;
    int repetitions = 0;
    int reference_count = 0;
    int input_dim = 0;      // w*d
    int embedded_dim = 0;   // k
};

/// Mean per-query wall time of input-space vs embedded-space conditional
/// KNN over identical queries, masked-embedding cache warm. The embedded
/// timing excludes the one-time embedding of each query's masked variant.
QueryCostReport query_cost_probe(const NeighborIndex& index, std::span<const Window> queries,
                                 int repetitions, int j, int K);

}  // namespace tsrca
