#include "tsrca/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tsrca {

const Embedding& NeighborIndex::embedding() const {
    if (!embedding_) throw std::runtime_error("index has no embedding");
    return *embedding_;
}

NeighborIndex NeighborIndex::build(const LabeledDataset& dataset, int w, int stride,
                                   RetrievalSpace space, std::optional<Embedding> embedding,
                                   bool shared_neighborhood) {
    validate_dataset(dataset);
    if (dataset.train_range.empty()) throw std::runtime_error("build_index: empty normal split");
    if (space == RetrievalSpace::embedded && !embedding) {
        throw std::invalid_argument("build_index: embedded space needs an embedding");
    }

    NeighborIndex index;
    index.w_ = w;
    index.d_ = dataset.series.dim();
    index.space_ = space;
    index.shared_ = shared_neighborhood;
    index.cache_mutex_ = std::make_unique<std::mutex>();

    for (std::int64_t s = dataset.train_range.begin;
         s + w <= dataset.train_range.end; s += stride) {
        index.references_.push_back(window_at(dataset.series, s, w));
    }
    if (index.references_.empty()) {
        throw std::runtime_error("build_index: train range shorter than one window");
    }

    index.ref_flat_ = flatten_windows(index.references_);
    const int N = index.size();

    if (embedding) {
        index.embedding_ = std::move(embedding);
        if (!index.embedding_->supports_masking() && !index.shared_) {
            // an imported table has no map to apply to masked contexts
            index.shared_ = true;
        }
        if (space == RetrievalSpace::embedded) {
            const int k = index.embedding_->output_dim;
            index.ref_embed_.resize(N, k);
            for (int i = 0; i < N; ++i) {
                index.ref_embed_.row(i) = embed(*index.embedding_, index.references_[i])
                                              .transpose();
            }
        }
    }
    return index;
}

double NeighborIndex::masked_input_distance(const Window& query, int i, int j) const {
    const MaskedContext q = mask_sensor(query, j);
    const MaskedContext r = mask_sensor(references_.at(i), j);
    return (q.representation - r.representation).norm();
}

NeighborQueryResult NeighborIndex::select_k(std::vector<std::pair<double, int>>& sqdist,
                                            int K) const {
    // exact K-smallest with ties by ascending reference index
    std::nth_element(sqdist.begin(), sqdist.begin() + (K - 1), sqdist.end());
    std::sort(sqdist.begin(), sqdist.begin() + K);
    NeighborQueryResult result;
    result.indices.reserve(K);
    result.distances.reserve(K);
    for (int i = 0; i < K; ++i) {
        result.indices.push_back(sqdist[i].second);
        result.distances.push_back(std::sqrt(std::max(0.0, sqdist[i].first)));
    }
    return result;
}

NeighborQueryResult NeighborIndex::knn_input(const Window& query, int j, int K) const {
    // per-column accumulation keeps the masked Frobenius distance exact
    // (a full-vector-minus-column shortcut would leave cancellation noise
    // on self-matches)
    std::vector<std::pair<double, int>> sqdist(references_.size());
    for (int i = 0; i < size(); ++i) {
        const Eigen::MatrixXd& ref = references_[i].data;
        double sq = 0.0;
        for (int l = 0; l < d_; ++l) {
            if (!shared_ && l == j) continue;
            sq += (query.data.col(l) - ref.col(l)).squaredNorm();
        }
        sqdist[i] = {sq, i};
    }
    return select_k(sqdist, K);
}

const Eigen::MatrixXd& NeighborIndex::masked_embeddings(int j) const {
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    auto it = masked_embed_cache_.find(j);
    if (it != masked_embed_cache_.end()) return it->second;

    const int k = embedding_->output_dim;
    Eigen::MatrixXd table(size(), k);
    for (int i = 0; i < size(); ++i) {
        Eigen::VectorXd flat = ref_flat_.row(i).transpose();
        for (int t = 0; t < w_; ++t) flat[static_cast<Eigen::Index>(t) * d_ + j] = 0.0;
        table.row(i) = embed_flat(*embedding_, flat).transpose();
    }
    return masked_embed_cache_.emplace(j, std::move(table)).first->second;
}

void NeighborIndex::warm_masked_cache(int j) const {
    if (space_ == RetrievalSpace::embedded && !shared_) masked_embeddings(j);
}

NeighborQueryResult NeighborIndex::knn_embedded_vector(const Eigen::VectorXd& embedded_query,
                                                       int j, int K) const {
    const Eigen::MatrixXd& table = shared_ ? ref_embed_ : masked_embeddings(j);
    std::vector<std::pair<double, int>> sqdist(references_.size());
    for (int i = 0; i < size(); ++i) {
        sqdist[i] = {(table.row(i).transpose() - embedded_query).squaredNorm(), i};
    }
    return select_k(sqdist, K);
}

NeighborQueryResult NeighborIndex::knn_embedded(const Window& query, int j, int K) const {
    const Eigen::VectorXd q_embed =
        shared_ ? embed(*embedding_, query) : embed(*embedding_, mask_sensor(query, j));
    return knn_embedded_vector(q_embed, j, K);
}

NeighborQueryResult NeighborIndex::knn_in_space(const Window& query, int j, int K,
                                                RetrievalSpace space) const {
    if (K < 1 || K > size()) {
        throw std::invalid_argument("knn: K=" + std::to_string(K) + " with index size " +
                                    std::to_string(size()));
    }
    if (j < 0 || j >= d_) throw std::invalid_argument("knn: sensor out of range");
    if (query.length() != w_ || query.dim() != d_) {
        throw std::invalid_argument("knn: query dims mismatch");
    }
    if (space == RetrievalSpace::embedded) {
        if (space_ != RetrievalSpace::embedded) {
            throw std::invalid_argument("knn: index was not built with an embedding");
        }
        return knn_embedded(query, j, K);
    }
    return knn_input(query, j, K);
}

NeighborQueryResult NeighborIndex::knn_conditional(const Window& query, int j, int K) const {
    return knn_in_space(query, j, K, space_);
}

NeighborQueryResult NeighborIndex::knn_unconditional(int K, std::uint64_t seed) const {
    if (K < 1 || K > size()) {
        throw std::invalid_argument("knn_unconditional: K=" + std::to_string(K) +
                                    " with index size " + std::to_string(size()));
    }
    std::mt19937_64 rng(seed);
    std::vector<int> pool(references_.size());
    for (int i = 0; i < size(); ++i) pool[i] = i;
    // partial Fisher-Yates: K distinct uniform draws
    for (int i = 0; i < K; ++i) {
        std::uniform_int_distribution<int> pick(i, size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    NeighborQueryResult result;
    result.indices.assign(pool.begin(), pool.begin() + K);
    std::sort(result.indices.begin(), result.indices.end());
    result.distances.assign(K, 0.0);
    return result;
}

NeighborQueryResult NeighborIndex::knn_unconditional(const Window& query, int j, int K,
                                                     std::uint64_t seed) const {
    NeighborQueryResult draw = knn_unconditional(K, seed);
    std::vector<std::pair<double, int>> with_dist;
    with_dist.reserve(draw.indices.size());
    for (int i : draw.indices) with_dist.emplace_back(masked_input_distance(query, i, j), i);
    std::sort(with_dist.begin(), with_dist.end());
    NeighborQueryResult result;
    for (const auto& [dist, i] : with_dist) {
        result.indices.push_back(i);
        result.distances.push_back(dist);
    }
    return result;
}

QueryCostReport query_cost_probe(const NeighborIndex& index, std::span<const Window> queries,
                                 int repetitions, int j, int K) {
    if (queries.empty()) throw std::invalid_argument("query_cost_probe: no queries");
    if (repetitions < 1) throw std::invalid_argument("query_cost_probe: repetitions must be >= 1");
    if (index.space() != RetrievalSpace::embedded) {
        throw std::invalid_argument("query_cost_probe: index must carry an embedding");
    }

    using clock = std::chrono::steady_clock;
    index.warm_masked_cache(j);

    // per-query masked-variant embedding is a one-time cost, not timed
    std::vector<Eigen::VectorXd> embedded_queries;
    embedded_queries.reserve(queries.size());
    for (const Window& q : queries) {
        embedded_queries.push_back(index.shared_neighborhood()
                                       ? embed(index.embedding(), q)
                                       : embed(index.embedding(), mask_sensor(q, j)));
    }

    volatile double sink = 0.0;  // keep results live
    const auto t0 = clock::now();
    for (int rep = 0; rep < repetitions; ++rep) {
        for (const Window& q : queries) {
            sink = sink + index.knn_in_space(q, j, K, RetrievalSpace::input).distances.front();
        }
    }
    const auto t1 = clock::now();
    for (int rep = 0; rep < repetitions; ++rep) {
        for (const Eigen::VectorXd& e : embedded_queries) {
            sink = sink + index.knn_embedded_vector(e, j, K).distances.front();
        }
    }
    const auto t2 = clock::now();
    (void)sink;

    const double n = static_cast<double>(queries.size()) * repetitions;
    QueryCostReport report;
    report.input_mean_us =
        std::chrono::duration<double, std::micro>(t1 - t0).count() / n;
    report.embedded_mean_us =
        std::chrono::duration<double, std::micro>(t2 - t1).count() / n;
    report.speedup = report.input_mean_us / report.embedded_mean_us;
    report.queries = static_cast<int>(queries.size());
    report.repetitions = repetitions;
    report.reference_count = index.size();
    report.input_dim = index.window_length() * index.dim();
    report.embedded_dim = index.embedding().output_dim;
    return report;
}

}  // namespace tsrca
