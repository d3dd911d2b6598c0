#include "tsrca/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsrca {

double replacement_attribution(const Detector& detector, const NeighborIndex& index,
                               const Window& window, int j,
                               const std::vector<int>& donor_indices) {
    if (donor_indices.empty()) throw std::invalid_argument("replacement_attribution: no donors");
    const double base = score(detector, window);
    double total = 0.0;
    Window composite = window;
    for (int donor : donor_indices) {
        composite.data.col(j) = index.reference(donor).data.col(j);
        total += base - score(detector, composite);
    }
    return total / static_cast<double>(donor_indices.size());
}

double conditional_attribution(const Detector& detector, const NeighborIndex& index,
                               const Window& window, int j, int K) {
    const NeighborQueryResult neighbors = index.knn_conditional(window, j, K);
    return replacement_attribution(detector, index, window, j, neighbors.indices);
}

double marginal_attribution(const Detector& detector, const NeighborIndex& index,
                            const Window& window, int j, int K, std::uint64_t seed) {
    const NeighborQueryResult donors = index.knn_unconditional(K, seed);
    return replacement_attribution(detector, index, window, j, donors.indices);
}

namespace {

Eigen::VectorXd temporal_column(const Detector& detector, const NeighborIndex& index,
                                const Window& window, int j, int segment_length,
                                const std::vector<int>& donor_indices, double base) {
    const int w = window.length();
    const int s = segment_length;
    if (s < 1 || s > w) throw std::invalid_argument("temporal_attribution: need 1 <= s <= w");

    Eigen::VectorXd column = Eigen::VectorXd::Zero(w);
    Window composite = window;
    for (int tau = 0; tau < w; ++tau) {
        // slide the centered segment so it stays inside the window
        const int lo = std::clamp(tau - (s - 1) / 2, 0, w - s);
        double total = 0.0;
        for (int donor : donor_indices) {
            composite.data.col(j).segment(lo, s) =
                index.reference(donor).data.col(j).segment(lo, s);
            total += base - score(detector, composite);
            composite.data.col(j).segment(lo, s) = window.data.col(j).segment(lo, s);
        }
        column[tau] = total / static_cast<double>(donor_indices.size());
    }
    return column;
}

}  // namespace

Eigen::VectorXd temporal_attribution(const Detector& detector, const NeighborIndex& index,
                                     const Window& window, int j, int segment_length, int K) {
    const NeighborQueryResult neighbors = index.knn_conditional(window, j, K);
    const double base = score(detector, window);
    return temporal_column(detector, index, window, j, segment_length, neighbors.indices, base);
}

int AttributionTensor::peak_offset() const {
    const Eigen::VectorXd totals = time_totals();
    int best = 0;
    for (int tau = 1; tau < totals.size(); ++tau) {
        if (totals[tau] > totals[best]) best = tau;
    }
    return best;
}

AttributionTensor attribution_tensor(const Detector& detector, const NeighborIndex& index,
                                     const Window& window, int segment_length, int K) {
    AttributionTensor tensor;
    tensor.window_start = window.start;
    tensor.segment_length = segment_length;
    tensor.values.resize(window.length(), window.dim());
    const double base = score(detector, window);
    for (int j = 0; j < window.dim(); ++j) {
        const NeighborQueryResult neighbors = index.knn_conditional(window, j, K);
        tensor.values.col(j) =
            temporal_column(detector, index, window, j, segment_length, neighbors.indices, base);
    }
    return tensor;
}

Eigen::VectorXd sensor_attributions(const Detector& detector, const NeighborIndex& index,
                                    const Window& window, int K, Conditioning conditioning,
                                    std::uint64_t seed) {
    Eigen::VectorXd phi(window.dim());
    for (int j = 0; j < window.dim(); ++j) {
        if (conditioning == Conditioning::conditional) {
            phi[j] = conditional_attribution(detector, index, window, j, K);
        } else {
            // decorrelate draws across sensors, deterministically
            const std::uint64_t donor_seed =
                seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(j) + 1));
            phi[j] = marginal_attribution(detector, index, window, j, K, donor_seed);
        }
    }
    return phi;
}

double solve_assignment(const Eigen::MatrixXd& cost, std::vector<int>& row_to_col) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n || n == 0) throw std::invalid_argument("solve_assignment: square only");

    // Kuhn-Munkres with potentials, O(n^3), 1-based working arrays.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    row_to_col.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, row_to_col[i]);
    return total;
}

namespace {

// Lexicographic order on sample lists, used to canonicalize the argument
// order so W1(P,Q) and W1(Q,P) run the identical computation.
bool samples_less(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (Eigen::Index c = 0; c < a[i].size(); ++c) {
            if (a[i][c] < b[i][c]) return true;
            if (a[i][c] > b[i][c]) return false;
        }
    }
    return false;
}

}  // namespace

double wasserstein1_empirical(const std::vector<Eigen::VectorXd>& samples_p,
                              const std::vector<Eigen::VectorXd>& samples_q) {
    if (samples_p.empty()) throw std::invalid_argument("wasserstein1: empty sample sets");
    if (samples_p.size() != samples_q.size()) {
        throw std::invalid_argument("wasserstein1: sample counts differ (" +
                                    std::to_string(samples_p.size()) + " vs " +
                                    std::to_string(samples_q.size()) + ")");
    }
    if (samples_p.size() > 256) {
        throw std::invalid_argument("wasserstein1: caller must subsample to n <= 256");
    }
    const Eigen::Index dim = samples_p.front().size();
    for (const auto& s : samples_p) {
        if (s.size() != dim) throw std::invalid_argument("wasserstein1: ragged samples");
    }
    for (const auto& s : samples_q) {
        if (s.size() != dim) throw std::invalid_argument("wasserstein1: ragged samples");
    }

    const bool swap = samples_less(samples_q, samples_p);
    const auto& a = swap ? samples_q : samples_p;
    const auto& b = swap ? samples_p : samples_q;

    const int n = static_cast<int>(a.size());
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) cost(i, j) = (a[i] - b[j]).norm();
    }
    std::vector<int> assignment;
    return solve_assignment(cost, assignment) / static_cast<double>(n);
}

BiasBoundReport check_bias_bound(const Detector& detector, const NeighborIndex& index,
                                 const Window& window, int j, int K, std::uint64_t seed) {
    const std::optional<double> lipschitz = detector.column_lipschitz(j);
    if (!lipschitz) {
        throw std::invalid_argument(
            "check_bias_bound: detector does not expose a column Lipschitz constant");
    }

    const NeighborQueryResult cond = index.knn_conditional(window, j, K);
    const NeighborQueryResult marg = index.knn_unconditional(K, seed);

    const double phi_cond = replacement_attribution(detector, index, window, j, cond.indices);
    const double phi_marg = replacement_attribution(detector, index, window, j, marg.indices);

    auto donor_columns = [&](const std::vector<int>& indices) {
        std::vector<Eigen::VectorXd> columns;
        columns.reserve(indices.size());
        for (int i : indices) columns.push_back(index.reference(i).data.col(j));
        return columns;
    };

    BiasBoundReport report;
    report.sensor = j;
    report.bias = std::abs(phi_cond - phi_marg);
    report.lipschitz = *lipschitz;
    report.w1 = wasserstein1_empirical(donor_columns(cond.indices), donor_columns(marg.indices));
    report.bound = report.lipschitz * report.w1;
    report.holds = report.bias <= report.bound + 1e-9;
    return report;
}

}  // namespace tsrca
