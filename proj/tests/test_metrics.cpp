#include "tsrca/metrics.hpp"

#include <doctest.h>

#include <random>

using namespace tsrca;

namespace {

RankedAttribution ranked_from(std::initializer_list<double> phi) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(phi.size()));
    Eigen::Index i = 0;
    for (double x : phi) v[i++] = x;
    return rank_attributions(v);
}

}  // namespace

TEST_CASE("rank_attributions: order, ties, degenerate zeros") {
    SUBCASE("descending magnitude") {
        const RankedAttribution r = ranked_from({0.1, -0.9, 0.5});
        CHECK(r.ranking == std::vector<int>{1, 2, 0});
        CHECK(r.scores[1] == 0.9);  // scores hold |phi|
    }
    SUBCASE("ties broken by ascending sensor index") {
        const RankedAttribution r = ranked_from({0.5, 0.7, 0.5, 0.7});
        CHECK(r.ranking == std::vector<int>{1, 3, 0, 2});
    }
    SUBCASE("all-zero attribution ranks by ascending index") {
        const RankedAttribution r = ranked_from({0.0, 0.0, 0.0});
        CHECK(r.ranking == std::vector<int>{0, 1, 2});
    }
    SUBCASE("signed ranking keeps absolute scores") {
        Eigen::VectorXd v(3);
        v << 0.1, -0.9, 0.5;
        const RankedAttribution r = rank_attributions(v, /*signed_ranking=*/true);
        CHECK(r.ranking == std::vector<int>{2, 0, 1});  // by raw value
        CHECK(r.scores[1] == 0.9);
    }
}

TEST_CASE("recall_at_k: weighted hit fractions") {
    SUBCASE("single true sensor ranked first") {
        CHECK(recall_at_k(ranked_from({0.9, 0.1, 0.0}), {0}, 1) == 1.0);
    }
    SUBCASE("one of two causes inside the top 3") {
        // 4 sensors; truth {0, 3}; only 0 makes the top-3
        const RankedAttribution r = ranked_from({0.5, 0.4, 0.3, 0.0});
        CHECK(recall_at_k(r, {0, 3}, 3) == 0.5);
    }
    SUBCASE("truth disjoint from the top-K") {
        CHECK(recall_at_k(ranked_from({0.0, 0.1, 0.9}), {0}, 1) == 0.0);
    }
    SUBCASE("empty truth rejected") {
        CHECK_THROWS_AS(recall_at_k(ranked_from({1.0}), {}, 1), std::invalid_argument);
    }
}

TEST_CASE("cw_rcs_at_k: confidence-weighted recall") {
    SUBCASE("hand evaluation") {
        CHECK(cw_rcs_at_k(ranked_from({0.6, 0.3, 0.1}), {0}, 1) == doctest::Approx(0.6));
    }
    SUBCASE("all mass on the single true cause") {
        CHECK(cw_rcs_at_k(ranked_from({1.0, 0.0, 0.0}), {0}, 1) == 1.0);
    }
    SUBCASE("zero attribution mass scores zero") {
        CHECK(cw_rcs_at_k(ranked_from({0.0, 0.0}), {0}, 1) == 0.0);
    }
}

TEST_CASE("cw_rcs is bounded by recall on 1000 random instances") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 12);
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
        const RankedAttribution r = rank_attributions(phi);
        CHECK(cw_rcs_at_k(r, truth, K) <= recall_at_k(r, truth, K));  // exact comparison
    }
}

TEST_CASE("recall and cw_rcs are nondecreasing in K; ranking is scale-free") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng() % 8);
        Eigen::VectorXd phi(d);
        for (int j = 0; j < d; ++j) phi[j] = uniform(rng) * 2.0 - 1.0;
        std::vector<int> truth = {static_cast<int>(rng() % d)};
        const RankedAttribution r = rank_attributions(phi);
        for (int K = 2; K <= d; ++K) {
            CHECK(recall_at_k(r, truth, K) >= recall_at_k(r, truth, K - 1));
            CHECK(cw_rcs_at_k(r, truth, K) >= cw_rcs_at_k(r, truth, K - 1));
        }
        const RankedAttribution scaled = rank_attributions(7.5 * phi);
        CHECK(scaled.ranking == r.ranking);
        for (int K = 1; K <= d; ++K) {
            CHECK(recall_at_k(scaled, truth, K) == recall_at_k(r, truth, K));
            CHECK(cw_rcs_at_k(scaled, truth, K) ==
                  doctest::Approx(cw_rcs_at_k(r, truth, K)).epsilon(1e-12));
        }
    }
}

TEST_CASE("early_and_persistence") {
    const RankedAttribution hit = ranked_from({1.0, 0.0});   // sensor 0 on top
    const RankedAttribution miss = ranked_from({0.0, 1.0});  // sensor 1 on top

    SUBCASE("identified at onset and throughout") {
        const std::vector<RankedAttribution> seq(5, hit);
        const EarlyPersistence ep = early_and_persistence(seq, {0}, 1);
        CHECK(ep.early == 1.0);
        CHECK(ep.persistence == 1.0);
    }
    SUBCASE("never identified") {
        const std::vector<RankedAttribution> seq(5, miss);
        const EarlyPersistence ep = early_and_persistence(seq, {0}, 1);
        CHECK(ep.early == 0.0);
        CHECK(ep.persistence == 0.0);
    }
    SUBCASE("first hit at t0+4, six of ten timesteps hit") {
        std::vector<RankedAttribution> seq;
        for (int t = 0; t < 10; ++t) {
            const bool is_hit = t == 4 || t == 5 || t == 6 || t == 7 || t == 8 || t == 9;
            seq.push_back(is_hit ? hit : miss);
        }
        const EarlyPersistence ep = early_and_persistence(seq, {0}, 1);
        CHECK(ep.early == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(ep.persistence == doctest::Approx(0.6).epsilon(1e-12));
    }
    SUBCASE("empty rankings rejected") {
        CHECK_THROWS_AS(early_and_persistence({}, {0}, 1), std::invalid_argument);
    }
}

TEST_CASE("temporal_hm: fixed points and hand values") {
    CHECK(temporal_hm(1.0, 1.0, 1.0, 0.0) == 1.0);
    CHECK(temporal_hm(1.0, 0.0, 1.0, 0.0) == 0.0);
    CHECK(temporal_hm(0.8, 0.5, 1.0, 0.0) == doctest::Approx(0.8 / 1.3).epsilon(1e-12));
    CHECK_THROWS_AS(temporal_hm(0.5, 0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(temporal_hm(0.5, 0.5, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("temporal_hm: range and F-beta limits") {
    const double grid[] = {0.25, 0.5, 0.75, 1.0};
    for (double E : grid) {
        for (double A : grid) {
            const double hm = temporal_hm(E, A);
            CHECK(hm >= 0.0);
            CHECK(hm <= 1.0);
            CHECK(hm <= std::max(E, A) + 1e-12);
            // beta -> 0 weights the E factor, beta -> inf the A factor
            CHECK(std::abs(temporal_hm(E, A, 0.01) - E) < 0.05);
            CHECK(std::abs(temporal_hm(E, A, 100.0) - A) < 0.05);
        }
    }
}

TEST_CASE("evaluate_event: per-event block from per-window rankings") {
    AnomalyEvent event;
    event.onset = 10;
    event.duration = 3;
    event.ground_truth = {0};
    const int w = 4;  // windows ending at t=10,11,12 start at 7,8,9

    std::vector<std::pair<std::int64_t, RankedAttribution>> per_window;
    per_window.emplace_back(7, ranked_from({0.0, 1.0}));   // miss at t=10
    per_window.emplace_back(8, ranked_from({1.0, 0.2}));   // hit at t=11
    per_window.emplace_back(9, ranked_from({0.9, 0.1}));   // hit at t=12
    per_window.emplace_back(10, ranked_from({0.8, 0.2}));  // extra window past the event

    const EventEvaluation ev =
        evaluate_event(event, per_window, w, {1, 2}, 1.0, 0.0, 1);
    CHECK(ev.recall_at.at(1) == doctest::Approx(0.75));  // 3 of 4 windows hit at K=1
    CHECK(ev.recall_at.at(2) == doctest::Approx(1.0));
    CHECK(ev.early == doctest::Approx(1.0 - 1.0 / 3.0));
    CHECK(ev.persistence == doctest::Approx(2.0 / 3.0));
    CHECK(ev.identified_sensors == std::set<int>{0});
    CHECK(ev.temporal_hm_at.at(1) ==
          doctest::Approx(temporal_hm(2.0 / 3.0, 2.0 / 3.0, 1.0, 0.0)));

    SUBCASE("missing timestep ranking is an error") {
        per_window.erase(per_window.begin() + 1);  // drop the window ending at t=11
        CHECK_THROWS_WITH_AS(evaluate_event(event, per_window, w, {1}, 1.0, 0.0, 1),
                             doctest::Contains("missing ranking"), std::runtime_error);
    }
}

TEST_CASE("evaluate_dataset: window-level and event-level conventions disagree and both are kept") {
    AnomalyEvent e1{10, 1, {0}};
    AnomalyEvent e2{20, 1, {0}};
    const int w = 1;  // windows coincide with timesteps

    std::vector<EventEvaluation> evs;
    {
        std::vector<std::pair<std::int64_t, RankedAttribution>> pw;
        pw.emplace_back(10, ranked_from({1.0, 0.0}));  // recall 1.0
        evs.push_back(evaluate_event(e1, pw, w, {1}, 1.0, 0.0, 1));
    }
    {
        std::vector<std::pair<std::int64_t, RankedAttribution>> pw;
        pw.emplace_back(19, ranked_from({0.0, 1.0}));  // recall 0.0
        pw.emplace_back(20, ranked_from({0.0, 1.0}));  // recall 0.0
        evs.push_back(evaluate_event(e2, pw, w, {1}, 1.0, 0.0, 1));
    }
    const MetricsReport report = evaluate_dataset(evs);
    CHECK(report.window_recall_at.at(1) == doctest::Approx(1.0 / 3.0));
    CHECK(report.event_recall_at.at(1) == doctest::Approx(0.5));
    for (const auto& [K, v] : report.window_recall_at) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    SUBCASE("single event, single window: dataset equals the window") {
        const MetricsReport solo = evaluate_dataset({evs[0]});
        CHECK(solo.window_recall_at.at(1) == 1.0);
        CHECK(solo.event_recall_at.at(1) == 1.0);
    }
}
