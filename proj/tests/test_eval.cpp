#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "tid/eval.hpp"
#include "tid/synthetic.hpp"

using namespace tid;
using namespace tid::eval;
using grounding::BeamCandidate;
using grounding::Track;
using json = nlohmann::json;

namespace {

// Prediction whose grounded list has `target` at 1-based rank `rank` among
// `length` items; rank 0 means the target never appears.
RankedPrediction at_rank(const std::string& target, int rank, int length = 10) {
    RankedPrediction p;
    p.user_id = "u";
    p.target_item_id = target;
    for (int i = 1; i <= length; ++i) {
        if (i == rank)
            p.grounded_items.push_back(target);
        else
            p.grounded_items.push_back("filler" + std::to_string(i));
    }
    return p;
}

RankedPrediction with_tracks(std::initializer_list<Track> tracks) {
    RankedPrediction p;
    for (Track t : tracks) {
        BeamCandidate c;
        c.track = t;
        c.valid = (t == Track::Direct);
        p.candidates.push_back(c);
    }
    return p;
}

}  // namespace

TEST_CASE("recall and ndcg at trivial ranks") {
    auto first = at_rank("t", 1);
    CHECK(recall_at_k(first, "t", 5) == 1);
    CHECK(ndcg_at_k(first, "t", 5) == doctest::Approx(1.0).epsilon(1e-12));

    auto third = at_rank("t", 3);
    CHECK(recall_at_k(third, "t", 5) == 1);
    CHECK(ndcg_at_k(third, "t", 5) == doctest::Approx(0.5).epsilon(1e-12));  // 1/log2(4)

    auto sixth = at_rank("t", 6);
    CHECK(recall_at_k(sixth, "t", 5) == 0);
    CHECK(ndcg_at_k(sixth, "t", 5) == 0.0);
    CHECK(recall_at_k(sixth, "t", 10) == 1);

    auto missing = at_rank("t", 0);
    CHECK(recall_at_k(missing, "t", 10) == 0);
    CHECK(ndcg_at_k(missing, "t", 10) == 0.0);

    RankedPrediction empty;
    CHECK(recall_at_k(empty, "t", 5) == 0);
    CHECK(ndcg_at_k(empty, "t", 5) == 0.0);
    CHECK_THROWS(recall_at_k(empty, "t", 0));
    CHECK_THROWS(ndcg_at_k(empty, "t", 0));
}

TEST_CASE("metrics are monotone in K and ndcg never exceeds recall") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        int rank = int(rng() % 13);  // 0 = absent, up to beyond the list
        auto p = at_rank("t", rank, 10);
        double prev_recall = 0, prev_ndcg = 0;
        for (int k = 1; k <= 12; ++k) {
            double r = recall_at_k(p, "t", k);
            double n = ndcg_at_k(p, "t", k);
            CHECK(r >= prev_recall);
            CHECK(n >= prev_ndcg);
            CHECK(n <= r + 1e-12);
            CHECK(r <= 1.0);
            prev_recall = r;
            prev_ndcg = n;
        }
    }
}

TEST_CASE("ten-user rank fixture reproduces frozen aggregates") {
    // Target ranks per user; 0 means the target never shows up.
    std::vector<int> ranks = {1, 2, 3, 6, 0, 1, 4, 10, 2, 5};
    std::vector<RankedPrediction> predictions;
    std::vector<std::string> targets;
    for (size_t i = 0; i < ranks.size(); ++i) {
        std::string target = "target" + std::to_string(i);
        predictions.push_back(at_rank(target, ranks[i]));
        targets.push_back(target);
    }
    auto report = aggregate(predictions, targets, {5, 10});

    // Ranks within the top 5: 1,2,3,1,4,2,5 -> 7 of 10 users.
    CHECK(report.recall_at[5] == 7.0 / 10.0);
    CHECK(report.recall_at[10] == 9.0 / 10.0);

    // Frozen independent sum of 1/log2(rank+1) over the fixture, divided by 10.
    CHECK(report.ndcg_at[10] == doctest::Approx(0.522466088587676).epsilon(1e-9));
    CHECK(report.ndcg_at[5] <= report.ndcg_at[10]);
    CHECK(report.num_users == 10);
    CHECK(report.num_failed == 0);
}

TEST_CASE("valid rate averages per user and counts empty beams as zero") {
    RankedPrediction mixed;
    for (int i = 0; i < 10; ++i) {
        BeamCandidate c;
        c.valid = (i % 2 == 0);  // 5 of 10 valid
        mixed.candidates.push_back(c);
    }
    RankedPrediction empty;  // generation produced nothing

    std::vector<RankedPrediction> predictions = {mixed, empty};
    CHECK(valid_rate_at_k(predictions, 10) == doctest::Approx(0.25));      // (0.5 + 0) / 2
    CHECK(valid_rate_at_k(predictions, 10, true) == doctest::Approx(0.5));  // 5 / 10 pooled

    // K below the beam width restricts the window: first 4 candidates of
    // `mixed` are valid at indices 0 and 2.
    CHECK(valid_rate_at_k({mixed}, 4) == doctest::Approx(0.5));
    CHECK(valid_rate_at_k({}, 5) == 0.0);
}

TEST_CASE("direct hit rate excludes users with no grounded candidates") {
    auto a = with_tracks({Track::Direct, Track::Structural, Track::None, Track::Direct});
    auto b = with_tracks({Track::None, Track::None});
    auto c = with_tracks({Track::Structural});

    // b has zero grounded candidates and leaves the denominator entirely.
    CHECK(direct_hit_rate_at_k({a, b}, 10) == doctest::Approx(2.0 / 3.0));
    CHECK(direct_hit_rate_at_k({a, b, c}, 10) == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0));
    CHECK(direct_hit_rate_at_k({a, b, c}, 10, true) == doctest::Approx(2.0 / 4.0));
    CHECK(direct_hit_rate_at_k({b}, 10) == 0.0);

    // K=1 looks only at the first candidate.
    CHECK(direct_hit_rate_at_k({a}, 1) == doctest::Approx(1.0));
}

TEST_CASE("aggregate rejects mismatched inputs") {
    CHECK_THROWS(aggregate({RankedPrediction{}}, {}, {5}));
}

namespace {

class ThrowingClient : public services::GenerationClient {
public:
    std::vector<std::string> generate(const services::GenerationRequest&) override {
        throw services::ServiceError("backend unreachable");
    }
};

grounding::CandidateLibrary three_item_library() {
    ctg::TidMap tids{{"x", ctg::TermIdSequence{{"A", "B", "C", "D", "E"}}},
                     {"y", ctg::TermIdSequence{{"F", "G", "H", "I", "J"}}},
                     {"z", ctg::TermIdSequence{{"K", "L", "M", "N", "O"}}}};
    return grounding::build_library(tids, {});
}

std::vector<iift::EvalSample> three_samples() {
    std::vector<iift::EvalSample> samples;
    const char* targets[] = {"x", "y", "z"};
    const char* tids[] = {"A, B, C, D, E", "F, G, H, I, J", "K, L, M, N, O"};
    for (int i = 0; i < 3; ++i) {
        iift::EvalSample s;
        s.user_id = "user" + std::to_string(i);
        s.instruction = "predict";
        s.input = "history of user " + std::to_string(i);
        s.target_tid = tids[i];
        s.target_item_id = targets[i];
        samples.push_back(s);
    }
    return samples;
}

}  // namespace

TEST_CASE("evaluate scores a scripted generator against the library") {
    auto library = three_item_library();
    auto samples = three_samples();

    synthetic::ScriptedGenerator client({"A, B, C, D, E"});
    for (const auto& s : samples) client.script(s.input, {s.target_tid});

    EvaluateOptions options;
    options.details_path =
        (std::filesystem::temp_directory_path() / "eval_details_test.tsv").string();
    auto result = evaluate(samples, client, library, options);

    CHECK(result.report.recall_at[5] == doctest::Approx(1.0));
    CHECK(result.report.ndcg_at[5] == doctest::Approx(1.0));
    CHECK(result.report.vr_at[10] == doctest::Approx(1.0));
    CHECK(result.report.dhr_at[10] == doctest::Approx(1.0));
    CHECK(result.report.num_failed == 0);
    CHECK(result.predictions.size() == 3);

    std::ifstream details(options.details_path);
    std::string header;
    std::getline(details, header);
    CHECK(header == "user_id\ttarget\tranked_items\tvalidity\ttracks");
    int rows = 0;
    std::string line;
    while (std::getline(details, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(options.details_path);
}

TEST_CASE("evaluate counts generation failures as all-zero users") {
    auto library = three_item_library();
    auto samples = three_samples();
    ThrowingClient client;
    auto result = evaluate(samples, client, library, EvaluateOptions{});
    CHECK(result.report.num_failed == 3);
    CHECK(result.report.num_users == 3);
    CHECK(result.report.recall_at[5] == 0.0);
    CHECK(result.report.ndcg_at[10] == 0.0);
    for (const auto& p : result.predictions) CHECK(p.generation_failed);
}

TEST_CASE("evaluate rejects empty inputs") {
    auto library = three_item_library();
    ThrowingClient client;
    CHECK_THROWS(evaluate({}, client, library, EvaluateOptions{}));
    EvaluateOptions no_ks;
    no_ks.ks.clear();
    CHECK_THROWS(evaluate(three_samples(), client, library, no_ks));
}

TEST_CASE("report json uses metric@k keys") {
    MetricsReport report;
    report.recall_at[5] = 0.7;
    report.ndcg_at[10] = 0.52;
    report.vr_at[5] = 1.0;
    report.dhr_at[10] = 0.9;
    report.num_users = 10;
    auto path = (std::filesystem::temp_directory_path() / "report_test.json").string();
    write_report_json(report, path);
    std::ifstream in(path);
    json j = json::parse(in);
    CHECK(j["recall@5"] == 0.7);
    CHECK(j["ndcg@10"] == 0.52);
    CHECK(j["vr@5"] == 1.0);
    CHECK(j["dhr@10"] == 0.9);
    CHECK(j["num_users"] == 10);
    std::filesystem::remove(path);
}
