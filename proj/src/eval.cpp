#include "tid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tid::eval {

using json = nlohmann::json;

int recall_at_k(const RankedPrediction& prediction, const std::string& target, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    auto end = prediction.grounded_items.begin() +
               std::min<size_t>(k, prediction.grounded_items.size());
    return std::find(prediction.grounded_items.begin(), end, target) != end ? 1 : 0;
}

double ndcg_at_k(const RankedPrediction& prediction, const std::string& target, int k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    size_t limit = std::min<size_t>(k, prediction.grounded_items.size());
    for (size_t i = 0; i < limit; ++i) {
        if (prediction.grounded_items[i] == target)
            return 1.0 / std::log2(double(i) + 2.0);  // rank i+1, IDCG = 1
    }
    return 0.0;
}

double valid_rate_at_k(const std::vector<RankedPrediction>& predictions, int k, bool pooled) {
    double user_sum = 0.0;
    std::uint64_t users = 0, pooled_valid = 0, pooled_total = 0;
    for (const auto& p : predictions) {
        size_t limit = std::min<size_t>(k, p.candidates.size());
        if (limit == 0) {
            ++users;  // no candidates: contributes 0
            continue;
        }
        std::uint64_t valid = 0;
        for (size_t i = 0; i < limit; ++i)
            if (p.candidates[i].valid) ++valid;
        user_sum += double(valid) / double(limit);
        pooled_valid += valid;
        pooled_total += limit;
        ++users;
    }
    if (pooled) return pooled_total ? double(pooled_valid) / double(pooled_total) : 0.0;
    return users ? user_sum / double(users) : 0.0;
}

double direct_hit_rate_at_k(const std::vector<RankedPrediction>& predictions, int k,
                            bool pooled) {
    double user_sum = 0.0;
    std::uint64_t users_with_hits = 0, pooled_direct = 0, pooled_grounded = 0;
    for (const auto& p : predictions) {
        size_t limit = std::min<size_t>(k, p.candidates.size());
        std::uint64_t grounded = 0, direct = 0;
        for (size_t i = 0; i < limit; ++i) {
            if (p.candidates[i].track == grounding::Track::None) continue;
            ++grounded;
            if (p.candidates[i].track == grounding::Track::Direct) ++direct;
        }
        if (grounded == 0) continue;  // excluded from the average
        user_sum += double(direct) / double(grounded);
        pooled_direct += direct;
        pooled_grounded += grounded;
        ++users_with_hits;
    }
    if (pooled) return pooled_grounded ? double(pooled_direct) / double(pooled_grounded) : 0.0;
    return users_with_hits ? user_sum / double(users_with_hits) : 0.0;
}

MetricsReport aggregate(const std::vector<RankedPrediction>& predictions,
                        const std::vector<std::string>& targets, const std::vector<int>& ks,
                        bool pooled_rates) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("aggregate: predictions/targets size mismatch");
    MetricsReport report;
    report.num_users = predictions.size();
    for (const auto& p : predictions)
        if (p.generation_failed) ++report.num_failed;
    for (int k : ks) {
        double recall = 0.0, ndcg = 0.0;
        for (size_t i = 0; i < predictions.size(); ++i) {
            recall += recall_at_k(predictions[i], targets[i], k);
            ndcg += ndcg_at_k(predictions[i], targets[i], k);
        }
        size_t n = predictions.size();
        report.recall_at[k] = n ? recall / double(n) : 0.0;
        report.ndcg_at[k] = n ? ndcg / double(n) : 0.0;
        report.vr_at[k] = valid_rate_at_k(predictions, k, pooled_rates);
        report.dhr_at[k] = direct_hit_rate_at_k(predictions, k, pooled_rates);
    }
    return report;
}

EvaluateResult evaluate(const std::vector<iift::EvalSample>& samples,
                        services::GenerationClient& client,
                        const grounding::CandidateLibrary& library,
                        const EvaluateOptions& options) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    if (options.ks.empty()) throw std::invalid_argument("evaluate: no K values");
    int beam = *std::max_element(options.ks.begin(), options.ks.end());

    EvaluateResult result;
    std::vector<std::string> targets;
    for (const auto& sample : samples) {
        RankedPrediction pred;
        pred.user_id = sample.user_id;
        pred.target_item_id = sample.target_item_id;

        services::GenerationRequest request;
        request.system_text = sample.instruction;
        request.user_text = sample.input;
        request.max_new_tokens = options.max_new_tokens;
        request.num_return_sequences = beam;

        try {
            auto raw = client.generate(request);
            auto beam_result =
                grounding::ground_beam(raw, library, beam, options.n_terms);
            pred.grounded_items = std::move(beam_result.ranked_items);
            pred.candidates = std::move(beam_result.candidates);
        } catch (const services::ServiceError&) {
            pred.generation_failed = true;  // counted as all-zero metrics, never dropped
        }
        result.predictions.push_back(std::move(pred));
        targets.push_back(sample.target_item_id);
    }

    result.report = aggregate(result.predictions, targets, options.ks, options.pooled_rates);

    if (!options.details_path.empty()) {
        std::ofstream out(options.details_path);
        if (!out) throw std::runtime_error("cannot write " + options.details_path);
        out << "user_id\ttarget\tranked_items\tvalidity\ttracks\n";
        for (const auto& p : result.predictions) {
            out << p.user_id << '\t' << p.target_item_id << '\t';
            for (size_t i = 0; i < p.grounded_items.size(); ++i)
                out << (i ? "," : "") << p.grounded_items[i];
            out << '\t';
            for (size_t i = 0; i < p.candidates.size(); ++i)
                out << (i ? "," : "") << (p.candidates[i].valid ? '1' : '0');
            out << '\t';
            for (size_t i = 0; i < p.candidates.size(); ++i)
                out << (i ? "," : "") << grounding::track_name(p.candidates[i].track);
            out << '\n';
        }
    }
    return result;
}

void write_report_json(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    json j;
    for (const auto& [k, v] : report.recall_at) j["recall@" + std::to_string(k)] = v;
    for (const auto& [k, v] : report.ndcg_at) j["ndcg@" + std::to_string(k)] = v;
    for (const auto& [k, v] : report.vr_at) j["vr@" + std::to_string(k)] = v;
    for (const auto& [k, v] : report.dhr_at) j["dhr@" + std::to_string(k)] = v;
    j["num_users"] = report.num_users;
    j["num_failed"] = report.num_failed;
    out << j.dump(2) << '\n';
}

}  // namespace tid::eval
