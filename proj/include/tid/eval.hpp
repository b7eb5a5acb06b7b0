#pragma once

#include <map>
#include <string>
#include <vector>

#include "tid/grounding.hpp"
#include "tid/iift.hpp"
#include "tid/services.hpp"

namespace tid::eval {

struct RankedPrediction {
    std::string user_id;
    std::string target_item_id;
    std::vector<std::string> grounded_items;          // deduplicated, rank order
    std::vector<grounding::BeamCandidate> candidates;  // per raw beam string
    bool generation_failed = false;
};

struct MetricsReport {
    std::map<int, double> recall_at;
    std::map<int, double> ndcg_at;
    std::map<int, double> vr_at;
    std::map<int, double> dhr_at;
    std::uint64_t num_users = 0;
    std::uint64_t num_failed = 0;  // generation failures, counted as all-zero
};

int recall_at_k(const RankedPrediction& prediction, const std::string& target, int k);
double ndcg_at_k(const RankedPrediction& prediction, const std::string& target, int k);

// Fraction of the first k raw candidates per user that exactly match a library
// TID, averaged per user (pooled=false) or over all candidates (pooled=true).
double valid_rate_at_k(const std::vector<RankedPrediction>& predictions, int k,
                       bool pooled = false);

// Among the first k candidates per user that grounded (track != none), the
// fraction handled by the direct track; users with no successful grounding are
// excluded from the average.
double direct_hit_rate_at_k(const std::vector<RankedPrediction>& predictions, int k,
                            bool pooled = false);

struct EvaluateOptions {
    std::vector<int> ks = {5, 10};
    int n_terms = 5;
    int max_new_tokens = 30;
    bool pooled_rates = false;
    std::string details_path;  // details.tsv; empty disables
};

struct EvaluateResult {
    MetricsReport report;
    std::vector<RankedPrediction> predictions;
};

EvaluateResult evaluate(const std::vector<iift::EvalSample>& samples,
                        services::GenerationClient& client,
                        const grounding::CandidateLibrary& library,
                        const EvaluateOptions& options);

MetricsReport aggregate(const std::vector<RankedPrediction>& predictions,
                        const std::vector<std::string>& targets, const std::vector<int>& ks,
                        bool pooled_rates = false);

void write_report_json(const MetricsReport& report, const std::string& path);

}  // namespace tid::eval
