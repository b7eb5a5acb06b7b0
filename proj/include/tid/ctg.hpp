#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tid/corpus.hpp"
#include "tid/services.hpp"

namespace tid::ctg {

// A Term ID: ordered list of normalized terms (Capitalized-Hyphenated ASCII).
struct TermIdSequence {
    std::vector<std::string> terms;

    bool operator==(const TermIdSequence&) const = default;
};

// Canonical serialization: terms joined by ", ".
std::string canonical(const TermIdSequence& tid);

// Normalizes one raw token: trims, maps spaces to hyphens, strips characters
// outside [A-Za-z0-9-], collapses hyphen runs, capitalizes each hyphen segment.
// Returns nullopt if nothing valid remains or the result exceeds 40 chars.
std::optional<std::string> normalize_term(const std::string& raw);

bool is_canonical_term(const std::string& term);

double cosine_similarity(const services::EmbeddingVector& a, const services::EmbeddingVector& b);

struct Neighbor {
    std::string item_id;
    double score = 0.0;
};

struct NeighborSet {
    std::string item_id;
    std::vector<Neighbor> neighbors;  // descending score, ties by item_id
    bool shortfall = false;           // fewer than k candidates existed
};

// Exact top-k scan over all embedded items (the target excluded).
NeighborSet top_k_neighbors(const std::string& item_id,
                            const std::map<std::string, services::EmbeddingVector>& embeddings,
                            int k);

struct NeighborContext {
    corpus::ItemRecord record;
    std::optional<TermIdSequence> tid;  // exemplar, when already assigned
};

struct Prompt {
    std::string system_text;
    std::string user_text;
};

Prompt build_ctg_prompt(const corpus::ItemRecord& target,
                        const std::vector<NeighborContext>& neighbors, int n_terms);

// Extracts the last schema-matching line, normalizes and deduplicates tokens;
// accepts iff exactly n unique valid terms remain.
std::optional<TermIdSequence> parse_tid_response(const std::string& raw, int n_terms);

// Lenient variant for beam candidates: accepts 1..n_terms valid terms,
// skipping unparseable tokens and truncating overlong lines.
std::optional<TermIdSequence> parse_tid_lenient(const std::string& raw, int n_terms);

struct CtgOptions {
    int k = 5;                    // neighborhood size
    int n_terms = 5;              // TID length
    int parse_retries = 3;        // generation retries per item on parse failure
    int checkpoint_every = 500;   // items between checkpoint flushes
    bool exemplar_feedback = true;
    std::string checkpoint_path;  // ctg.ckpt.jsonl; empty disables checkpointing
    std::string failures_path;    // ctg.failures.jsonl
};

using TidMap = std::map<std::string, TermIdSequence>;

struct CtgResult {
    TidMap tids;
    std::uint64_t failed_items = 0;
    std::uint64_t resumed_items = 0;
};

// Runs term generation over the whole corpus in descending popularity order,
// feeding already-assigned neighbor TIDs into later prompts. Resumes from the
// checkpoint file if present.
CtgResult generate_all_tids(const std::vector<corpus::ItemRecord>& items,
                            const std::map<std::string, services::EmbeddingVector>& embeddings,
                            const std::unordered_map<std::string, std::uint64_t>& popularity,
                            services::GenerationClient& client, const CtgOptions& options);

void write_tids_jsonl(const std::string& path, const TidMap& tids);
TidMap load_tids_jsonl(const std::string& path);

}  // namespace tid::ctg
