#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tid::corpus {

struct ItemRecord {
    std::string item_id;
    std::string title;
    std::string metadata_text;   // title / brand / categories / description, newline-joined
    std::string domain_tag;      // empty for single-domain corpora
};

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
    std::string domain_tag;
};

struct InteractionSequence {
    std::string user_id;
    std::vector<std::string> items;    // chronological, ties by input order
    std::vector<std::string> domains;  // parallel to items; empty strings for single-domain
};

struct Split {
    std::vector<std::string> train;
    std::string valid;
    std::string test;
};

struct CorpusStats {
    std::uint64_t user_count = 0;
    std::uint64_t item_count = 0;
    std::uint64_t interaction_count = 0;
    std::uint64_t dropped_short_sequences = 0;
    bool duplicates_kept = true;  // duplicate (user,item) pairs are distinct interactions
};

struct IngestResult {
    std::vector<ItemRecord> items;
    std::vector<InteractionRecord> interactions;
    std::uint64_t malformed_lines = 0;
    std::uint64_t dropped_unknown_item = 0;
    std::uint64_t dropped_empty_metadata = 0;
};

class EmptyCorpusError : public std::runtime_error {
public:
    explicit EmptyCorpusError(const std::string& what) : std::runtime_error(what) {}
};

// Line-delimited JSON ingestion. Metadata lines: item_id, title, description,
// categories (list of lists), brand. Review lines: user_id, item_id, timestamp.
// Interactions referencing unknown items and items with empty metadata are dropped
// with counters; malformed lines are skipped with a warning counter.
IngestResult ingest(const std::string& metadata_path,
                    const std::string& reviews_path,
                    const std::string& domain_tag = "");

// Assembles metadata_text from the raw fields: title, brand, categories
// (inner lists joined by " > "), description, newline-separated.
std::string assemble_metadata_text(const std::string& title,
                                   const std::string& brand,
                                   const std::vector<std::vector<std::string>>& categories,
                                   const std::string& description);

// Iterative peeling: remove users and items with < k interactions until fixpoint.
// Throws EmptyCorpusError if a nonempty input filters down to nothing.
std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& interactions,
                                             int k);

struct SequenceBuildResult {
    std::vector<InteractionSequence> sequences;  // sorted by user_id
    std::uint64_t dropped_short = 0;             // users with fewer than 3 interactions
};

// One sequence per user, items sorted by timestamp ascending, ties by input order.
SequenceBuildResult build_sequences(const std::vector<InteractionRecord>& interactions);

// test = last, valid = second-to-last, train = everything before.
Split leave_one_out_split(const InteractionSequence& seq);

struct MergedCorpus {
    std::vector<InteractionSequence> sequences;  // overlapping users only
    std::string domain_a;
    std::string domain_b;
};

// Cross-domain merge over the user intersection. Timestamp ties: stable input
// order within a domain, domain_a before domain_b across domains.
MergedCorpus merge_cross_domain(const std::vector<InteractionRecord>& interactions_a,
                                const std::string& domain_a,
                                const std::vector<InteractionRecord>& interactions_b,
                                const std::string& domain_b);

// Last item of the given domain in a merged sequence (that domain's test target).
std::optional<std::string> domain_test_target(const InteractionSequence& seq,
                                              const std::string& domain);

CorpusStats compute_stats(const std::vector<ItemRecord>& items,
                          const std::vector<InteractionRecord>& interactions,
                          const SequenceBuildResult& built);

// Writes items.jsonl, sequences.jsonl, stats.json. Deterministic: items sorted
// by item_id, sequences by user_id.
void write_corpus_dir(const std::string& dir,
                      const std::vector<ItemRecord>& items,
                      const std::vector<InteractionSequence>& sequences,
                      const CorpusStats& stats);

struct LoadedCorpus {
    std::vector<ItemRecord> items;
    std::vector<InteractionSequence> sequences;
    std::unordered_map<std::string, ItemRecord> item_index;
};

LoadedCorpus load_corpus_dir(const std::string& dir);

}  // namespace tid::corpus
