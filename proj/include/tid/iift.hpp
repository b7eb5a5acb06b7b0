#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tid/corpus.hpp"
#include "tid/ctg.hpp"

namespace tid::iift {

// Metadata -> TID internalization sample.
struct GtiSample {
    std::string instruction;
    std::string input;   // metadata_text, no neighbor context
    std::string output;  // canonical TID string
};

// Sequence-prediction sample: anchor item in the input, the rest of the
// trajectory in the output. loss_start is the character offset into
// instruction + "\n" + input + "\n" + output where loss-bearing text begins.
struct SeqSample {
    std::string instruction;
    std::string input;
    std::string output;
    size_t loss_start = 0;
};

struct EvalSample {
    std::string user_id;
    std::string instruction;
    std::string input;  // rendered history
    std::string target_tid;
    std::string target_item_id;
    std::string domain_tag;  // cross-domain runs: which domain's target
};

// "<canonical TID>; <title>" with newlines in the title flattened, so the
// newline delimiter between renderings stays unambiguous.
std::string render_item(const ctg::TermIdSequence& tid, const std::string& title);

extern const char* kGtiInstruction;
extern const char* kSeqInstruction;
extern const char* kEvalInstruction;
extern const char* kInstructionVersion;

struct BuildCounts {
    std::uint64_t emitted = 0;
    std::uint64_t skipped = 0;
};

std::vector<GtiSample> build_gti_samples(const std::vector<corpus::ItemRecord>& items,
                                         const ctg::TidMap& tids, BuildCounts* counts = nullptr);

// One sample per user over the training prefix (truncated to max_history
// items, most recent kept). Prefixes shorter than 2 are skipped. With
// per_step, additionally emits one sample per intermediate position k
// (input = renderings of x_1..x_{k-1}, output = x_k).
std::vector<SeqSample> build_seq_samples(const std::vector<corpus::InteractionSequence>& sequences,
                                         const ctg::TidMap& tids,
                                         const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
                                         size_t max_history = 20,
                                         BuildCounts* counts = nullptr,
                                         bool per_step = false);

enum class EvalMode { Valid, Test };

std::vector<EvalSample> build_eval_samples(const std::vector<corpus::InteractionSequence>& sequences,
                                           const ctg::TidMap& tids,
                                           const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
                                           EvalMode mode, size_t max_history = 20,
                                           BuildCounts* counts = nullptr);

// Cross-domain variant: the target is the last item of `domain` in each merged
// sequence; everything before it (all domains) is history.
std::vector<EvalSample> build_eval_samples_for_domain(
    const std::vector<corpus::InteractionSequence>& sequences, const ctg::TidMap& tids,
    const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
    const std::string& domain, size_t max_history = 20, BuildCounts* counts = nullptr);

// GTI and Seq samples interleaved by a seeded shuffle, one JSON object per line.
void export_train_jsonl(const std::vector<GtiSample>& gti, const std::vector<SeqSample>& seq,
                        const std::string& path, std::uint64_t shuffle_seed);

void export_eval_jsonl(const std::vector<EvalSample>& samples, const std::string& path);
std::vector<EvalSample> load_eval_jsonl(const std::string& path);

// Reference hyperparameters for the external trainer; not acted on here.
void write_train_config(const std::string& path);

}  // namespace tid::iift
