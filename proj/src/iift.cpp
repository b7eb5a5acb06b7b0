#include "tid/iift.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace tid::iift {

using json = nlohmann::json;

const char* kGtiInstruction =
    "Given the item description below, produce its standardized term identifier: "
    "a single line of comma-separated terms.";
const char* kSeqInstruction =
    "The user interacted with the following item first. Continue their interaction "
    "history by listing each subsequent item as 'terms; title', one per line.";
const char* kEvalInstruction =
    "Given the user's interaction history below (one item per line as 'terms; title'), "
    "output the term identifier of the next item they will interact with.";
const char* kInstructionVersion = "v1";

std::string render_item(const ctg::TermIdSequence& tid, const std::string& title) {
    std::string flat_title = title;
    for (char& c : flat_title)
        if (c == '\n' || c == '\r') c = ' ';
    return ctg::canonical(tid) + "; " + flat_title;
}

std::vector<GtiSample> build_gti_samples(const std::vector<corpus::ItemRecord>& items,
                                         const ctg::TidMap& tids, BuildCounts* counts) {
    std::vector<GtiSample> samples;
    BuildCounts local;
    for (const auto& item : items) {
        auto it = tids.find(item.item_id);
        if (it == tids.end()) {
            ++local.skipped;
            continue;
        }
        samples.push_back({kGtiInstruction, item.metadata_text, ctg::canonical(it->second)});
        ++local.emitted;
    }
    if (counts) *counts = local;
    return samples;
}

namespace {

// Most recent max_history items of a span.
std::vector<std::string> truncate_history(const std::vector<std::string>& items,
                                          size_t max_history) {
    if (items.size() <= max_history) return items;
    return {items.end() - static_cast<long>(max_history), items.end()};
}

// Renders a list of item_ids, one per line; returns false if any item lacks a
// TID or a catalog record.
bool render_items(const std::vector<std::string>& item_ids, const ctg::TidMap& tids,
                  const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
                  std::string& out) {
    out.clear();
    for (size_t i = 0; i < item_ids.size(); ++i) {
        auto tid_it = tids.find(item_ids[i]);
        auto rec_it = item_index.find(item_ids[i]);
        if (tid_it == tids.end() || rec_it == item_index.end()) return false;
        if (i) out += '\n';
        out += render_item(tid_it->second, rec_it->second.title);
    }
    return true;
}

}  // namespace

std::vector<SeqSample> build_seq_samples(
    const std::vector<corpus::InteractionSequence>& sequences, const ctg::TidMap& tids,
    const std::unordered_map<std::string, corpus::ItemRecord>& item_index, size_t max_history,
    BuildCounts* counts, bool per_step) {
    std::vector<SeqSample> samples;
    BuildCounts local;
    auto emit = [&](const std::vector<std::string>& input_items,
                    const std::vector<std::string>& output_items) {
        std::string input, output;
        if (!render_items(input_items, tids, item_index, input) ||
            !render_items(output_items, tids, item_index, output))
            return false;
        SeqSample sample;
        sample.instruction = kSeqInstruction;
        sample.input = std::move(input);
        sample.output = std::move(output);
        sample.loss_start = sample.instruction.size() + 1 + sample.input.size() + 1;
        samples.push_back(std::move(sample));
        return true;
    };
    for (const auto& seq : sequences) {
        auto split = corpus::leave_one_out_split(seq);
        auto prefix = truncate_history(split.train, max_history);
        if (prefix.size() < 2) {
            ++local.skipped;
            continue;
        }
        std::vector<std::string> anchor{prefix.front()};
        std::vector<std::string> tail(prefix.begin() + 1, prefix.end());
        if (!emit(anchor, tail)) {
            ++local.skipped;
            continue;
        }
        ++local.emitted;
        if (per_step) {
            for (size_t k = 2; k < prefix.size(); ++k) {
                std::vector<std::string> head(prefix.begin(), prefix.begin() + k);
                if (emit(head, {prefix[k]})) ++local.emitted;
            }
        }
    }
    if (counts) *counts = local;
    return samples;
}

namespace {

std::vector<EvalSample> build_eval_common(
    const std::vector<corpus::InteractionSequence>& sequences, const ctg::TidMap& tids,
    const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
    const std::function<bool(const corpus::InteractionSequence&, std::vector<std::string>&,
                             std::string&, std::string&)>& pick,
    size_t max_history, BuildCounts* counts) {
    std::vector<EvalSample> samples;
    BuildCounts local;
    for (const auto& seq : sequences) {
        std::vector<std::string> history;
        std::string target, domain;
        if (!pick(seq, history, target, domain)) {
            ++local.skipped;
            continue;
        }
        auto tid_it = tids.find(target);
        if (tid_it == tids.end()) {
            ++local.skipped;  // target without a TID affects the metric denominator
            continue;
        }
        EvalSample sample;
        sample.user_id = seq.user_id;
        sample.instruction = kEvalInstruction;
        if (!render_items(truncate_history(history, max_history), tids, item_index,
                          sample.input)) {
            ++local.skipped;
            continue;
        }
        sample.target_tid = ctg::canonical(tid_it->second);
        sample.target_item_id = target;
        sample.domain_tag = domain;
        samples.push_back(std::move(sample));
        ++local.emitted;
    }
    if (counts) *counts = local;
    return samples;
}

}  // namespace

std::vector<EvalSample> build_eval_samples(
    const std::vector<corpus::InteractionSequence>& sequences, const ctg::TidMap& tids,
    const std::unordered_map<std::string, corpus::ItemRecord>& item_index, EvalMode mode,
    size_t max_history, BuildCounts* counts) {
    auto pick = [mode](const corpus::InteractionSequence& seq, std::vector<std::string>& history,
                       std::string& target, std::string& domain) {
        if (seq.items.size() < 3) return false;
        auto split = corpus::leave_one_out_split(seq);
        if (mode == EvalMode::Test) {
            history = split.train;
            history.push_back(split.valid);
            target = split.test;
        } else {
            history = split.train;
            target = split.valid;
        }
        domain.clear();
        return true;
    };
    return build_eval_common(sequences, tids, item_index, pick, max_history, counts);
}

std::vector<EvalSample> build_eval_samples_for_domain(
    const std::vector<corpus::InteractionSequence>& sequences, const ctg::TidMap& tids,
    const std::unordered_map<std::string, corpus::ItemRecord>& item_index,
    const std::string& domain_tag, size_t max_history, BuildCounts* counts) {
    auto pick = [&domain_tag](const corpus::InteractionSequence& seq,
                              std::vector<std::string>& history, std::string& target,
                              std::string& domain) {
        size_t target_pos = seq.items.size();
        for (size_t i = seq.items.size(); i-- > 0;) {
            if (i < seq.domains.size() && seq.domains[i] == domain_tag) {
                target_pos = i;
                break;
            }
        }
        if (target_pos == seq.items.size() || target_pos == 0) return false;
        target = seq.items[target_pos];
        history.assign(seq.items.begin(), seq.items.begin() + static_cast<long>(target_pos));
        domain = domain_tag;
        return true;
    };
    return build_eval_common(sequences, tids, item_index, pick, max_history, counts);
}

void export_train_jsonl(const std::vector<GtiSample>& gti, const std::vector<SeqSample>& seq,
                        const std::string& path, std::uint64_t shuffle_seed) {
    std::vector<json> lines;
    for (const auto& s : gti)
        lines.push_back(json{{"task", "gti"},
                             {"instruction", s.instruction},
                             {"input", s.input},
                             {"output", s.output},
                             {"instruction_version", kInstructionVersion}});
    for (const auto& s : seq)
        lines.push_back(json{{"task", "seq"},
                             {"instruction", s.instruction},
                             {"input", s.input},
                             {"output", s.output},
                             {"loss_start", s.loss_start},
                             {"instruction_version", kInstructionVersion}});
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(lines.begin(), lines.end(), rng);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& j : lines) out << j.dump() << '\n';
}

void export_eval_jsonl(const std::vector<EvalSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& s : samples) {
        json j{{"user_id", s.user_id},
               {"instruction", s.instruction},
               {"input", s.input},
               {"target_tid", s.target_tid},
               {"target_item_id", s.target_item_id},
               {"instruction_version", kInstructionVersion}};
        if (!s.domain_tag.empty()) j["domain_tag"] = s.domain_tag;
        out << j.dump() << '\n';
    }
}

std::vector<EvalSample> load_eval_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<EvalSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EvalSample s;
        s.user_id = j.at("user_id").get<std::string>();
        s.instruction = j.at("instruction").get<std::string>();
        s.input = j.at("input").get<std::string>();
        s.target_tid = j.at("target_tid").get<std::string>();
        s.target_item_id = j.at("target_item_id").get<std::string>();
        s.domain_tag = j.value("domain_tag", "");
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_train_config(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    json j{{"objective", "next-token prediction"},
           {"lr_schedule", "cosine"},
           {"learning_rate", 1e-4},
           {"global_batch_size", 128},
           {"epochs", 3},
           {"generation_max_length", 30},
           {"decoding", "beam search"},
           {"notes", "reference settings for the external trainer; the toolkit does not train"}};
    out << j.dump(2) << '\n';
}

}  // namespace tid::iift
