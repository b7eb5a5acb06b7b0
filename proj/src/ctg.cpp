#include "tid/ctg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tid::ctg {

using json = nlohmann::json;

std::string canonical(const TermIdSequence& tid) {
    std::string out;
    for (size_t i = 0; i < tid.terms.size(); ++i) {
        if (i) out += ", ";
        out += tid.terms[i];
    }
    return out;
}

std::optional<std::string> normalize_term(const std::string& raw) {
    // Whitespace becomes hyphens, everything outside [A-Za-z0-9-] is dropped.
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (unsigned char c : raw) {
        if (std::isspace(c))
            cleaned += '-';
        else if (std::isalnum(c) || c == '-')
            cleaned += static_cast<char>(c);
    }

    std::string collapsed;
    for (char c : cleaned) {
        if (c == '-' && (collapsed.empty() || collapsed.back() == '-')) continue;
        collapsed += c;
    }
    while (!collapsed.empty() && collapsed.back() == '-') collapsed.pop_back();
    if (collapsed.empty() || collapsed.size() > 40) return std::nullopt;

    // Capitalize each hyphen segment.
    bool segment_start = true;
    for (char& c : collapsed) {
        if (c == '-') {
            segment_start = true;
            continue;
        }
        unsigned char uc = static_cast<unsigned char>(c);
        c = static_cast<char>(segment_start ? std::toupper(uc) : std::tolower(uc));
        segment_start = false;
    }
    return collapsed;
}

bool is_canonical_term(const std::string& term) {
    auto normalized = normalize_term(term);
    return normalized && *normalized == term;
}

double cosine_similarity(const services::EmbeddingVector& a, const services::EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

NeighborSet top_k_neighbors(const std::string& item_id,
                            const std::map<std::string, services::EmbeddingVector>& embeddings,
                            int k) {
    if (k < 1) throw std::invalid_argument("top_k_neighbors: k must be >= 1");
    auto target_it = embeddings.find(item_id);
    if (target_it == embeddings.end())
        throw std::invalid_argument("top_k_neighbors: no embedding for " + item_id);

    NeighborSet set;
    set.item_id = item_id;
    for (const auto& [other_id, vec] : embeddings) {
        if (other_id == item_id) continue;
        set.neighbors.push_back({other_id, cosine_similarity(target_it->second, vec)});
    }
    std::sort(set.neighbors.begin(), set.neighbors.end(),
              [](const Neighbor& x, const Neighbor& y) {
                  if (x.score != y.score) return x.score > y.score;
                  return x.item_id < y.item_id;
              });
    if (static_cast<int>(set.neighbors.size()) < k)
        set.shortfall = true;
    else
        set.neighbors.resize(k);
    return set;
}

Prompt build_ctg_prompt(const corpus::ItemRecord& target,
                        const std::vector<NeighborContext>& neighbors, int n_terms) {
    Prompt prompt;
    std::ostringstream sys;
    sys << "You are a product catalog tagger. You convert an item's metadata into a fixed-length "
           "identifier made of standardized keywords.\n"
        << "Term format rules:\n"
        << "- Each term is hyphen-joined capitalized words, e.g. Cell-Phone, Dual-Sim.\n"
        << "- Allowed characters: letters, digits, hyphens. No spaces inside a term.\n"
        << "- Reuse the exact terms already assigned to similar items for shared attributes.\n"
        << "- Pick terms that distinguish this item from its listed neighbors.\n"
        << "- No duplicate terms within the identifier.\n"
        << "Output format: respond with a single line containing exactly " << n_terms
        << " terms joined by \", \" and nothing else.";
    prompt.system_text = sys.str();

    std::ostringstream user;
    user << "Target item metadata:\n" << target.metadata_text << "\n";
    if (!neighbors.empty()) {
        user << "\nSimilar items for context:\n";
        int index = 1;
        for (const auto& n : neighbors) {
            user << index++ << ". " << n.record.metadata_text << "\n";
            if (n.tid) user << "   Assigned terms: " << canonical(*n.tid) << "\n";
        }
    }
    user << "\nOutput exactly " << n_terms << " terms for the target item, one line, joined by \", \".";
    prompt.user_text = user.str();
    return prompt;
}

namespace {

std::optional<TermIdSequence> parse_line(const std::string& line, int n_terms, bool lenient) {
    std::vector<std::string> terms;
    std::set<std::string> seen;
    std::string token;
    std::stringstream ss(line);
    while (std::getline(ss, token, ',')) {
        auto normalized = normalize_term(token);
        if (!normalized) {
            if (lenient) continue;
            return std::nullopt;
        }
        if (seen.insert(*normalized).second) terms.push_back(*normalized);
    }
    if (lenient) {
        if (terms.empty()) return std::nullopt;
        if (static_cast<int>(terms.size()) > n_terms) terms.resize(n_terms);
    } else if (static_cast<int>(terms.size()) != n_terms) {
        return std::nullopt;
    }
    return TermIdSequence{std::move(terms)};
}

std::vector<std::string> split_lines(const std::string& raw) {
    std::vector<std::string> lines;
    std::string line;
    std::stringstream ss(raw);
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::optional<TermIdSequence> parse_tid_response(const std::string& raw, int n_terms) {
    auto lines = split_lines(raw);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (auto tid = parse_line(*it, n_terms, /*lenient=*/false)) return tid;
    }
    return std::nullopt;
}

std::optional<TermIdSequence> parse_tid_lenient(const std::string& raw, int n_terms) {
    auto lines = split_lines(raw);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (auto tid = parse_line(*it, n_terms, /*lenient=*/true)) return tid;
    }
    return std::nullopt;
}

namespace {

TidMap load_checkpoint(const std::string& path) {
    TidMap tids;
    std::ifstream in(path);
    if (!in) return tids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;  // torn tail write from an interrupt
        TermIdSequence tid{j.at("terms").get<std::vector<std::string>>()};
        tids[j.at("item_id").get<std::string>()] = std::move(tid);
    }
    return tids;
}

void append_checkpoint(const std::string& path,
                       const std::vector<std::pair<std::string, TermIdSequence>>& block) {
    if (path.empty() || block.empty()) return;
    std::ofstream out(path, std::ios::app);
    for (const auto& [item_id, tid] : block) {
        json j{{"item_id", item_id}, {"terms", tid.terms}};
        out << j.dump() << '\n';
    }
    out.flush();
}

}  // namespace

CtgResult generate_all_tids(const std::vector<corpus::ItemRecord>& items,
                            const std::map<std::string, services::EmbeddingVector>& embeddings,
                            const std::unordered_map<std::string, std::uint64_t>& popularity,
                            services::GenerationClient& client, const CtgOptions& options) {
    for (const auto& item : items)
        if (!embeddings.count(item.item_id))
            throw std::invalid_argument("generate_all_tids: missing embedding for " + item.item_id);

    CtgResult result;
    if (!options.checkpoint_path.empty()) {
        result.tids = load_checkpoint(options.checkpoint_path);
        result.resumed_items = result.tids.size();
    }

    std::unordered_map<std::string, const corpus::ItemRecord*> by_id;
    for (const auto& item : items) by_id[item.item_id] = &item;

    // Popular items first so long-tail items see standardized exemplars.
    std::vector<const corpus::ItemRecord*> order;
    for (const auto& item : items) order.push_back(&item);
    std::sort(order.begin(), order.end(),
              [&](const corpus::ItemRecord* a, const corpus::ItemRecord* b) {
                  auto pa = popularity.count(a->item_id) ? popularity.at(a->item_id) : 0;
                  auto pb = popularity.count(b->item_id) ? popularity.at(b->item_id) : 0;
                  if (pa != pb) return pa > pb;
                  return a->item_id < b->item_id;
              });

    std::ofstream failures;
    if (!options.failures_path.empty()) failures.open(options.failures_path, std::ios::app);

    std::vector<std::pair<std::string, TermIdSequence>> pending_block;
    for (const auto* item : order) {
        if (result.tids.count(item->item_id)) continue;

        auto neighbor_set = top_k_neighbors(item->item_id, embeddings, options.k);
        std::vector<NeighborContext> contexts;
        for (const auto& n : neighbor_set.neighbors) {
            NeighborContext ctx;
            ctx.record = *by_id.at(n.item_id);
            if (options.exemplar_feedback) {
                auto it = result.tids.find(n.item_id);
                if (it != result.tids.end()) ctx.tid = it->second;
            }
            contexts.push_back(std::move(ctx));
        }

        Prompt prompt = build_ctg_prompt(*item, contexts, options.n_terms);
        services::GenerationRequest request;
        request.system_text = prompt.system_text;
        request.user_text = prompt.user_text;
        request.max_new_tokens = 30 * std::max(1, options.n_terms / 5);

        std::optional<TermIdSequence> tid;
        std::string last_raw;
        for (int attempt = 0; attempt < options.parse_retries && !tid; ++attempt) {
            auto responses = client.generate(request);
            last_raw = responses.empty() ? "" : responses.front();
            tid = parse_tid_response(last_raw, options.n_terms);
        }

        if (!tid) {
            ++result.failed_items;
            if (failures.is_open()) {
                json j{{"item_id", item->item_id}, {"last_response", last_raw}};
                failures << j.dump() << '\n';
                failures.flush();
            }
            continue;
        }

        result.tids[item->item_id] = *tid;
        pending_block.emplace_back(item->item_id, std::move(*tid));
        if (static_cast<int>(pending_block.size()) >= options.checkpoint_every) {
            append_checkpoint(options.checkpoint_path, pending_block);
            pending_block.clear();
        }
    }
    append_checkpoint(options.checkpoint_path, pending_block);
    return result;
}

void write_tids_jsonl(const std::string& path, const TidMap& tids) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [item_id, tid] : tids) {
        json j{{"item_id", item_id}, {"terms", tid.terms}};
        out << j.dump() << '\n';
    }
}

TidMap load_tids_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TidMap tids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        tids[j.at("item_id").get<std::string>()] =
            TermIdSequence{j.at("terms").get<std::vector<std::string>>()};
    }
    return tids;
}

}  // namespace tid::ctg
