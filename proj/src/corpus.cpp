#include "tid/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace tid::corpus {

using json = nlohmann::json;

std::string assemble_metadata_text(const std::string& title,
                                   const std::string& brand,
                                   const std::vector<std::vector<std::string>>& categories,
                                   const std::string& description) {
    std::vector<std::string> parts;
    if (!title.empty()) parts.push_back(title);
    if (!brand.empty()) parts.push_back(brand);
    for (const auto& chain : categories) {
        if (chain.empty()) continue;
        std::string joined;
        for (size_t i = 0; i < chain.size(); ++i) {
            if (i) joined += " > ";
            joined += chain[i];
        }
        parts.push_back(joined);
    }
    if (!description.empty()) parts.push_back(description);
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += '\n';
        out += parts[i];
    }
    return out;
}

namespace {

std::vector<std::vector<std::string>> parse_categories(const json& j) {
    std::vector<std::vector<std::string>> out;
    if (!j.is_array()) return out;
    for (const auto& inner : j) {
        std::vector<std::string> chain;
        if (inner.is_array()) {
            for (const auto& c : inner)
                if (c.is_string()) chain.push_back(c.get<std::string>());
        } else if (inner.is_string()) {
            chain.push_back(inner.get<std::string>());
        }
        if (!chain.empty()) out.push_back(std::move(chain));
    }
    return out;
}

}  // namespace

IngestResult ingest(const std::string& metadata_path,
                    const std::string& reviews_path,
                    const std::string& domain_tag) {
    IngestResult result;

    std::ifstream meta(metadata_path);
    if (!meta) throw std::runtime_error("cannot open metadata file: " + metadata_path);
    std::ifstream reviews(reviews_path);
    if (!reviews) throw std::runtime_error("cannot open reviews file: " + reviews_path);

    std::unordered_set<std::string> seen_items;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("item_id") || !j["item_id"].is_string()) {
            ++result.malformed_lines;
            continue;
        }
        ItemRecord rec;
        rec.item_id = j["item_id"].get<std::string>();
        if (rec.item_id.empty() || seen_items.count(rec.item_id)) {
            ++result.malformed_lines;
            continue;
        }
        rec.title = j.value("title", "");
        std::string brand = j.value("brand", "");
        std::string description = j.value("description", "");
        auto categories = j.contains("categories") ? parse_categories(j["categories"])
                                                   : std::vector<std::vector<std::string>>{};
        rec.metadata_text = assemble_metadata_text(rec.title, brand, categories, description);
        rec.domain_tag = domain_tag;
        if (rec.metadata_text.empty()) {
            ++result.dropped_empty_metadata;
            continue;
        }
        seen_items.insert(rec.item_id);
        result.items.push_back(std::move(rec));
    }

    while (std::getline(reviews, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("user_id") || !j.contains("item_id") ||
            !j.contains("timestamp") || !j["user_id"].is_string() || !j["item_id"].is_string() ||
            !j["timestamp"].is_number()) {
            ++result.malformed_lines;
            continue;
        }
        InteractionRecord rec;
        rec.user_id = j["user_id"].get<std::string>();
        rec.item_id = j["item_id"].get<std::string>();
        rec.timestamp = j["timestamp"].get<std::int64_t>();
        rec.domain_tag = domain_tag;
        if (!seen_items.count(rec.item_id)) {
            ++result.dropped_unknown_item;
            continue;
        }
        result.interactions.push_back(std::move(rec));
    }

    return result;
}

std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& interactions,
                                             int k) {
    if (k < 1) throw std::invalid_argument("k-core filter requires k >= 1");
    std::vector<InteractionRecord> current = interactions;
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, int> user_deg, item_deg;
        for (const auto& r : current) {
            ++user_deg[r.user_id];
            ++item_deg[r.item_id];
        }
        std::vector<InteractionRecord> next;
        next.reserve(current.size());
        for (auto& r : current) {
            if (user_deg[r.user_id] >= k && item_deg[r.item_id] >= k)
                next.push_back(std::move(r));
        }
        if (next.size() != current.size()) changed = true;
        current = std::move(next);
    }
    if (current.empty() && !interactions.empty())
        throw EmptyCorpusError("k-core filtering with k=" + std::to_string(k) +
                               " removed every interaction");
    return current;
}

SequenceBuildResult build_sequences(const std::vector<InteractionRecord>& interactions) {
    SequenceBuildResult result;
    std::map<std::string, std::vector<const InteractionRecord*>> per_user;
    for (const auto& r : interactions) per_user[r.user_id].push_back(&r);

    for (auto& [user, recs] : per_user) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const InteractionRecord* a, const InteractionRecord* b) {
                             return a->timestamp < b->timestamp;
                         });
        if (recs.size() < 3) {
            ++result.dropped_short;
            continue;
        }
        InteractionSequence seq;
        seq.user_id = user;
        for (const auto* r : recs) {
            seq.items.push_back(r->item_id);
            seq.domains.push_back(r->domain_tag);
        }
        result.sequences.push_back(std::move(seq));
    }
    return result;
}

Split leave_one_out_split(const InteractionSequence& seq) {
    if (seq.items.size() < 3)
        throw std::invalid_argument("leave-one-out split requires a sequence of length >= 3");
    Split split;
    split.test = seq.items.back();
    split.valid = seq.items[seq.items.size() - 2];
    split.train.assign(seq.items.begin(), seq.items.end() - 2);
    return split;
}

MergedCorpus merge_cross_domain(const std::vector<InteractionRecord>& interactions_a,
                                const std::string& domain_a,
                                const std::vector<InteractionRecord>& interactions_b,
                                const std::string& domain_b) {
    MergedCorpus merged;
    merged.domain_a = domain_a;
    merged.domain_b = domain_b;

    std::map<std::string, std::vector<InteractionRecord>> users_a, users_b;
    for (auto r : interactions_a) {
        r.domain_tag = domain_a;
        users_a[r.user_id].push_back(std::move(r));
    }
    for (auto r : interactions_b) {
        r.domain_tag = domain_b;
        users_b[r.user_id].push_back(std::move(r));
    }

    for (auto& [user, recs_a] : users_a) {
        auto it = users_b.find(user);
        if (it == users_b.end()) continue;
        auto& recs_b = it->second;

        auto stable_by_ts = [](std::vector<InteractionRecord>& v) {
            std::stable_sort(v.begin(), v.end(),
                             [](const InteractionRecord& x, const InteractionRecord& y) {
                                 return x.timestamp < y.timestamp;
                             });
        };
        stable_by_ts(recs_a);
        stable_by_ts(recs_b);

        // Two-way merge: on equal timestamps domain_a wins.
        InteractionSequence seq;
        seq.user_id = user;
        size_t ia = 0, ib = 0;
        while (ia < recs_a.size() || ib < recs_b.size()) {
            bool take_a;
            if (ia == recs_a.size()) take_a = false;
            else if (ib == recs_b.size()) take_a = true;
            else take_a = recs_a[ia].timestamp <= recs_b[ib].timestamp;
            const auto& r = take_a ? recs_a[ia++] : recs_b[ib++];
            seq.items.push_back(r.item_id);
            seq.domains.push_back(r.domain_tag);
        }
        merged.sequences.push_back(std::move(seq));
    }

    if (merged.sequences.empty())
        throw EmptyCorpusError("cross-domain merge: no overlapping users between '" + domain_a +
                               "' and '" + domain_b + "'");
    return merged;
}

std::optional<std::string> domain_test_target(const InteractionSequence& seq,
                                              const std::string& domain) {
    for (size_t i = seq.items.size(); i-- > 0;) {
        if (i < seq.domains.size() && seq.domains[i] == domain) return seq.items[i];
    }
    return std::nullopt;
}

CorpusStats compute_stats(const std::vector<ItemRecord>& items,
                          const std::vector<InteractionRecord>& interactions,
                          const SequenceBuildResult& built) {
    CorpusStats stats;
    std::unordered_set<std::string> users;
    for (const auto& r : interactions) users.insert(r.user_id);
    stats.user_count = users.size();
    stats.item_count = items.size();
    stats.interaction_count = interactions.size();
    stats.dropped_short_sequences = built.dropped_short;
    return stats;
}

void write_corpus_dir(const std::string& dir,
                      const std::vector<ItemRecord>& items,
                      const std::vector<InteractionSequence>& sequences,
                      const CorpusStats& stats) {
    std::filesystem::create_directories(dir);

    std::vector<const ItemRecord*> sorted_items;
    for (const auto& it : items) sorted_items.push_back(&it);
    std::sort(sorted_items.begin(), sorted_items.end(),
              [](const ItemRecord* a, const ItemRecord* b) { return a->item_id < b->item_id; });

    {
        std::ofstream out(dir + "/items.jsonl");
        for (const auto* it : sorted_items) {
            json j{{"item_id", it->item_id},
                   {"title", it->title},
                   {"metadata_text", it->metadata_text},
                   {"domain_tag", it->domain_tag}};
            out << j.dump() << '\n';
        }
    }

    std::vector<const InteractionSequence*> sorted_seqs;
    for (const auto& s : sequences) sorted_seqs.push_back(&s);
    std::sort(sorted_seqs.begin(), sorted_seqs.end(),
              [](const InteractionSequence* a, const InteractionSequence* b) {
                  return a->user_id < b->user_id;
              });

    {
        std::ofstream out(dir + "/sequences.jsonl");
        for (const auto* s : sorted_seqs) {
            json j{{"user_id", s->user_id}, {"items", s->items}, {"domains", s->domains}};
            out << j.dump() << '\n';
        }
    }

    {
        std::ofstream out(dir + "/stats.json");
        json j{{"user_count", stats.user_count},
               {"item_count", stats.item_count},
               {"interaction_count", stats.interaction_count},
               {"dropped_short_sequences", stats.dropped_short_sequences},
               {"duplicates_kept", stats.duplicates_kept}};
        out << j.dump(2) << '\n';
    }
}

LoadedCorpus load_corpus_dir(const std::string& dir) {
    LoadedCorpus corpus;
    std::ifstream items_in(dir + "/items.jsonl");
    if (!items_in) throw std::runtime_error("cannot open " + dir + "/items.jsonl");
    std::string line;
    while (std::getline(items_in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        ItemRecord rec;
        rec.item_id = j.at("item_id").get<std::string>();
        rec.title = j.value("title", "");
        rec.metadata_text = j.value("metadata_text", "");
        rec.domain_tag = j.value("domain_tag", "");
        corpus.item_index[rec.item_id] = rec;
        corpus.items.push_back(std::move(rec));
    }
    std::ifstream seqs_in(dir + "/sequences.jsonl");
    if (!seqs_in) throw std::runtime_error("cannot open " + dir + "/sequences.jsonl");
    while (std::getline(seqs_in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        InteractionSequence seq;
        seq.user_id = j.at("user_id").get<std::string>();
        seq.items = j.at("items").get<std::vector<std::string>>();
        if (j.contains("domains")) seq.domains = j["domains"].get<std::vector<std::string>>();
        corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace tid::corpus
