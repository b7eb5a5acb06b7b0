#include "tid/grounding.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace tid::grounding {

using json = nlohmann::json;

std::string track_name(Track track) {
    switch (track) {
        case Track::Direct: return "direct";
        case Track::Structural: return "structural";
        case Track::None: return "none";
    }
    return "none";
}

std::string CandidateLibrary::positional_key(size_t position, const std::string& term) {
    return std::to_string(position) + '\x1f' + term;
}

double position_weight(size_t j) { return 1.0 / double(j + 1); }

CandidateLibrary build_library(const ctg::TidMap& tids,
                               const std::unordered_map<std::string, std::uint64_t>& popularity) {
    if (tids.empty()) throw std::invalid_argument("build_library: empty tid map");
    CandidateLibrary lib;
    lib.item_tids = tids;
    lib.popularity = popularity;
    for (const auto& [item_id, tid] : tids) {
        lib.direct_index[ctg::canonical(tid)].push_back(item_id);
        for (size_t j = 0; j < tid.terms.size(); ++j)
            lib.positional_index[CandidateLibrary::positional_key(j + 1, tid.terms[j])]
                .push_back(item_id);
    }
    for (const auto& [key, items] : lib.direct_index)
        if (items.size() > 1) lib.collisions.push_back(key);
    std::sort(lib.collisions.begin(), lib.collisions.end());
    return lib;
}

namespace {

std::uint64_t pop_of(const CandidateLibrary& lib, const std::string& item_id) {
    auto it = lib.popularity.find(item_id);
    return it == lib.popularity.end() ? 0 : it->second;
}

// Most popular first, ties by lexicographic item_id.
const std::string* pick_preferred(const CandidateLibrary& lib,
                                  const std::vector<std::string>& items) {
    const std::string* best = nullptr;
    for (const auto& id : items) {
        if (!best || pop_of(lib, id) > pop_of(lib, *best) ||
            (pop_of(lib, id) == pop_of(lib, *best) && id < *best))
            best = &id;
    }
    return best;
}

double structural_score(const ctg::TermIdSequence& generated, const ctg::TermIdSequence& stored) {
    size_t n = std::min(generated.terms.size(), stored.terms.size());
    double score = 0.0;
    for (size_t j = 0; j < n; ++j)
        if (generated.terms[j] == stored.terms[j]) score += position_weight(j + 1);
    return score;
}

GroundingResult argmax_over(const ctg::TermIdSequence& generated, const CandidateLibrary& library,
                            const std::vector<const std::string*>& candidates) {
    GroundingResult result;
    double best = 0.0;
    const std::string* best_id = nullptr;
    for (const auto* id : candidates) {
        double s = structural_score(generated, library.item_tids.at(*id));
        if (s <= 0.0) continue;
        bool better = s > best;
        if (s == best && best_id) {
            auto pop = pop_of(library, *id), best_pop = pop_of(library, *best_id);
            better = pop > best_pop || (pop == best_pop && *id < *best_id);
        }
        if (better) {
            best = s;
            best_id = id;
        }
    }
    if (!best_id) return result;  // Track::None
    result.item_id = *best_id;
    result.track = Track::Structural;
    result.score = best;
    return result;
}

}  // namespace

GroundingResult ground_direct(const ctg::TermIdSequence& generated,
                              const CandidateLibrary& library) {
    GroundingResult result;
    auto it = library.direct_index.find(ctg::canonical(generated));
    if (it == library.direct_index.end()) return result;
    result.item_id = *pick_preferred(library, it->second);
    result.track = Track::Direct;
    return result;
}

GroundingResult ground_structural(const ctg::TermIdSequence& generated,
                                  const CandidateLibrary& library) {
    if (generated.terms.empty())
        throw std::invalid_argument("ground_structural: empty term sequence");
    std::set<std::string> seen;
    for (size_t j = 0; j < generated.terms.size(); ++j) {
        auto it = library.positional_index.find(
            CandidateLibrary::positional_key(j + 1, generated.terms[j]));
        if (it == library.positional_index.end()) continue;
        seen.insert(it->second.begin(), it->second.end());
    }
    std::vector<const std::string*> candidates;
    for (const auto& id : seen) candidates.push_back(&library.item_tids.find(id)->first);
    return argmax_over(generated, library, candidates);
}

GroundingResult ground_structural_brute_force(const ctg::TermIdSequence& generated,
                                              const CandidateLibrary& library) {
    if (generated.terms.empty())
        throw std::invalid_argument("ground_structural: empty term sequence");
    std::vector<const std::string*> all;
    for (const auto& [id, tid] : library.item_tids) all.push_back(&id);
    return argmax_over(generated, library, all);
}

GroundingResult ground(const ctg::TermIdSequence& generated, const CandidateLibrary& library) {
    auto direct = ground_direct(generated, library);
    if (direct.track == Track::Direct) return direct;
    return ground_structural(generated, library);
}

BeamResult ground_beam(const std::vector<std::string>& candidates,
                       const CandidateLibrary& library, int k, int n_terms, bool brute_force) {
    BeamResult result;
    std::set<std::string> emitted;
    for (const auto& raw : candidates) {
        BeamCandidate cand;
        cand.raw = raw;
        auto parsed = ctg::parse_tid_lenient(raw, n_terms);
        if (parsed) {
            cand.valid = library.direct_index.count(ctg::canonical(*parsed)) > 0;
            GroundingResult grounded;
            auto direct = ground_direct(*parsed, library);
            if (direct.track == Track::Direct)
                grounded = direct;
            else
                grounded = brute_force ? ground_structural_brute_force(*parsed, library)
                                       : ground_structural(*parsed, library);
            cand.track = grounded.track;
            cand.item_id = grounded.item_id;
            if (grounded.item_id && static_cast<int>(result.ranked_items.size()) < k &&
                emitted.insert(*grounded.item_id).second)
                result.ranked_items.push_back(*grounded.item_id);
        }
        result.candidates.push_back(std::move(cand));
    }
    return result;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ofstream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_str(std::ifstream& in) {
    std::uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    return s;
}

constexpr char kMagic[4] = {'T', 'I', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_library(const CandidateLibrary& library, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, library.item_tids.size());
    for (const auto& [item_id, tid] : library.item_tids) {
        write_str(out, item_id);
        write_u64(out, pop_of(library, item_id));
        write_u32(out, static_cast<std::uint32_t>(tid.terms.size()));
        for (const auto& term : tid.terms) write_str(out, term);
    }
}

CandidateLibrary load_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error(path + ": bad magic, not a TID library");
    std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported library version " + std::to_string(version));
    std::uint64_t count = read_u64(in);
    ctg::TidMap tids;
    std::unordered_map<std::string, std::uint64_t> popularity;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string item_id = read_str(in);
        std::uint64_t pop = read_u64(in);
        std::uint32_t n = read_u32(in);
        ctg::TermIdSequence tid;
        for (std::uint32_t j = 0; j < n; ++j) tid.terms.push_back(read_str(in));
        if (!in) throw std::runtime_error(path + ": truncated library file");
        tids[item_id] = std::move(tid);
        popularity[item_id] = pop;
    }
    return build_library(tids, popularity);
}

void write_library_debug_jsonl(const CandidateLibrary& library, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [item_id, tid] : library.item_tids) {
        json j{{"item_id", item_id},
               {"terms", tid.terms},
               {"popularity", pop_of(library, item_id)}};
        out << j.dump() << '\n';
    }
}

}  // namespace tid::grounding
