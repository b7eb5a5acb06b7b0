#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tid/ctg.hpp"

namespace tid::grounding {

enum class Track { Direct, Structural, None };

std::string track_name(Track track);

struct GroundingResult {
    std::optional<std::string> item_id;
    Track track = Track::None;
    double score = 0.0;  // structural track only
};

struct CandidateLibrary {
    // canonical TID string -> item_ids sharing that exact TID
    std::unordered_map<std::string, std::vector<std::string>> direct_index;
    // (position, term) -> item_ids carrying that term at that position
    std::unordered_map<std::string, std::vector<std::string>> positional_index;
    std::map<std::string, ctg::TermIdSequence> item_tids;
    std::unordered_map<std::string, std::uint64_t> popularity;
    // canonical strings shared by more than one item
    std::vector<std::string> collisions;

    static std::string positional_key(size_t position, const std::string& term);
};

CandidateLibrary build_library(const ctg::TidMap& tids,
                               const std::unordered_map<std::string, std::uint64_t>& popularity);

// Match weight 1/(j+1) for 1-based position j: earlier terms dominate.
double position_weight(size_t j);

// Exact canonical-string lookup. Collisions resolve to the most popular item,
// ties by lexicographic item_id.
GroundingResult ground_direct(const ctg::TermIdSequence& generated,
                              const CandidateLibrary& library);

// Weighted positional match over min(length) positions; candidates come from
// the positional-index union, which is lossless for any item with score > 0.
GroundingResult ground_structural(const ctg::TermIdSequence& generated,
                                  const CandidateLibrary& library);

// Reference scorer over every library item; kept as the oracle for
// ground_structural and reachable from the CLI via --brute-force.
GroundingResult ground_structural_brute_force(const ctg::TermIdSequence& generated,
                                              const CandidateLibrary& library);

// Direct mapping first, structural fallback.
GroundingResult ground(const ctg::TermIdSequence& generated, const CandidateLibrary& library);

struct BeamCandidate {
    std::string raw;
    bool valid = false;  // raw normalizes to an exact library TID
    Track track = Track::None;
    std::optional<std::string> item_id;
};

struct BeamResult {
    std::vector<std::string> ranked_items;  // deduplicated, first occurrence kept, <= K
    std::vector<BeamCandidate> candidates;  // one per input string, input order
};

BeamResult ground_beam(const std::vector<std::string>& candidates,
                       const CandidateLibrary& library, int k, int n_terms,
                       bool brute_force = false);

// library.bin: magic "TIDL", version u32, length-prefixed records.
void save_library(const CandidateLibrary& library, const std::string& path);
CandidateLibrary load_library(const std::string& path);
void write_library_debug_jsonl(const CandidateLibrary& library, const std::string& path);

}  // namespace tid::grounding
