#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tid/ctg.hpp"
#include "tid/services.hpp"

namespace tid::vocab {

struct TermVocabulary {
    std::map<std::string, std::uint64_t> counts;  // term -> occurrence count
    size_t total_unique() const { return counts.size(); }
};

TermVocabulary build_vocabulary(const ctg::TidMap& tids);

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignments;           // point index -> cluster index
    std::vector<double> objective_history;  // sum of squared distances per iteration
    int iterations = 0;
    double objective = 0.0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded from
// the point farthest from its centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters = 100, double tol = 1e-6);

struct CoreTermMap {
    std::vector<std::string> core_terms;                       // K representative terms
    std::unordered_map<std::string, std::string> assignment;   // term -> core term
    // Embeddings retained so within-TID duplicates can fall back to the
    // next-nearest distinct core term.
    std::unordered_map<std::string, services::EmbeddingVector> term_embeddings;
    std::unordered_map<std::string, services::EmbeddingVector> core_embeddings;
    std::uint64_t seed = 0;
    int iterations = 0;
    double objective = 0.0;
};

// Clusters term embeddings into K groups; each cluster's Core Term is the
// vocabulary term nearest its centroid.
CoreTermMap build_core_terms(const TermVocabulary& vocabulary, services::Embedder& embedder,
                             int k, std::uint64_t seed, int max_iters = 100, double tol = 1e-6);

// Positionwise substitution onto core terms; duplicates created inside one TID
// are replaced by their next-nearest distinct core term so length is preserved.
ctg::TidMap compress_tids(const ctg::TidMap& tids, const CoreTermMap& core_map);

void write_core_terms_jsonl(const std::string& path, const CoreTermMap& core_map);
void write_compression_meta(const std::string& path, const CoreTermMap& core_map, int k);

}  // namespace tid::vocab
