#include "tid/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace tid::vocab {

using json = nlohmann::json;

TermVocabulary build_vocabulary(const ctg::TidMap& tids) {
    if (tids.empty()) throw std::invalid_argument("build_vocabulary: empty tid map");
    TermVocabulary vocab;
    for (const auto& [item_id, tid] : tids)
        for (const auto& term : tid.terms) ++vocab.counts[term];
    return vocab;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters, double tol) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans: k exceeds number of points");

    std::mt19937_64 rng(seed);
    KMeansResult result;

    // k-means++ seeding
    std::uniform_int_distribution<int> first(0, n - 1);
    result.centroids.push_back(points[first(rng)]);
    std::vector<double> min_d(n, std::numeric_limits<double>::max());
    while (static_cast<int>(result.centroids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            min_d[i] = std::min(min_d[i], sq_dist(points[i], result.centroids.back()));
            total += min_d[i];
        }
        int chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> dist(0.0, total);
            double r = dist(rng), acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += min_d[i];
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = first(rng);  // all points identical to chosen centroids
        }
        result.centroids.push_back(points[chosen]);
    }

    result.assignments.assign(n, 0);
    const size_t dim = points.empty() ? 0 : points[0].size();

    for (int iter = 0; iter < max_iters; ++iter) {
        // Assignment (ties go to the lowest cluster index)
        double objective = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                double d = sq_dist(points[i], result.centroids[c]);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            result.assignments[i] = best_c;
            objective += best;
        }
        result.objective_history.push_back(objective);
        result.objective = objective;
        result.iterations = iter + 1;

        // Update
        std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
        std::vector<int> sizes(k, 0);
        for (int i = 0; i < n; ++i) {
            ++sizes[result.assignments[i]];
            for (size_t d = 0; d < dim; ++d) next[result.assignments[i]][d] += points[i][d];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                // Re-seed from the point farthest from its current centroid.
                double worst = -1.0;
                int worst_i = 0;
                for (int i = 0; i < n; ++i) {
                    double d = sq_dist(points[i], result.centroids[result.assignments[i]]);
                    if (d > worst) {
                        worst = d;
                        worst_i = i;
                    }
                }
                next[c] = points[worst_i];
            } else {
                for (size_t d = 0; d < dim; ++d) next[c][d] /= sizes[c];
            }
        }

        double movement = 0.0;
        for (int c = 0; c < k; ++c) movement += sq_dist(result.centroids[c], next[c]);
        result.centroids = std::move(next);
        if (movement < tol) break;
    }

    // Final assignment against the settled centroids.
    double objective = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        int best_c = 0;
        for (int c = 0; c < k; ++c) {
            double d = sq_dist(points[i], result.centroids[c]);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        result.assignments[i] = best_c;
        objective += best;
    }
    result.objective_history.push_back(objective);
    result.objective = objective;
    return result;
}

CoreTermMap build_core_terms(const TermVocabulary& vocabulary, services::Embedder& embedder,
                             int k, std::uint64_t seed, int max_iters, double tol) {
    std::vector<std::string> terms;
    for (const auto& [term, count] : vocabulary.counts) terms.push_back(term);
    if (k > static_cast<int>(terms.size()))
        throw std::invalid_argument("build_core_terms: k exceeds vocabulary size");

    auto embedded = embedder.embed_batch(terms);
    std::vector<std::vector<double>> points;
    for (const auto& v : embedded) points.push_back(v.values);

    auto clusters = kmeans(points, k, seed, max_iters, tol);

    CoreTermMap map;
    map.seed = seed;
    map.iterations = clusters.iterations;
    map.objective = clusters.objective;
    for (size_t i = 0; i < terms.size(); ++i) map.term_embeddings[terms[i]] = embedded[i];

    // Core Term per cluster: the member term nearest the centroid, ties by
    // lexicographic term for determinism.
    std::vector<std::string> core_by_cluster(k);
    std::vector<double> best_d(k, std::numeric_limits<double>::max());
    for (size_t i = 0; i < terms.size(); ++i) {
        int c = clusters.assignments[i];
        double d = sq_dist(points[i], clusters.centroids[c]);
        if (d < best_d[c] || (d == best_d[c] && terms[i] < core_by_cluster[c])) {
            best_d[c] = d;
            core_by_cluster[c] = terms[i];
        }
    }
    for (size_t i = 0; i < terms.size(); ++i) {
        const std::string& core = core_by_cluster[clusters.assignments[i]];
        map.assignment[terms[i]] = core;
    }
    std::set<std::string> distinct(core_by_cluster.begin(), core_by_cluster.end());
    distinct.erase("");
    map.core_terms.assign(distinct.begin(), distinct.end());
    for (const auto& core : map.core_terms) map.core_embeddings[core] = map.term_embeddings[core];
    return map;
}

namespace {

// Nearest core term to `term` not present in `used`; empty string if none left.
std::string next_nearest_core(const CoreTermMap& core_map, const std::string& term,
                              const std::set<std::string>& used) {
    const auto& v = core_map.term_embeddings.at(term).values;
    std::string best;
    double best_d = std::numeric_limits<double>::max();
    for (const auto& core : core_map.core_terms) {
        if (used.count(core)) continue;
        double d = sq_dist(v, core_map.core_embeddings.at(core).values);
        if (d < best_d || (d == best_d && core < best)) {
            best_d = d;
            best = core;
        }
    }
    return best;
}

}  // namespace

ctg::TidMap compress_tids(const ctg::TidMap& tids, const CoreTermMap& core_map) {
    ctg::TidMap out;
    for (const auto& [item_id, tid] : tids) {
        ctg::TermIdSequence compressed;
        std::set<std::string> used;
        for (const auto& term : tid.terms) {
            auto it = core_map.assignment.find(term);
            if (it == core_map.assignment.end())
                throw std::invalid_argument("compress_tids: term not covered by core map: " + term);
            std::string core = it->second;
            if (used.count(core)) {
                std::string alt = next_nearest_core(core_map, term, used);
                if (!alt.empty()) core = alt;  // no distinct core left: keep the duplicate
            }
            used.insert(core);
            compressed.terms.push_back(std::move(core));
        }
        out[item_id] = std::move(compressed);
    }
    return out;
}

void write_core_terms_jsonl(const std::string& path, const CoreTermMap& core_map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::map<std::string, std::uint64_t> member_counts;
    for (const auto& [term, core] : core_map.assignment) ++member_counts[core];
    for (const auto& core : core_map.core_terms) {
        json j{{"core_term", core}, {"member_count", member_counts[core]}};
        out << j.dump() << '\n';
    }
}

void write_compression_meta(const std::string& path, const CoreTermMap& core_map, int k) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    json j{{"k", k},
           {"seed", core_map.seed},
           {"iterations", core_map.iterations},
           {"final_objective", core_map.objective},
           {"distinct_core_terms", core_map.core_terms.size()}};
    out << j.dump(2) << '\n';
}

}  // namespace tid::vocab
