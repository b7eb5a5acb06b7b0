#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tid/corpus.hpp"
#include "tid/ctg.hpp"
#include "tid/eval.hpp"
#include "tid/grounding.hpp"
#include "tid/iift.hpp"
#include "tid/services.hpp"
#include "tid/synthetic.hpp"
#include "tid/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct GlobalOptions {
    std::string workdir = "workdir";
    int n_terms = 5;
    int neighbors_k = 5;
    size_t max_history = 20;
    std::uint64_t seed = 42;
    tid::services::ServiceConfig service;
};

std::string require_file(const std::string& path, const std::string& produced_by) {
    if (!fs::exists(path))
        throw std::runtime_error("missing " + path + "; run `tid " + produced_by + "` first");
    return path;
}

std::unordered_map<std::string, std::uint64_t> popularity_from_sequences(
    const std::vector<tid::corpus::InteractionSequence>& sequences) {
    std::unordered_map<std::string, std::uint64_t> pop;
    for (const auto& seq : sequences)
        for (const auto& item : seq.items) ++pop[item];
    return pop;
}

std::map<std::string, tid::services::EmbeddingVector> embed_corpus(
    const std::vector<tid::corpus::ItemRecord>& items, tid::services::Embedder& embedder) {
    std::vector<std::string> texts;
    for (const auto& item : items) texts.push_back(item.metadata_text);
    auto vectors = embedder.embed_batch(texts);
    std::map<std::string, tid::services::EmbeddingVector> out;
    for (size_t i = 0; i < items.size(); ++i) out[items[i].item_id] = std::move(vectors[i]);
    return out;
}

int run_ingest(const GlobalOptions& g, const std::string& metadata, const std::string& reviews,
               const std::string& domain, const std::string& metadata_b,
               const std::string& reviews_b, const std::string& domain_b, int k_core) {
    auto result = tid::corpus::ingest(metadata, reviews, domain);
    std::cerr << "ingested " << result.items.size() << " items, " << result.interactions.size()
              << " interactions (malformed " << result.malformed_lines << ", unknown-item "
              << result.dropped_unknown_item << ", empty-metadata "
              << result.dropped_empty_metadata << ")\n";

    std::vector<tid::corpus::ItemRecord> items = result.items;
    tid::corpus::SequenceBuildResult built;
    std::vector<tid::corpus::InteractionRecord> filtered;

    if (!metadata_b.empty()) {
        auto result_b = tid::corpus::ingest(metadata_b, reviews_b, domain_b);
        items.insert(items.end(), result_b.items.begin(), result_b.items.end());
        auto filtered_a = tid::corpus::k_core_filter(result.interactions, k_core);
        auto filtered_b = tid::corpus::k_core_filter(result_b.interactions, k_core);
        auto merged = tid::corpus::merge_cross_domain(filtered_a, domain, filtered_b, domain_b);
        built.sequences = merged.sequences;
        filtered = filtered_a;
        filtered.insert(filtered.end(), filtered_b.begin(), filtered_b.end());
    } else {
        filtered = tid::corpus::k_core_filter(result.interactions, k_core);
        built = tid::corpus::build_sequences(filtered);
    }

    // Keep only items that survive filtering.
    std::unordered_set<std::string> kept;
    for (const auto& r : filtered) kept.insert(r.item_id);
    std::erase_if(items, [&](const tid::corpus::ItemRecord& it) { return !kept.count(it.item_id); });

    auto stats = tid::corpus::compute_stats(items, filtered, built);
    tid::corpus::write_corpus_dir(g.workdir + "/corpus", items, built.sequences, stats);
    std::cerr << "corpus written to " << g.workdir << "/corpus ("
              << built.sequences.size() << " sequences)\n";
    return 0;
}

int run_ctg(const GlobalOptions& g, bool mock, bool no_exemplar_feedback) {
    auto corpus = tid::corpus::load_corpus_dir(require_file(g.workdir + "/corpus", "ingest"));
    auto popularity = popularity_from_sequences(corpus.sequences);

    std::unique_ptr<tid::services::Embedder> embedder;
    std::unique_ptr<tid::services::GenerationClient> client;
    if (mock) {
        embedder = std::make_unique<tid::services::HashingEmbedder>();
        client = std::make_unique<tid::synthetic::SyntheticCtgGenerator>(
            static_cast<int>(corpus.items.size()), g.n_terms);
    } else {
        embedder = std::make_unique<tid::services::HttpEmbedder>(g.service);
        client = std::make_unique<tid::services::HttpGenerationClient>(g.service);
    }

    auto embeddings = embed_corpus(corpus.items, *embedder);

    tid::ctg::CtgOptions options;
    options.k = g.neighbors_k;
    options.n_terms = g.n_terms;
    options.exemplar_feedback = !no_exemplar_feedback;
    options.checkpoint_path = g.workdir + "/ctg.ckpt.jsonl";
    options.failures_path = g.workdir + "/ctg.failures.jsonl";

    auto result = tid::ctg::generate_all_tids(corpus.items, embeddings, popularity, *client,
                                              options);
    tid::ctg::write_tids_jsonl(g.workdir + "/tids.jsonl", result.tids);
    std::cerr << "generated " << result.tids.size() << " TIDs (" << result.resumed_items
              << " resumed from checkpoint, " << result.failed_items << " failed)\n";
    return 0;
}

int run_compress(const GlobalOptions& g, int k_compress) {
    auto tids = tid::ctg::load_tids_jsonl(require_file(g.workdir + "/tids.jsonl", "ctg"));
    auto vocabulary = tid::vocab::build_vocabulary(tids);
    tid::services::HashingEmbedder embedder;
    auto core_map =
        tid::vocab::build_core_terms(vocabulary, embedder, k_compress, g.seed);
    auto compressed = tid::vocab::compress_tids(tids, core_map);
    tid::ctg::write_tids_jsonl(g.workdir + "/tids.compressed.jsonl", compressed);
    tid::vocab::write_core_terms_jsonl(g.workdir + "/core_terms.jsonl", core_map);
    tid::vocab::write_compression_meta(g.workdir + "/compression.meta.json", core_map, k_compress);
    std::cerr << "compressed vocabulary of " << vocabulary.total_unique() << " terms onto "
              << core_map.core_terms.size() << " core terms\n";
    return 0;
}

int run_export_iift(const GlobalOptions& g, const std::string& tids_file, bool per_step) {
    auto corpus = tid::corpus::load_corpus_dir(require_file(g.workdir + "/corpus", "ingest"));
    std::string tids_path = tids_file.empty() ? g.workdir + "/tids.jsonl" : tids_file;
    auto tids = tid::ctg::load_tids_jsonl(require_file(tids_path, "ctg"));

    tid::iift::BuildCounts gti_counts, seq_counts, valid_counts, test_counts;
    auto gti = tid::iift::build_gti_samples(corpus.items, tids, &gti_counts);
    auto seq = tid::iift::build_seq_samples(corpus.sequences, tids, corpus.item_index,
                                            g.max_history, &seq_counts, per_step);
    auto eval_valid = tid::iift::build_eval_samples(corpus.sequences, tids, corpus.item_index,
                                                    tid::iift::EvalMode::Valid, g.max_history,
                                                    &valid_counts);
    auto eval_test = tid::iift::build_eval_samples(corpus.sequences, tids, corpus.item_index,
                                                   tid::iift::EvalMode::Test, g.max_history,
                                                   &test_counts);

    tid::iift::export_train_jsonl(gti, seq, g.workdir + "/iift_train.jsonl", g.seed);
    tid::iift::export_eval_jsonl(eval_valid, g.workdir + "/eval_valid.jsonl");
    tid::iift::export_eval_jsonl(eval_test, g.workdir + "/eval_test.jsonl");
    tid::iift::write_train_config(g.workdir + "/train_config.json");
    std::cerr << "exported " << gti.size() << " GTI + " << seq.size() << " Seq train samples, "
              << eval_valid.size() << " valid / " << eval_test.size() << " test eval samples\n";
    return 0;
}

int run_build_library(const GlobalOptions& g, const std::string& tids_file) {
    auto corpus = tid::corpus::load_corpus_dir(require_file(g.workdir + "/corpus", "ingest"));
    std::string tids_path = tids_file.empty() ? g.workdir + "/tids.jsonl" : tids_file;
    auto tids = tid::ctg::load_tids_jsonl(require_file(tids_path, "ctg"));
    auto popularity = popularity_from_sequences(corpus.sequences);

    auto library = tid::grounding::build_library(tids, popularity);
    tid::grounding::save_library(library, g.workdir + "/library.bin");
    tid::grounding::write_library_debug_jsonl(library, g.workdir + "/library.jsonl");
    {
        std::ofstream out(g.workdir + "/library.collisions.json");
        out << json(library.collisions).dump(2) << '\n';
    }
    std::cerr << "library built: " << library.item_tids.size() << " items, "
              << library.collisions.size() << " TID collisions\n";
    return 0;
}

int run_ground(const GlobalOptions& g, bool brute_force) {
    auto library =
        tid::grounding::load_library(require_file(g.workdir + "/library.bin", "build-library"));
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        auto parsed = tid::ctg::parse_tid_lenient(line, g.n_terms);
        tid::grounding::GroundingResult result;
        if (parsed) {
            result = tid::grounding::ground_direct(*parsed, library);
            if (result.track != tid::grounding::Track::Direct)
                result = brute_force
                             ? tid::grounding::ground_structural_brute_force(*parsed, library)
                             : tid::grounding::ground_structural(*parsed, library);
        }
        std::cout << (result.item_id ? *result.item_id : "-") << '\t'
                  << tid::grounding::track_name(result.track) << '\t' << result.score << '\n';
    }
    return 0;
}

int run_eval(const GlobalOptions& g, const std::string& samples_file,
             const std::string& generator, std::vector<int> ks, bool pooled) {
    auto library =
        tid::grounding::load_library(require_file(g.workdir + "/library.bin", "build-library"));
    std::string samples_path =
        samples_file.empty() ? g.workdir + "/eval_test.jsonl" : samples_file;
    auto samples = tid::iift::load_eval_jsonl(require_file(samples_path, "export-iift"));

    std::vector<std::string> library_tids;
    for (const auto& [item_id, tid_seq] : library.item_tids)
        library_tids.push_back(tid::ctg::canonical(tid_seq));

    std::unique_ptr<tid::services::GenerationClient> client;
    if (generator == "mock") {
        client = std::make_unique<tid::services::MockGenerator>(library_tids);
    } else if (generator == "target-mock") {
        auto scripted = std::make_unique<tid::synthetic::ScriptedGenerator>(library_tids);
        for (const auto& s : samples) scripted->script(s.input, {s.target_tid});
        client = std::move(scripted);
    } else {
        client = std::make_unique<tid::services::HttpGenerationClient>(g.service);
    }

    tid::eval::EvaluateOptions options;
    options.ks = std::move(ks);
    options.n_terms = g.n_terms;
    options.pooled_rates = pooled;
    options.details_path = g.workdir + "/details.tsv";
    auto result = tid::eval::evaluate(samples, *client, library, options);
    tid::eval::write_report_json(result.report, g.workdir + "/report.json");

    for (const auto& [k, v] : result.report.recall_at) std::cout << "recall@" << k << " " << v << '\n';
    for (const auto& [k, v] : result.report.ndcg_at) std::cout << "ndcg@" << k << " " << v << '\n';
    for (const auto& [k, v] : result.report.vr_at) std::cout << "vr@" << k << " " << v << '\n';
    for (const auto& [k, v] : result.report.dhr_at) std::cout << "dhr@" << k << " " << v << '\n';
    return 0;
}

int run_smoke(GlobalOptions g) {
    auto start = std::chrono::steady_clock::now();
    fs::create_directories(g.workdir);
    std::string raw_dir = g.workdir + "/raw";
    tid::synthetic::write_synthetic_raw(raw_dir, 200, 200);

    if (int rc = run_ingest(g, raw_dir + "/metadata.jsonl", raw_dir + "/reviews.jsonl", "", "",
                            "", "", 5))
        return rc;
    if (int rc = run_ctg(g, /*mock=*/true, /*no_exemplar_feedback=*/false)) return rc;
    if (int rc = run_build_library(g, "")) return rc;
    if (int rc = run_export_iift(g, "", /*per_step=*/false)) return rc;
    if (int rc = run_eval(g, "", "target-mock", {5, 10}, false)) return rc;

    std::ifstream report_in(g.workdir + "/report.json");
    json report = json::parse(report_in);
    double recall5 = report.at("recall@5").get<double>();
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "smoke finished in " << elapsed << "s, recall@5 = " << recall5 << '\n';
    if (recall5 != 1.0) {
        std::cerr << "smoke failed: target-aware mock expected recall@5 = 1.0\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Term-ID generative-recommendation pipeline toolkit"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--workdir", g.workdir, "Directory for all pipeline outputs");
    app.add_option("--n-terms", g.n_terms, "TID length")->check(CLI::PositiveNumber);
    app.add_option("--neighbors", g.neighbors_k, "CTG neighborhood size k")
        ->check(CLI::PositiveNumber);
    app.add_option("--max-history", g.max_history, "History truncation length for export");
    app.add_option("--seed", g.seed, "Seed for shuffles and clustering");
    app.add_option("--base-url", g.service.base_url, "Service base URL");
    app.add_option("--api-key-env", g.service.api_key_env_name, "Env var holding the API key");
    app.add_option("--embed-model", g.service.embed_model, "Embedding model name");
    app.add_option("--chat-model", g.service.chat_model, "Chat model name");
    app.add_option("--max-retries", g.service.max_retries, "HTTP retry budget");
    app.add_option("--max-in-flight", g.service.max_in_flight, "Concurrent request bound")
        ->check(CLI::PositiveNumber);
    app.set_config("--config", "", "Key/value config file (flags take precedence)");

    std::string metadata, reviews, domain, metadata_b, reviews_b, domain_b = "b";
    int k_core = 5;
    auto* ingest = app.add_subcommand("ingest", "Ingest raw files into a filtered corpus");
    ingest->add_option("--metadata", metadata, "metadata.jsonl path")->required();
    ingest->add_option("--reviews", reviews, "reviews.jsonl path")->required();
    ingest->add_option("--domain-tag", domain, "Domain label for cross-domain corpora");
    ingest->add_option("--metadata-b", metadata_b, "Second-domain metadata path");
    ingest->add_option("--reviews-b", reviews_b, "Second-domain reviews path");
    ingest->add_option("--domain-tag-b", domain_b, "Second-domain label");
    ingest->add_option("--k-core", k_core, "k-core filtering threshold")
        ->check(CLI::PositiveNumber);

    bool mock = false, no_exemplar = false;
    auto* ctg_cmd = app.add_subcommand("ctg", "Generate Term IDs for every corpus item");
    ctg_cmd->add_flag("--mock", mock, "Use the offline deterministic generator and embedder");
    ctg_cmd->add_flag("--no-exemplar-feedback", no_exemplar,
                      "Do not show already-assigned neighbor TIDs in prompts");

    int k_compress = 0;
    auto* compress = app.add_subcommand("compress", "K-means the term vocabulary onto Core Terms");
    compress->add_option("--k-compress", k_compress, "Number of Core Terms")
        ->required()
        ->check(CLI::PositiveNumber);

    std::string tids_file;
    bool per_step = false;
    auto* export_cmd = app.add_subcommand("export-iift", "Export instruction-tuning data");
    export_cmd->add_option("--tids", tids_file, "TID file (default workdir/tids.jsonl)");
    export_cmd->add_flag("--per-step-samples", per_step,
                         "Also emit one sequence sample per intermediate position");

    std::string lib_tids_file;
    auto* build_lib = app.add_subcommand("build-library", "Build the grounding candidate library");
    build_lib->add_option("--tids", lib_tids_file, "TID file (default workdir/tids.jsonl)");

    bool brute_force = false;
    auto* ground = app.add_subcommand("ground", "Ground TID strings from stdin to items");
    ground->add_flag("--brute-force", brute_force, "Score every library item (oracle path)");

    std::string samples_file, generator = "http";
    std::vector<int> ks = {5, 10};
    bool pooled = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate grounded beam outputs");
    eval_cmd->add_option("--samples", samples_file, "Eval sample file (default eval_test.jsonl)");
    eval_cmd->add_option("--generator", generator, "http | mock | target-mock")
        ->check(CLI::IsMember({"http", "mock", "target-mock"}));
    eval_cmd->add_option("--k", ks, "Metric cutoffs");
    eval_cmd->add_flag("--pooled", pooled, "Pool VR/DHR over all candidates instead of per-user");

    auto* smoke = app.add_subcommand("smoke", "End-to-end offline pipeline on a synthetic corpus");

    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(g.workdir);
        if (ingest->parsed())
            return run_ingest(g, metadata, reviews, domain, metadata_b, reviews_b, domain_b,
                              k_core);
        if (ctg_cmd->parsed()) return run_ctg(g, mock, no_exemplar);
        if (compress->parsed()) return run_compress(g, k_compress);
        if (export_cmd->parsed()) return run_export_iift(g, tids_file, per_step);
        if (build_lib->parsed()) return run_build_library(g, lib_tids_file);
        if (ground->parsed()) return run_ground(g, brute_force);
        if (eval_cmd->parsed()) return run_eval(g, samples_file, generator, ks, pooled);
        if (smoke->parsed()) return run_smoke(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
