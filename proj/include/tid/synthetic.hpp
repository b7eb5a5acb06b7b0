#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tid/services.hpp"

namespace tid::synthetic {

// Writes metadata.jsonl and reviews.jsonl for a deterministic synthetic
// catalog. Every user interacts with a 10-item window, so the corpus survives
// 5-core filtering intact.
void write_synthetic_raw(const std::string& dir, int n_items = 200, int n_users = 200);

// One unique, well-formed term line per item index; used to seed the mock
// generator for offline term generation.
std::vector<std::string> synthetic_term_responses(int n_items, int n_terms = 5);

// Deterministic generator with exact prompt -> responses mappings and a
// cycling fallback table for unmapped prompts.
class ScriptedGenerator : public services::GenerationClient {
public:
    explicit ScriptedGenerator(std::vector<std::string> fallback);
    void script(const std::string& user_text, std::vector<std::string> responses);
    std::vector<std::string> generate(const services::GenerationRequest& request) override;

private:
    std::unordered_map<std::string, std::vector<std::string>> scripted_;
    std::vector<std::string> fallback_;
};

// Offline stand-in for the term-generation model on the synthetic catalog:
// reads the model number out of the prompt and answers with that item's unique
// term line, so every synthetic item gets a distinct TID.
class SyntheticCtgGenerator : public services::GenerationClient {
public:
    explicit SyntheticCtgGenerator(int n_items, int n_terms = 5);
    std::vector<std::string> generate(const services::GenerationRequest& request) override;

private:
    std::vector<std::string> responses_;
};

}  // namespace tid::synthetic
