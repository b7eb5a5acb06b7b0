#include "tid/synthetic.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tid::synthetic {

using json = nlohmann::json;

namespace {

const char* kNouns[] = {"Speaker", "Backpack", "Kettle",  "Lamp",   "Charger",
                        "Notebook", "Blender", "Monitor", "Tripod", "Headset"};
const char* kAdjectives[] = {"Portable", "Wireless", "Compact", "Rugged",  "Ergonomic",
                             "Foldable", "Premium",  "Budget",  "Classic", "Modern"};
const char* kMaterials[] = {"Steel", "Bamboo", "Leather", "Aluminum", "Canvas",
                            "Ceramic", "Carbon", "Walnut", "Silicone", "Glass"};
const char* kColors[] = {"Black", "White", "Red",  "Blue",  "Green",
                         "Amber", "Slate", "Ivory", "Coral", "Olive"};
const char* kBrands[] = {"Northwind", "Acme", "Globex", "Initech", "Umbra"};

}  // namespace

void write_synthetic_raw(const std::string& dir, int n_items, int n_users) {
    std::filesystem::create_directories(dir);

    std::ofstream meta(dir + "/metadata.jsonl");
    if (!meta) throw std::runtime_error("cannot write " + dir + "/metadata.jsonl");
    for (int i = 0; i < n_items; ++i) {
        std::string noun = kNouns[i % 10];
        std::string adj = kAdjectives[(i / 10) % 10];
        std::string material = kMaterials[(i / 3) % 10];
        std::string color = kColors[(i / 7) % 10];
        std::string brand = kBrands[i % 5];
        json j{{"item_id", "item" + std::to_string(i)},
               {"title", adj + " " + material + " " + noun + " " + std::to_string(i)},
               {"description", "A " + adj + " " + noun + " made of " + material + " in " +
                                   color + ". Model number " + std::to_string(1000 + i) + "."},
               {"categories", json::array({json::array({"Home", noun + "s"})})},
               {"brand", brand}};
        meta << j.dump() << '\n';
    }

    std::ofstream reviews(dir + "/reviews.jsonl");
    if (!reviews) throw std::runtime_error("cannot write " + dir + "/reviews.jsonl");
    for (int u = 0; u < n_users; ++u) {
        for (int j = 0; j < 10; ++j) {
            int item = (u + j) % n_items;
            json r{{"user_id", "user" + std::to_string(u)},
                   {"item_id", "item" + std::to_string(item)},
                   {"timestamp", 1600000000 + u * 1000 + j}};
            reviews << r.dump() << '\n';
        }
    }
}

std::vector<std::string> synthetic_term_responses(int n_items, int n_terms) {
    std::vector<std::string> responses;
    responses.reserve(n_items);
    for (int i = 0; i < n_items; ++i) {
        std::vector<std::string> terms = {kNouns[i % 10], kAdjectives[(i / 10) % 10],
                                          kMaterials[(i / 3) % 10], kColors[(i / 7) % 10],
                                          std::string("Model-") + std::to_string(1000 + i)};
        while (static_cast<int>(terms.size()) < n_terms)
            terms.push_back("Extra-" + std::to_string(terms.size()));
        terms.resize(n_terms);
        std::string line;
        for (size_t t = 0; t < terms.size(); ++t) {
            if (t) line += ", ";
            line += terms[t];
        }
        responses.push_back(std::move(line));
    }
    return responses;
}

ScriptedGenerator::ScriptedGenerator(std::vector<std::string> fallback)
    : fallback_(std::move(fallback)) {
    if (fallback_.empty()) throw std::invalid_argument("scripted generator needs a fallback table");
}

void ScriptedGenerator::script(const std::string& user_text, std::vector<std::string> responses) {
    scripted_[user_text] = std::move(responses);
}

std::vector<std::string> ScriptedGenerator::generate(const services::GenerationRequest& request) {
    std::vector<std::string> out;
    auto it = scripted_.find(request.user_text);
    if (it != scripted_.end())
        out = it->second;
    std::uint64_t start = services::fnv1a_hash(request.user_text) % fallback_.size();
    while (static_cast<int>(out.size()) < request.num_return_sequences)
        out.push_back(fallback_[(start + out.size()) % fallback_.size()]);
    out.resize(request.num_return_sequences);
    return out;
}

SyntheticCtgGenerator::SyntheticCtgGenerator(int n_items, int n_terms)
    : responses_(synthetic_term_responses(n_items, n_terms)) {}

std::vector<std::string> SyntheticCtgGenerator::generate(
    const services::GenerationRequest& request) {
    // The target item's metadata comes first in the prompt; its model number
    // identifies the item index.
    static const std::string kMarker = "Model number ";
    size_t pos = request.user_text.find(kMarker);
    size_t index = 0;
    if (pos != std::string::npos) {
        size_t start = pos + kMarker.size();
        size_t end = start;
        while (end < request.user_text.size() &&
               isdigit(static_cast<unsigned char>(request.user_text[end])))
            ++end;
        long model = std::stol(request.user_text.substr(start, end - start));
        if (model >= 1000 && model - 1000 < static_cast<long>(responses_.size()))
            index = static_cast<size_t>(model - 1000);
    }
    std::vector<std::string> out;
    for (int i = 0; i < request.num_return_sequences; ++i)
        out.push_back(responses_[(index + i) % responses_.size()]);
    return out;
}

}  // namespace tid::synthetic
