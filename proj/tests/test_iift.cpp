#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tid/iift.hpp"

using namespace tid;
using namespace tid::iift;
using ctg::TermIdSequence;
using ctg::TidMap;
using json = nlohmann::json;

namespace {

struct Fixture {
    std::vector<corpus::ItemRecord> items;
    std::unordered_map<std::string, corpus::ItemRecord> item_index;
    std::vector<corpus::InteractionSequence> sequences;
    TidMap tids;

    explicit Fixture(int n_items = 8) {
        for (int i = 0; i < n_items; ++i) {
            corpus::ItemRecord rec{"i" + std::to_string(i), "Title " + std::to_string(i),
                                   "Metadata for item " + std::to_string(i), ""};
            item_index[rec.item_id] = rec;
            items.push_back(rec);
            TermIdSequence tid;
            for (int j = 0; j < 5; ++j)
                tid.terms.push_back("T" + std::to_string(i) + "-" + std::to_string(j));
            tids[rec.item_id] = tid;
        }
        sequences.push_back({"u1", {"i0", "i1", "i2", "i3"}, {}});
        sequences.push_back({"u2", {"i4", "i5", "i6"}, {}});
    }
};

}  // namespace

TEST_CASE("gti samples round-trip their TID output") {
    Fixture fx;
    BuildCounts counts;
    auto gti = build_gti_samples(fx.items, fx.tids, &counts);
    CHECK(gti.size() == fx.items.size());
    CHECK(counts.skipped == 0);
    for (const auto& s : gti) {
        auto parsed = ctg::parse_tid_response(s.output, 5);
        REQUIRE(parsed.has_value());
        CHECK(ctg::canonical(*parsed) == s.output);
    }
}

TEST_CASE("gti samples skip items without TIDs") {
    Fixture fx;
    fx.tids.erase("i3");
    fx.tids.erase("i5");
    BuildCounts counts;
    auto gti = build_gti_samples(fx.items, fx.tids, &counts);
    CHECK(gti.size() == fx.items.size() - 2);
    CHECK(counts.skipped == 2);
}

TEST_CASE("seq samples put the anchor in input and the rest in output") {
    Fixture fx;
    auto seq = build_seq_samples(fx.sequences, fx.tids, fx.item_index);
    REQUIRE(seq.size() == 1);  // u2's train prefix has length 1 -> skipped
    const auto& s = seq[0];
    // u1: train prefix [i0, i1]; anchor i0, output renders i1.
    CHECK(s.input == render_item(fx.tids["i0"], "Title 0"));
    CHECK(s.output == render_item(fx.tids["i1"], "Title 1"));

    // The mask decodes exactly the output renderings.
    std::string full = s.instruction + "\n" + s.input + "\n" + s.output;
    CHECK(full.substr(s.loss_start) == s.output);
    // Anchor never carries loss.
    CHECK(full.substr(s.loss_start).find(s.input) == std::string::npos);
}

TEST_CASE("seq samples render multi-item outputs newline-separated in order") {
    Fixture fx;
    fx.sequences = {{"u1", {"i0", "i1", "i2", "i3", "i4", "i5"}, {}}};
    auto seq = build_seq_samples(fx.sequences, fx.tids, fx.item_index);
    REQUIRE(seq.size() == 1);
    // train prefix [i0..i3]; output i1, i2, i3.
    std::vector<std::string> expected = {render_item(fx.tids["i1"], "Title 1"),
                                         render_item(fx.tids["i2"], "Title 2"),
                                         render_item(fx.tids["i3"], "Title 3")};
    std::string joined = expected[0] + "\n" + expected[1] + "\n" + expected[2];
    CHECK(seq[0].output == joined);
}

TEST_CASE("per-step emission adds one sample per intermediate position") {
    Fixture fx;
    fx.sequences = {{"u1", {"i0", "i1", "i2", "i3", "i4", "i5"}, {}}};
    BuildCounts counts;
    auto seq = build_seq_samples(fx.sequences, fx.tids, fx.item_index, 20, &counts, true);
    // trajectory sample + per-step samples for k=2..3 (prefix length 4)
    CHECK(seq.size() == 3);
}

TEST_CASE("rendering flattens newlines and stays injective on the fixture") {
    TermIdSequence tid{{"A", "B"}};
    auto rendered = render_item(tid, "line1\nline2");
    CHECK(rendered.find('\n') == std::string::npos);

    Fixture fx;
    std::set<std::string> renderings;
    for (const auto& [id, t] : fx.tids)
        renderings.insert(render_item(t, fx.item_index[id].title));
    CHECK(renderings.size() == fx.tids.size());
}

TEST_CASE("eval samples exclude the target from the input") {
    Fixture fx;
    auto test_samples =
        build_eval_samples(fx.sequences, fx.tids, fx.item_index, EvalMode::Test);
    REQUIRE(test_samples.size() == 2);
    // u1 = [i0,i1,i2,i3]: test target i3, history i0,i1,i2.
    const auto& s = test_samples[0];
    CHECK(s.target_item_id == "i3");
    CHECK(s.input.find(render_item(fx.tids["i2"], "Title 2")) != std::string::npos);
    CHECK(s.input.find(render_item(fx.tids["i3"], "Title 3")) == std::string::npos);

    auto valid_samples =
        build_eval_samples(fx.sequences, fx.tids, fx.item_index, EvalMode::Valid);
    CHECK(valid_samples[0].target_item_id == "i2");
    CHECK(valid_samples[0].input.find(render_item(fx.tids["i2"], "Title 2")) ==
          std::string::npos);
}

TEST_CASE("eval samples drop targets without TIDs and count them") {
    Fixture fx;
    fx.tids.erase("i3");  // u1's test target
    BuildCounts counts;
    auto samples =
        build_eval_samples(fx.sequences, fx.tids, fx.item_index, EvalMode::Test, 20, &counts);
    CHECK(samples.size() == 1);
    CHECK(counts.skipped == 1);
}

TEST_CASE("cross-domain eval targets the last item of the requested domain") {
    Fixture fx;
    fx.sequences = {{"u1", {"i0", "i1", "i2", "i3"}, {"A", "B", "A", "B"}}};
    auto for_a = build_eval_samples_for_domain(fx.sequences, fx.tids, fx.item_index, "A");
    REQUIRE(for_a.size() == 1);
    CHECK(for_a[0].target_item_id == "i2");
    CHECK(for_a[0].domain_tag == "A");
    // History is everything before the target, both domains.
    CHECK(for_a[0].input.find(render_item(fx.tids["i1"], "Title 1")) != std::string::npos);

    auto for_b = build_eval_samples_for_domain(fx.sequences, fx.tids, fx.item_index, "B");
    CHECK(for_b[0].target_item_id == "i3");
}

TEST_CASE("history truncation keeps the most recent items") {
    Fixture fx(30);
    std::vector<std::string> items;
    for (int i = 0; i < 30; ++i) items.push_back("i" + std::to_string(i));
    fx.sequences = {{"u1", items, {}}};
    auto samples =
        build_eval_samples(fx.sequences, fx.tids, fx.item_index, EvalMode::Test, 5);
    REQUIRE(samples.size() == 1);
    // Only the 5 most recent history items appear.
    CHECK(samples[0].input.find("Title 23") == std::string::npos);
    CHECK(samples[0].input.find(render_item(fx.tids["i24"], "Title 24")) != std::string::npos);
    CHECK(samples[0].input.find(render_item(fx.tids["i28"], "Title 28")) != std::string::npos);
}

TEST_CASE("export is seed-deterministic, line counts add up, lines re-parse") {
    Fixture fx;
    auto gti = build_gti_samples(fx.items, fx.tids);
    auto seq = build_seq_samples(fx.sequences, fx.tids, fx.item_index);

    auto tmp = std::filesystem::temp_directory_path();
    auto p1 = (tmp / "iift_a.jsonl").string(), p2 = (tmp / "iift_b.jsonl").string();
    export_train_jsonl(gti, seq, p1, 123);
    export_train_jsonl(gti, seq, p2, 123);

    auto read_all = [](const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(read_all(p1) == read_all(p2));

    std::ifstream in(p1);
    std::string line;
    size_t lines = 0, gti_seen = 0, seq_seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++lines;
        json j = json::parse(line);
        CHECK(j.contains("instruction"));
        CHECK(j.contains("input"));
        CHECK(j.contains("output"));
        if (j["task"] == "gti") {
            ++gti_seen;
            auto parsed = ctg::parse_tid_response(j["output"].get<std::string>(), 5);
            CHECK(parsed.has_value());
        } else {
            ++seq_seen;
            size_t loss_start = j["loss_start"].get<size_t>();
            std::string full = j["instruction"].get<std::string>() + "\n" +
                               j["input"].get<std::string>() + "\n" +
                               j["output"].get<std::string>();
            CHECK(full.substr(loss_start) == j["output"].get<std::string>());
        }
    }
    CHECK(lines == gti.size() + seq.size());
    CHECK(gti_seen == gti.size());
    CHECK(seq_seen == seq.size());

    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("eval jsonl round-trips") {
    Fixture fx;
    auto samples = build_eval_samples(fx.sequences, fx.tids, fx.item_index, EvalMode::Test);
    auto path = (std::filesystem::temp_directory_path() / "eval_rt.jsonl").string();
    export_eval_jsonl(samples, path);
    auto loaded = load_eval_jsonl(path);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].user_id == samples[i].user_id);
        CHECK(loaded[i].input == samples[i].input);
        CHECK(loaded[i].target_tid == samples[i].target_tid);
        CHECK(loaded[i].target_item_id == samples[i].target_item_id);
    }
    std::filesystem::remove(path);
}

TEST_CASE("train config records the reference hyperparameters") {
    auto path = (std::filesystem::temp_directory_path() / "train_config.json").string();
    write_train_config(path);
    std::ifstream in(path);
    json j = json::parse(in);
    CHECK(j["global_batch_size"] == 128);
    CHECK(j["epochs"] == 3);
    CHECK(j["generation_max_length"] == 30);
    std::filesystem::remove(path);
}
