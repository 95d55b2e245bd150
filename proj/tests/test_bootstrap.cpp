#include <gtest/gtest.h>

#include "fixture_builders.hpp"
#include "test_util.hpp"
#include "xlcode/bootstrap.hpp"

using namespace xlcode;
using namespace xlcode::bootstrap;
using xlcode::testing::ScratchDir;

namespace {

const codeexec::PythonToolchain& toolchain() {
    static codeexec::PythonToolchain tc;
    return tc;
}

} // namespace

TEST(ProblemList, ParsesNumberedAndBulleted) {
    auto items = parse_problem_list("Sure:\n1. First problem\n2) Second problem\n- Third\n* **Title**: Fourth\n"
                                    "1. First problem\nNot an item");
    EXPECT_EQ(items, (std::vector<std::string>{"First problem", "Second problem", "Third", "Fourth"}));
    EXPECT_TRUE(parse_problem_list("Programming is fun, here is some prose.").empty());
}

TEST(Generate, ReplayedTranscriptYieldsThreePairs) {
    auto cfg = xlcode::testing::bootstrap_config();
    auto client = llm::Client::replay(xlcode::testing::bootstrap_transcript(cfg));
    auto res = generate_candidates(cfg, client, toolchain());
    EXPECT_EQ(res.requests_issued, 2);
    ASSERT_EQ(res.pairs.size(), 3u);
    EXPECT_EQ(res.pairs[1].q, "Write a function to add two numbers.");
    EXPECT_EQ(res.pairs[1].a, "def add(a, b):\n    return a + b");
    EXPECT_EQ(res.warnings.size(), 1u); // second attempt is prose
}

TEST(Generate, ProseOnlyGivesNoPairs) {
    auto cfg = xlcode::testing::bootstrap_config();
    cfg.n_attempts = 1;
    llm::Transcript t;
    t.record(generation_request(cfg, 0), xlcode::testing::reply("I would rather talk about the weather."));
    auto res = generate_candidates(cfg, llm::Client::replay(std::move(t)), toolchain());
    EXPECT_TRUE(res.pairs.empty());
    EXPECT_FALSE(res.warnings.empty());
}

TEST(Generate, AllEmptyIsError) {
    auto cfg = xlcode::testing::bootstrap_config();
    llm::Transcript t;
    t.record(generation_request(cfg, 0), xlcode::testing::reply(""));
    t.record(generation_request(cfg, 1), llm::ChatResponse{std::nullopt, "content_filter", 0, 0, 0});
    EXPECT_THROW(generate_candidates(cfg, llm::Client::replay(std::move(t)), toolchain()), Error);
}

TEST(Generate, UnparseableAnswerDropped) {
    auto cfg = xlcode::testing::bootstrap_config();
    cfg.n_attempts = 1;
    llm::Transcript t;
    t.record(generation_request(cfg, 0), xlcode::testing::reply("1. Problem A\n2. Problem B"));
    t.record(answer_request(cfg, "Problem A"), xlcode::testing::reply("```python\ndef a(:\n```"));
    t.record(answer_request(cfg, "Problem B"), xlcode::testing::reply("```python\ndef b():\n    return 1\n```"));
    auto res = generate_candidates(cfg, llm::Client::replay(std::move(t)), toolchain());
    ASSERT_EQ(res.pairs.size(), 1u);
    EXPECT_EQ(res.pairs[0].q, "Problem B");
}

TEST(RoundTripFilter, ThresholdPresets) {
    auto cfg = xlcode::testing::bootstrap_config();
    auto client = llm::Client::replay(xlcode::testing::bootstrap_transcript(cfg));
    auto pairs = generate_candidates(cfg, client, toolchain()).pairs;

    cfg.threshold = kAlgorithmThreshold;
    auto strict = round_trip_filter(pairs, "hi", cfg, client);
    ASSERT_EQ(strict.audit.size(), 3u);
    EXPECT_NEAR(strict.audit[0].bleu, 0.8371170098777919, 1e-12);
    EXPECT_DOUBLE_EQ(strict.audit[1].bleu, 1.0);
    EXPECT_EQ(strict.audit[2].bleu, 0.0);
    ASSERT_EQ(strict.data.size(), 1u);
    EXPECT_EQ(strict.data[0].prompt, "[hi] add two numbers");
    EXPECT_EQ(strict.data[0].lang, "hi");

    cfg.threshold = kTextThreshold;
    auto loose = round_trip_filter(pairs, "hi", cfg, client);
    EXPECT_EQ(loose.data.size(), 2u);
    for (const auto& r : loose.audit)
        EXPECT_EQ(r.accepted, r.bleu > 0.8);
}

TEST(RoundTripFilter, FailedTranslationLoggedAndSkipped) {
    auto cfg = xlcode::testing::bootstrap_config();
    auto client = llm::Client::replay(xlcode::testing::bootstrap_transcript(cfg));
    std::vector<CandidatePair> pairs = {{"Write a function to add two numbers.", "def add(a, b):\n    return a + b"},
                                        {"Never recorded problem", "def f():\n    pass"}};
    auto res = round_trip_filter(pairs, "hi", cfg, client);
    ASSERT_EQ(res.audit.size(), 2u);
    EXPECT_TRUE(res.audit[0].accepted);
    EXPECT_FALSE(res.audit[1].accepted);
    EXPECT_NE(res.audit[1].error.find("unrecorded"), std::string::npos);
    EXPECT_THROW(round_trip_filter(pairs, "en", cfg, client), InvalidArgument);
}

TEST(RoundTripFilter, RaisingThresholdNeverAcceptsMore) {
    auto cfg = xlcode::testing::bootstrap_config({"hi", "es"});
    auto client = llm::Client::replay(xlcode::testing::bootstrap_transcript(cfg));
    auto pairs = generate_candidates(cfg, client, toolchain()).pairs;
    std::size_t prev = pairs.size() + 1;
    for (double th : {0.0, 0.5, 0.8, 0.85, 0.9, 0.99, 1.0}) {
        cfg.threshold = th;
        auto n = round_trip_filter(pairs, "es", cfg, client).data.size();
        EXPECT_LE(n, prev) << th;
        prev = n;
    }
    EXPECT_EQ(prev, 0u);
}

TEST(Dataset, SeededShuffleAndMetadata) {
    ScratchDir dir;
    std::vector<TrainingExample> data = {{"t1", "a1", "hi"}, {"t2", "a2", "hi"}, {"t3", "a3", "es"}};
    DatasetMeta meta;
    auto m = emit_dataset(data, dir.path() / "d.jsonl", 42, meta);
    auto first = jsonl::read_text(dir.path() / "d.jsonl");
    emit_dataset(data, dir.path() / "e.jsonl", 42, meta);
    EXPECT_EQ(first, jsonl::read_text(dir.path() / "e.jsonl"));
    EXPECT_DOUBLE_EQ(m["temperature"].get<double>(), 0.8);
    EXPECT_EQ(m["epochs"], 2);
    EXPECT_EQ(m["per_lang"]["hi"], 2);
    EXPECT_EQ(m["per_lang"]["es"], 1);
    auto meta_file = json::parse(jsonl::read_text(metadata_path(dir.path() / "d.jsonl")));
    EXPECT_EQ(meta_file, m);
    EXPECT_EQ(jsonl::read_all(dir.path() / "d.jsonl").size(), 3u);
    EXPECT_THROW(emit_dataset({}, dir.path() / "x.jsonl", 1, meta), InvalidArgument);
}

TEST(Dataset, ShuffleIsAPermutationAndSeedSensitive) {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i)
        v[static_cast<std::size_t>(i)] = i;
    auto a = v, b = v, c = v;
    seeded_shuffle(a, 7);
    seeded_shuffle(b, 7);
    seeded_shuffle(c, 8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::sort(a.begin(), a.end());
    EXPECT_EQ(a, v);
}

TEST(Config, Validation) {
    BootstrapConfig cfg;
    cfg.threshold = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.threshold = 0.9;
    cfg.n_attempts = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.n_attempts = 1;
    cfg.target_langs = {"en"};
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}
