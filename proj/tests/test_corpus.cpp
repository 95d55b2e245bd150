#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xlcode/corpus.hpp"

using namespace xlcode;
using namespace xlcode::corpus;
using xlcode::testing::fixture;
using xlcode::testing::ScratchDir;

namespace {

const char* kTwoTasks =
    R"({"id": "a", "prompt": "Add two numbers.", "solution": "def add(a, b):\n    return a + b", "assertions": ["assert add(1, 2) == 3", "assert add(0, 0) == 0", "assert add(-1, 1) == 0"]})"
    "\n"
    R"({"id": "b", "prompt": "Negate.", "solution": "def neg(a):\n    return -a", "assertions": ["assert neg(1) == -1", "assert neg(0) == 0", "assert neg(-2) == 2"]})"
    "\n";

} // namespace

TEST(Corpus, LoadsTwoTaskFile) {
    ScratchDir dir;
    auto c = Corpus::load(dir.write("tasks.jsonl", kTwoTasks));
    EXPECT_EQ(c.size(), 2u);
    EXPECT_EQ(c.task("b").assertions[2], "assert neg(-2) == 2");
    EXPECT_EQ(c.prompt("a", "en"), "Add two numbers.");
    EXPECT_FALSE(c.has_prompt("a", "hi"));
}

TEST(Corpus, RejectsWrongAssertionCount) {
    ScratchDir dir;
    auto p = dir.write("tasks.jsonl",
                       R"({"id": "a", "prompt": "p", "solution": "s", "assertions": ["assert 1", "assert 2"]})"
                       "\n");
    try {
        Corpus::load(p);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("assertion count"), std::string::npos) << e.what();
    }
}

TEST(Corpus, MalformedLineNamesLineNumber) {
    ScratchDir dir;
    std::string text = kTwoTasks;
    text += "{not json\n";
    try {
        Corpus::load(dir.write("tasks.jsonl", text));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
}

TEST(Corpus, DuplicateTranslationRejected) {
    ScratchDir dir;
    auto tasks = dir.write("tasks.jsonl", kTwoTasks);
    auto tr = dir.write("tr.jsonl", R"({"task_id": "a", "lang": "hi", "text": "x"})"
                                    "\n"
                                    R"({"task_id": "a", "lang": "hi", "text": "y"})"
                                    "\n");
    EXPECT_THROW(Corpus::load(tasks, tr), FormatError);
}

TEST(Corpus, PartialTranslationSetRejected) {
    ScratchDir dir;
    auto tasks = dir.write("tasks.jsonl", kTwoTasks);
    auto tr = dir.write("tr.jsonl", R"({"task_id": "a", "lang": "hi", "text": "x"})"
                                    "\n");
    EXPECT_THROW(Corpus::load(tasks, tr), FormatError);
}

TEST(Corpus, FixtureHasSixPromptsPerTask) {
    auto c = Corpus::load(fixture("tasks.jsonl"), fixture("translations.jsonl"));
    EXPECT_EQ(c.size(), 5u);
    EXPECT_EQ(c.prompt_count(), 30u);
    for (const auto& t : c.tasks())
        for (auto lang : kLanguages)
            EXPECT_TRUE(c.has_prompt(t.id, std::string(lang)));
}

TEST(Corpus, FullScaleShape) {
    // 257 tasks with five translations each -> 257 x 6 prompts.
    ScratchDir dir;
    std::string tasks, tr;
    for (int i = 0; i < 257; ++i) {
        auto id = std::to_string(i);
        tasks += R"({"id": ")" + id +
                 R"(", "prompt": "p", "solution": "s", "assertions": ["a", "b", "c"]})"
                 "\n";
        for (auto lang : {"es", "hi", "ja", "ru", "zh"})
            tr += R"({"task_id": ")" + id + R"(", "lang": ")" + lang + R"(", "text": "t"})" + "\n";
    }
    auto c = Corpus::load(dir.write("t.jsonl", tasks), dir.write("tr.jsonl", tr));
    EXPECT_EQ(c.size(), 257u);
    EXPECT_EQ(c.prompt_count(), 257u * 6u);
}

TEST(HumanAgreement, HandCountedExample) {
    std::vector<HumanRatingRecord> rs = {
        {"1", "en_zh", 1, 1}, {"2", "en_zh", 1, 0}, {"3", "en_zh", 0, 0}, {"4", "en_zh", 1, 1}};
    auto s = human_agreement_stats(rs).at("en_zh");
    EXPECT_DOUBLE_EQ(s.a1_mean, 0.75);
    EXPECT_DOUBLE_EQ(s.a2_mean, 0.5);
    EXPECT_DOUBLE_EQ(s.agreement_pct, 75.0);
}

TEST(HumanAgreement, IdenticalLabelsAgreeFully) {
    std::vector<HumanRatingRecord> rs = {{"1", "p", 1, 1}, {"2", "p", 0, 0}, {"3", "p", 1, 1}};
    EXPECT_DOUBLE_EQ(human_agreement_stats(rs).at("p").agreement_pct, 100.0);
}

TEST(HumanAgreement, MissingRequestedPairIsError) {
    std::vector<HumanRatingRecord> rs = {{"1", "en_es", 1, 1}};
    EXPECT_THROW(human_agreement_stats(rs, {"en_hi"}), InvalidArgument);
    EXPECT_THROW(human_agreement_stats({}), InvalidArgument);
}

TEST(HumanAgreement, SwapAndPermutationInvariance) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<HumanRatingRecord> rs;
        int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i)
            rs.push_back({std::to_string(i), "p", static_cast<int>(rng() % 2), static_cast<int>(rng() % 2)});
        auto base = human_agreement_stats(rs).at("p");
        auto swapped = rs;
        for (auto& r : swapped)
            std::swap(r.rater1, r.rater2);
        EXPECT_DOUBLE_EQ(human_agreement_stats(swapped).at("p").agreement_pct, base.agreement_pct);
        std::shuffle(rs.begin(), rs.end(), rng);
        auto perm = human_agreement_stats(rs).at("p");
        EXPECT_DOUBLE_EQ(perm.a1_mean, base.a1_mean);
        EXPECT_DOUBLE_EQ(perm.a2_mean, base.a2_mean);
    }
}

TEST(ModelRating, ConstantRatings) {
    std::vector<ModelRatingRecord> rs = {{"1", "p", 5}, {"2", "p", 5}, {"3", "p", 5}};
    auto s = model_rating_stats(rs).at("p");
    EXPECT_DOUBLE_EQ(s.mean, 5.0);
    EXPECT_DOUBLE_EQ(s.stdev, 0.0);
}

TEST(ModelRating, PopulationStdev) {
    std::vector<ModelRatingRecord> rs = {{"1", "p", 5}, {"2", "p", 4}, {"3", "p", 5}};
    auto s = model_rating_stats(rs).at("p");
    EXPECT_NEAR(s.mean, 4.6667, 5e-5);
    EXPECT_NEAR(s.stdev, 0.4714, 5e-5);
}

TEST(ModelRating, MeanWithinRange) {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ModelRatingRecord> rs;
        int lo = 5, hi = 1;
        for (int i = 0, n = 1 + static_cast<int>(rng() % 30); i < n; ++i) {
            int v = 1 + static_cast<int>(rng() % 5);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            rs.push_back({std::to_string(i), "p", v});
        }
        auto s = model_rating_stats(rs).at("p");
        EXPECT_GE(s.mean, lo);
        EXPECT_LE(s.mean, hi);
        EXPECT_GE(s.stdev, 0.0);
    }
}

TEST(QualityReport, FixturesRoundToPublishedTables) {
    auto human = human_agreement_stats(load_human_ratings(fixture("human_ratings.jsonl")));
    struct H { const char* pair; double a1, a2, agree; };
    for (auto h : {H{"en_es", 0.94, 0.96, 89.69}, H{"en_hi", 0.93, 0.96, 89.11}, H{"en_ja", 0.93, 0.96, 89.88},
                   H{"en_ru", 0.93, 0.96, 90.43}, H{"en_zh", 0.94, 0.96, 90.79}}) {
        const auto& s = human.at(h.pair);
        EXPECT_NEAR(s.a1_mean, h.a1, 0.005) << h.pair;
        EXPECT_NEAR(s.a2_mean, h.a2, 0.005) << h.pair;
        EXPECT_NEAR(s.agreement_pct, h.agree, 0.005) << h.pair;
    }
    auto model = model_rating_stats(load_model_ratings(fixture("model_ratings.jsonl")));
    struct M { const char* pair; double mean, sd; };
    for (auto m : {M{"en_hi", 4.88, 0.40}, M{"en_es", 4.90, 0.48}, M{"en_ru", 4.95, 0.30},
                   M{"en_zh", 4.93, 0.39}, M{"en_ja", 4.87, 0.55}}) {
        EXPECT_NEAR(model.at(m.pair).mean, m.mean, 0.005) << m.pair;
        EXPECT_NEAR(model.at(m.pair).stdev, m.sd, 0.005) << m.pair;
    }
    auto j = quality_report(load_human_ratings(fixture("human_ratings.jsonl")),
                            load_model_ratings(fixture("model_ratings.jsonl")))
                 .to_json();
    EXPECT_EQ(j["metadata"]["stdev_divisor"], "N");
    EXPECT_EQ(j["human"].size(), 5u);
}

TEST(QualityReport, RejectsOutOfRangeLabels) {
    ScratchDir dir;
    auto p = dir.write("h.jsonl", R"({"task_id": "1", "lang_pair": "en_es", "rater1": 2, "rater2": 1})"
                                  "\n");
    EXPECT_THROW(load_human_ratings(p), FormatError);
    auto q = dir.write("m.jsonl", R"({"task_id": "1", "lang_pair": "en_es", "rating": 6})"
                                  "\n");
    EXPECT_THROW(load_model_ratings(q), FormatError);
}
