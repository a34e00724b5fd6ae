#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dmu/dmu.hpp"

namespace fs = std::filesystem;
using Tokens = std::vector<std::string>;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dmu_test_" + std::to_string(std::random_device{}()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        const auto p = path / name;
        std::ofstream(p) << content;
        return p.string();
    }
};

dmu::SentenceRecord two_target_record() {
    return {1,
            "LOC1 is your best bet for secure although expensive and LOC2 is too far.",
            {{"LOC1", "safety", dmu::Polarity::Positive},
             {"LOC1", "price", dmu::Polarity::Negative},
             {"LOC2", "transit-location", dmu::Polarity::Negative}}};
}

}  // namespace

TEST(Tokenize, Examples) {
    EXPECT_EQ(dmu::tokenize("LOC1 is your best bet"), (Tokens{"loc1", "is", "your", "best", "bet"}));
    EXPECT_EQ(dmu::tokenize("you won't go hungry"), (Tokens{"you", "won't", "go", "hungry"}));
    EXPECT_EQ(dmu::tokenize("LOC2 is too far."), (Tokens{"loc2", "is", "too", "far", "."}));
    EXPECT_EQ(dmu::tokenize("that's it, LOC1!"), (Tokens{"that's", "it", ",", "loc1", "!"}));
    EXPECT_EQ(dmu::tokenize("costs 1,200.50 (ish)"), (Tokens{"costs", "1,200.50", "(", "ish", ")"}));
    EXPECT_EQ(dmu::tokenize("north-west of LOC3"), (Tokens{"north-west", "of", "loc3"}));
}

TEST(Tokenize, EmptyInputThrows) {
    EXPECT_THROW(dmu::tokenize(""), dmu::EmptyInputError);
    EXPECT_THROW(dmu::tokenize("  \t\n"), dmu::EmptyInputError);
}

TEST(Tokenize, IdempotentOnItsOwnOutput) {
    for (const char* text : {"LOC1's rents -- sky high!!", "It's 'quite' nice, isn't it?",
                             "e.g. LOC2... or loc1?", "\"Quoted\" words; and more:"}) {
        const auto once = dmu::tokenize(text);
        std::string joined;
        for (const auto& t : once) joined += t + " ";
        EXPECT_EQ(dmu::tokenize(joined), once) << text;
    }
}

TEST(ExpandInstances, TwoTargetSentence) {
    auto instances = dmu::expand_instances(two_target_record(), dmu::default_aspects());
    ASSERT_EQ(instances.size(), 8u);
    std::map<std::pair<std::string, std::string>, dmu::Polarity> got;
    for (const auto& i : instances) got[{i.target, i.aspect}] = i.gold;
    EXPECT_EQ((got[{"loc1", "safety"}]), dmu::Polarity::Positive);
    EXPECT_EQ((got[{"loc1", "price"}]), dmu::Polarity::Negative);
    EXPECT_EQ((got[{"loc2", "transit-location"}]), dmu::Polarity::Negative);
    EXPECT_EQ((got[{"loc1", "transit-location"}]), dmu::Polarity::None);
    EXPECT_EQ((got[{"loc2", "general"}]), dmu::Polarity::None);
}

TEST(ExpandInstances, SingleTargetGivesFourAndFiltersOtherAspects) {
    dmu::SentenceRecord r{2, "LOC1 has great food", {{"LOC1", "dining", dmu::Polarity::Positive}}};
    auto instances = dmu::expand_instances(r, dmu::default_aspects());
    ASSERT_EQ(instances.size(), 4u);
    for (const auto& i : instances) EXPECT_EQ(i.gold, dmu::Polarity::None);
}

TEST(ExpandInstances, IntegrityErrors) {
    dmu::SentenceRecord missing{3, "LOC1 only", {{"LOC2", "price", dmu::Polarity::Positive}}};
    EXPECT_THROW(dmu::expand_instances(missing, dmu::default_aspects()), dmu::IntegrityError);
    dmu::SentenceRecord conflict{4, "LOC1 here",
                                 {{"LOC1", "price", dmu::Polarity::Positive},
                                  {"LOC1", "price", dmu::Polarity::Negative}}};
    EXPECT_THROW(dmu::expand_instances(conflict, dmu::default_aspects()), dmu::IntegrityError);
}

TEST(ExpandInstances, AnyTargetMarkerIsAccepted) {
    dmu::SentenceRecord r{5, "LOC3 beats LOC1", {{"LOC3", "general", dmu::Polarity::Positive}}};
    auto instances = dmu::expand_instances(r, dmu::default_aspects());
    ASSERT_EQ(instances.size(), 8u);
    EXPECT_EQ(instances.front().target, "loc1");
    EXPECT_EQ(instances.back().target, "loc3");
}

TEST(Embeddings, LoadAndLookup) {
    TempDir dir;
    const auto path = dir.file("emb.txt", "the 0.1 0.2 0.3 0.4\nprice 1e-3 -2.5 3 0.000001\nsafe 1 2 3 4\n");
    auto table = dmu::load_embeddings(path, 4);
    EXPECT_EQ(table.size(), 3u);
    EXPECT_EQ(table.lookup("price"), (std::vector<double>{1e-3, -2.5, 3, 0.000001}));
    EXPECT_EQ(table.lookup("the")[1], 0.2);
}

TEST(Embeddings, WrongDimensionNamesTheLine) {
    TempDir dir;
    const auto path = dir.file("emb.txt", "a 1 2 3\nb 1 2\n");
    try {
        dmu::load_embeddings(path, 3);
        FAIL();
    } catch (const dmu::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(Embeddings, MalformedValuesAreCountedAndSkipped) {
    TempDir dir;
    const auto path = dir.file("emb.txt", "a 1 2\nb x 2\nc 3 4\n");
    auto table = dmu::load_embeddings(path, 2);
    EXPECT_EQ(table.size(), 2u);
    EXPECT_EQ(table.malformed_lines(), 1u);
    EXPECT_FALSE(table.contains("b"));
}

TEST(Embeddings, OovVectorsAreDeterministicAndBounded) {
    dmu::EmbeddingTable a(16), b(16), c(16, 99);
    auto x = a.lookup("loc1");
    EXPECT_EQ(x, b.lookup("loc1"));
    EXPECT_NE(x, a.lookup("loc2"));
    EXPECT_NE(x, c.lookup("loc1"));
    for (double v : x) {
        EXPECT_GE(v, -0.05);
        EXPECT_LT(v, 0.05);
    }
}

TEST(Embeddings, SaveRoundTripAndFilteredHash) {
    TempDir dir;
    std::mt19937_64 rng(1);
    dmu::SynthSpec spec;
    spec.embed_dim = 5;
    auto table = dmu::synth_embeddings(spec, rng);
    const auto path = (dir.path / "t.txt").string();
    dmu::save_embeddings(table, path);
    auto back = dmu::load_embeddings(path, 5);
    EXPECT_EQ(back.vocabulary_hash(), table.vocabulary_hash());
    for (const auto& t : table.tokens()) EXPECT_EQ(back.lookup(t), table.lookup(t));
    std::unordered_set<std::string> keep{"loc1", "safe"};
    auto filtered = dmu::load_embeddings(path, 5, &keep);
    EXPECT_EQ(filtered.size(), 2u);
    EXPECT_EQ(filtered.vocabulary_hash(), table.vocabulary_hash());
}

TEST(AspectVector, Examples) {
    dmu::EmbeddingTable t(2);
    t.insert("price", std::vector<double>{1, 2});
    t.insert("transit", std::vector<double>{1, 4});
    t.insert("location", std::vector<double>{3, 0});
    EXPECT_EQ(dmu::aspect_vector<double>("price", t), (std::vector<double>{1, 2}));
    EXPECT_EQ(dmu::aspect_vector<double>("transit-location", t), (std::vector<double>{2, 2}));
    EXPECT_THROW(dmu::aspect_vector<double>("food", t), dmu::ConfigError);
}

TEST(Corpus, JsonRoundTripAndCaseInsensitiveSentiment) {
    auto j = nlohmann::json::parse(R"([{"id": 7, "text": "LOC1 is nice",
        "opinions": [{"target_entity": "LOC1", "aspect": "general", "sentiment": "POSITIVE"}]}])");
    auto records = dmu::parse_corpus(j);
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].opinions[0].sentiment, dmu::Polarity::Positive);
    auto again = dmu::parse_corpus(dmu::corpus_to_json(records));
    EXPECT_EQ(again[0].text, records[0].text);
    EXPECT_EQ(again[0].opinions[0].aspect, "general");
    EXPECT_THROW(dmu::parse_corpus(nlohmann::json::object()), dmu::FormatError);
}

TEST(Split, SelfSplitSizesAndDeterminism) {
    std::vector<dmu::SentenceRecord> records;
    for (int i = 0; i < 100; ++i) records.push_back({i, "LOC1 x", {}});
    auto a = dmu::split_corpus(records, 5);
    EXPECT_EQ(a.train.size(), 70u);
    EXPECT_EQ(a.validation.size(), 10u);
    EXPECT_EQ(a.test.size(), 20u);
    auto b = dmu::split_corpus(records, 5);
    for (std::size_t i = 0; i < 70; ++i) EXPECT_EQ(a.train[i].id, b.train[i].id);
    EXPECT_NO_THROW(dmu::check_disjoint(a));
}

TEST(Split, ProvidedFilesAndOverlap) {
    TempDir dir;
    auto rec = [](int id) {
        return std::vector<dmu::SentenceRecord>{{id, "LOC1 ok", {}}};
    };
    dmu::save_corpus(rec(1), (dir.path / "sentihood-train.json").string());
    dmu::save_corpus(rec(2), (dir.path / "sentihood-dev.json").string());
    dmu::save_corpus(rec(3), (dir.path / "sentihood-test.json").string());
    auto s = dmu::load_split(dir.path.string(), 0);
    EXPECT_EQ(s.train[0].id, 1);
    EXPECT_EQ(s.validation[0].id, 2);
    EXPECT_EQ(s.test[0].id, 3);
    dmu::save_corpus(rec(1), (dir.path / "sentihood-test.json").string());
    EXPECT_THROW(dmu::load_split(dir.path.string(), 0), dmu::IntegrityError);
}

TEST(Sampler, CountsAndRotation) {
    std::vector<dmu::Instance> instances;
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 5 + 10 * c; ++k) {
            dmu::Instance i;
            i.gold = static_cast<dmu::Polarity>(c);
            instances.push_back(i);
        }
    }
    dmu::BalancedSampler six(instances, 6);
    EXPECT_EQ(six.next_counts(), (std::array<std::size_t, 3>{2, 2, 2}));
    dmu::BalancedSampler s(instances, 128);
    std::mt19937_64 rng(1);
    using C = std::array<std::size_t, 3>;
    EXPECT_EQ(s.next_counts(), (C{43, 43, 42}));
    auto batch = s.next(rng);
    EXPECT_EQ(batch.size(), 128u);
    EXPECT_EQ(s.next_counts(), (C{43, 42, 43}));
    s.next(rng);
    EXPECT_EQ(s.next_counts(), (C{42, 43, 43}));
    for (std::size_t i : batch) EXPECT_LT(i, instances.size());
}

TEST(Sampler, MonteCarloClassShares) {
    std::vector<dmu::Instance> instances;
    for (int k = 0; k < 100; ++k) {
        dmu::Instance i;
        i.gold = k < 5 ? dmu::Polarity::Positive : k < 20 ? dmu::Polarity::Negative : dmu::Polarity::None;
        instances.push_back(i);
    }
    dmu::BalancedSampler s(instances, 128);
    std::mt19937_64 rng(2);
    std::array<double, 3> counts{};
    double total = 0;
    for (int b = 0; b < 10000; ++b) {
        for (std::size_t i : s.next(rng)) {
            counts[static_cast<std::size_t>(instances[i].gold)] += 1;
            total += 1;
        }
    }
    for (double c : counts) EXPECT_NEAR(c / total, 1.0 / 3, 0.01);
}

TEST(Sampler, EmptyClassIsConfigError) {
    std::vector<dmu::Instance> instances(4);
    EXPECT_THROW(dmu::BalancedSampler(instances, 6), dmu::ConfigError);
    EXPECT_FALSE(dmu::BalancedSampler::supports(instances));
}

TEST(Synth, CountsAndAdjacency) {
    dmu::SynthSpec spec;
    spec.sentences = 100;
    std::mt19937_64 rng(3);
    auto records = dmu::synth_generate(spec, rng);
    EXPECT_EQ(dmu::expand_instances(records, spec.aspects).size(), 800u);
    // distance 0 with cues after: each opinion's cue directly follows a run
    // starting at its target, so the token after every target is a cue word
    // whenever that target has an opinion.
    std::set<std::string> cues;
    for (const auto& [a, lex] : spec.lexicon) {
        cues.insert(lex.first.begin(), lex.first.end());
        cues.insert(lex.second.begin(), lex.second.end());
    }
    for (const auto& r : records) {
        auto toks = dmu::tokenize(r.text);
        for (const auto& op : r.opinions) {
            auto it = std::find(toks.begin(), toks.end(), dmu::lowercase(op.target));
            ASSERT_NE(it, toks.end());
            ASSERT_NE(it + 1, toks.end());
            EXPECT_TRUE(cues.contains(*(it + 1))) << r.text;
        }
    }
}

TEST(Synth, DistanceIsRespected) {
    dmu::SynthSpec spec;
    spec.sentences = 50;
    spec.targets = 1;
    spec.mention_prob = 1.0;
    spec.aspects = {"price"};
    spec.min_distance = 5;
    spec.max_distance = 5;
    std::mt19937_64 rng(4);
    for (const auto& r : dmu::synth_generate(spec, rng)) {
        auto toks = dmu::tokenize(r.text);
        auto it = std::find(toks.begin(), toks.end(), "loc1");
        ASSERT_LT(static_cast<std::size_t>(it - toks.begin()) + 6, toks.size());
        const auto& lex = spec.lexicon.at("price");
        const std::string cue = *(it + 6);
        const bool known = std::find(lex.first.begin(), lex.first.end(), cue) != lex.first.end() ||
                           std::find(lex.second.begin(), lex.second.end(), cue) != lex.second.end();
        EXPECT_TRUE(known) << r.text;
    }
}

TEST(Synth, LabelDistributionMatchesTemplate) {
    dmu::SynthSpec spec;
    spec.sentences = 4000;
    spec.mention_prob = 0.3;
    spec.positive_prob = 0.7;
    std::mt19937_64 rng(5);
    auto instances = dmu::expand_instances(dmu::synth_generate(spec, rng), spec.aspects);
    std::array<double, 3> counts{};
    for (const auto& i : instances) counts[static_cast<std::size_t>(i.gold)] += 1;
    const double n = static_cast<double>(instances.size());
    EXPECT_NEAR(counts[0] / n, 0.3 * 0.7, 0.01);
    EXPECT_NEAR(counts[1] / n, 0.3 * 0.3, 0.01);
    EXPECT_NEAR(counts[2] / n, 0.7, 0.01);
}

TEST(Synth, SpecFileParsing) {
    std::istringstream in(
        "# comment\nsentences = 12\ntargets=3\nmin_distance = 2\nmax_distance = 4\n"
        "placement = either\nlexicon.price.positive = low,fair\nembed_dim = 8\n");
    auto spec = dmu::parse_synth_spec(in);
    EXPECT_EQ(spec.sentences, 12u);
    EXPECT_EQ(spec.targets, 3u);
    EXPECT_EQ(spec.max_distance, 4u);
    EXPECT_EQ(spec.placement, dmu::CuePlacement::Either);
    EXPECT_EQ(spec.lexicon.at("price").first, (std::vector<std::string>{"low", "fair"}));
    std::istringstream bad("sentences = many\n");
    EXPECT_THROW(dmu::parse_synth_spec(bad), dmu::FormatError);
    std::istringstream unknown("colour = red\n");
    EXPECT_THROW(dmu::parse_synth_spec(unknown), dmu::FormatError);
}
