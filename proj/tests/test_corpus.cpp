#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tlda/corpus.hpp"

using namespace tlda;
using Eigen::Index;
namespace fs = std::filesystem;

namespace {

using Tokens = std::vector<std::string>;

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("tlda_corpus_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Vocabulary vocab_of(std::vector<std::string> tokens) { return Vocabulary(std::move(tokens), {}, 0); }

}  // namespace

TEST(PorterStemmer, ReferenceVocabulary) {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"caresses", "caress"}, {"ponies", "poni"},       {"ties", "ti"},          {"caress", "caress"},
        {"cats", "cat"},        {"feed", "feed"},         {"agreed", "agre"},      {"plastered", "plaster"},
        {"bled", "bled"},       {"motoring", "motor"},    {"sing", "sing"},        {"conflated", "conflat"},
        {"troubled", "troubl"}, {"sized", "size"},        {"hopping", "hop"},      {"tanned", "tan"},
        {"falling", "fall"},    {"hissing", "hiss"},      {"fizzed", "fizz"},      {"failing", "fail"},
        {"filing", "file"},     {"happy", "happi"},       {"sky", "sky"},          {"relational", "relat"},
        {"conditional", "condit"}, {"rational", "ration"}, {"valenci", "valenc"},  {"digitizer", "digit"},
        {"conformabli", "conform"}, {"radicalli", "radic"}, {"differentli", "differ"}, {"vileli", "vile"},
        {"analogousli", "analog"}, {"vietnamization", "vietnam"}, {"predication", "predic"},
        {"operator", "oper"},   {"feudalism", "feudal"},  {"decisiveness", "decis"}, {"hopefulness", "hope"},
        {"callousness", "callous"}, {"formaliti", "formal"}, {"sensitiviti", "sensit"}, {"sensibiliti", "sensibl"},
        {"triplicate", "triplic"}, {"formative", "form"}, {"formalize", "formal"},  {"electriciti", "electr"},
        {"electrical", "electr"}, {"hopeful", "hope"},   {"goodness", "good"},     {"revival", "reviv"},
        {"allowance", "allow"}, {"inference", "infer"},   {"airliner", "airlin"},  {"gyroscopic", "gyroscop"},
        {"adjustable", "adjust"}, {"defensible", "defens"}, {"irritant", "irrit"}, {"replacement", "replac"},
        {"adjustment", "adjust"}, {"dependent", "depend"}, {"adoption", "adopt"},  {"homologou", "homolog"},
        {"communism", "commun"}, {"activate", "activ"},   {"angulariti", "angular"}, {"homologous", "homolog"},
        {"effective", "effect"}, {"bowdlerize", "bowdler"}, {"probate", "probat"}, {"rate", "rate"},
        {"cease", "ceas"},      {"controll", "control"},  {"roll", "roll"},        {"generalizations", "gener"},
        {"oscillators", "oscil"}, {"a", "a"},             {"is", "is"},
    };
    for (const auto& [word, stem] : cases) EXPECT_EQ(porter_stem(word), stem) << word;
}

TEST(Tokenize, BelieveSurvivors) {
    EXPECT_EQ(tokenize_and_stem("Believe survivors!"), (Tokens{"believ", "survivor"}));
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize_and_stem("").empty()); }

TEST(Tokenize, RanIsNotReduced) {
    EXPECT_EQ(tokenize_and_stem("running runs ran"), (Tokens{"run", "run", "ran"}));
}

TEST(Tokenize, DropsUrlsMentionsAndNumbersKeepsHashtagBody) {
    auto t = tokenize_and_stem("@user see https://t.co/abc and www.example.com #BelieveSurvivors 2018 now");
    EXPECT_EQ(t, (Tokens{"see", "and", "believesurvivor", "now"}));
}

TEST(Tokenize, ApostrophesJoinAndPunctuationSplits) {
    EXPECT_EQ(tokenize_and_stem("don't stop-the music"), (Tokens{"dont", "stop", "the", "music"}));
}

TEST(Bigrams, BlaseyFordDetected) {
    std::vector<Tokens> docs;
    for (int i = 0; i < 50; ++i) docs.push_back({"blasey", "ford", "testifi", "senat", "judiciari", "hear"});
    for (int i = 0; i < 200; ++i) docs.push_back({"other", "word", "here", "kavanaugh", "vote", "news"});
    PreprocessConfig cfg;
    auto set = detect_bigrams(docs, cfg);
    EXPECT_TRUE(set.count("blasey_ford"));
}

TEST(Bigrams, NoRepeatedPairGivesEmptySet) {
    std::vector<Tokens> docs = {{"a", "b", "c"}, {"d", "e", "f"}, {"g", "h"}};
    EXPECT_TRUE(detect_bigrams(docs, PreprocessConfig{}).empty());
}

TEST(Bigrams, SixDocumentCorpusMatchesExhaustivePairCount) {
    std::vector<Tokens> docs = {
        {"new", "york", "citi", "new", "york"}, {"new", "york", "time"},   {"time", "squar", "new", "york"},
        {"citi", "hall", "new", "deal"},        {"york", "citi", "time"},   {"new", "york", "squar", "time"},
    };
    PreprocessConfig cfg;
    cfg.bigram_min_count = 1;
    cfg.bigram_score_threshold = 1.0;
    auto got = detect_bigrams(docs, cfg);
    auto want = oracle::brute_bigrams(docs, 1.0, 1.0);
    EXPECT_EQ(got, want);
    EXPECT_TRUE(got.count("new_york"));
}

TEST(Bigrams, ApplyMergesGreedily) {
    BigramSet set{"new_york"};
    EXPECT_EQ(apply_bigrams({"new", "york", "new", "new", "york"}, set), (Tokens{"new_york", "new", "new_york"}));
}

TEST(Vocabulary, TokenAboveUpperBoundExcluded) {
    std::vector<Tokens> docs(10, Tokens{"common"});
    for (int i = 0; i < 3; ++i) docs[i].push_back("mid");
    PreprocessConfig cfg;
    cfg.lower_frac = 0.2;
    cfg.upper_frac = 0.5;
    auto v = build_vocabulary(docs, cfg);
    EXPECT_FALSE(v.index_of("common"));
    EXPECT_TRUE(v.index_of("mid"));
}

TEST(Vocabulary, EmptyAfterTrimmingThrows) {
    std::vector<Tokens> docs(10, Tokens{"common"});
    PreprocessConfig cfg;
    cfg.upper_frac = 0.5;
    try {
        build_vocabulary(docs, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyVocabulary);
    }
}

TEST(Vocabulary, HundredDocFixtureMatchesBruteForce) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> word(0, 59), len(1, 12);
    std::vector<Tokens> docs(100);
    for (auto& d : docs) {
        int n = len(rng);
        for (int i = 0; i < n; ++i) d.push_back("w" + std::to_string(word(rng) % (1 + word(rng))));
    }
    PreprocessConfig cfg;
    cfg.lower_frac = 0.03;
    cfg.upper_frac = 0.4;
    auto v = build_vocabulary(docs, cfg);
    EXPECT_EQ(v.tokens(), oracle::brute_vocabulary(docs, 0.03, 0.4));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(*v.index_of(v.token(i)), static_cast<std::int32_t>(i));
}

TEST(Vocabulary, TrimmingMonotonicity) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> word(0, 30);
    std::vector<Tokens> docs(80);
    for (auto& d : docs)
        for (int i = 0; i < 6; ++i) d.push_back("t" + std::to_string(word(rng) * word(rng) % 31));
    auto as_set = [](const Vocabulary& v) { return std::set<std::string>(v.tokens().begin(), v.tokens().end()); };
    PreprocessConfig base;
    base.lower_frac = 0.02;
    base.upper_frac = 0.6;
    auto ref = as_set(build_vocabulary(docs, base));
    PreprocessConfig raised = base;
    raised.lower_frac = 0.1;
    for (const auto& t : as_set(build_vocabulary(docs, raised))) EXPECT_TRUE(ref.count(t));
    PreprocessConfig lowered = base;
    lowered.upper_frac = 0.3;
    for (const auto& t : as_set(build_vocabulary(docs, lowered))) EXPECT_TRUE(ref.count(t));
}

TEST(Vocabulary, SaveLoadRoundTripAndDeterministicBytes) {
    auto dir = temp_dir("vocab");
    Vocabulary v = vocab_of({"believ", "survivor", "blasey_ford"});
    v.save((dir / "a.txt").string());
    v.save((dir / "b.txt").string());
    std::ifstream a(dir / "a.txt"), b(dir / "b.txt");
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(sa.substr(0, 4), "V=3\n");
    auto loaded = Vocabulary::load((dir / "a.txt").string());
    EXPECT_EQ(loaded.tokens(), v.tokens());
    EXPECT_EQ(loaded.hash(), v.hash());
}

TEST(Vectorize, CountsInVocabularyTokens) {
    auto v = vocab_of({"believ", "survivor"});
    auto c = vectorize({"believ", "believ", "survivor"}, v);
    ASSERT_TRUE(c);
    EXPECT_EQ(*c, (CountVector{{0, 2}, {1, 1}}));
}

TEST(Vectorize, OutOfVocabularyDocumentDropped) {
    auto v = vocab_of({"believ", "survivor"});
    EXPECT_FALSE(vectorize({"rare_typo_xyz"}, v));
}

TEST(Vectorize, FixtureMatchesCounting) {
    auto v = vocab_of({"a", "b", "c", "d"});
    Tokens doc = {"d", "a", "x", "a", "c", "d", "d", "y"};
    auto c = vectorize(doc, v);
    ASSERT_TRUE(c);
    std::map<std::int32_t, std::int32_t> brute;
    for (const auto& t : doc)
        if (auto id = v.index_of(t)) ++brute[*id];
    CountVector want;
    for (auto [id, n] : brute) want.push_back({id, n});
    EXPECT_EQ(*c, want);
}

TEST(StreamBatches, BatchSizes) {
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i) texts.push_back("alpha beta gamma");
    StringListSource src(texts);
    auto v = vocab_of({"alpha", "beta", "gamma"});
    auto batches = stream_batches(src, v, 4);
    std::vector<Index> sizes;
    while (auto b = batches.next()) sizes.push_back(b->size());
    EXPECT_EQ(sizes, (std::vector<Index>{4, 4, 2}));
}

TEST(StreamBatches, NoSurvivorsYieldsNothing) {
    StringListSource src({"zzz", "qqq www"});
    auto v = vocab_of({"alpha"});
    auto batches = stream_batches(src, v, 4);
    EXPECT_FALSE(batches.next());
    EXPECT_EQ(batches.dropped(), 2u);
}

TEST(StreamBatches, ConcatenationEqualsOneShotMatrix) {
    std::vector<std::string> texts = {"alpha beta beta", "gamma gamma alpha", "nothing here", "beta alpha gamma",
                                      "alpha alpha alpha", "beta", "gamma beta alpha beta"};
    auto v = vocab_of({"alpha", "beta", "gamma"});
    StringListSource src(texts);
    auto stream = stream_batches(src, v, 2);
    std::vector<CountVector> streamed;
    std::vector<std::int64_t> ids;
    while (auto b = stream.next())
        for (Index r = 0; r < b->size(); ++r) {
            streamed.push_back(row_counts(*b, r));
            ids.push_back(b->doc_ids[static_cast<std::size_t>(r)]);
        }
    std::vector<CountVector> oneshot;
    std::vector<std::int64_t> want_ids;
    for (std::size_t i = 0; i < texts.size(); ++i)
        if (auto c = vectorize(tokenize_and_stem(texts[i]), v)) {
            oneshot.push_back(*c);
            want_ids.push_back(static_cast<std::int64_t>(i));
        }
    EXPECT_EQ(streamed, oneshot);
    EXPECT_EQ(ids, want_ids);
}

TEST(Preprocessing, DelimitedSourceReadsNamedColumn) {
    auto dir = temp_dir("csv");
    {
        std::ofstream os(dir / "in.csv");
        os << "id,text,other\n1,\"hello, world\",x\n2,\"say \"\"hi\"\" again\",y\n";
    }
    DelimitedFileSource src((dir / "in.csv").string(), "text", ',');
    EXPECT_EQ(*src.next(), "hello, world");
    EXPECT_EQ(*src.next(), "say \"hi\" again");
    EXPECT_FALSE(src.next());
}

TEST(CountCache, RoundTripPreservesRowsAndIds) {
    auto dir = temp_dir("cache");
    std::vector<CountVector> docs = {{{0, 2}, {3, 1}}, {{1, 4}}, {{0, 1}, {1, 1}, {2, 1}}};
    MemoryBatchSource src(docs, 4, 2, {5, 7, 9});
    EXPECT_EQ(write_count_cache((dir / "counts.tsv").string(), src), 3u);
    CountCacheSource back((dir / "counts.tsv").string(), 4, 2);
    std::vector<CountVector> got;
    std::vector<std::int64_t> ids;
    while (auto b = back.next())
        for (Index r = 0; r < b->size(); ++r) {
            got.push_back(row_counts(*b, r));
            ids.push_back(b->doc_ids[static_cast<std::size_t>(r)]);
        }
    EXPECT_EQ(got, docs);
    EXPECT_EQ(ids, (std::vector<std::int64_t>{5, 7, 9}));

    CountCacheMeta meta{3, 4, 0xabcdefULL, 0x1234ULL};
    write_count_cache_meta((dir / "counts.meta").string(), meta);
    auto m = read_count_cache_meta((dir / "counts.meta").string());
    EXPECT_EQ(m.n_docs, 3u);
    EXPECT_EQ(m.vocab_size, 4u);
    EXPECT_EQ(m.config_hash, 0xabcdefULL);
    EXPECT_EQ(m.vocab_hash, 0x1234ULL);
}

TEST(CountCache, MissingFileIsSourceUnreadable) {
    try {
        CountCacheSource src("/nonexistent/counts.tsv", 3, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SourceUnreadable);
    }
}

TEST(Batches, InvariantsHold) {
    std::vector<std::string> texts = {"a b c d", "a a a", "b c", "c c d d e"};
    PreprocessConfig cfg;
    cfg.lower_frac = 0.1;
    cfg.upper_frac = 1.0;
    cfg.bigrams = false;
    StringListSource src(texts);
    auto pre = build_preprocessing(src, cfg);
    auto stream = stream_batches(src, pre.vocab, 3);
    while (auto b = stream.next()) {
        for (Index r = 0; r < b->size(); ++r) {
            auto row = row_counts(*b, r);
            EXPECT_GE(total_count(row), 3);
            for (const auto& tc : row) {
                EXPECT_LT(tc.term, static_cast<std::int32_t>(pre.vocab.size()));
                EXPECT_GE(tc.count, 1);
            }
        }
    }
}
