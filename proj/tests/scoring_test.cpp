#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pis/rng.hpp"
#include "pis/scoring.hpp"

namespace {

std::vector<pis::Token> words(std::initializer_list<const char*> ws) {
    std::vector<pis::Token> out;
    for (const char* w : ws) {
        pis::Token t;
        t.text = w;
        t.index = out.size();
        out.push_back(t);
    }
    return out;
}

pis::CorpusStats stats_of(std::initializer_list<const char*> docs) {
    std::vector<pis::Document> ds;
    for (const char* d : docs) ds.push_back(pis::make_document("d" + std::to_string(ds.size()), d));
    return pis::build_corpus_stats(ds);
}

pis::EncoderRecord make_record(std::string doc, std::size_t idx, std::vector<std::string> tokens) {
    pis::EncoderRecord r;
    r.doc_id = std::move(doc);
    r.sentence_index = idx;
    r.tokens = std::move(tokens);
    const double n = static_cast<double>(r.tokens.size());
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
        r.attention_mean.push_back(1.0 / n);
        r.attention_variance.push_back(0.01 * static_cast<double>(i + 1));
    }
    r.embedding.assign(pis::kEmbeddingDim, 0.0);
    r.embedding[idx % pis::kEmbeddingDim] = 1.0;
    return r;
}

std::string record_line(const pis::EncoderRecord& r) {
    std::ostringstream os;
    pis::write_encoder_record(os, r);
    return os.str();
}

}  // namespace

TEST(ComputeTf, CountsAndShares) {
    const auto tf = pis::compute_tf(words({"a", "b", "a"}));
    EXPECT_EQ(tf.counts.at("a"), 2u);
    EXPECT_EQ(tf.counts.at("b"), 1u);
    EXPECT_DOUBLE_EQ(tf.tf_share[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(tf.tf_share[1], 1.0 / 3.0);
}

TEST(ComputeTf, Singleton) {
    const auto tf = pis::compute_tf(words({"a"}));
    EXPECT_EQ(tf.counts.at("a"), 1u);
    EXPECT_DOUBLE_EQ(tf.tf_share[0], 1.0);
}

TEST(ComputeTf, CaseFolded) {
    const auto tf = pis::compute_tf(words({"A", "a"}));
    ASSERT_EQ(tf.counts.size(), 1u);
    EXPECT_EQ(tf.counts.at("a"), 2u);
}

TEST(ComputeTf, PunctuationIgnoredAndEmptyRejected) {
    const auto toks = pis::tokenize("a , a .");
    const auto tf = pis::compute_tf(toks);
    EXPECT_EQ(tf.tf.size(), 2u);
    EXPECT_DOUBLE_EQ(tf.tf_share[0], 1.0);
    EXPECT_THROW(pis::compute_tf(pis::tokenize(", .")), pis::EmptySentence);
}

TEST(ComputeIdf, SmoothedValues) {
    const auto everywhere = stats_of({"x y", "x z", "x"});
    EXPECT_DOUBLE_EQ(pis::compute_idf(everywhere, "x"), 1.0);

    const auto two = stats_of({"a b", "c"});
    EXPECT_NEAR(pis::compute_idf(two, "a"), 1.4054651081081644, 1e-15);

    pis::CorpusStats one;
    one.add_document({"seen"});
    EXPECT_NEAR(pis::compute_idf(one, "unseen"), 1.6931471805599454, 1e-15);
    EXPECT_DOUBLE_EQ(pis::compute_idf(two, "A"), pis::compute_idf(two, "a"));
}

TEST(CorpusStats, SingleDocumentCountsSentences) {
    const auto stats = stats_of({"a b. a c. d"});
    EXPECT_EQ(stats.doc_count, 3u);
    EXPECT_EQ(stats.df("a"), 2u);
    EXPECT_EQ(stats.df("d"), 1u);
    for (const auto& [term, df] : stats.doc_frequency) {
        EXPECT_GE(df, 1u);
        EXPECT_LE(df, stats.doc_count);
    }
}

TEST(CorrectiveWeight, Examples) {
    EXPECT_DOUBLE_EQ(pis::corrective_weight(0.5, 0.25, 2.0, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(pis::corrective_weight(0.5, 0.25, 2.0, 1.0), 0.25);
    EXPECT_DOUBLE_EQ(pis::corrective_weight(0.0, 0.3, 1.7, 0.5), 0.0);
    EXPECT_THROW(pis::corrective_weight(0.5, 0.0, 2.0, 0.5), pis::DomainError);
    EXPECT_THROW(pis::corrective_weight(0.5, -0.1, 2.0, 0.5), pis::DomainError);
}

TEST(CorrectiveWeight, MonotoneProperty) {
    pis::Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double att = rng.uniform01();
        const double share = 0.01 + 0.99 * rng.uniform01();
        const double idf = 1.0 + 3.0 * rng.uniform01();
        const double gamma = 2.0 * rng.uniform01();
        const double w = pis::corrective_weight(att, share, idf, gamma);
        EXPECT_LE(w, pis::corrective_weight(att, share, idf + rng.uniform01(), gamma));
        const double bigger_share = std::min(1.0, share + rng.uniform01());
        EXPECT_LE(w, pis::corrective_weight(att, bigger_share, idf, gamma));
        EXPECT_LE(w, pis::corrective_weight(std::min(1.0, att + rng.uniform01()), share, idf, gamma));
    }
}

TEST(FallbackScores, SingleWord) {
    const auto stats = stats_of({"hello"});
    const auto s = pis::split_sentences("hello").front();
    const auto sc = pis::fallback_scores(s, stats);
    ASSERT_EQ(sc.scores.size(), 1u);
    EXPECT_DOUBLE_EQ(sc.scores[0].attention_mean, 1.0);
    EXPECT_DOUBLE_EQ(sc.scores[0].attention_variance, 0.0);
}

TEST(FallbackScores, SymmetricPair) {
    const auto stats = stats_of({"ab cd"});
    const auto s = pis::split_sentences("ab cd").front();
    const auto sc = pis::fallback_scores(s, stats);
    ASSERT_EQ(sc.scores.size(), 2u);
    EXPECT_DOUBLE_EQ(sc.scores[0].attention_mean, 0.5);
    EXPECT_DOUBLE_EQ(sc.scores[1].attention_mean, 0.5);
    EXPECT_DOUBLE_EQ(sc.scores[0].attention_variance, 0.25);
    EXPECT_DOUBLE_EQ(sc.scores[1].attention_variance, 0.25);
}

TEST(FallbackScores, DeterministicNormalizedAndEmbedded) {
    const auto doc = pis::make_document("d", "The quick brown fox jumps over the lazy dog, twice. Then it rests.");
    const auto stats = pis::build_corpus_stats(std::vector<pis::Document>{doc});
    for (const auto& s : doc.sentences) {
        const auto a = pis::fallback_scores(s, stats);
        const auto b = pis::fallback_scores(s, stats);
        EXPECT_EQ(a, b);
        double sum = 0.0;
        for (const auto& ts : a.scores) sum += ts.attention_mean;
        EXPECT_NEAR(sum, 1.0, 1e-6);
        ASSERT_EQ(a.embedding.size(), pis::kEmbeddingDim);
        double norm = 0.0;
        for (double v : a.embedding) norm += v * v;
        EXPECT_NEAR(norm, 1.0, 1e-12);
    }
    EXPECT_THROW(pis::fallback_scores(pis::split_sentences("...").front(), stats), pis::EmptySentence);
}

TEST(FallbackScores, EmbeddingCountsHashBuckets) {
    const auto s = pis::split_sentences("Echo echo delta").front();
    const auto e = pis::hashed_embedding(s.tokens);
    const std::size_t echo = pis::fnv1a64("echo") % pis::kEmbeddingDim;
    const std::size_t delta = pis::fnv1a64("delta") % pis::kEmbeddingDim;
    ASSERT_NE(echo, delta);
    EXPECT_NEAR(e[echo], 2.0 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(e[delta], 1.0 / std::sqrt(5.0), 1e-15);
}

TEST(ScoreSentence, FallbackPathAttachesWeights) {
    const auto doc = pis::make_document("d", "Alpha beta beta gamma. Delta alpha.");
    const auto stats = pis::build_corpus_stats(std::vector<pis::Document>{doc});
    const auto& s = doc.sentences[0];
    const auto scored = pis::score_sentence(s, nullptr, stats, 0.5);
    const auto fb = pis::fallback_scores(s, stats);
    ASSERT_EQ(scored.scores.size(), 4u);
    EXPECT_EQ(scored.embedding, fb.embedding);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& ts = scored.scores[i];
        EXPECT_EQ(ts.attention_mean, fb.scores[i].attention_mean);
        EXPECT_EQ(ts.attention_variance, fb.scores[i].attention_variance);
        EXPECT_EQ(ts.weight, pis::corrective_weight(ts.attention_mean, ts.tf_share, ts.idf, 0.5));
    }
    EXPECT_EQ(scored.scores[1].tf, 2u);
    EXPECT_DOUBLE_EQ(scored.scores[1].tf_share, 0.5);
}

TEST(ScoreSentence, RecordUsedVerbatimCaseInsensitive) {
    const auto doc = pis::make_document("d", "I met Jack, twice.");
    const auto stats = pis::build_corpus_stats(std::vector<pis::Document>{doc});
    const auto rec = make_record("d", 0, {"i", "met", "jack", "twice"});
    const auto scored = pis::score_sentence(doc.sentences[0], &rec, stats, 0.5);
    ASSERT_EQ(scored.scores.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(scored.scores[i].attention_mean, rec.attention_mean[i]);
        EXPECT_EQ(scored.scores[i].attention_variance, rec.attention_variance[i]);
    }
    EXPECT_EQ(scored.embedding, rec.embedding);
}

TEST(ScoreSentence, MisalignmentReportsFirstIndex) {
    const auto doc = pis::make_document("d", "I met Jack twice.");
    const auto stats = pis::build_corpus_stats(std::vector<pis::Document>{doc});
    const auto wrong = make_record("d", 0, {"i", "met", "jill", "twice"});
    try {
        pis::score_sentence(doc.sentences[0], &wrong, stats, 0.5);
        FAIL() << "expected AlignmentError";
    } catch (const pis::AlignmentError& e) {
        EXPECT_EQ(e.index(), 2u);
    }
    const auto short_rec = make_record("d", 0, {"i", "met"});
    try {
        pis::score_sentence(doc.sentences[0], &short_rec, stats, 0.5);
        FAIL() << "expected AlignmentError";
    } catch (const pis::AlignmentError& e) {
        EXPECT_EQ(e.index(), 2u);
    }
}

TEST(EncoderRecords, LoadsWellFormedFile) {
    std::istringstream in(record_line(make_record("a", 0, {"x", "y"})) + "\n" +
                          record_line(make_record("a", 1, {"z"})));
    const auto recs = pis::load_encoder_records(in);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs.at({"a", 1}).tokens, std::vector<std::string>{"z"});
}

TEST(EncoderRecords, WriterRoundTripsExactly) {
    pis::Rng rng(5);
    std::string text;
    std::vector<pis::EncoderRecord> written;
    for (std::size_t i = 0; i < 20; ++i) {
        auto r = make_record("doc\"" + std::to_string(i % 3), i, {"w" + std::to_string(i), "v"});
        const double a = rng.uniform01();
        r.attention_mean = {a, 1.0 - a};
        r.attention_variance = {rng.uniform01() * 1e-7, rng.uniform01()};
        for (double& v : r.embedding) v = rng.uniform01() - 0.5;
        text += record_line(r);
        written.push_back(r);
    }
    std::istringstream in(text);
    const auto recs = pis::load_encoder_records(in);
    ASSERT_EQ(recs.size(), written.size());
    for (const auto& r : written) EXPECT_EQ(recs.at({r.doc_id, r.sentence_index}), r);
}

TEST(EncoderRecords, RejectsShortEmbedding) {
    auto r = make_record("a", 0, {"x"});
    r.embedding.resize(767);
    std::istringstream in(record_line(r));
    try {
        pis::load_encoder_records(in);
        FAIL();
    } catch (const pis::SchemaError& e) {
        EXPECT_EQ(e.field(), "embedding");
    }
}

TEST(EncoderRecords, RejectsUnnormalizedAttention) {
    auto r = make_record("a", 0, {"x", "y"});
    r.attention_mean = {0.25, 0.25};
    std::istringstream in(record_line(r));
    EXPECT_THROW(pis::load_encoder_records(in), pis::NormalizationError);
}

TEST(EncoderRecords, ToleratesTinyNormalizationDrift) {
    auto r = make_record("a", 0, {"x", "y"});
    r.attention_mean = {0.5, 0.50005};
    std::istringstream in(record_line(r));
    EXPECT_EQ(pis::load_encoder_records(in).size(), 1u);
}

TEST(EncoderRecords, SchemaViolations) {
    auto base = nlohmann::json::parse(record_line(make_record("a", 0, {"x", "y"})));

    auto extra = base;
    extra["note"] = "hi";
    std::istringstream in1(extra.dump());
    EXPECT_THROW(pis::load_encoder_records(in1), pis::SchemaError);

    auto missing = base;
    missing.erase("attention_variance");
    std::istringstream in2(missing.dump());
    try {
        pis::load_encoder_records(in2);
        FAIL();
    } catch (const pis::SchemaError& e) {
        EXPECT_EQ(e.field(), "attention_variance");
    }

    auto negative = base;
    negative["attention_variance"] = {0.1, -0.1};
    std::istringstream in3(negative.dump());
    EXPECT_THROW(pis::load_encoder_records(in3), pis::SchemaError);

    auto lengths = base;
    lengths["attention_mean"] = {1.0};
    std::istringstream in4(lengths.dump());
    EXPECT_THROW(pis::load_encoder_records(in4), pis::SchemaError);
}

TEST(EncoderRecords, ParseErrorCarriesLineNumber) {
    std::istringstream in(record_line(make_record("a", 0, {"x"})) + "\n{not json\n");
    try {
        pis::load_encoder_records(in);
        FAIL();
    } catch (const pis::ParseError& e) {
        EXPECT_EQ(e.line_no(), 3u);
    }
}

TEST(EncoderRecords, DuplicateKeysRejected) {
    std::istringstream in(record_line(make_record("a", 0, {"x"})) + record_line(make_record("a", 0, {"y"})));
    EXPECT_THROW(pis::load_encoder_records(in), pis::DuplicateKey);
}

TEST(ScoreDocument, MissingRecordIsAnError) {
    const auto doc = pis::make_document("d", "One two. Three.");
    const auto stats = pis::build_corpus_stats(std::vector<pis::Document>{doc});
    pis::RecordMap recs;
    recs.emplace(pis::RecordKey{"d", 0}, make_record("d", 0, {"one", "two"}));
    EXPECT_THROW(pis::score_document(doc, &recs, stats, 0.5), pis::MissingRecord);
    recs.emplace(pis::RecordKey{"d", 1}, make_record("d", 1, {"three"}));
    EXPECT_EQ(pis::score_document(doc, &recs, stats, 0.5).size(), 2u);
}
