#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pis/errors.hpp"
#include "pis/rng.hpp"
#include "pis/segmentation.hpp"

namespace pis {

inline constexpr std::size_t kEmbeddingDim = 768;

using Embedding = std::vector<double>;

struct TokenScore {
    double attention_mean = 0.0;
    double attention_variance = 0.0;
    std::size_t tf = 0;
    double tf_share = 0.0;
    double idf = 1.0;
    double weight = 0.0;

    bool operator==(const TokenScore&) const = default;
};

// `scores` is aligned 1:1 with the sentence's word tokens, in order.
struct ScoredSentence {
    Sentence sentence;
    std::vector<TokenScore> scores;
    Embedding embedding;

    bool operator==(const ScoredSentence&) const = default;
};

struct EncoderRecord {
    std::string doc_id;
    std::size_t sentence_index = 0;
    std::vector<std::string> tokens;
    std::vector<double> attention_mean;
    std::vector<double> attention_variance;
    Embedding embedding;

    bool operator==(const EncoderRecord&) const = default;
};

using RecordKey = std::pair<std::string, std::size_t>;
using RecordMap = std::map<RecordKey, EncoderRecord>;

// Document frequencies over case-folded word tokens.
struct CorpusStats {
    std::size_t doc_count = 0;
    std::unordered_map<std::string, std::size_t> doc_frequency;

    void add_document(const std::set<std::string>& distinct_terms) {
        ++doc_count;
        for (const auto& t : distinct_terms) ++doc_frequency[t];
    }

    std::size_t df(const std::string& folded_term) const {
        auto it = doc_frequency.find(folded_term);
        return it == doc_frequency.end() ? 0 : it->second;
    }
};

namespace detail {

inline std::set<std::string> distinct_terms(std::span<const Sentence> sentences) {
    std::set<std::string> terms;
    for (const auto& s : sentences) {
        for (const auto& t : s.tokens) {
            if (t.is_word()) terms.insert(case_fold(t.text));
        }
    }
    return terms;
}

}  // namespace detail

// One df "document" per corpus document; a single-document corpus counts each
// sentence as a document so IDF stays informative.
inline CorpusStats build_corpus_stats(std::span<const Document> docs) {
    CorpusStats stats;
    if (docs.size() == 1) {
        for (const auto& s : docs.front().sentences) {
            stats.add_document(detail::distinct_terms(std::span<const Sentence>(&s, 1)));
        }
    } else {
        for (const auto& d : docs) stats.add_document(detail::distinct_terms(d.sentences));
    }
    return stats;
}

struct TermFrequencies {
    std::map<std::string, std::size_t> counts;  // case-folded term -> count in sentence
    std::vector<std::size_t> tf;                // per word token
    std::vector<double> tf_share;               // per word token, TF / number of word tokens
};

inline TermFrequencies compute_tf(std::span<const Token> tokens) {
    TermFrequencies out;
    std::vector<std::string> folded;
    for (const auto& t : tokens) {
        if (t.is_word()) folded.push_back(case_fold(t.text));
    }
    if (folded.empty()) throw EmptySentence();
    for (const auto& f : folded) ++out.counts[f];
    const double total = static_cast<double>(folded.size());
    for (const auto& f : folded) {
        const std::size_t c = out.counts[f];
        out.tf.push_back(c);
        out.tf_share.push_back(static_cast<double>(c) / total);
    }
    return out;
}

// Smoothed IDF: ln((1 + N) / (1 + df)) + 1. `term` is case-folded here.
inline double compute_idf(const CorpusStats& stats, const std::string& term) {
    if (stats.doc_count == 0) throw DomainError("compute_idf needs at least one document");
    const double n = static_cast<double>(stats.doc_count);
    const double df = static_cast<double>(stats.df(case_fold(term)));
    return std::log((1.0 + n) / (1.0 + df)) + 1.0;
}

// attention * tf_share^gamma_tf * idf; the TF-IDF corrected importance.
inline double corrective_weight(double attention_mean, double tf_share, double idf, double gamma_tf) {
    if (!(tf_share > 0.0)) throw DomainError("tf_share must be positive");
    if (attention_mean < 0.0 || !(idf > 0.0) || gamma_tf < 0.0) {
        throw DomainError("corrective_weight arguments out of domain");
    }
    return attention_mean * std::pow(tf_share, gamma_tf) * idf;
}

// Hashed bag-of-words: coordinate c counts word tokens whose FNV-1a hash mod
// 768 is c, then the vector is L2-normalized.
inline Embedding hashed_embedding(std::span<const Token> tokens) {
    Embedding e(kEmbeddingDim, 0.0);
    for (const auto& t : tokens) {
        if (t.is_word()) e[fnv1a64(case_fold(t.text)) % kEmbeddingDim] += 1.0;
    }
    double norm = 0.0;
    for (double v : e) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& v : e) v /= norm;
    }
    return e;
}

// Deterministic stand-in for the encoder: softmax over idf * ln(1 + length),
// Bernoulli-style variance m(1 - m). Weights are left at zero.
inline ScoredSentence fallback_scores(const Sentence& sentence, const CorpusStats& stats) {
    std::vector<const Token*> words;
    for (const auto& t : sentence.tokens) {
        if (t.is_word()) words.push_back(&t);
    }
    if (words.empty()) throw EmptySentence();

    std::vector<double> logits;
    logits.reserve(words.size());
    for (const Token* t : words) {
        logits.push_back(compute_idf(stats, t->text) *
                         std::log(1.0 + static_cast<double>(char_length(t->text))));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }

    ScoredSentence out;
    out.sentence = sentence;
    out.scores.resize(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        const double m = logits[i] / z;
        out.scores[i].attention_mean = m;
        out.scores[i].attention_variance = m * (1.0 - m);
    }
    out.embedding = hashed_embedding(sentence.tokens);
    return out;
}

// Attention statistics from `record` when given, otherwise from the fallback
// scorer; TF, IDF and the corrective weight are filled either way.
inline ScoredSentence score_sentence(const Sentence& sentence, const EncoderRecord* record,
                                     const CorpusStats& stats, double gamma_tf) {
    const TermFrequencies tf = compute_tf(sentence.tokens);
    ScoredSentence out;
    if (record != nullptr) {
        std::vector<const Token*> words;
        for (const auto& t : sentence.tokens) {
            if (t.is_word()) words.push_back(&t);
        }
        const std::size_t common = std::min(words.size(), record->tokens.size());
        for (std::size_t i = 0; i < common; ++i) {
            if (case_fold(words[i]->text) != case_fold(record->tokens[i])) throw AlignmentError(i);
        }
        if (words.size() != record->tokens.size()) throw AlignmentError(common);
        out.sentence = sentence;
        out.scores.resize(words.size());
        for (std::size_t i = 0; i < words.size(); ++i) {
            out.scores[i].attention_mean = record->attention_mean[i];
            out.scores[i].attention_variance = record->attention_variance[i];
        }
        out.embedding = record->embedding;
    } else {
        out = fallback_scores(sentence, stats);
    }

    std::size_t w = 0;
    for (const auto& t : sentence.tokens) {
        if (!t.is_word()) continue;
        auto& s = out.scores[w];
        s.tf = tf.tf[w];
        s.tf_share = tf.tf_share[w];
        s.idf = compute_idf(stats, t.text);
        s.weight = corrective_weight(s.attention_mean, s.tf_share, s.idf, gamma_tf);
        ++w;
    }
    return out;
}

// Scores every sentence of `doc` that has at least one word token, in order.
// With a record map, each such sentence must have its (doc id, index) record.
inline std::vector<ScoredSentence> score_document(const Document& doc, const RecordMap* records,
                                                  const CorpusStats& stats, double gamma_tf) {
    std::vector<ScoredSentence> out;
    for (const auto& s : doc.sentences) {
        if (s.word_count() == 0) continue;
        const EncoderRecord* rec = nullptr;
        if (records != nullptr) {
            auto it = records->find({doc.id, s.index});
            if (it == records->end()) {
                throw MissingRecord("no encoder record for (" + doc.id + ", " + std::to_string(s.index) + ")");
            }
            rec = &it->second;
        }
        out.push_back(score_sentence(s, rec, stats, gamma_tf));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoder record files (JSON Lines)
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* name, std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end()) throw SchemaError(line, name, "missing");
    return *it;
}

inline std::vector<double> number_array(const nlohmann::json& v, const char* name, std::size_t line) {
    if (!v.is_array()) throw SchemaError(line, name, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) throw SchemaError(line, name, "expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

}  // namespace detail

inline EncoderRecord parse_encoder_record(const std::string& line, std::size_t line_no) {
    static const std::set<std::string> kFields = {"doc_id",         "sentence_index",     "tokens",
                                                  "attention_mean", "attention_variance", "embedding"};
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (!kFields.contains(key)) throw SchemaError(line_no, key, "unexpected field");
    }

    EncoderRecord r;
    const auto& id = detail::require_field(obj, "doc_id", line_no);
    if (!id.is_string()) throw SchemaError(line_no, "doc_id", "expected a string");
    r.doc_id = id.get<std::string>();

    const auto& idx = detail::require_field(obj, "sentence_index", line_no);
    if (!idx.is_number_unsigned() && !(idx.is_number_integer() && idx.get<long long>() >= 0)) {
        throw SchemaError(line_no, "sentence_index", "expected a non-negative integer");
    }
    r.sentence_index = idx.get<std::size_t>();

    const auto& toks = detail::require_field(obj, "tokens", line_no);
    if (!toks.is_array() || toks.empty()) throw SchemaError(line_no, "tokens", "expected a non-empty string array");
    for (const auto& t : toks) {
        if (!t.is_string()) throw SchemaError(line_no, "tokens", "expected a non-empty string array");
        r.tokens.push_back(t.get<std::string>());
    }

    r.attention_mean = detail::number_array(detail::require_field(obj, "attention_mean", line_no),
                                            "attention_mean", line_no);
    r.attention_variance = detail::number_array(detail::require_field(obj, "attention_variance", line_no),
                                                "attention_variance", line_no);
    r.embedding = detail::number_array(detail::require_field(obj, "embedding", line_no), "embedding", line_no);

    if (r.attention_mean.size() != r.tokens.size()) {
        throw SchemaError(line_no, "attention_mean", "length differs from tokens");
    }
    if (r.attention_variance.size() != r.tokens.size()) {
        throw SchemaError(line_no, "attention_variance", "length differs from tokens");
    }
    if (r.embedding.size() != kEmbeddingDim) {
        throw SchemaError(line_no, "embedding", "expected " + std::to_string(kEmbeddingDim) + " values, got " +
                                                    std::to_string(r.embedding.size()));
    }
    double sum = 0.0;
    for (double m : r.attention_mean) {
        if (m < 0.0) throw SchemaError(line_no, "attention_mean", "negative value");
        sum += m;
    }
    for (double v : r.attention_variance) {
        if (v < 0.0) throw SchemaError(line_no, "attention_variance", "negative value");
    }
    if (std::abs(sum - 1.0) > 1e-4) throw NormalizationError(line_no, sum);
    return r;
}

inline RecordMap load_encoder_records(std::istream& in) {
    RecordMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        EncoderRecord r = parse_encoder_record(line, line_no);
        RecordKey key{r.doc_id, r.sentence_index};
        if (out.contains(key)) {
            throw DuplicateKey("duplicate record (" + r.doc_id + ", " + std::to_string(r.sentence_index) +
                               ") at line " + std::to_string(line_no));
        }
        out.emplace(std::move(key), std::move(r));
    }
    return out;
}

inline RecordMap load_encoder_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open records file '" + path + "'");
    return load_encoder_records(in);
}

namespace detail {

// 17 significant digits, always in exponent form so every value round-trips.
inline void write_number(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    out << buf;
}

inline void write_numbers(std::ostream& out, std::span<const double> values) {
    out << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        write_number(out, values[i]);
    }
    out << ']';
}

}  // namespace detail

inline void write_encoder_record(std::ostream& out, const EncoderRecord& r) {
    out << "{\"doc_id\":" << nlohmann::json(r.doc_id).dump() << ",\"sentence_index\":" << r.sentence_index
        << ",\"tokens\":" << nlohmann::json(r.tokens).dump() << ",\"attention_mean\":";
    detail::write_numbers(out, r.attention_mean);
    out << ",\"attention_variance\":";
    detail::write_numbers(out, r.attention_variance);
    out << ",\"embedding\":";
    detail::write_numbers(out, r.embedding);
    out << "}\n";
}

}  // namespace pis
