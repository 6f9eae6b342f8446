#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pis/errors.hpp"
#include "pis/metrics.hpp"
#include "pis/qnetwork.hpp"
#include "pis/ratio_policy.hpp"
#include "pis/rng.hpp"
#include "pis/scoring.hpp"
#include "pis/segmentation.hpp"
#include "pis/sentence_sampler.hpp"
#include "pis/token_sampler.hpp"

namespace pis {

enum class TargetMode { fixed, policy };
enum class ReportFormat { table, json_lines };

struct PipelineConfig {
    TargetMode target_mode = TargetMode::fixed;
    double ratio = 0.5;      // fixed mode: fraction of words removed per sentence
    std::string model_path;  // policy mode
    double gamma_tf = 0.5;
    bool roulette_enabled = true;
    double similarity_threshold = kSimilarityThreshold;
    std::uint64_t seed = 0;
    std::string records_path;  // empty: fallback scorer
    ReportFormat report_format = ReportFormat::table;
    std::size_t threads = 1;
};

inline bool on_ratio_grid(double r) {
    const double scaled = r * 10.0;
    return r >= 0.0 && r <= kMaxRemoveRatio + 1e-12 && std::abs(scaled - std::round(scaled)) < 1e-9;
}

inline void validate(const PipelineConfig& cfg) {
    if (cfg.target_mode == TargetMode::fixed && !on_ratio_grid(cfg.ratio)) {
        throw DomainError("fixed ratio must be one of 0, 0.1, ..., 0.8");
    }
    if (cfg.target_mode == TargetMode::policy && cfg.model_path.empty()) {
        throw DomainError("policy mode needs a model path");
    }
    if (!(cfg.similarity_threshold > 0.0 && cfg.similarity_threshold <= 1.0)) {
        throw DomainError("similarity threshold must be in (0, 1]");
    }
    if (cfg.gamma_tf < 0.0) throw DomainError("gamma_tf must be non-negative");
    if (cfg.threads == 0) throw DomainError("thread count must be positive");
}

// Missing fields keep their defaults; unknown fields are rejected.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig cfg = {}) {
    if (!j.is_object()) throw ParseError(0, "pipeline config must be a JSON object");
    static const std::vector<std::string> kKnown = {"target_mode",      "ratio",          "model_path",
                                                    "gamma_tf",         "roulette_enabled", "similarity_threshold",
                                                    "seed",             "records_path",   "report_format",
                                                    "threads"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
            throw SchemaError(0, key, "unknown pipeline config field");
        }
    }
    try {
        if (j.contains("target_mode")) {
            const auto m = j.at("target_mode").get<std::string>();
            if (m == "fixed") {
                cfg.target_mode = TargetMode::fixed;
            } else if (m == "policy") {
                cfg.target_mode = TargetMode::policy;
            } else {
                throw SchemaError(0, "target_mode", "expected \"fixed\" or \"policy\"");
            }
        }
        if (j.contains("ratio")) cfg.ratio = j.at("ratio").get<double>();
        if (j.contains("model_path")) cfg.model_path = j.at("model_path").get<std::string>();
        if (j.contains("gamma_tf")) cfg.gamma_tf = j.at("gamma_tf").get<double>();
        if (j.contains("roulette_enabled")) cfg.roulette_enabled = j.at("roulette_enabled").get<bool>();
        if (j.contains("similarity_threshold")) cfg.similarity_threshold = j.at("similarity_threshold").get<double>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("records_path")) cfg.records_path = j.at("records_path").get<std::string>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<std::size_t>();
        if (j.contains("report_format")) {
            const auto f = j.at("report_format").get<std::string>();
            if (f == "table") {
                cfg.report_format = ReportFormat::table;
            } else if (f == "json-lines") {
                cfg.report_format = ReportFormat::json_lines;
            } else {
                throw SchemaError(0, "report_format", "expected \"table\" or \"json-lines\"");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(0, "config", e.what());
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path, PipelineConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open config '" + path + "'");
    try {
        return pipeline_config_from_json(nlohmann::json::parse(in), std::move(base));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, e.what());
    }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct CorpusEntry {
    Document doc;
    std::optional<std::string> reference;  // summary reference
    std::optional<std::string> answer;     // QA gold answer
};

inline std::vector<CorpusEntry> ingest_corpus(std::istream& in) {
    std::vector<CorpusEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
        auto string_field = [&](const char* name, bool required) -> std::optional<std::string> {
            auto it = j.find(name);
            if (it == j.end()) {
                if (required) throw MissingField(line_no, name);
                return std::nullopt;
            }
            if (!it->is_string()) throw SchemaError(line_no, name, "expected a string");
            return it->get<std::string>();
        };
        CorpusEntry e;
        auto id = string_field("id", true);
        auto text = string_field("text", true);
        e.doc = make_document(std::move(*id), std::move(*text));
        e.reference = string_field("reference", false);
        e.answer = string_field("answer", false);
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<CorpusEntry> ingest_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open corpus '" + path + "'");
    return ingest_corpus(in);
}

inline std::vector<Document> documents_of(std::span<const CorpusEntry> corpus) {
    std::vector<Document> docs;
    docs.reserve(corpus.size());
    for (const auto& e : corpus) docs.push_back(e.doc);
    return docs;
}

// ---------------------------------------------------------------------------
// Document compression
// ---------------------------------------------------------------------------

// Read-only state shared by all documents of one run.
struct PipelineContext {
    PipelineConfig cfg;
    CorpusStats stats;
    const RecordMap* records = nullptr;
    const QNetwork* policy = nullptr;
};

struct SentencePlan {
    std::size_t sentence_index = 0;
    double ratio = 0.0;
    std::optional<std::size_t> action;  // policy mode only
    std::size_t original_words = 0;
    std::size_t kept_words = 0;
    std::vector<std::size_t> deleted;  // token ordinals
    std::string text;                  // token-compressed sentence
};

struct CompressedDocument {
    std::string doc_id;
    std::string original_text;
    std::string compressed_text;
    std::vector<SentencePlan> plans;
    std::vector<RouletteLogEntry> roulette_log;  // indices are sentence indices
    std::size_t original_words = 0;
    std::size_t compressed_words = 0;
    MetricReport report;
};

// score -> per-sentence ratio -> token compression -> roulette over the
// compressed sentences. Sentences without word tokens pass through untouched.
inline CompressedDocument compress_document(const Document& doc, const PipelineContext& ctx, Rng& rng) {
    const PipelineConfig& cfg = ctx.cfg;
    if (cfg.target_mode == TargetMode::policy && ctx.policy == nullptr) throw MissingPolicy();

    CompressedDocument out;
    out.doc_id = doc.id;
    out.original_text = doc.text;

    const std::vector<ScoredSentence> scored = score_document(doc, ctx.records, ctx.stats, cfg.gamma_tf);

    std::vector<double> ratios(scored.size(), cfg.ratio);
    std::vector<std::optional<std::size_t>> actions(scored.size());
    if (cfg.target_mode == TargetMode::policy) {
        const std::vector<PolicyState> states = build_states(scored);
        for (std::size_t i = 0; i < scored.size(); ++i) {
            actions[i] = greedy_action(*ctx.policy, states[i]);
            ratios[i] = action_to_ratio(*actions[i]);
        }
    }

    for (std::size_t i = 0; i < scored.size(); ++i) {
        const CompressionPlan plan = compress_sentence(scored[i], ratios[i]);
        SentencePlan sp;
        sp.sentence_index = scored[i].sentence.index;
        sp.ratio = ratios[i];
        sp.action = actions[i];
        sp.original_words = scored[i].sentence.word_count();
        sp.kept_words = plan.kept_word_count();
        sp.deleted.assign(plan.deleted_indices.begin(), plan.deleted_indices.end());
        sp.text = detokenize(plan.kept_tokens, scored[i].sentence);
        out.plans.push_back(std::move(sp));
    }

    std::vector<bool> survives(scored.size(), true);
    if (cfg.roulette_enabled) {
        RouletteState state;
        state.threshold = cfg.similarity_threshold;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            RouletteLogEntry e = roulette_step(state, scored[i].sentence.index, scored[i].embedding, rng);
            survives[i] = e.decision == RouletteDecision::keep;
            out.roulette_log.push_back(e);
        }
    }

    // Reassemble in document order, including punctuation-only sentences.
    std::size_t next_scored = 0;
    for (const auto& s : doc.sentences) {
        out.original_words += s.word_count();
        std::string piece;
        if (next_scored < scored.size() && scored[next_scored].sentence.index == s.index) {
            if (survives[next_scored]) {
                piece = out.plans[next_scored].text;
                out.compressed_words += out.plans[next_scored].kept_words;
            }
            ++next_scored;
        } else {
            piece = s.text;
        }
        if (piece.empty()) continue;
        if (!out.compressed_text.empty()) out.compressed_text.push_back(' ');
        out.compressed_text += piece;
    }

    if (out.original_words > 0 && out.compressed_words > 0) {
        const CompressionRatio cr = compression_ratio(out.original_words, out.compressed_words);
        out.report.compression_tau = cr.tau;
        out.report.inv_tau = cr.inv_tau;
    }
    return out;
}

// Runs `fn(index, rng)` for every corpus entry on `threads` workers. Each entry
// gets its own generator derived from (seed, position, id), and results land
// in input order, so the output does not depend on the thread count.
template <class Fn>
auto for_each_document(std::span<const CorpusEntry> corpus, std::uint64_t seed, std::size_t threads, Fn fn)
    -> std::vector<decltype(fn(std::size_t{}, std::declval<Rng&>()))> {
    using Result = decltype(fn(std::size_t{}, std::declval<Rng&>()));
    std::vector<std::optional<Result>> slots(corpus.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t i = next++; i < corpus.size(); i = next++) {
            try {
                Rng rng(derive_seed(seed, std::to_string(i) + ":" + corpus[i].doc.id));
                slots[i].emplace(fn(i, rng));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, corpus.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<Result> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

inline PipelineContext make_context(std::span<const CorpusEntry> corpus, const PipelineConfig& cfg,
                                    const RecordMap* records, const QNetwork* policy) {
    validate(cfg);
    PipelineContext ctx;
    ctx.cfg = cfg;
    const auto docs = documents_of(corpus);
    if (!docs.empty()) ctx.stats = build_corpus_stats(docs);
    ctx.records = records;
    ctx.policy = policy;
    return ctx;
}

inline std::vector<CompressedDocument> compress_corpus(std::span<const CorpusEntry> corpus,
                                                       const PipelineContext& ctx) {
    return for_each_document(corpus, ctx.cfg.seed, ctx.cfg.threads, [&](std::size_t i, Rng& rng) {
        return compress_document(corpus[i].doc, ctx, rng);
    });
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline void score_against_references(CompressedDocument& cd, const CorpusEntry& entry) {
    if (entry.reference) {
        const auto cand = metric_tokens(cd.compressed_text);
        const auto ref = metric_tokens(*entry.reference);
        cd.report.bleu = bleu(cand, ref);
        cd.report.rouge1 = rouge_n(cand, ref, 1);
        cd.report.rouge2 = rouge_n(cand, ref, 2);
        cd.report.rougeL = rouge_l(cand, ref);
    }
    if (entry.answer) cd.report.em = exact_match(cd.compressed_text, *entry.answer);
}

struct Evaluation {
    std::vector<CompressedDocument> documents;
    MetricReport aggregate;  // unweighted means over documents that carry each field
};

namespace detail {

struct Mean {
    double sum = 0.0;
    std::size_t n = 0;
    void add(const std::optional<double>& v) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    std::optional<double> value() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
};

struct PrMean {
    Mean p, r, f;
    void add(const std::optional<PrecisionRecall>& v) {
        if (v) {
            p.add(v->precision);
            r.add(v->recall);
            f.add(v->f1);
        }
    }
    std::optional<PrecisionRecall> value() const {
        if (!f.n) return std::nullopt;
        return PrecisionRecall{*p.value(), *r.value(), *f.value()};
    }
};

}  // namespace detail

inline MetricReport aggregate_reports(std::span<const CompressedDocument> docs) {
    detail::Mean em, bl, tau, inv;
    detail::PrMean r1, r2, rl;
    for (const auto& d : docs) {
        em.add(d.report.em);
        bl.add(d.report.bleu);
        r1.add(d.report.rouge1);
        r2.add(d.report.rouge2);
        rl.add(d.report.rougeL);
        tau.add(d.report.compression_tau);
        inv.add(d.report.inv_tau);
    }
    return {em.value(), bl.value(), r1.value(), r2.value(), rl.value(), tau.value(), inv.value()};
}

inline Evaluation evaluate(std::span<const CorpusEntry> corpus, const PipelineContext& ctx) {
    const bool any = std::any_of(corpus.begin(), corpus.end(),
                                 [](const CorpusEntry& e) { return e.reference || e.answer; });
    if (!any) throw NoReferences();
    Evaluation ev;
    ev.documents = for_each_document(corpus, ctx.cfg.seed, ctx.cfg.threads, [&](std::size_t i, Rng& rng) {
        CompressedDocument cd = compress_document(corpus[i].doc, ctx, rng);
        score_against_references(cd, corpus[i]);
        return cd;
    });
    ev.aggregate = aggregate_reports(ev.documents);
    return ev;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json opt_json(const std::optional<PrecisionRecall>& v) {
    if (!v) return nullptr;
    return {{"precision", v->precision}, {"recall", v->recall}, {"f1", v->f1}};
}

inline std::string cell(const std::optional<double>& v, double scale, const char* suffix = "") {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%s", *v * scale, suffix);
    return buf;
}

inline std::string cell(const std::optional<PrecisionRecall>& v) {
    return v ? cell(std::optional<double>(v->f1), 100.0) : std::string("-");
}

}  // namespace detail

inline nlohmann::json to_json(const MetricReport& r) {
    return {{"em", detail::opt_json(r.em)},
            {"bleu", detail::opt_json(r.bleu)},
            {"rouge1", detail::opt_json(r.rouge1)},
            {"rouge2", detail::opt_json(r.rouge2)},
            {"rougeL", detail::opt_json(r.rougeL)},
            {"compression_tau", detail::opt_json(r.compression_tau)},
            {"inv_tau", detail::opt_json(r.inv_tau)}};
}

inline std::string to_string(RouletteDecision d) { return d == RouletteDecision::keep ? "keep" : "delete"; }

inline nlohmann::json to_json(const CompressedDocument& d) {
    nlohmann::json plans = nlohmann::json::array();
    for (const auto& p : d.plans) {
        plans.push_back({{"sentence", p.sentence_index},
                         {"ratio", p.ratio},
                         {"action", p.action ? nlohmann::json(*p.action) : nlohmann::json(nullptr)},
                         {"original_words", p.original_words},
                         {"kept_words", p.kept_words},
                         {"deleted", p.deleted}});
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : d.roulette_log) {
        log.push_back({{"sentence", e.index},
                       {"k", e.k},
                       {"u", e.u < 0.0 ? nlohmann::json(nullptr) : nlohmann::json(e.u)},
                       {"decision", to_string(e.decision)}});
    }
    return {{"id", d.doc_id},
            {"compressed", d.compressed_text},
            {"original_words", d.original_words},
            {"compressed_words", d.compressed_words},
            {"inv_tau", detail::opt_json(d.report.inv_tau)},
            {"plans", plans},
            {"roulette", log}};
}

inline void write_compressed(std::ostream& out, std::span<const CompressedDocument> docs) {
    for (const auto& d : docs) out << to_json(d).dump() << '\n';
}

// EM | BLEU | R1 | R2 | RL | 1/tau, quality columns in percent.
inline void write_table(std::ostream& out, const Evaluation& ev) {
    char line[256];
    auto row = [&](const std::string& name, const MetricReport& r) {
        std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %8s\n", name.c_str(),
                      detail::cell(r.em, 100.0).c_str(), detail::cell(r.bleu, 100.0).c_str(),
                      detail::cell(r.rouge1).c_str(), detail::cell(r.rouge2).c_str(),
                      detail::cell(r.rougeL).c_str(), detail::cell(r.inv_tau, 1.0, "x").c_str());
        out << line;
    };
    std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %8s\n", "document", "EM", "BLEU", "R1", "R2", "RL",
                  "1/tau");
    out << line << std::string(77, '-') << '\n';
    for (const auto& d : ev.documents) row(d.doc_id.size() > 24 ? d.doc_id.substr(0, 24) : d.doc_id, d.report);
    out << std::string(77, '-') << '\n';
    row("mean", ev.aggregate);
}

inline void write_json_lines(std::ostream& out, const Evaluation& ev) {
    for (const auto& d : ev.documents) {
        out << nlohmann::json{{"id", d.doc_id}, {"compressed", d.compressed_text}, {"metrics", to_json(d.report)}}
                   .dump()
            << '\n';
    }
    out << nlohmann::json{{"aggregate", to_json(ev.aggregate)}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Noise injection and latency
// ---------------------------------------------------------------------------

// Inserts n uniformly drawn lexicon words at uniformly drawn word boundaries.
// Whitespace is normalized to single spaces.
inline std::string inject_noise(std::string_view text, std::size_t n_words, std::span<const std::string> lexicon,
                                Rng& rng) {
    if (lexicon.empty()) throw EmptyLexicon();
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : text) {
        if (detail::is_space(c)) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    if (n_words == 0) return std::string(text);

    for (std::size_t i = 0; i < n_words; ++i) {
        const auto pos = rng.uniform_index(words.size() + 1);
        const auto& w = lexicon[rng.uniform_index(lexicon.size())];
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), w);
    }
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

// Deterministic pseudo-English document of exactly `words` word tokens,
// sentences of 8..20 words.
inline std::string synthesize_text(std::size_t words, std::uint64_t seed) {
    static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "sa", "to", "vi",
                                                 "ba", "de", "fi", "go", "ha", "ju", "pe", "zo"};
    Rng rng(seed);
    std::string out;
    std::size_t left_in_sentence = 0;
    for (std::size_t i = 0; i < words; ++i) {
        if (left_in_sentence == 0) left_in_sentence = 8 + rng.uniform_index(13);
        std::string w;
        const auto id = rng.uniform_index(4096);
        for (std::size_t s = 0, v = id; s < 3; ++s, v /= 16) w += kSyllables[v % 16];
        if (!out.empty() && out.back() != ' ') out.push_back(' ');
        out += w;
        if (--left_in_sentence == 0 || i + 1 == words) out += ". ";
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

struct LatencyRow {
    std::size_t length = 0;  // word tokens
    double ratio = 0.0;
    double seconds = 0.0;    // median over runs, per document
};

struct LatencyOptions {
    std::size_t runs = 5;
    std::size_t iterations = 10;  // compressions per timed run
};

// Times corpus statistics + compress_document on synthetic single documents
// (fallback scorer) for every (length, ratio) pair.
inline std::vector<LatencyRow> latency_probe(std::span<const std::size_t> lengths, std::span<const double> ratios,
                                             const PipelineConfig& base, LatencyOptions opts = {}) {
    std::vector<LatencyRow> rows;
    for (std::size_t len : lengths) {
        const Document doc = make_document("latency-" + std::to_string(len), synthesize_text(len, base.seed + len));
        for (double ratio : ratios) {
            PipelineConfig cfg = base;
            cfg.target_mode = TargetMode::fixed;
            cfg.ratio = ratio;
            cfg.records_path.clear();
            validate(cfg);
            std::vector<double> times;
            for (std::size_t r = 0; r < std::max<std::size_t>(1, opts.runs); ++r) {
                const auto start = std::chrono::steady_clock::now();
                for (std::size_t it = 0; it < std::max<std::size_t>(1, opts.iterations); ++it) {
                    PipelineContext ctx;
                    ctx.cfg = cfg;
                    ctx.stats = build_corpus_stats(std::span<const Document>(&doc, 1));
                    Rng rng(cfg.seed);
                    const CompressedDocument cd = compress_document(doc, ctx, rng);
                    if (cd.compressed_words == 0 && len > 0) throw Error("latency probe lost every word");
                }
                const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
                times.push_back(dt.count() / static_cast<double>(std::max<std::size_t>(1, opts.iterations)));
            }
            std::sort(times.begin(), times.end());
            rows.push_back({len, ratio, times[times.size() / 2]});
        }
    }
    return rows;
}

}  // namespace pis
