#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pis/errors.hpp"
#include "pis/segmentation.hpp"

namespace pis {

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct CompressionRatio {
    double tau = 1.0;      // compressed / original
    double inv_tau = 1.0;  // original / compressed
};

// Evaluation-side report. Fields are absent when the document carries no
// reference of the matching kind (or, for the ratio, no words at all).
struct MetricReport {
    std::optional<double> em;
    std::optional<double> bleu;
    std::optional<PrecisionRecall> rouge1;
    std::optional<PrecisionRecall> rouge2;
    std::optional<PrecisionRecall> rougeL;
    std::optional<double> compression_tau;
    std::optional<double> inv_tau;
};

namespace detail {

using Ngram = std::vector<std::string>;

inline std::map<Ngram, std::size_t> ngram_counts(std::span<const std::string> toks, std::size_t n) {
    std::map<Ngram, std::size_t> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++counts[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                       toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

// Clipped overlap: sum over candidate n-grams of min(count_cand, count_ref).
inline std::size_t clipped_overlap(const std::map<Ngram, std::size_t>& cand,
                                   const std::map<Ngram, std::size_t>& ref) {
    std::size_t overlap = 0;
    for (const auto& [g, c] : cand) {
        if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
    }
    return overlap;
}

inline PrecisionRecall from_counts(std::size_t hits, std::size_t cand_total, std::size_t ref_total) {
    PrecisionRecall pr;
    if (cand_total == 0 || ref_total == 0) return pr;
    pr.precision = static_cast<double>(hits) / static_cast<double>(cand_total);
    pr.recall = static_cast<double>(hits) / static_cast<double>(ref_total);
    if (pr.precision + pr.recall > 0.0) pr.f1 = 2.0 * pr.precision * pr.recall / (pr.precision + pr.recall);
    return pr;
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace detail

inline PrecisionRecall rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                               std::size_t n) {
    if (n != 1 && n != 2) throw DomainError("rouge_n supports n = 1 or 2");
    const auto cand = detail::ngram_counts(candidate, n);
    const auto ref = detail::ngram_counts(reference, n);
    const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
    const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
    return detail::from_counts(detail::clipped_overlap(cand, ref), cand_total, ref_total);
}

inline PrecisionRecall rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
    return detail::from_counts(detail::lcs_length(candidate, reference), candidate.size(), reference.size());
}

// Sentence BLEU: geometric mean of clipped n-gram precisions, n = 1..max_n.
// Orders with zero matches use add-one smoothing (m+1)/(c+1); brevity penalty
// exp(1 - |ref|/|cand|) for short candidates.
inline double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t max_n = 4) {
    if (candidate.empty() || max_n == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cand = detail::ngram_counts(candidate, n);
        const auto ref = detail::ngram_counts(reference, n);
        const double matches = static_cast<double>(detail::clipped_overlap(cand, ref));
        const double total = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
        const double p = matches > 0.0 ? matches / total : (matches + 1.0) / (total + 1.0);
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

// Lowercase, drop punctuation, collapse whitespace, drop a leading article.
inline std::string normalize_answer(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (unsigned char c : s) {
        if (detail::is_space(c)) {
            flush();
        } else if (detail::is_word_char(c)) {
            cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        }
    }
    flush();
    if (!words.empty() && (words.front() == "a" || words.front() == "an" || words.front() == "the")) {
        words.erase(words.begin());
    }
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

inline int exact_match(std::string_view prediction, std::string_view gold) {
    return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

inline CompressionRatio compression_ratio(std::size_t original_tokens, std::size_t compressed_tokens) {
    if (original_tokens == 0 || compressed_tokens == 0) {
        throw DomainError("compression_ratio needs non-zero token counts");
    }
    const double o = static_cast<double>(original_tokens);
    const double c = static_cast<double>(compressed_tokens);
    return {c / o, o / c};
}

}  // namespace pis
