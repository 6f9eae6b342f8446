#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <vector>

#include "pis/errors.hpp"
#include "pis/scoring.hpp"
#include "pis/segmentation.hpp"

namespace pis {

inline constexpr double kMaxRemoveRatio = 0.8;
inline constexpr double kPriorityEpsilon = 1e-6;

struct CompressionPlan {
    double ratio_remove = 0.0;
    std::set<std::size_t> deleted_indices;  // token ordinals (words and punctuation)
    std::vector<Token> kept_tokens;

    std::size_t kept_word_count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : kept_tokens) n += t.is_word() ? 1 : 0;
        return n;
    }
};

// Higher value is deleted earlier: high attention variance, low corrected weight.
inline double deletion_priority(const TokenScore& score, double epsilon = kPriorityEpsilon) {
    if (!(epsilon > 0.0)) throw DomainError("deletion_priority epsilon must be positive");
    return score.attention_variance / (score.weight + epsilon);
}

// min(floor(r * n), n - 1). The small slack absorbs representation error of
// grid ratios such as 0.7 * 10.
inline std::size_t words_to_delete(double ratio_remove, std::size_t n_words) {
    if (n_words == 0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(ratio_remove * static_cast<double>(n_words) + 1e-9));
    return std::min(k, n_words - 1);
}

inline CompressionPlan compress_sentence(const ScoredSentence& scored, double ratio_remove) {
    if (!(ratio_remove >= 0.0 && ratio_remove <= kMaxRemoveRatio + 1e-12)) {
        throw DomainError("ratio_remove must lie in [0, 0.8]");
    }
    const auto& tokens = scored.sentence.tokens;
    std::vector<std::size_t> word_pos;  // token ordinal of each word token
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].is_word()) word_pos.push_back(i);
    }
    if (word_pos.empty()) throw EmptySentence();
    if (scored.scores.size() != word_pos.size()) throw DimensionError("scores not aligned with word tokens");

    std::vector<std::size_t> order(word_pos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> prio(word_pos.size());
    for (std::size_t w = 0; w < word_pos.size(); ++w) prio[w] = deletion_priority(scored.scores[w]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (prio[a] != prio[b]) return prio[a] > prio[b];
        return a > b;
    });

    CompressionPlan plan;
    plan.ratio_remove = ratio_remove;
    std::vector<bool> deleted(tokens.size(), false);
    const std::size_t k = words_to_delete(ratio_remove, word_pos.size());
    for (std::size_t i = 0; i < k; ++i) deleted[word_pos[order[i]]] = true;

    // Punctuation goes only when the nearest word on both sides went.
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].is_word()) continue;
        std::ptrdiff_t left = static_cast<std::ptrdiff_t>(i) - 1;
        while (left >= 0 && !tokens[static_cast<std::size_t>(left)].is_word()) --left;
        std::size_t right = i + 1;
        while (right < tokens.size() && !tokens[right].is_word()) ++right;
        if (left >= 0 && right < tokens.size() && deleted[static_cast<std::size_t>(left)] && deleted[right]) {
            deleted[i] = true;
        }
    }

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (deleted[i]) {
            plan.deleted_indices.insert(i);
        } else {
            plan.kept_tokens.push_back(tokens[i]);
        }
    }
    return plan;
}

// Kept-to-original word fraction of one sentence.
inline double achieved_rho(const CompressionPlan& plan, std::size_t original_word_count) {
    if (original_word_count == 0) throw DomainError("original word count must be positive");
    return static_cast<double>(plan.kept_word_count()) / static_cast<double>(original_word_count);
}

}  // namespace pis
