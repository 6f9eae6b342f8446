#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pis/errors.hpp"
#include "pis/rng.hpp"

namespace pis {

inline constexpr double kSimilarityThreshold = 0.9;
inline constexpr int kRouletteChambers = 6;

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("cosine_similarity dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

struct StoredSentence {
    std::size_t index = 0;
    std::vector<double> embedding;
    double norm = 0.0;
};

namespace detail {

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace detail

// Kept sentences seen so far plus k, the count of consecutive similar hits.
struct RouletteState {
    std::vector<StoredSentence> stored;
    int k = 0;
    double threshold = kSimilarityThreshold;
};

enum class RouletteDecision { keep, remove };

struct RouletteLogEntry {
    std::size_t index = 0;
    int k = 0;          // k at decision time (0 when the sentence was not similar)
    double u = -1.0;    // the draw; negative when no draw happened
    RouletteDecision decision = RouletteDecision::keep;

    bool operator==(const RouletteLogEntry&) const = default;
};

// Same value as cosine_similarity against each stored embedding, with the
// stored norms cached.
inline bool is_similar(std::span<const double> embedding, const RouletteState& state) {
    if (state.stored.empty()) return false;
    const double qn = detail::l2_norm(embedding);
    if (qn == 0.0) throw ZeroVector();
    for (const auto& s : state.stored) {
        if (s.embedding.size() != embedding.size()) throw DimensionError("cosine_similarity dimension mismatch");
        double dot = 0.0;
        for (std::size_t i = 0; i < embedding.size(); ++i) dot += embedding[i] * s.embedding[i];
        const double c = std::clamp(dot / (qn * s.norm), -1.0, 1.0);
        if (c >= state.threshold) return true;
    }
    return false;
}

inline double deletion_probability(int k) {
    if (k < 1 || k > kRouletteChambers) throw RangeError("roulette counter must be in [1, 6]");
    return static_cast<double>(k) / kRouletteChambers;
}

namespace detail {

inline void store(RouletteState& state, std::size_t index, std::span<const double> embedding) {
    const double n = l2_norm(embedding);
    if (n == 0.0) throw ZeroVector();
    state.stored.push_back({index, {embedding.begin(), embedding.end()}, n});
}

inline RouletteLogEntry roulette_apply(RouletteState& state, std::size_t index, std::span<const double> embedding,
                                       bool similar, double u) {
    RouletteLogEntry entry;
    entry.index = index;
    if (!similar) {
        state.k = 0;
        store(state, index, embedding);
        return entry;
    }
    state.k = std::min(state.k + 1, kRouletteChambers);
    entry.k = state.k;
    entry.u = u;
    if (u < deletion_probability(state.k)) {
        entry.decision = RouletteDecision::remove;
        state.k = 0;
    } else {
        store(state, index, embedding);
    }
    return entry;
}

}  // namespace detail

// One roulette decision with an externally supplied draw u in [0, 1).
inline RouletteLogEntry roulette_step(RouletteState& state, std::size_t index, std::span<const double> embedding,
                                      double u) {
    return detail::roulette_apply(state, index, embedding, is_similar(embedding, state), u);
}

// Draws u from `rng` only when the sentence is similar, so dissimilar sentences
// do not consume randomness.
inline RouletteLogEntry roulette_step(RouletteState& state, std::size_t index, std::span<const double> embedding,
                                      Rng& rng) {
    const bool similar = is_similar(embedding, state);
    return detail::roulette_apply(state, index, embedding, similar, similar ? rng.uniform01() : -1.0);
}

struct RouletteResult {
    std::vector<std::size_t> kept;  // positions into the input, in order
    std::vector<RouletteLogEntry> log;
};

inline RouletteResult filter_document(std::span<const std::vector<double>> embeddings, Rng& rng,
                                      double threshold = kSimilarityThreshold) {
    RouletteState state;
    state.threshold = threshold;
    RouletteResult out;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        auto entry = roulette_step(state, i, embeddings[i], rng);
        if (entry.decision == RouletteDecision::keep) out.kept.push_back(i);
        out.log.push_back(entry);
    }
    return out;
}

}  // namespace pis
