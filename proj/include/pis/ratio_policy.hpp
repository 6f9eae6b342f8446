#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pis/errors.hpp"
#include "pis/metrics.hpp"
#include "pis/qnetwork.hpp"
#include "pis/replay_buffer.hpp"
#include "pis/rng.hpp"
#include "pis/scoring.hpp"
#include "pis/segmentation.hpp"
#include "pis/token_sampler.hpp"

namespace pis {

// DDQN training hyperparameters. The first block is the published training
// schedule; the rest are knobs the schedule leaves open.
struct TrainConfig {
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double epsilon_start = 1.0;
    double epsilon_min = 0.01;
    double epsilon_decay = 0.995;
    double gamma_disc = 0.99;
    std::size_t batch_size = 32;
    std::size_t target_sync_every = 100;
    std::size_t episodes = 20;
    std::size_t buffer_capacity = ReplayBuffer::kDefaultCapacity;
    double lambda = 0.7;
    double tau_quality = 0.17;
    double alpha_reward = 1.0;
    double beta_reward = 1.0;
    double gamma_reward = 1.0;

    double adam_epsilon = 1e-8;
    double priority_alpha = 0.6;
    double priority_beta_start = 0.4;  // annealed linearly to 1.0
    double priority_floor = 1e-3;
    double gamma_tf = 0.5;
    std::vector<std::size_t> widths = kDefaultWidths;
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"epsilon_start", c.epsilon_start},
            {"epsilon_min", c.epsilon_min},
            {"epsilon_decay", c.epsilon_decay},
            {"gamma_disc", c.gamma_disc},
            {"batch_size", c.batch_size},
            {"target_sync_every", c.target_sync_every},
            {"episodes", c.episodes},
            {"buffer_capacity", c.buffer_capacity},
            {"lambda", c.lambda},
            {"tau_quality", c.tau_quality},
            {"alpha_reward", c.alpha_reward},
            {"beta_reward", c.beta_reward},
            {"gamma_reward", c.gamma_reward},
            {"adam_epsilon", c.adam_epsilon},
            {"priority_alpha", c.priority_alpha},
            {"priority_beta_start", c.priority_beta_start},
            {"priority_floor", c.priority_floor},
            {"gamma_tf", c.gamma_tf},
            {"widths", c.widths}};
}

// Missing fields keep their defaults; unknown fields are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError(0, "training config must be a JSON object");
    TrainConfig c;
    const nlohmann::json defaults = to_json(c);
    for (const auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw SchemaError(0, key, "unknown training config field");
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(0, key, e.what());
        }
    };
    get("learning_rate", c.learning_rate);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("epsilon_start", c.epsilon_start);
    get("epsilon_min", c.epsilon_min);
    get("epsilon_decay", c.epsilon_decay);
    get("gamma_disc", c.gamma_disc);
    get("batch_size", c.batch_size);
    get("target_sync_every", c.target_sync_every);
    get("episodes", c.episodes);
    get("buffer_capacity", c.buffer_capacity);
    get("lambda", c.lambda);
    get("tau_quality", c.tau_quality);
    get("alpha_reward", c.alpha_reward);
    get("beta_reward", c.beta_reward);
    get("gamma_reward", c.gamma_reward);
    get("adam_epsilon", c.adam_epsilon);
    get("priority_alpha", c.priority_alpha);
    get("priority_beta_start", c.priority_beta_start);
    get("priority_floor", c.priority_floor);
    get("gamma_tf", c.gamma_tf);
    get("widths", c.widths);
    if (c.batch_size == 0 || c.target_sync_every == 0 || c.buffer_capacity == 0) {
        throw SchemaError(0, "batch_size", "batch size, sync interval and capacity must be positive");
    }
    if (c.widths.size() < 2 || c.widths.back() != kActionCount) {
        throw SchemaError(0, "widths", "network must end in " + std::to_string(kActionCount) + " action values");
    }
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open training config '" + path + "'");
    try {
        return train_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, e.what());
    }
}

// ---------------------------------------------------------------------------
// State, actions, exploration
// ---------------------------------------------------------------------------

// (prev + cur + next) / 3 with absent neighbours contributing zero.
inline PolicyState build_state(const Embedding* prev, const Embedding& cur, const Embedding* next,
                               std::size_t dim = kEmbeddingDim) {
    auto check = [dim](const Embedding& e) {
        if (e.size() != dim) {
            throw DimensionError("state embedding has " + std::to_string(e.size()) + " values, expected " +
                                 std::to_string(dim));
        }
    };
    check(cur);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(dim));
    if (prev) {
        check(*prev);
        v += Eigen::Map<const Eigen::VectorXd>(prev->data(), static_cast<Eigen::Index>(dim));
    }
    if (next) {
        check(*next);
        v += Eigen::Map<const Eigen::VectorXd>(next->data(), static_cast<Eigen::Index>(dim));
    }
    v /= 3.0;
    if (!v.allFinite()) throw DomainError("policy state has non-finite entries");
    return {std::move(v)};
}

// One state per sentence, neighbours taken from the same list.
inline std::vector<PolicyState> build_states(std::span<const ScoredSentence> sentences) {
    std::vector<PolicyState> states;
    states.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const Embedding* prev = i > 0 ? &sentences[i - 1].embedding : nullptr;
        const Embedding* next = i + 1 < sentences.size() ? &sentences[i + 1].embedding : nullptr;
        states.push_back(build_state(prev, sentences[i].embedding, next, sentences[i].embedding.size()));
    }
    return states;
}

// Action a removes (a + 1) / 10 of the sentence's words.
inline double action_to_ratio(std::size_t action) {
    if (action >= kActionCount) throw RangeError("action must be in [0, 7]");
    return static_cast<double>(action + 1) / 10.0;
}

// Lowest index among the maxima.
inline std::size_t greedy_action(std::span<const double> qvals) {
    if (qvals.empty()) throw DimensionError("no action values");
    return static_cast<std::size_t>(std::max_element(qvals.begin(), qvals.end()) - qvals.begin());
}

inline std::size_t greedy_action(const QNetwork& net, const PolicyState& state) {
    const Eigen::VectorXd q = net.forward(state.values);
    return greedy_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
}

// Always consumes one draw, plus one more when exploring.
inline std::size_t select_action(std::span<const double> qvals, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw DomainError("epsilon must be in [0, 1]");
    if (qvals.empty()) throw DimensionError("no action values");
    if (rng.uniform01() < epsilon) return static_cast<std::size_t>(rng.uniform_index(qvals.size()));
    return greedy_action(qvals);
}

inline double decay_epsilon(double epsilon, double decay = 0.995, double floor = 0.01) {
    return std::max(floor, epsilon * decay);
}

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

// alpha (lambda - rho) + beta (ROUGE-1 - tau) + gamma (BLEU - tau)
inline double combine_reward(double rho, double rouge1_f1, double bleu_score, const TrainConfig& cfg) {
    return cfg.alpha_reward * (cfg.lambda - rho) + cfg.beta_reward * (rouge1_f1 - cfg.tau_quality) +
           cfg.gamma_reward * (bleu_score - cfg.tau_quality);
}

// The compressed sentence is the candidate, the original the reference.
inline double reward(const Sentence& original, const Sentence& compressed, const TrainConfig& cfg) {
    const auto ref = metric_tokens(original.text);
    if (ref.empty()) throw EmptySentence();
    const auto cand = metric_tokens(compressed.text);
    const double rho = static_cast<double>(cand.size()) / static_cast<double>(ref.size());
    return combine_reward(rho, rouge_n(cand, ref, 1).f1, bleu(cand, ref), cfg);
}

inline Sentence compressed_sentence(const CompressionPlan& plan, const Sentence& original) {
    Sentence s;
    s.index = original.index;
    s.text = detokenize(plan.kept_tokens, original);
    s.tokens = tokenize(s.text);
    return s;
}

// ---------------------------------------------------------------------------
// DDQN learning
// ---------------------------------------------------------------------------

// Terminal: r. Otherwise r + gamma * Q_target(s')[argmax_a Q_policy(s')].
inline double ddqn_target(const Transition& t, const QNetwork& policy, const QNetwork& target, double gamma_disc) {
    if (t.done || !t.next_state) return t.reward;
    const Eigen::VectorXd qp = policy.forward(t.next_state->values);
    const Eigen::VectorXd qt = target.forward(t.next_state->values);
    Eigen::Index best = 0;
    qp.maxCoeff(&best);
    return t.reward + gamma_disc * qt(best);
}

// Online network, target network and optimizer state.
struct DdqnLearner {
    TrainConfig cfg;
    QNetwork policy;
    QNetwork target;
    Adam adam;
    std::size_t steps = 0;

    DdqnLearner(TrainConfig config, QNetwork initial)
        : cfg(std::move(config)),
          policy(std::move(initial)),
          target(policy),
          adam(policy, AdamConfig{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon}) {}

    void sync_target() { target = policy; }
};

struct TrainStepResult {
    double loss = 0.0;
    std::vector<double> td_errors;
    std::vector<double> priorities;  // |td| + floor
    bool synced = false;
};

// One Adam update on the weighted squared TD error; syncs the target network
// every cfg.target_sync_every updates.
inline TrainStepResult train_step(DdqnLearner& learner, std::span<const Transition* const> batch,
                                  std::span<const double> weights) {
    if (batch.empty() || weights.size() != batch.size()) throw DimensionError("train_step batch mismatch");
    const auto dim = static_cast<Eigen::Index>(learner.policy.input_dim());
    const auto b = static_cast<Eigen::Index>(batch.size());

    Eigen::MatrixXd states(dim, b);
    Eigen::MatrixXd next_states = Eigen::MatrixXd::Zero(dim, b);
    std::vector<std::size_t> actions(batch.size());
    for (Eigen::Index i = 0; i < b; ++i) {
        const Transition& t = *batch[static_cast<std::size_t>(i)];
        states.col(i) = t.state.values;
        if (!t.done && t.next_state) next_states.col(i) = t.next_state->values;
        actions[static_cast<std::size_t>(i)] = t.action;
    }

    const Eigen::MatrixXd q_next_policy = learner.policy.forward_batch(next_states);
    const Eigen::MatrixXd q_next_target = learner.target.forward_batch(next_states);
    std::vector<double> targets(batch.size());
    for (Eigen::Index i = 0; i < b; ++i) {
        const Transition& t = *batch[static_cast<std::size_t>(i)];
        double y = t.reward;
        if (!t.done && t.next_state) {
            Eigen::Index best = 0;
            q_next_policy.col(i).maxCoeff(&best);
            y += learner.cfg.gamma_disc * q_next_target(best, i);
        }
        targets[static_cast<std::size_t>(i)] = y;
    }

    TdLossResult tl = td_loss_and_gradient(learner.policy, states, actions, targets, weights);
    learner.adam.step(learner.policy, tl.gradient);
    ++learner.steps;

    TrainStepResult out;
    out.loss = tl.loss;
    out.td_errors = std::move(tl.td_errors);
    out.priorities.reserve(out.td_errors.size());
    for (double td : out.td_errors) out.priorities.push_back(std::abs(td) + learner.cfg.priority_floor);
    if (learner.steps % learner.cfg.target_sync_every == 0) {
        learner.sync_target();
        out.synced = true;
    }
    return out;
}

// An episodic environment with a fixed set of trajectories. Actions do not
// change which state comes next, only the reward.
template <class E>
concept RatioEnvironment = requires(E& env, const E& cenv, std::size_t i, std::size_t t, std::size_t a) {
    { cenv.trajectory_count() } -> std::convertible_to<std::size_t>;
    { cenv.length(i) } -> std::convertible_to<std::size_t>;
    { cenv.state(i, t) } -> std::convertible_to<const PolicyState&>;
    { env.reward(i, t, a) } -> std::convertible_to<double>;
};

struct TrainResult {
    QNetwork policy;
    std::vector<double> episode_mean_reward;
    std::size_t gradient_steps = 0;
};

// Episode e replays trajectory e mod trajectory_count(). Per step: epsilon-greedy
// action, reward, push, then one prioritized train_step once the buffer holds a
// batch. Epsilon decays once per episode.
template <RatioEnvironment Env>
TrainResult train(Env& env, const TrainConfig& cfg, Rng& rng) {
    if (env.trajectory_count() == 0) throw DomainError("training needs at least one trajectory");
    DdqnLearner learner(cfg, QNetwork::initialized(cfg.widths, rng));
    ReplayBuffer buffer(cfg.buffer_capacity, cfg.priority_alpha);

    std::size_t planned = 0;
    for (std::size_t e = 0; e < cfg.episodes; ++e) planned += env.length(e % env.trajectory_count());

    TrainResult result;
    double epsilon = cfg.epsilon_start;
    std::size_t env_steps = 0;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        const std::size_t traj = e % env.trajectory_count();
        const std::size_t len = env.length(traj);
        double total = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const PolicyState& s = env.state(traj, t);
            const Eigen::VectorXd q = learner.policy.forward(s.values);
            const std::size_t a =
                select_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), epsilon, rng);
            const double r = env.reward(traj, t, a);
            total += r;
            const bool done = t + 1 == len;
            Transition tr;
            tr.state = s;
            tr.action = a;
            tr.reward = r;
            tr.done = done;
            if (!done) tr.next_state = env.state(traj, t + 1);
            buffer.push(std::move(tr));
            ++env_steps;

            if (buffer.size() >= cfg.batch_size) {
                const double progress =
                    planned > 1 ? static_cast<double>(env_steps - 1) / static_cast<double>(planned - 1) : 1.0;
                const double beta = cfg.priority_beta_start + (1.0 - cfg.priority_beta_start) * progress;
                ReplaySample sample = buffer.sample(cfg.batch_size, beta, rng);
                TrainStepResult step = train_step(learner, sample.transitions, sample.weights);
                buffer.update_priorities(sample.slots, step.priorities);
            }
        }
        result.episode_mean_reward.push_back(len > 0 ? total / static_cast<double>(len) : 0.0);
        epsilon = decay_epsilon(epsilon, cfg.epsilon_decay, cfg.epsilon_min);
    }
    result.gradient_steps = learner.steps;
    result.policy = std::move(learner.policy);
    return result;
}

// Sentence compression as an environment: one trajectory per document, the
// reward of action a is the reward of compressing the sentence at ratio a.
class SentenceEnvironment {
public:
    SentenceEnvironment(std::vector<std::vector<ScoredSentence>> documents, TrainConfig cfg)
        : cfg_(std::move(cfg)) {
        for (auto& d : documents) {
            if (d.empty()) continue;
            states_.push_back(build_states(d));
            cache_.emplace_back(d.size());
            docs_.push_back(std::move(d));
        }
    }

    std::size_t trajectory_count() const noexcept { return docs_.size(); }
    std::size_t length(std::size_t i) const { return docs_.at(i).size(); }
    const PolicyState& state(std::size_t i, std::size_t t) const { return states_.at(i).at(t); }
    const ScoredSentence& sentence(std::size_t i, std::size_t t) const { return docs_.at(i).at(t); }

    double reward(std::size_t i, std::size_t t, std::size_t action) {
        auto& slot = cache_.at(i).at(t).at(action);
        if (!slot) {
            const ScoredSentence& s = docs_[i][t];
            const CompressionPlan plan = compress_sentence(s, action_to_ratio(action));
            slot = pis::reward(s.sentence, compressed_sentence(plan, s.sentence), cfg_);
        }
        return *slot;
    }

private:
    TrainConfig cfg_;
    std::vector<std::vector<ScoredSentence>> docs_;
    std::vector<std::vector<PolicyState>> states_;
    std::vector<std::vector<std::array<std::optional<double>, kActionCount>>> cache_;
};

static_assert(RatioEnvironment<SentenceEnvironment>);

// Scores the corpus (encoder records when given, fallback otherwise) and trains
// the ratio policy on it.
inline TrainResult train(std::span<const Document> corpus, const RecordMap* records, const TrainConfig& cfg,
                         Rng& rng) {
    if (corpus.empty()) throw DomainError("training corpus is empty");
    const CorpusStats stats = build_corpus_stats(corpus);
    std::vector<std::vector<ScoredSentence>> scored;
    scored.reserve(corpus.size());
    for (const auto& d : corpus) scored.push_back(score_document(d, records, stats, cfg.gamma_tf));
    SentenceEnvironment env(std::move(scored), cfg);
    return train(env, cfg, rng);
}

}  // namespace pis
