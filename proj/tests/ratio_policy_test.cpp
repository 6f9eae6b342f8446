#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "pis/ratio_policy.hpp"
#include "pis/rng.hpp"

namespace {

pis::Embedding axis(std::size_t i, double v, std::size_t dim = pis::kEmbeddingDim) {
    pis::Embedding e(dim, 0.0);
    e[i] = v;
    return e;
}

pis::PolicyState state_of(std::initializer_list<double> v) {
    pis::PolicyState s;
    s.values = Eigen::VectorXd(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) s.values(i++) = x;
    return s;
}

// Single linear layer whose output is exactly `bias` for every input.
pis::QNetwork constant_net(std::size_t in, const std::vector<double>& bias) {
    pis::QNetwork net(std::vector<std::size_t>{in, bias.size()});
    for (std::size_t i = 0; i < bias.size(); ++i) net.layers()[0].bias(static_cast<Eigen::Index>(i)) = bias[i];
    return net;
}

pis::Transition transition(std::size_t dim, std::size_t action, double reward, bool done, double fill = 0.5) {
    pis::Transition t;
    t.state.values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), fill);
    t.action = action;
    t.reward = reward;
    t.done = done;
    if (!done) t.next_state = pis::PolicyState{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), -fill)};
    return t;
}

// Three state clusters, each with its own best action; reward falls off
// linearly with distance from it.
class BanditEnvironment {
public:
    static constexpr std::size_t kDim = 12;
    static constexpr std::size_t kBest[3] = {1, 4, 6};

    explicit BanditEnvironment(std::uint64_t seed) {
        pis::Rng rng(seed);
        for (std::size_t traj = 0; traj < 6; ++traj) {
            std::vector<pis::PolicyState> states;
            std::vector<std::size_t> groups;
            for (std::size_t t = 0; t < 12; ++t) {
                const std::size_t g = rng.uniform_index(3);
                Eigen::VectorXd v = Eigen::VectorXd::Zero(kDim);
                for (std::size_t k = 0; k < 4; ++k) v(static_cast<Eigen::Index>(4 * g + k)) = 1.0;
                for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += 0.05 * (rng.uniform01() - 0.5);
                states.push_back({v});
                groups.push_back(g);
            }
            states_.push_back(std::move(states));
            groups_.push_back(std::move(groups));
        }
    }

    std::size_t trajectory_count() const { return states_.size(); }
    std::size_t length(std::size_t i) const { return states_[i].size(); }
    const pis::PolicyState& state(std::size_t i, std::size_t t) const { return states_[i][t]; }
    std::size_t group(std::size_t i, std::size_t t) const { return groups_[i][t]; }
    double reward(std::size_t i, std::size_t t, std::size_t a) {
        const auto best = static_cast<double>(kBest[groups_[i][t]]);
        return 1.0 - std::abs(static_cast<double>(a) - best) / 7.0;
    }

private:
    std::vector<std::vector<pis::PolicyState>> states_;
    std::vector<std::vector<std::size_t>> groups_;
};

static_assert(pis::RatioEnvironment<BanditEnvironment>);

// Fixed-length trajectories of a constant state and reward.
class CountingEnvironment {
public:
    CountingEnvironment(std::size_t trajectories, std::size_t length) : n_(trajectories), len_(length) {}
    std::size_t trajectory_count() const { return n_; }
    std::size_t length(std::size_t) const { return len_; }
    const pis::PolicyState& state(std::size_t, std::size_t) const { return s_; }
    double reward(std::size_t, std::size_t, std::size_t a) { return 0.1 * static_cast<double>(a); }

private:
    std::size_t n_, len_;
    pis::PolicyState s_{Eigen::VectorXd::Constant(4, 0.25)};
};

pis::TrainConfig small_config() {
    pis::TrainConfig c;
    c.widths = {4, 8, 8};
    return c;
}

}  // namespace

TEST(BuildState, Examples) {
    const auto cur = axis(5, 3.0);
    const auto alone = pis::build_state(nullptr, cur, nullptr);
    EXPECT_DOUBLE_EQ(alone.values(5), 1.0);
    EXPECT_EQ(alone.dim(), 768u);

    const auto same = pis::build_state(&cur, cur, &cur);
    EXPECT_DOUBLE_EQ(same.values(5), 3.0);

    const auto prev = axis(0, 3.0), mid = axis(1, 3.0);
    const pis::Embedding zero(768, 0.0);
    const auto mixed = pis::build_state(&prev, mid, &zero);
    EXPECT_DOUBLE_EQ(mixed.values(0), 1.0);
    EXPECT_DOUBLE_EQ(mixed.values(1), 1.0);
    EXPECT_DOUBLE_EQ(mixed.values(2), 0.0);
}

TEST(BuildState, DimensionErrors) {
    const pis::Embedding short_one(767, 1.0), ok(768, 1.0);
    EXPECT_THROW(pis::build_state(nullptr, short_one, nullptr), pis::DimensionError);
    EXPECT_THROW(pis::build_state(&short_one, ok, nullptr), pis::DimensionError);
    EXPECT_THROW(pis::build_state(nullptr, ok, &short_one), pis::DimensionError);
}

TEST(BuildStates, NeighboursFromDocumentOrder) {
    std::vector<pis::ScoredSentence> ss(3);
    ss[0].embedding = axis(0, 3.0, 4);
    ss[1].embedding = axis(1, 3.0, 4);
    ss[2].embedding = axis(2, 3.0, 4);
    const auto states = pis::build_states(ss);
    ASSERT_EQ(states.size(), 3u);
    EXPECT_EQ(states[0].values, (Eigen::Vector4d(1, 1, 0, 0)));
    EXPECT_EQ(states[1].values, (Eigen::Vector4d(1, 1, 1, 0)));
    EXPECT_EQ(states[2].values, (Eigen::Vector4d(0, 1, 1, 0)));
}

TEST(ActionToRatio, Grid) {
    EXPECT_DOUBLE_EQ(pis::action_to_ratio(0), 0.1);
    EXPECT_DOUBLE_EQ(pis::action_to_ratio(3), 0.4);
    EXPECT_DOUBLE_EQ(pis::action_to_ratio(7), 0.8);
    EXPECT_THROW(pis::action_to_ratio(8), pis::RangeError);
}

TEST(SelectAction, GreedyAndTies) {
    pis::Rng rng(1);
    const std::vector<double> q = {0.1, 0.7, -2, 0.3, 0.69, 0, 0, 0};
    EXPECT_EQ(pis::select_action(q, 0.0, rng), 1u);
    const std::vector<double> tie = {5, 5, 1, 1, 1, 1, 1, 1};
    EXPECT_EQ(pis::select_action(tie, 0.0, rng), 0u);
    EXPECT_THROW(pis::select_action(q, 1.5, rng), pis::DomainError);
}

TEST(SelectAction, ExplorationIsReproducible) {
    const std::vector<double> q(8, 0.0);
    pis::Rng a(42), b(42);
    std::vector<std::size_t> xs, ys;
    for (int i = 0; i < 200; ++i) {
        xs.push_back(pis::select_action(q, 1.0, a));
        ys.push_back(pis::select_action(q, 1.0, b));
    }
    EXPECT_EQ(xs, ys);
    std::vector<int> seen(8, 0);
    for (auto x : xs) ++seen[x];
    for (int c : seen) EXPECT_GT(c, 0);
}

TEST(SelectAction, GreedyChoiceIgnoresPositiveScaling) {
    pis::Rng rng(3), draws(4);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> q(8), scaled(8);
        const double c = 0.01 + 100.0 * draws.uniform01();
        for (std::size_t i = 0; i < 8; ++i) {
            q[i] = draws.uniform01() - 0.5;
            scaled[i] = c * q[i];
        }
        EXPECT_EQ(pis::select_action(q, 0.0, rng), pis::select_action(scaled, 0.0, rng));
    }
}

TEST(DecayEpsilon, ExamplesAndSequence) {
    EXPECT_DOUBLE_EQ(pis::decay_epsilon(1.0), 0.995);
    EXPECT_DOUBLE_EQ(pis::decay_epsilon(0.01), 0.01);
    EXPECT_DOUBLE_EQ(pis::decay_epsilon(0.5), 0.4975);
    double eps = 1.0;
    for (int n = 1; n <= 2000; ++n) {
        const double next = pis::decay_epsilon(eps);
        EXPECT_LE(next, eps);
        EXPECT_GE(next, 0.01);
        EXPECT_NEAR(next, std::max(0.01, std::pow(0.995, n)), 1e-12);
        eps = next;
    }
}

TEST(Reward, IdentityUnderDefaults) {
    const pis::TrainConfig cfg;
    const auto s = pis::split_sentences("The quick brown fox jumps over the lazy dog.").front();
    // (0.7 - 1.0) + (1.0 - 0.17) + (1.0 - 0.17), evaluated in double arithmetic
    EXPECT_NEAR(pis::reward(s, s, cfg), 1.36, 1e-12);
}

TEST(Reward, Examples) {
    const pis::TrainConfig cfg;
    EXPECT_NEAR(pis::combine_reward(0.5, 0.8, 0.6, cfg), 1.26, 1e-12);
    EXPECT_NEAR(pis::combine_reward(0.7, 0.17, 0.17, cfg), 0.0, 1e-15);

    // Dropping the last of ten distinct words: rho = 0.9, F1 = 18/19, BLEU = BP = exp(-1/9).
    const auto orig = pis::split_sentences("a b c d e f g h i j").front();
    const auto comp = pis::split_sentences("a b c d e f g h i").front();
    const double expected = (0.7 - 0.9) + (18.0 / 19.0 - 0.17) + (std::exp(-1.0 / 9.0) - 0.17);
    EXPECT_NEAR(pis::reward(orig, comp, cfg), expected, 1e-12);

    const auto punct = pis::split_sentences("...").front();
    EXPECT_THROW(pis::reward(punct, punct, cfg), pis::EmptySentence);
}

TEST(Reward, CompressedSentenceIsDetokenizedPlan) {
    const auto s = pis::split_sentences("alpha, beta gamma.").front();
    pis::CompressionPlan plan;
    plan.kept_tokens = {s.tokens[0], s.tokens[1], s.tokens[3], s.tokens[4]};
    const auto c = pis::compressed_sentence(plan, s);
    EXPECT_EQ(c.text, "alpha, gamma.");
    EXPECT_EQ(c.word_count(), 2u);
}

TEST(DdqnTarget, Examples) {
    const auto policy = constant_net(2, {0, 0, 0, 9, 0, 0, 0, 0});
    const auto target = constant_net(2, {0, 0, 0, 2, 0, 10, 0, 0});
    auto done = transition(2, 0, 1.3, true);
    EXPECT_DOUBLE_EQ(pis::ddqn_target(done, policy, target, 0.99), 1.3);

    auto live = transition(2, 0, 1.0, false);
    EXPECT_DOUBLE_EQ(pis::ddqn_target(live, policy, target, 0.99), 2.98);

    // Same network for both roles: plain Q-learning target r + g max Q.
    EXPECT_DOUBLE_EQ(pis::ddqn_target(live, target, target, 0.99), 1.0 + 0.99 * 10.0);
}

TEST(ReplayBuffer, PushAssignsMaxPriority) {
    pis::ReplayBuffer buf(10);
    EXPECT_DOUBLE_EQ(buf.max_priority(), 1.0);
    buf.push(transition(2, 0, 0, true));
    EXPECT_DOUBLE_EQ(buf.at(0).priority, 1.0);
    const std::vector<std::size_t> slots = {0};
    const std::vector<double> pr = {3.5};
    buf.update_priorities(slots, pr);
    buf.push(transition(2, 1, 0, true));
    EXPECT_DOUBLE_EQ(buf.at(1).priority, 3.5);
}

TEST(ReplayBuffer, EqualPrioritiesGiveUniformProbabilitiesAndUnitWeights) {
    pis::ReplayBuffer buf(100);
    for (int i = 0; i < 7; ++i) buf.push(transition(2, 0, i, true));
    for (double p : buf.probabilities()) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
    pis::Rng rng(1);
    const auto s = buf.sample(32, 0.4, rng);
    ASSERT_EQ(s.transitions.size(), 32u);
    for (double w : s.weights) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(ReplayBuffer, ZeroExponentIsUniform) {
    pis::ReplayBuffer buf(100, 0.0);
    for (int i = 0; i < 5; ++i) buf.push(transition(2, 0, i, true));
    const std::vector<std::size_t> slots = {0, 1, 2, 3, 4};
    const std::vector<double> pr = {0.001, 5, 80, 2, 0.3};
    buf.update_priorities(slots, pr);
    for (double p : buf.probabilities()) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(ReplayBuffer, ProbabilitiesSumToOneAndFollowPriorities) {
    pis::ReplayBuffer buf(500);
    pis::Rng rng(2);
    for (int i = 0; i < 400; ++i) buf.push(transition(2, 0, i, true));
    std::vector<std::size_t> slots;
    std::vector<double> pr;
    for (std::size_t i = 0; i < 400; ++i) {
        slots.push_back(i);
        pr.push_back(1e-3 + 10.0 * rng.uniform01());
    }
    buf.update_priorities(slots, pr);
    const auto p = buf.probabilities();
    double total = 0.0;
    for (double x : p) total += x;
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_NEAR(p[7] / p[3], std::pow(pr[7] / pr[3], 0.6), 1e-12);

    // Importance weights are (N P(i))^-b divided by the largest possible weight.
    const auto s = buf.sample(64, 0.5, rng);
    const double min_p = *std::min_element(p.begin(), p.end());
    for (std::size_t i = 0; i < s.slots.size(); ++i) {
        const double expected = std::pow(400.0 * p[s.slots[i]], -0.5) / std::pow(400.0 * min_p, -0.5);
        EXPECT_NEAR(s.weights[i], expected, 1e-9);
        EXPECT_LE(s.weights[i], 1.0 + 1e-12);
    }
}

TEST(ReplayBuffer, SamplingFrequencyTracksProbability) {
    pis::ReplayBuffer buf(10);
    for (int i = 0; i < 3; ++i) buf.push(transition(2, 0, i, true));
    const std::vector<std::size_t> slots = {0, 1, 2};
    const std::vector<double> pr = {1.0, 2.0, 4.0};
    buf.update_priorities(slots, pr);
    const auto p = buf.probabilities();
    pis::Rng rng(3);
    std::vector<double> counts(3, 0.0);
    const auto s = buf.sample(60000, 0.4, rng);
    for (auto slot : s.slots) counts[slot] += 1.0;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(counts[i] / 60000.0, p[i], 0.01);
}

TEST(ReplayBuffer, FifoEvictionAtCapacity) {
    pis::ReplayBuffer buf;
    EXPECT_EQ(buf.capacity(), 20000u);
    for (int i = 0; i < 20000; ++i) buf.push(transition(1, 0, i, true));
    EXPECT_EQ(buf.size(), 20000u);
    EXPECT_DOUBLE_EQ(buf.at(0).reward, 0.0);
    buf.push(transition(1, 0, 20000, true));
    EXPECT_EQ(buf.size(), 20000u);
    EXPECT_DOUBLE_EQ(buf.at(0).reward, 1.0);
    EXPECT_DOUBLE_EQ(buf.at(19999).reward, 20000.0);
}

TEST(ReplayBuffer, EmptyBufferCannotSample) {
    pis::ReplayBuffer buf;
    pis::Rng rng(1);
    EXPECT_THROW(buf.sample(32, 0.4, rng), pis::EmptyBuffer);
}

TEST(TrainStep, ZeroTdErrorGivesFloorPriorities) {
    pis::TrainConfig cfg;
    cfg.widths = {3, 8};
    pis::DdqnLearner learner(cfg, pis::QNetwork(cfg.widths));
    std::vector<pis::Transition> ts(32, transition(3, 2, 0.0, true));
    std::vector<const pis::Transition*> batch;
    for (const auto& t : ts) batch.push_back(&t);
    const std::vector<double> w(32, 1.0);
    const auto r = pis::train_step(learner, batch, w);
    EXPECT_EQ(r.loss, 0.0);
    for (double p : r.priorities) EXPECT_DOUBLE_EQ(p, 1e-3);
}

TEST(TrainStep, RepeatedTransitionConverges) {
    pis::TrainConfig cfg;  // default widths and learning rate
    pis::Rng rng(5);
    pis::DdqnLearner learner(cfg, pis::QNetwork::initialized(cfg.widths, rng));
    auto t = transition(768, 3, 1.36, true, 0.05);
    std::vector<const pis::Transition*> batch(32, &t);
    const std::vector<double> w(32, 1.0);
    const double first = pis::train_step(learner, batch, w).loss;
    double last = first;
    for (int i = 1; i < 100; ++i) last = pis::train_step(learner, batch, w).loss;
    EXPECT_LT(last, first);
    EXPECT_LT(last, 0.05 * first);
}

TEST(TrainStep, TargetFrozenBetweenSyncsThenCopied) {
    pis::TrainConfig cfg;
    cfg.widths = {6, 10, 8};
    pis::Rng rng(6);
    pis::DdqnLearner learner(cfg, pis::QNetwork::initialized(cfg.widths, rng));
    const auto initial_target = learner.target;
    std::vector<pis::Transition> ts;
    for (int i = 0; i < 32; ++i) ts.push_back(transition(6, static_cast<std::size_t>(i % 8), 0.1 * i, i % 3 == 0));
    std::vector<const pis::Transition*> batch;
    for (const auto& t : ts) batch.push_back(&t);
    const std::vector<double> w(32, 1.0);
    for (int step = 1; step <= 99; ++step) {
        EXPECT_FALSE(pis::train_step(learner, batch, w).synced);
        ASSERT_TRUE(learner.target == initial_target);
    }
    EXPECT_FALSE(learner.policy == learner.target);
    EXPECT_TRUE(pis::train_step(learner, batch, w).synced);
    EXPECT_TRUE(learner.target == learner.policy);
    const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
    EXPECT_EQ(learner.target.forward(s), learner.policy.forward(s));
}

TEST(Train, NoUpdatesBeforeABatchExists) {
    auto cfg = small_config();
    cfg.episodes = 1;
    pis::Rng rng(1);
    CountingEnvironment short_env(1, 31);
    EXPECT_EQ(pis::train(short_env, cfg, rng).gradient_steps, 0u);

    CountingEnvironment longer(1, 40);
    EXPECT_EQ(pis::train(longer, cfg, rng).gradient_steps, 9u);
}

TEST(Train, EpisodesCycleTrajectoriesAndLogMeans) {
    auto cfg = small_config();
    cfg.episodes = 5;
    pis::Rng rng(2);
    CountingEnvironment env(2, 10);
    const auto r = pis::train(env, cfg, rng);
    EXPECT_EQ(r.episode_mean_reward.size(), 5u);
    EXPECT_EQ(r.gradient_steps, 50u - 31u);
    for (double m : r.episode_mean_reward) {
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 0.7);
    }
}

TEST(Train, DeterministicUnderSeed) {
    auto cfg = small_config();
    cfg.episodes = 20;
    CountingEnvironment env(3, 17);
    pis::Rng a(9), b(9);
    const auto ra = pis::train(env, cfg, a);
    const auto rb = pis::train(env, cfg, b);
    EXPECT_EQ(ra.episode_mean_reward, rb.episode_mean_reward);
    EXPECT_TRUE(ra.policy == rb.policy);
}

TEST(Train, LearnsDistinctBestActionsPerCluster) {
    pis::TrainConfig cfg;
    cfg.widths = {BanditEnvironment::kDim, 32, 32, 8};
    cfg.learning_rate = 1e-3;
    cfg.gamma_disc = 0.5;
    cfg.episodes = 150;
    cfg.epsilon_decay = 0.97;
    BanditEnvironment env(11);
    pis::Rng rng(12);
    const auto r = pis::train(env, cfg, rng);
    std::size_t right = 0, total = 0;
    for (std::size_t i = 0; i < env.trajectory_count(); ++i) {
        for (std::size_t t = 0; t < env.length(i); ++t) {
            ++total;
            if (pis::greedy_action(r.policy, env.state(i, t)) == BanditEnvironment::kBest[env.group(i, t)]) ++right;
        }
    }
    EXPECT_EQ(right, total);
}

TEST(Train, RunsOnDocumentsWithFallbackScorer) {
    const std::vector<pis::Document> docs = {
        pis::make_document("a", "One two three four five. Six seven eight nine ten eleven. Twelve thirteen."),
        pis::make_document("b", "Alpha beta gamma delta. Epsilon zeta eta theta iota."),
    };
    pis::TrainConfig cfg;
    cfg.widths = {768, 16, 8};
    cfg.episodes = 3;
    pis::Rng rng(4);
    const auto r = pis::train(docs, nullptr, cfg, rng);
    EXPECT_EQ(r.episode_mean_reward.size(), 3u);
    EXPECT_EQ(r.policy.input_dim(), 768u);
    EXPECT_THROW(pis::train(std::span<const pis::Document>{}, nullptr, cfg, rng), pis::DomainError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
    pis::TrainConfig c;
    c.learning_rate = 3e-4;
    c.episodes = 7;
    c.widths = {768, 64, 8};
    const auto back = pis::train_config_from_json(pis::to_json(c));
    EXPECT_EQ(pis::to_json(back), pis::to_json(c));

    const auto partial = pis::train_config_from_json(nlohmann::json{{"episodes", 3}});
    EXPECT_EQ(partial.episodes, 3u);
    EXPECT_DOUBLE_EQ(partial.lambda, 0.7);
    EXPECT_DOUBLE_EQ(partial.tau_quality, 0.17);
    EXPECT_EQ(partial.batch_size, 32u);
    EXPECT_EQ(partial.target_sync_every, 100u);

    EXPECT_THROW(pis::train_config_from_json(nlohmann::json{{"episodez", 3}}), pis::SchemaError);
    EXPECT_THROW(pis::train_config_from_json(nlohmann::json{{"episodes", "many"}}), pis::SchemaError);
    EXPECT_THROW(pis::train_config_from_json(nlohmann::json{{"widths", {768, 9}}}), pis::SchemaError);
    EXPECT_THROW(pis::train_config_from_json(nlohmann::json{{"batch_size", 0}}), pis::SchemaError);
}
