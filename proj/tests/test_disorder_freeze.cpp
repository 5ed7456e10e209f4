#include <gtest/gtest.h>

#include <random>

#include "gaqat/disorder.hpp"
#include "gaqat/errors.hpp"
#include "gaqat/freeze.hpp"
#include "support/oracles.hpp"

using namespace gaqat;

namespace {

double disorder_after(std::vector<int> signs) {
    SignWindow w(signs.size());
    for (int s : signs) w.push(s);
    return *w.disorder();
}

std::vector<StepGradient> log_of(const std::vector<std::vector<double>>& g, const std::vector<std::string>& ids) {
    std::vector<StepGradient> out;
    for (std::size_t t = 0; t < g.size(); ++t)
        for (std::size_t i = 0; i < ids.size(); ++i)
            out.push_back({static_cast<std::int64_t>(t), ids[i], g[t][i], -g[t][i]});
    return out;
}

std::vector<std::vector<double>> random_gradients(std::mt19937_64& rng, std::size_t steps, std::size_t scales) {
    std::vector<std::vector<double>> g(steps, std::vector<double>(scales));
    std::vector<double> bias(scales);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& b : bias) b = u(rng);
    std::uniform_int_distribution<int> zero(0, 19);
    for (auto& row : g)
        for (std::size_t i = 0; i < scales; ++i) row[i] = zero(rng) == 0 ? 0.0 : u(rng) + bias[i];
    return g;
}

}  // namespace

TEST(SignWindow, FlipCountingExamples) {
    SignWindow w(8);
    w.push(1);
    w.push(-1);
    EXPECT_EQ(w.flips(), 1u);
    w.push(0);
    w.push(1);
    EXPECT_EQ(w.flips(), 1u);
    EXPECT_FALSE(w.disorder().has_value());
}

TEST(SignWindow, DisorderExamples) {
    EXPECT_EQ(disorder_after({1, 1, 1, 1}), 0.0);
    EXPECT_EQ(disorder_after({1, -1, 1, -1}), 0.75);
    EXPECT_EQ(disorder_after({1, 1, -1, -1}), 0.25);
    EXPECT_EQ(disorder_after({1, 0, -1, 0}), 0.0);
}

TEST(SignWindow, EvictsOldestAndMatchesBruteForce) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> sgn(-1, 1);
    for (std::size_t k = 2; k <= 64; ++k) {
        SignWindow w(k);
        std::vector<int> all;
        for (int i = 0; i < 300; ++i) {
            const int s = sgn(rng);
            w.push(s);
            all.push_back(s);
            ASSERT_LE(w.size(), k);
            if (all.size() >= k) {
                const std::vector<int> last(all.end() - static_cast<std::ptrdiff_t>(k), all.end());
                ASSERT_EQ(*w.disorder(), oracle::brute_disorder(last));
                const auto buf = w.signs();
                ASSERT_TRUE(std::equal(buf.begin(), buf.end(), last.begin()));
            }
        }
    }
}

TEST(DisorderTracker, RecordsAndRejectsUnknownIds) {
    const std::vector<std::string> ids{"a", "b"};
    DisorderTracker t(3, ids);
    EXPECT_FALSE(t.ready());
    for (double g : {1.0, -2.0, 3.0}) {
        t.record("a", g);
        t.record("b", 1.0);
    }
    EXPECT_TRUE(t.ready());
    EXPECT_DOUBLE_EQ(*t.disorder("a"), 2.0 / 3.0);
    EXPECT_EQ(*t.disorder("b"), 0.0);
    EXPECT_THROW(t.record("c", 1.0), ContractError);
}

TEST(DisorderOf, MatchesDefinition) {
    EXPECT_EQ(disorder_of(std::vector{0.5, -0.1, 0.2, -3.0}), 0.75);
    EXPECT_EQ(disorder_of(std::vector{0.5, 0.0, -0.2}), 0.0);
}

TEST(FreezeController, DecideExamples) {
    const std::vector<std::string> ids{"s"};
    auto run = [&](FreezePolicy p, double d) {
        FreezeController c(ids, {0.3, 4, 0, p});
        return c.decide(0, {{"s", d}}).at("s");
    };
    EXPECT_TRUE(run(FreezePolicy::standard, 0.1));
    EXPECT_FALSE(run(FreezePolicy::reverse_ratio, 0.1));
    EXPECT_FALSE(run(FreezePolicy::standard, 0.3));
    EXPECT_TRUE(run(FreezePolicy::reverse_ratio, 0.3));
}

TEST(FreezeController, TwoRoundSchedule) {
    const std::vector<std::string> ids{"s"};
    FreezeController standard(ids, {0.3, 4, 0, FreezePolicy::standard});
    FreezeController sticky(ids, {0.3, 4, 0, FreezePolicy::no_unfreeze});
    EXPECT_TRUE(standard.decide(4, {{"s", 0.1}}).at("s"));
    EXPECT_TRUE(sticky.decide(4, {{"s", 0.1}}).at("s"));
    EXPECT_FALSE(standard.decide(8, {{"s", 0.9}}).at("s"));
    EXPECT_TRUE(sticky.decide(8, {{"s", 0.9}}).at("s"));
}

TEST(FreezeController, RejectsOffScheduleAndIncompleteInput) {
    const std::vector<std::string> ids{"a", "b"};
    FreezeController c(ids, {0.3, 4, 0, FreezePolicy::standard});
    EXPECT_THROW(c.decide(3, {{"a", 0.0}, {"b", 0.0}}), ContractError);
    EXPECT_THROW(c.decide(4, {{"a", 0.0}}), ContractError);
    EXPECT_FALSE(c.is_decision_step(5));
    EXPECT_TRUE(c.is_decision_step(8));
}

TEST(FreezeConfig, ValidationAndPolicyNames) {
    FreezeConfig c;
    EXPECT_NO_THROW(c.validate());
    c.threshold = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.interval = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    for (auto p : {FreezePolicy::standard, FreezePolicy::reverse_ratio, FreezePolicy::no_unfreeze})
        EXPECT_EQ(parse_freeze_policy(to_string(p)), p);
    EXPECT_THROW(parse_freeze_policy("sometimes"), ConfigError);
}

TEST(SelectiveFreezing, RequiresConsecutiveSteps) {
    const std::vector<std::string> ids{"s"};
    SelectiveFreezing f(ids, {0.3, 4, 0, FreezePolicy::standard});
    const std::vector<ScaleGradientPair> p{{"s", 1.0, 1.0}};
    f.observe(0, p);
    EXPECT_THROW(f.observe(2, p), ContractError);
}

TEST(SelectiveFreezing, DisabledDecisionsNeverFreeze) {
    const std::vector<std::string> ids{"s"};
    SelectiveFreezing f(ids, {0.3, 2, 0, FreezePolicy::standard}, false);
    const std::vector<ScaleGradientPair> p{{"s", 1.0, 1.0}};
    for (int t = 0; t < 10; ++t) EXPECT_FALSE(f.observe(t, p));
    EXPECT_FALSE(f.frozen().at("s"));
    EXPECT_EQ(*f.task_tracker().disorder("s"), 0.0);
}

TEST(Replay, EmptyLogGivesEmptyTimeline) { EXPECT_TRUE(replay({}, FreezeConfig{}).empty()); }

TEST(Replay, ConstantSignFrozenFromStepK) {
    const std::size_t k = 5;
    std::vector<std::vector<double>> g(20, std::vector<double>{0.7});
    const auto tl = replay(log_of(g, {"s"}), {0.3, k, 0, FreezePolicy::standard});
    ASSERT_EQ(tl.size(), 20u);
    for (const auto& e : tl) EXPECT_EQ(e.frozen.at("s"), e.step >= static_cast<std::int64_t>(k)) << e.step;
}

TEST(Replay, RejectsGapsAndMisorderedScales) {
    auto log = log_of(std::vector<std::vector<double>>(4, {1.0, 1.0}), {"a", "b"});
    auto gap = log;
    gap.erase(gap.begin() + 2, gap.begin() + 4);
    EXPECT_THROW(replay(gap, FreezeConfig{}), InputError);
    auto swapped = log;
    std::swap(swapped[0], swapped[1]);
    EXPECT_THROW(replay(swapped, FreezeConfig{}), InputError);
}

TEST(Replay, MatchesReferenceSimulationForAllPolicies) {
    std::mt19937_64 rng(7);
    const std::vector<std::string> ids{"a", "b", "c"};
    for (auto policy : {FreezePolicy::standard, FreezePolicy::reverse_ratio, FreezePolicy::no_unfreeze}) {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t k = 2 + rng() % 10;
            const std::size_t window = trial % 2 ? k : 2 + rng() % 10;
            const double r = static_cast<double>(rng() % 11) / 10.0;
            const auto g = random_gradients(rng, 80, ids.size());
            const auto tl = replay(log_of(g, ids), {r, k, window, policy});
            const auto ref = oracle::simulate_freezing(g, window, k, r, policy);
            ASSERT_EQ(tl.size(), ref.size());
            for (std::size_t t = 0; t < tl.size(); ++t)
                for (std::size_t i = 0; i < ids.size(); ++i) ASSERT_EQ(tl[t].frozen.at(ids[i]), ref[t][i]);
        }
    }
}

TEST(Replay, PolicyAlgebraAndScheduleDiscipline) {
    std::mt19937_64 rng(8);
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    const std::size_t k = 6;
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_gradients(rng, 120, ids.size());
        const auto log = log_of(g, ids);
        const auto std_tl = replay(log, {0.3, k, 0, FreezePolicy::standard});
        const auto rev_tl = replay(log, {0.3, k, 0, FreezePolicy::reverse_ratio});
        const auto mono_tl = replay(log, {0.3, k, 0, FreezePolicy::no_unfreeze});
        for (std::size_t t = 0; t < std_tl.size(); ++t) {
            for (const auto& id : ids) {
                if (t >= k) {
                    EXPECT_NE(std_tl[t].frozen.at(id), rev_tl[t].frozen.at(id));
                }
                if (t > 0) {
                    EXPECT_GE(mono_tl[t].frozen.at(id), mono_tl[t - 1].frozen.at(id));
                    if (t % k != 0) EXPECT_EQ(std_tl[t].frozen.at(id), std_tl[t - 1].frozen.at(id));
                }
            }
        }
    }
}

TEST(Replay, LiveObserveAgreesWithReplay) {
    std::mt19937_64 rng(12);
    const std::vector<std::string> ids{"x", "y"};
    const auto g = random_gradients(rng, 60, 2);
    const FreezeConfig cfg{0.4, 5, 0, FreezePolicy::standard};
    SelectiveFreezing live(ids, cfg);
    FreezeTimeline tl;
    for (std::size_t t = 0; t < g.size(); ++t) {
        const std::vector<ScaleGradientPair> p{{"x", g[t][0], 0.0}, {"y", g[t][1], 0.0}};
        live.observe(static_cast<std::int64_t>(t), p);
        tl.push_back({static_cast<std::int64_t>(t), live.frozen()});
    }
    EXPECT_EQ(tl, replay(log_of(g, ids), cfg));
}
