#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gaqat/errors.hpp"
#include "gaqat/sagm.hpp"
#include "support/instances.hpp"

using namespace gaqat;

namespace {

/// L(theta) = c * sum theta_i^2 with one read-only "scale" gradient equal to sum theta_i.
struct QuadraticStub {
    std::vector<double> theta;
    double c = 1.0;

    LossGradients evaluate(const Batch&) const {
        LossGradients out;
        double s = 0.0;
        for (double t : theta) {
            out.loss += c * t * t;
            out.grads.params.push_back(2.0 * c * t);
            s += t;
        }
        out.grads.scales = {s};
        return out;
    }
    std::vector<double> parameters() const { return theta; }
    void assign_parameters(std::span<const double> p) { theta.assign(p.begin(), p.end()); }
    std::vector<std::string> quantizer_ids() const { return {"stub.s"}; }
};

Batch one_row() { return {Matrix(1, 1), {0}}; }

QuantizedNetwork small_net(double scale) {
    const std::vector<std::size_t> dims{2, 3, 3, 2};
    auto net = QuantizedNetwork::make_mlp(dims, 4);
    net.enable_quantization({4, 4});
    net.assign_scales(std::vector<double>(net.quantizer_ids().size(), scale));
    return net;
}

FreezeMap all(const QuantizedNetwork& net, bool v) {
    FreezeMap m;
    for (const auto& id : net.quantizer_ids()) m[id] = v;
    return m;
}

}  // namespace

TEST(SagmDual, DegeneratePerturbationGivesEqualGradients) {
    std::mt19937_64 rng(1);
    auto inst = testing_support::random_instance(rng);
    SagmConfig cfg;
    cfg.rho = 0.0;
    cfg.alpha = 0.0;
    const auto d = sagm_dual_backward(inst.net, inst.batch, cfg);
    EXPECT_EQ(d.task.params, d.smooth.params);
    EXPECT_EQ(d.task.scales, d.smooth.scales);
    EXPECT_EQ(d.gap, 0.0);
}

TEST(SagmDual, ZeroGradientUsesFloor) {
    QuadraticStub stub{{0.0, 0.0}};
    SagmConfig cfg;
    cfg.rho = 0.1;
    const auto d = sagm_dual_backward(stub, one_row(), cfg);
    EXPECT_EQ(d.smooth.params, (std::vector{0.0, 0.0}));
    EXPECT_EQ(d.gap, 0.0);
}

TEST(SagmDual, OneDimensionalQuadraticClosedForm) {
    for (double theta : {-2.0, -0.3, 0.7, 5.0}) {
        for (double alpha : {0.0, 0.001, 0.05}) {
            QuadraticStub stub{{theta}};
            SagmConfig cfg;
            cfg.rho = 0.1;
            cfg.alpha = alpha;
            const auto d = sagm_dual_backward(stub, one_row(), cfg);
            const double sign = theta > 0 ? 1.0 : -1.0;
            EXPECT_NEAR(d.smooth.params[0], 2.0 * (theta + 0.1 * sign - 2.0 * alpha * theta), 1e-14);
            EXPECT_EQ(stub.theta[0], theta);
            ASSERT_EQ(d.pairs.size(), 1u);
            EXPECT_EQ(d.pairs[0].scale_id, "stub.s");
        }
    }
}

TEST(SagmDual, EpsilonCanBeDropped) {
    QuadraticStub stub{{1.5}};
    SagmConfig cfg;
    cfg.rho = 0.1;
    cfg.alpha = 0.01;
    cfg.perturb_with_epsilon = false;
    const auto d = sagm_dual_backward(stub, one_row(), cfg);
    EXPECT_NEAR(d.smooth.params[0], 2.0 * (1.5 - 0.01 * 3.0), 1e-14);
}

TEST(SagmDual, RestoresParametersBitExactly) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
        auto inst = testing_support::random_instance(rng);
        const auto before = inst.net;
        SagmConfig cfg;
        cfg.rho = 0.3;
        cfg.alpha = 0.01;
        sagm_dual_backward(inst.net, inst.batch, cfg);
        EXPECT_TRUE(inst.net == before);
    }
}

TEST(SagmDual, GapNonNegativeAtMinimumOfConvexStub) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        QuadraticStub stub{{g(rng), g(rng), g(rng)}, 0.5};
        SagmConfig cfg;
        cfg.rho = 0.05;
        cfg.alpha = 0.0;
        EXPECT_GE(sagm_dual_backward(stub, one_row(), cfg).gap, 0.0);
    }
    QuadraticStub at_min{{0.0}};
    SagmConfig cfg;
    cfg.alpha = 0.0;
    EXPECT_GE(sagm_dual_backward(at_min, one_row(), cfg).gap, 0.0);
}

TEST(SagmDual, EmptyBatchAndNonFiniteLoss) {
    QuadraticStub stub{{1.0}};
    EXPECT_THROW(sagm_dual_backward(stub, Batch{Matrix(0, 1), {}}, SagmConfig{}), InputError);
    QuadraticStub huge{{1e300}};
    try {
        sagm_dual_backward(huge, one_row(), SagmConfig{});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("empirical-risk"), std::string::npos);
    }
}

TEST(SagmConfig, Validation) {
    SagmConfig c;
    EXPECT_NO_THROW(c.validate());
    c.rho = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.lr_scales = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ApplyUpdate, AllFrozenZeroSmoothKeepsScales) {
    auto net = small_net(0.2);
    const auto ids = net.quantizer_ids();
    DualGradients d;
    d.task.params.assign(net.num_parameters(), 0.0);
    d.smooth.params.assign(net.num_parameters(), 0.0);
    d.task.scales.assign(ids.size(), 3.0);
    d.smooth.scales.assign(ids.size(), 0.0);
    apply_update(net, d, all(net, true), SagmConfig{});
    EXPECT_EQ(net.scales(), std::vector<double>(ids.size(), 0.2));
    for (const auto& id : ids) EXPECT_TRUE(net.quantizer(id).frozen_task_grad);
}

TEST(ApplyUpdate, NothingFrozenIsSummedDescent) {
    auto net = small_net(0.2);
    const auto p0 = net.parameters();
    const auto n = net.num_parameters();
    const auto m = net.quantizer_ids().size();
    DualGradients d;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        d.task.params.push_back(g(rng));
        d.smooth.params.push_back(g(rng));
    }
    for (std::size_t i = 0; i < m; ++i) {
        d.task.scales.push_back(g(rng));
        d.smooth.scales.push_back(g(rng));
    }
    SagmConfig cfg;
    apply_update(net, d, all(net, false), cfg);
    const auto p1 = net.parameters();
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_EQ(p1[i], p0[i] - cfg.lr_weights * (d.task.params[i] + d.smooth.params[i]));
    const auto s1 = net.scales();
    for (std::size_t i = 0; i < m; ++i)
        EXPECT_EQ(s1[i], 0.2 - cfg.lr_scales * (d.task.scales[i] + d.smooth.scales[i]));
}

TEST(ApplyUpdate, FrozenScaleUsesSmoothOnly) {
    auto net = small_net(1.0);
    const auto ids = net.quantizer_ids();
    ASSERT_GE(ids.size(), 2u);
    DualGradients d;
    d.task.params.assign(net.num_parameters(), 0.0);
    d.smooth.params.assign(net.num_parameters(), 0.0);
    d.task.scales.assign(ids.size(), 1.0);
    d.smooth.scales.assign(ids.size(), -1.0);
    auto freeze = all(net, false);
    freeze[ids[0]] = true;
    SagmConfig cfg;
    cfg.lr_scales = 1e-5;
    apply_update(net, d, freeze, cfg);
    EXPECT_EQ(net.quantizer(ids[0]).scale, 1.0 + 1e-5);
    EXPECT_EQ(net.quantizer(ids[1]).scale, 1.0);
}

TEST(ApplyUpdate, ScalesStayPositive) {
    auto net = small_net(1e-3);
    const auto ids = net.quantizer_ids();
    DualGradients d;
    d.task.params.assign(net.num_parameters(), 0.0);
    d.smooth.params.assign(net.num_parameters(), 0.0);
    d.task.scales.assign(ids.size(), 1e6);
    d.smooth.scales.assign(ids.size(), 1e6);
    apply_update(net, d, all(net, false), SagmConfig{});
    for (double s : net.scales()) EXPECT_GE(s, kMinScale);
}

TEST(ApplyUpdate, RejectsUnknownOrMissingIds) {
    auto net = small_net(0.5);
    DualGradients d;
    d.task.params.assign(net.num_parameters(), 0.0);
    d.smooth.params.assign(net.num_parameters(), 0.0);
    d.task.scales.assign(net.quantizer_ids().size(), 0.0);
    d.smooth.scales = d.task.scales;
    auto extra = all(net, false);
    extra["layer9.w.s"] = false;
    EXPECT_THROW(apply_update(net, d, extra, SagmConfig{}), ContractError);
    auto missing = all(net, false);
    missing.erase(missing.begin());
    EXPECT_THROW(apply_update(net, d, missing, SagmConfig{}), ContractError);
}

TEST(Sagm, DegenerateRunEqualsErmWithDoubledRate) {
    std::mt19937_64 rng(17);
    auto inst = testing_support::random_instance(rng);
    auto a = inst.net;
    auto b = inst.net;
    SagmConfig sagm;
    sagm.rho = 0.0;
    sagm.alpha = 0.0;
    sagm.lr_weights = 0.01;
    sagm.lr_scales = 1e-4;
    SagmConfig erm = sagm;
    erm.lr_weights = 0.02;
    erm.lr_scales = 2e-4;
    for (int step = 0; step < 25; ++step) {
        apply_update(a, sagm_dual_backward(a, inst.batch, sagm), all(a, false), sagm);
        apply_update(b, erm_gradients(b, inst.batch), all(b, false), erm);
    }
    EXPECT_EQ(a.parameters(), b.parameters());
    EXPECT_EQ(a.scales(), b.scales());
}
