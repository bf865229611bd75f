#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pansharp/autodiff.hpp"
#include "pansharp/nn.hpp"

using namespace pansharp;
using ad::Graph;
using ad::Param;
using ad::Var;

namespace {

template <typename T>
void fill_random(Var<T> v, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    for (auto& x : v.value().v) x = static_cast<T>(lo + (hi - lo) * oracle::u01(rng));
}

Param<double> make_param(const std::string& name, std::vector<int> dims, std::mt19937_64& rng,
                         double lo = -0.5, double hi = 0.5) {
    Param<double> p;
    p.name = name;
    p.dims = std::move(dims);
    std::size_t total = 1;
    for (int d : p.dims) total *= static_cast<std::size_t>(d);
    p.value.resize(total);
    p.m1.assign(total, 0.0);
    p.m2.assign(total, 0.0);
    for (auto& v : p.value) v = lo + (hi - lo) * oracle::u01(rng);
    return p;
}

}  // namespace

TEST(Conv2d, CenteredDeltaKernelIsIdentity) {
    Graph<double> g;
    std::mt19937_64 rng(1);
    auto x = g.input(1, 2, 5, 5);
    fill_random(x, rng);
    Param<double> w = make_param("w", {2, 2, 3, 3}, rng, 0, 0);
    // Identity: out channel c reads in channel c at the kernel center.
    w.value[(0 * 2 + 0) * 9 + 4] = 1.0;
    w.value[(1 * 2 + 1) * 9 + 4] = 1.0;
    Param<double> b = make_param("b", {2}, rng, 0, 0);
    auto y = g.conv2d(x, g.param(w), g.param(b), 1, 1);
    g.forward();
    for (std::size_t i = 0; i < x.value().size(); ++i)
        EXPECT_DOUBLE_EQ(y.value().v[i], x.value().v[i]);
}

TEST(Conv2d, AllOnesKernelSumsInteriorWindow) {
    Graph<double> g;
    std::mt19937_64 rng(2);
    auto x = g.input(1, 1, 6, 6);
    std::fill(x.value().v.begin(), x.value().v.end(), 0.5);
    Param<double> w = make_param("w", {1, 1, 3, 3}, rng, 1, 1);
    Param<double> b = make_param("b", {1}, rng, 0, 0);
    auto y = g.conv2d(x, g.param(w), g.param(b), 1, 1);
    g.forward();
    for (int yy = 1; yy < 5; ++yy)
        for (int xx = 1; xx < 5; ++xx)
            EXPECT_NEAR(y.value().v[static_cast<std::size_t>(yy) * 6 + xx], 4.5, 1e-12);
    EXPECT_NEAR(y.value().v[0], 0.5 * 4, 1e-12);  // corner sees a 2x2 window
}

TEST(Conv2d, MatchesNaiveSixLoopOracle) {
    std::mt19937_64 rng(7);
    for (const int stride : {1, 2}) {
        for (const int k : {3, 7}) {
            const int pad = k / 2;
            Graph<double> g;
            auto x = g.input(2, 2, 9, 8);
            fill_random(x, rng, -1, 1);
            Param<double> w = make_param("w", {4, 2, k, k}, rng, -0.3, 0.3);
            Param<double> b = make_param("b", {4}, rng, -0.1, 0.1);
            auto y = g.conv2d(x, g.param(w), g.param(b), stride, pad);
            g.forward();
            int oh = 0, ow = 0;
            const auto want = oracle::naive_conv(x.value().v, 2, 2, 9, 8, w.value, 4, k, k,
                                                 b.value, stride, pad, oh, ow);
            ASSERT_EQ(y.value().h, oh);
            ASSERT_EQ(y.value().w, ow);
            for (std::size_t i = 0; i < want.size(); ++i)
                ASSERT_NEAR(y.value().v[i], want[i], 1e-9)
                    << "stride " << stride << " k " << k << " i " << i;
        }
    }
}

TEST(Conv2d, GradMatchesFiniteDifference) {
    std::mt19937_64 rng(11);
    for (const int stride : {1, 2}) {
        Graph<double> g;
        auto x = g.input(2, 2, 6, 6);
        fill_random(x, rng, -1, 1);
        Param<double> w = make_param("w", {3, 2, 3, 3}, rng, -0.4, 0.4);
        Param<double> b = make_param("b", {3}, rng, -0.1, 0.1);
        auto y = g.conv2d(x, g.param(w), g.param(b), stride, 1);
        auto loss = g.mean_all(g.square(y));
        const double err = ad::grad_check(g, loss, {x, g.param(w), g.param(b)}, /*seed=*/1);
        EXPECT_LT(err, 1e-6) << "stride " << stride;
    }
}

TEST(Activations, PointValues) {
    Graph<double> g;
    auto x = g.input(1, 1, 1, 4);
    x.value().v = {-1.0, 2.0, 0.0, -0.5};
    auto r = g.relu(x);
    auto l = g.leaky_relu(x, 0.2);
    auto s = g.sigmoid(x);
    g.forward();
    EXPECT_DOUBLE_EQ(r.value().v[0], 0.0);
    EXPECT_DOUBLE_EQ(r.value().v[1], 2.0);
    EXPECT_DOUBLE_EQ(l.value().v[0], -0.2);
    EXPECT_DOUBLE_EQ(l.value().v[3], -0.1);
    EXPECT_NEAR(s.value().v[2], 0.5, 1e-15);
}

TEST(Activations, SigmoidGradAtZeroIsQuarter) {
    Graph<double> g;
    auto x = g.input(1, 1, 1, 1);
    x.value().v[0] = 0.0;
    auto loss = g.mean_all(g.sigmoid(x));
    g.forward();
    g.backward(loss);
    EXPECT_NEAR(x.grad().v[0], 0.25, 1e-12);
    EXPECT_LT(ad::grad_check(g, loss, {x}), 1e-6);
}

TEST(Activations, GradsMatchFiniteDifferenceAwayFromKinks) {
    std::mt19937_64 rng(13);
    Graph<double> g;
    auto x = g.input(1, 2, 4, 4);
    // Magnitudes above 0.1 with random signs keep FD away from the kink.
    for (auto& v : x.value().v)
        v = (oracle::u01(rng) < 0.5 ? -1 : 1) * (0.1 + oracle::u01(rng));
    auto y = g.add(g.relu(x), g.add(g.leaky_relu(x, 0.2), g.sigmoid(x)));
    auto loss = g.mean_all(g.square(y));
    EXPECT_LT(ad::grad_check(g, loss, {x}), 1e-6);
}

TEST(BatchNorm, TrainModeNormalizes) {
    std::mt19937_64 rng(17);
    Graph<double> g;
    auto x = g.input(4, 3, 5, 5);
    fill_random(x, rng, 0.0, 10.0);
    Param<double> gamma = make_param("gamma", {3}, rng, 1, 1);
    Param<double> beta = make_param("beta", {3}, rng, 0, 0);
    ad::BnState<double> state(3);
    auto y = g.batch_norm(x, g.param(gamma), g.param(beta), &state, true);
    g.forward();
    const std::size_t plane = 25;
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < plane; ++i)
                mean += y.value().v[(n * 3 + c) * plane + i];
        mean /= 100;
        for (int n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = y.value().v[(n * 3 + c) * plane + i] - mean;
                var += d * d;
            }
        var /= 100;
        EXPECT_NEAR(mean, 0.0, 1e-4);
        EXPECT_NEAR(var, 1.0, 1e-3);
    }
    EXPECT_TRUE(state.seen);
}

TEST(BatchNorm, GradMatchesFiniteDifference) {
    std::mt19937_64 rng(23);
    Graph<double> g;
    auto x = g.input(2, 3, 4, 4);
    fill_random(x, rng, -1, 1);
    Param<double> gamma = make_param("gamma", {3}, rng, 0.5, 1.5);
    Param<double> beta = make_param("beta", {3}, rng, -0.2, 0.2);
    ad::BnState<double> state(3);
    auto y = g.batch_norm(x, g.param(gamma), g.param(beta), &state, true);
    auto loss = g.mean_all(g.mul(y, y));
    const double err = ad::grad_check(g, loss, {x, g.param(gamma), g.param(beta)});
    EXPECT_LT(err, 1e-4);
}

TEST(BatchNorm, EvalBeforeTrainUsesInitStats) {
    std::mt19937_64 rng(27);
    Graph<double> g;
    auto x = g.input(1, 1, 2, 2);
    x.value().v = {1.0, 2.0, 3.0, 4.0};
    Param<double> gamma = make_param("g", {1}, rng, 1, 1);
    Param<double> beta = make_param("b", {1}, rng, 0, 0);
    ad::BnState<double> state(1);
    auto y = g.batch_norm(x, g.param(gamma), g.param(beta), &state, false);
    g.forward();
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(y.value().v[i], x.value().v[i] / std::sqrt(1 + 1e-5), 1e-9);
}

TEST(Structural, AddZeroIsIdentity) {
    std::mt19937_64 rng(29);
    Graph<double> g;
    auto x = g.input(1, 2, 3, 3);
    fill_random(x, rng);
    auto zero = g.input(1, 2, 3, 3);
    auto y = g.add(x, zero);
    g.forward();
    for (std::size_t i = 0; i < x.value().size(); ++i)
        EXPECT_DOUBLE_EQ(y.value().v[i], x.value().v[i]);
}

TEST(Structural, ConcatKeepsChannelOrder) {
    Graph<double> g;
    std::vector<Var<double>> parts;
    for (int p = 0; p < 4; ++p) {
        auto v = g.input(2, 32, 2, 2);
        for (std::size_t i = 0; i < v.value().size(); ++i)
            v.value().v[i] = p * 1000.0 + static_cast<double>(i);
        parts.push_back(v);
    }
    auto cat = g.concat_channels(parts);
    g.forward();
    ASSERT_EQ(cat.c(), 128);
    const std::size_t plane = 4;
    // Sample 0: part p channel c pixel i maps to value p*1000 + c*4 + i.
    EXPECT_DOUBLE_EQ(cat.value().v[(0 * 128 + 0) * plane + 0], 0.0);
    EXPECT_DOUBLE_EQ(cat.value().v[(0 * 128 + 32) * plane + 1], 1000.0 + 1);
    EXPECT_DOUBLE_EQ(cat.value().v[(0 * 128 + 96) * plane + 2], 3000.0 + 2);
    // Sample 1 of part p starts at its second half.
    EXPECT_DOUBLE_EQ(cat.value().v[(1 * 128 + 64) * plane + 0], 2000.0 + 32 * 4);
}

TEST(Structural, GradsMatchFiniteDifference) {
    std::mt19937_64 rng(31);
    Graph<double> g;
    auto a = g.input(1, 2, 4, 4);
    auto b = g.input(1, 2, 4, 4);
    fill_random(a, rng, 0.2, 1.0);
    fill_random(b, rng, 0.2, 1.0);
    auto cat = g.concat_channels({g.mul(a, b), g.sub(a, b)});
    auto loss = g.mean_all(g.square(cat));
    EXPECT_LT(ad::grad_check(g, loss, {a, b}), 1e-6);
}

TEST(Structural, DivGuardedValuesAndGrads) {
    Graph<double> g;
    auto x = g.input(1, 1, 1, 2);
    auto y = g.input(1, 1, 1, 2);
    x.value().v = {1.0, -2.0};
    y.value().v = {3.0, 0.5};
    auto q = g.div_guarded(x, y, 0.5);
    g.forward();
    EXPECT_NEAR(q.value().v[0], 1.0 / 3.5, 1e-12);
    EXPECT_NEAR(q.value().v[1], -2.0, 1e-12);
    auto loss = g.mean_all(g.square(q));
    EXPECT_LT(ad::grad_check(g, loss, {x, y}), 1e-6);
}

TEST(Structural, BoxNodeForwardEqualsBoxFilter) {
    std::mt19937_64 rng(37);
    Graph<double> g;
    auto x = g.input(1, 2, 6, 7);
    fill_random(x, rng);
    auto y = g.box(x, 2);
    g.forward();
    ImageTensor img(2, 6, 7);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(x.value().v[i]);
    const ImageTensor want = box_filter(img, 2);
    for (std::size_t i = 0; i < want.data.size(); ++i)
        EXPECT_NEAR(y.value().v[i], want.data[i], 1e-6);
}

TEST(Structural, BoxNodeGradMatchesFiniteDifference) {
    std::mt19937_64 rng(41);
    Graph<double> g;
    auto x = g.input(1, 1, 6, 6);
    fill_random(x, rng);
    auto loss = g.mean_all(g.square(g.box(x, 1)));
    EXPECT_LT(ad::grad_check(g, loss, {x}), 1e-4);
}

TEST(Structural, ResizeNodesMatchImageResizeAndGrads) {
    std::mt19937_64 rng(43);
    Graph<double> g;
    auto x = g.input(1, 2, 6, 6);
    fill_random(x, rng);
    auto up = g.bilinear_resize(x, 12, 12);
    auto down = g.bicubic_resize(x, 3, 3);
    g.forward();
    ImageTensor img(2, 6, 6);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(x.value().v[i]);
    const ImageTensor want_up = bilinear_resize(img, 12, 12);
    const ImageTensor want_down = bicubic_resize(img, 3, 3);
    for (std::size_t i = 0; i < want_up.data.size(); ++i)
        EXPECT_NEAR(up.value().v[i], want_up.data[i], 1e-6);
    for (std::size_t i = 0; i < want_down.data.size(); ++i)
        EXPECT_NEAR(down.value().v[i], want_down.data[i], 1e-6);
    auto loss =
        g.mean_all(g.square(g.add(g.bicubic_resize(up, 6, 6), g.bilinear_resize(down, 6, 6))));
    EXPECT_LT(ad::grad_check(g, loss, {x}), 1e-6);
}

TEST(Structural, ChannelPoolingAndMaxRouting) {
    Graph<double> g;
    auto x = g.input(1, 3, 1, 2);
    x.value().v = {1.0, 4.0, 2.0, 4.0, 3.0, 1.0};  // channels: [1,4],[2,4],[3,1]
    auto avg = g.channel_avg(x);
    auto mx = g.channel_max(x);
    g.forward();
    EXPECT_NEAR(avg.value().v[0], 2.0, 1e-12);
    EXPECT_NEAR(avg.value().v[1], 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(mx.value().v[0], 3.0);
    EXPECT_DOUBLE_EQ(mx.value().v[1], 4.0);
    // Ties route to the first max channel.
    auto loss = g.mean_all(mx);
    g.forward();
    g.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad().v[1], 0.5);  // channel 0 pixel 1: first of the tied 4.0s
    EXPECT_DOUBLE_EQ(x.grad().v[3], 0.0);  // channel 1 pixel 1 ties but loses
    EXPECT_DOUBLE_EQ(x.grad().v[4], 0.5);  // channel 2 pixel 0 is the unique max
}

TEST(Structural, PoolingGradsMatchFiniteDifference) {
    std::mt19937_64 rng(47);
    Graph<double> g;
    auto x = g.input(2, 3, 3, 3);
    fill_random(x, rng);  // distinct values, no ties at FD scale
    auto y = g.concat_channels({g.channel_avg(x), g.channel_max(x)});
    auto loss = g.mean_all(g.square(y));
    EXPECT_LT(ad::grad_check(g, loss, {x}), 1e-5);
}

TEST(Structural, ExpandAndScaleChannelsGrads) {
    std::mt19937_64 rng(53);
    Graph<double> g;
    auto x = g.input(1, 4, 3, 3);
    auto m = g.input(1, 1, 3, 3);
    fill_random(x, rng, 0.2, 1.0);
    fill_random(m, rng, 0.2, 1.0);
    auto scaled = g.scale_channels(x, m);
    auto expanded = g.expand_channels(m, 4);
    auto loss = g.mean_all(g.square(g.add(scaled, g.mul(expanded, x))));
    g.forward();
    // scale_channels must equal mul with the expanded map.
    for (std::size_t i = 0; i < scaled.value().size(); ++i)
        EXPECT_NEAR(scaled.value().v[i], expanded.value().v[i] * x.value().v[i], 1e-12);
    EXPECT_LT(ad::grad_check(g, loss, {x, m}), 1e-6);
}

TEST(Structural, SubBscalarGrads) {
    std::mt19937_64 rng(59);
    Graph<double> g;
    auto x = g.input(1, 1, 2, 2);
    auto s = g.input(1, 1, 1, 1);
    fill_random(x, rng);
    s.value().v[0] = 0.37;
    auto loss = g.mean_all(g.square(g.sub_bscalar(x, s)));
    EXPECT_LT(ad::grad_check(g, loss, {x, s}), 1e-6);
}

TEST(Backward, GradientOfSumEqualsSumOfGradients) {
    std::mt19937_64 rng(61);
    Graph<double> g;
    auto x = g.input(1, 2, 4, 4);
    fill_random(x, rng, 0.2, 1.0);
    auto l1 = g.mean_all(g.square(x));
    auto l2 = g.mean_all(g.abs(x));
    auto sum = g.add(l1, l2);
    g.forward();
    g.backward(sum);
    std::vector<double> g_sum = x.grad().v;
    g.backward(l1);
    std::vector<double> g1 = x.grad().v;
    g.backward(l2);
    std::vector<double> g2 = x.grad().v;
    for (std::size_t i = 0; i < g_sum.size(); ++i)
        EXPECT_NEAR(g_sum[i], g1[i] + g2[i], 1e-12);
}

TEST(Backward, DeterministicBitwiseForward) {
    auto run = [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Graph<float> g;
        auto x = g.input(2, 3, 8, 8);
        fill_random(x, rng, -1, 1);
        ad::ParamStore<float> ps(seed);
        auto& w = ps.create_conv_weight("w", 4, 3, 3, 3);
        auto& b = ps.create_bias("b", 4);
        auto y = g.relu(g.conv2d(x, g.param(w), g.param(b), 1, 1));
        auto loss = g.mean_all(g.square(y));
        g.forward();
        return loss.value().v[0];
    };
    EXPECT_EQ(run(5), run(5));
    EXPECT_NE(run(5), run(6));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Param<double> p;
    p.name = "p";
    p.dims = {4};
    p.value = {1.0, -2.0, 0.5, 3.0};
    p.m1.assign(4, 0.0);
    p.m2.assign(4, 0.0);
    const std::vector<double> grad(4, 0.0);
    ad::AdamConfig cfg;
    ad::adam_step(p, grad.data(), cfg, 1);
    EXPECT_DOUBLE_EQ(p.value[0], 1.0);
    EXPECT_DOUBLE_EQ(p.value[3], 3.0);
}

TEST(Adam, FirstStepIsMinusLrTimesSign) {
    Param<double> p;
    p.name = "p";
    p.dims = {1};
    p.value = {0.0};
    p.m1 = {0.0};
    p.m2 = {0.0};
    const std::vector<double> grad = {1.0};
    ad::AdamConfig cfg;
    cfg.lr = 5e-4;
    ad::adam_step(p, grad.data(), cfg, 1);
    EXPECT_NEAR(p.value[0], -5e-4, 1e-9);
}

TEST(Adam, DeterministicAcrossRuns) {
    auto run = [] {
        std::mt19937_64 rng(9);
        Param<double> p;
        p.name = "p";
        p.dims = {8};
        p.value.resize(8);
        for (auto& v : p.value) v = oracle::u01(rng);
        p.m1.assign(8, 0.0);
        p.m2.assign(8, 0.0);
        ad::AdamConfig cfg;
        std::vector<double> grad(8);
        for (int t = 1; t <= 10; ++t) {
            for (auto& gv : grad) gv = oracle::u01(rng) - 0.5;
            ad::adam_step(p, grad.data(), cfg, t);
        }
        return p.value;
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientAborts) {
    Param<double> p;
    p.name = "conv7.w";
    p.dims = {1};
    p.value = {0.0};
    p.m1 = {0.0};
    p.m2 = {0.0};
    const std::vector<double> grad = {std::nan("")};
    ad::AdamConfig cfg;
    try {
        ad::adam_step(p, grad.data(), cfg, 17);
        FAIL() << "expected abort";
    } catch (const ValueError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("conv7.w"), std::string::npos);
        EXPECT_NE(msg.find("17"), std::string::npos);
    }
}

TEST(GradCheck, LinearChainIsExact) {
    std::mt19937_64 rng(67);
    Graph<double> g;
    auto x = g.input(1, 2, 5, 5);
    fill_random(x, rng);
    Param<double> w = make_param("w", {3, 2, 3, 3}, rng, -0.4, 0.4);
    Param<double> b = make_param("b", {3}, rng, -0.1, 0.1);
    auto loss = g.mean_all(g.conv2d(x, g.param(w), g.param(b), 1, 1));
    EXPECT_LT(ad::grad_check(g, loss, {x, g.param(w), g.param(b)}), 1e-6);
}

TEST(GradCheck, ReluNetworkAwayFromKinks) {
    std::mt19937_64 rng(71);
    Graph<double> g;
    auto x = g.input(1, 2, 6, 6);
    fill_random(x, rng, 0.1, 1.0);
    Param<double> w1 = make_param("w1", {4, 2, 3, 3}, rng, -0.4, 0.4);
    Param<double> b1 = make_param("b1", {4}, rng, 0.3, 0.5);  // biased away from zero
    Param<double> w2 = make_param("w2", {2, 4, 3, 3}, rng, -0.4, 0.4);
    Param<double> b2 = make_param("b2", {2}, rng, 0.3, 0.5);
    auto h = g.relu(g.conv2d(x, g.param(w1), g.param(b1), 1, 1));
    auto y = g.relu(g.conv2d(h, g.param(w2), g.param(b2), 1, 1));
    auto loss = g.mean_all(g.square(y));
    const double err = ad::grad_check(
        g, loss, {x, g.param(w1), g.param(b1), g.param(w2), g.param(b2)}, /*seed=*/2);
    EXPECT_LT(err, 1e-4);
}

TEST(ParamStore, RejectsDuplicateNames) {
    ad::ParamStore<float> ps(0);
    ps.create_bias("dup", 4);
    EXPECT_THROW(ps.create_bias("dup", 4), ValueError);
}

TEST(ParamStore, SingleConvCount) {
    ad::ParamStore<float> ps(0);
    ps.create_conv_weight("w", 32, 1, 3, 3);
    ps.create_bias("b", 32);
    EXPECT_EQ(ad::param_count(ps), 320);
}

TEST(ParamStore, InitIsNameKeyedAndBounded) {
    ad::ParamStore<float> a(42), b(42), c(43);
    auto& wa = a.create_conv_weight("w", 8, 4, 3, 3);
    auto& wb = b.create_conv_weight("w", 8, 4, 3, 3);
    auto& wc = c.create_conv_weight("w", 8, 4, 3, 3);
    EXPECT_EQ(wa.value, wb.value);
    EXPECT_NE(wa.value, wc.value);
    const float bound = std::sqrt(6.0f / (4 * 9));
    for (float v : wa.value) EXPECT_LE(std::abs(v), bound);
    // Adam state starts at zero.
    for (float v : wa.m1) EXPECT_EQ(v, 0.0f);
}
