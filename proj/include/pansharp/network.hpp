#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pansharp/autodiff.hpp"
#include "pansharp/guided_filter.hpp"
#include "pansharp/nn.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Network assembly: a PAN/LRMS feature-extraction cascade, per-level fast
// guided filter fusion with the PAN features as guide, an optional spatial
// attention gate per level, and a two-conv reconstruction head with a
// bicubic skip connection from the upsampled LRMS input.

struct GeneratorConfig {
    int bands = 4;
    int k_layers = 4;  // feature extraction levels per branch
    int width = 32;    // feature channels
    int sus = 2;       // spatial up-scaling ratio
    FilterParams filter;
    bool use_sam = true;
    bool use_gan = true;
    enum class Fusion { fgf, concat_conv } fusion = Fusion::fgf;

    void validate() const {
        if (bands < 1) throw ShapeError("GeneratorConfig: bands must be >= 1");
        if (k_layers < 1) throw ShapeError("GeneratorConfig: k_layers must be >= 1");
        if (width < 1) throw ShapeError("GeneratorConfig: width must be >= 1");
        if (sus < 1) throw ShapeError("GeneratorConfig: sus must be >= 1");
        filter.validate();
    }
};

constexpr double kLeakySlope = 0.2;

// Differentiable fast guided filter assembled from autodiff primitives so
// gradients reach all three inputs.
template <typename T>
ad::Var<T> fgf_node(ad::Graph<T>& g, ad::Var<T> guide_lo, ad::Var<T> input_lo,
                    ad::Var<T> guide_hi, const FilterParams& params) {
    params.validate();
    if (guide_lo.h() != input_lo.h() || guide_lo.w() != input_lo.w() ||
        guide_lo.n() != input_lo.n())
        throw ShapeError("fgf_node: low-res guide/input shapes differ");
    if (guide_hi.h() != guide_lo.h() * params.s || guide_hi.w() != guide_lo.w() * params.s)
        throw ShapeError("fgf_node: guide_hi dims inconsistent with s=" + std::to_string(params.s));
    if (guide_hi.c() != guide_lo.c())
        throw ShapeError("fgf_node: guide_lo/guide_hi channel mismatch");
    if (guide_lo.c() == 1 && input_lo.c() > 1) {
        guide_lo = g.expand_channels(guide_lo, input_lo.c());
        guide_hi = g.expand_channels(guide_hi, input_lo.c());
    } else if (guide_lo.c() != input_lo.c()) {
        throw ShapeError("fgf_node: guide must have 1 channel or match input channels");
    }
    const int r = params.r;
    const T eps = static_cast<T>(params.eps);
    auto mean_i = g.box(guide_lo, r);
    auto mean_p = g.box(input_lo, r);
    auto corr = g.box(g.mul(guide_lo, input_lo), r);
    auto var = g.sub(g.box(g.mul(guide_lo, guide_lo), r), g.mul(mean_i, mean_i));
    auto cov = g.sub(corr, g.mul(mean_i, mean_p));
    auto a = g.div_guarded(cov, var, eps);
    auto b = g.sub(mean_p, g.mul(a, mean_i));
    auto a_up = g.bilinear_resize(g.box(a, r), guide_hi.h(), guide_hi.w());
    auto b_up = g.bilinear_resize(g.box(b, r), guide_hi.h(), guide_hi.w());
    return g.add(g.mul(a_up, guide_hi), b_up);
}

// CBAM-style spatial attention: channel avg/max pooling, a 7x7 conv, and a
// sigmoid gate applied per pixel.
template <typename T>
ad::Var<T> sam_forward(ad::Graph<T>& g, ad::Var<T> f, ad::Var<T> w7, ad::Var<T> b7,
                       ad::Var<T>* out_map = nullptr) {
    auto pooled = g.concat_channels({g.channel_avg(f), g.channel_max(f)});
    auto m = g.sigmoid(g.conv2d(pooled, w7, b7, 1, 3));
    if (out_map) *out_map = m;
    return g.scale_channels(f, m);
}

template <typename T>
struct GeneratorNet {
    GeneratorConfig cfg;
    ad::ParamStore<T> params;
};

template <typename T>
GeneratorNet<T> make_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    GeneratorNet<T> net{cfg, ad::ParamStore<T>(seed)};
    auto& ps = net.params;
    const int w = cfg.width;
    ps.create_conv_weight("gen.pan1.w", w, 1, 3, 3);
    ps.create_bias("gen.pan1.b", w);
    ps.create_conv_weight("gen.lr1.w", w, cfg.bands, 3, 3);
    ps.create_bias("gen.lr1.b", w);
    for (int k = 2; k <= cfg.k_layers; ++k) {
        for (const char* branch : {"pan", "lr"}) {
            const std::string base = std::string("gen.") + branch + std::to_string(k);
            ps.create_conv_weight(base + ".conv1.w", w, w, 3, 3);
            ps.create_bias(base + ".conv1.b", w);
            ps.create_conv_weight(base + ".conv2.w", w, w, 3, 3);
            ps.create_bias(base + ".conv2.b", w);
        }
    }
    if (cfg.fusion == GeneratorConfig::Fusion::concat_conv) {
        for (int k = 1; k <= cfg.k_layers; ++k) {
            const std::string base = "gen.fuse" + std::to_string(k);
            ps.create_conv_weight(base + ".w", w, 2 * w, 3, 3);
            ps.create_bias(base + ".b", w);
        }
    }
    if (cfg.use_sam) {
        for (int k = 1; k <= cfg.k_layers; ++k) {
            const std::string base = "gen.sam" + std::to_string(k);
            ps.create_conv_weight(base + ".w", 1, 2, 7, 7);
            ps.create_bias(base + ".b", 1);
        }
    }
    ps.create_conv_weight("gen.recon1.w", w, w * cfg.k_layers, 3, 3);
    ps.create_bias("gen.recon1.b", w);
    ps.create_conv_weight("gen.recon2.w", cfg.bands, w, 3, 3);
    ps.create_bias("gen.recon2.b", cfg.bands);
    return net;
}

template <typename T>
struct GeneratorGraph {
    ad::Var<T> pan, lrms;                           // inputs
    std::vector<ad::Var<T>> phi_pan, phi_lr;        // per-level extractor outputs
    std::vector<ad::Var<T>> fused, attended;        // per-level fusion / attention outputs
    ad::Var<T> concat, hidden, residual, lrms_up, output;
};

template <typename T>
GeneratorGraph<T> build_generator(ad::Graph<T>& g, GeneratorNet<T>& net, int batch, int lr_h,
                                  int lr_w) {
    const GeneratorConfig& cfg = net.cfg;
    cfg.validate();
    auto& ps = net.params;
    const int hi_h = lr_h * cfg.sus, hi_w = lr_w * cfg.sus;
    auto pvar = [&](const std::string& name) {
        Param<T>* p = ps.find(name);
        if (!p) throw ValueError("missing parameter: " + name);
        return g.param(*p);
    };

    GeneratorGraph<T> gg;
    gg.pan = g.input(batch, 1, hi_h, hi_w);
    gg.lrms = g.input(batch, cfg.bands, lr_h, lr_w);
    gg.phi_pan.push_back(g.relu(g.conv2d(gg.pan, pvar("gen.pan1.w"), pvar("gen.pan1.b"), 1, 1)));
    gg.phi_lr.push_back(g.relu(g.conv2d(gg.lrms, pvar("gen.lr1.w"), pvar("gen.lr1.b"), 1, 1)));
    for (int k = 2; k <= cfg.k_layers; ++k) {
        for (const char* branch : {"pan", "lr"}) {
            const std::string base = std::string("gen.") + branch + std::to_string(k);
            auto& chain = branch[0] == 'p' ? gg.phi_pan : gg.phi_lr;
            auto t = g.conv2d(chain.back(), pvar(base + ".conv1.w"), pvar(base + ".conv1.b"), 1, 1);
            chain.push_back(
                g.relu(g.conv2d(t, pvar(base + ".conv2.w"), pvar(base + ".conv2.b"), 1, 1)));
        }
    }
    for (int k = 1; k <= cfg.k_layers; ++k) {
        ad::Var<T> fused;
        if (cfg.fusion == GeneratorConfig::Fusion::fgf) {
            FilterParams fp = cfg.filter;
            fp.s = cfg.sus;
            auto guide_lo = g.bicubic_resize(gg.phi_pan[k - 1], lr_h, lr_w);
            fused = fgf_node(g, guide_lo, gg.phi_lr[k - 1], gg.phi_pan[k - 1], fp);
        } else {
            const std::string base = "gen.fuse" + std::to_string(k);
            auto lr_up = g.bicubic_resize(gg.phi_lr[k - 1], hi_h, hi_w);
            fused = g.conv2d(g.concat_channels({gg.phi_pan[k - 1], lr_up}), pvar(base + ".w"),
                             pvar(base + ".b"), 1, 1);
        }
        gg.fused.push_back(fused);
        if (cfg.use_sam) {
            const std::string base = "gen.sam" + std::to_string(k);
            gg.attended.push_back(sam_forward(g, fused, pvar(base + ".w"), pvar(base + ".b")));
        } else {
            gg.attended.push_back(fused);
        }
    }
    gg.concat = g.concat_channels(gg.attended);
    gg.hidden = g.relu(g.conv2d(gg.concat, pvar("gen.recon1.w"), pvar("gen.recon1.b"), 1, 1));
    gg.residual = g.conv2d(gg.hidden, pvar("gen.recon2.w"), pvar("gen.recon2.b"), 1, 1);
    gg.lrms_up = g.bicubic_resize(gg.lrms, hi_h, hi_w);
    gg.output = g.add(gg.residual, gg.lrms_up);
    return gg;
}

template <typename T>
struct DiscriminatorNet {
    int bands = 0;
    ad::ParamStore<T> params;
    std::vector<ad::BnState<T>> bn;  // one per conv block
};

// Five 3x3 conv blocks (channels 32/64/128/256/1); the first three use
// stride 2 so a 64x64 input reaches the 8x8 score map, BN + LReLU after
// blocks 1-4 and BN + sigmoid after block 5.
template <typename T>
DiscriminatorNet<T> make_discriminator(int bands, std::uint64_t seed) {
    if (bands < 1) throw ShapeError("make_discriminator: bands must be >= 1");
    DiscriminatorNet<T> net{bands, ad::ParamStore<T>(seed), {}};
    const int chans[5] = {32, 64, 128, 256, 1};
    int in_c = 2 * bands + 1;
    for (int i = 0; i < 5; ++i) {
        const std::string base = "disc.conv" + std::to_string(i + 1);
        net.params.create_conv_weight(base + ".w", chans[i], in_c, 3, 3);
        net.params.create_bias(base + ".b", chans[i]);
        net.params.create_bn_gamma("disc.bn" + std::to_string(i + 1) + ".gamma", chans[i]);
        net.params.create_bn_beta("disc.bn" + std::to_string(i + 1) + ".beta", chans[i]);
        net.bn.emplace_back(chans[i]);
        in_c = chans[i];
    }
    return net;
}

template <typename T>
struct DiscriminatorGraph {
    ad::Var<T> inputs;                    // concatenated (2C+1)-channel input
    std::vector<ad::Var<T>> activations;  // post-block outputs
    ad::Var<T> score;                     // (N, 1, H/8, W/8), values in (0,1)
};

template <typename T>
DiscriminatorGraph<T> build_discriminator(ad::Graph<T>& g, DiscriminatorNet<T>& net,
                                          ad::Var<T> candidate, ad::Var<T> lrms_up,
                                          ad::Var<T> pan, bool train_mode) {
    if (candidate.c() != net.bands)
        throw ShapeError("discriminator: candidate has wrong band count");
    if (lrms_up.h() != candidate.h() || lrms_up.w() != candidate.w() ||
        pan.h() != candidate.h() || pan.w() != candidate.w() || pan.c() != 1 ||
        lrms_up.c() != net.bands)
        throw ShapeError("discriminator: inputs must share HxW with candidate");
    if (candidate.h() % 8 != 0 || candidate.w() % 8 != 0)
        throw ShapeError("discriminator: H and W must be divisible by 8");
    auto pvar = [&](const std::string& name) { return g.param(*net.params.find(name)); };

    DiscriminatorGraph<T> dg;
    dg.inputs = g.concat_channels({candidate, lrms_up, pan});
    const int strides[5] = {2, 2, 2, 1, 1};
    ad::Var<T> x = dg.inputs;
    for (int i = 0; i < 5; ++i) {
        const std::string idx = std::to_string(i + 1);
        auto c = g.conv2d(x, pvar("disc.conv" + idx + ".w"), pvar("disc.conv" + idx + ".b"),
                          strides[i], 1);
        auto n = g.batch_norm(c, pvar("disc.bn" + idx + ".gamma"), pvar("disc.bn" + idx + ".beta"),
                              &net.bn[static_cast<std::size_t>(i)], train_mode);
        x = (i < 4) ? g.leaky_relu(n, static_cast<T>(kLeakySlope)) : g.sigmoid(n);
        dg.activations.push_back(x);
    }
    dg.score = x;
    return dg;
}

template <typename T>
struct GeneratorLoss {
    ad::Var<T> total, l1, adv;  // adv is null without a discriminator term
};

// L_G = mean |reference - candidate| + alpha * mean (D(candidate) - a)^2,
// means over pixels, score map and batch.
template <typename T>
GeneratorLoss<T> generator_loss(ad::Graph<T>& g, ad::Var<T> candidate, ad::Var<T> reference,
                                ad::Var<T> d_scores, T alpha, ad::Var<T> label_a) {
    GeneratorLoss<T> loss;
    loss.l1 = g.mean_all(g.abs(g.sub(reference, candidate)));
    if (d_scores) {
        loss.adv = g.mean_all(g.square(g.sub_bscalar(d_scores, label_a)));
        loss.total = g.add(loss.l1, g.scale_add(loss.adv, alpha, T(0)));
    } else {
        loss.total = loss.l1;
    }
    return loss;
}

// L_D = mean (D(fake) - b)^2 + mean (D(real) - c)^2.
template <typename T>
ad::Var<T> discriminator_loss(ad::Graph<T>& g, ad::Var<T> d_fake, ad::Var<T> d_real,
                              ad::Var<T> label_b, ad::Var<T> label_c) {
    auto lf = g.mean_all(g.square(g.sub_bscalar(d_fake, label_b)));
    auto lr = g.mean_all(g.square(g.sub_bscalar(d_real, label_c)));
    return g.add(lf, lr);
}

}  // namespace pansharp
