#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pansharp/checkpoint.hpp"
#include "pansharp/dataset.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/network.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Adversarial training: per batch, one discriminator Adam step on the
// least-squares loss with the generator output detached, then one generator
// Adam step on L1 + alpha * adversarial. Soft labels are redrawn each batch
// (one scalar per batch, shared across the score map). The learning rate
// drops by lr_decay at the end of epoch lr_decay_epoch. Everything is a
// deterministic function of the seed.

struct TrainConfig {
    int epochs = 200;
    int batch = 64;
    double lr = 5e-4;
    double lr_decay = 0.1;
    int lr_decay_epoch = 100;
    double alpha = 0.01;
    double label_a_lo = 0.9, label_a_hi = 1.1;  // generator target (real label)
    double label_b_lo = 0.0, label_b_hi = 0.2;  // fake label
    double label_c_lo = 0.9, label_c_hi = 1.1;  // real label
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ShapeError("TrainConfig: epochs must be >= 1");
        if (batch < 1) throw ShapeError("TrainConfig: batch must be >= 1");
        if (alpha < 0) throw ShapeError("TrainConfig: alpha must be >= 0");
        if (label_b_lo < 0 || label_b_hi < label_b_lo)
            throw ShapeError("TrainConfig: bad fake-label range");
        if (label_b_hi >= label_a_lo)
            throw ShapeError("TrainConfig: fake-label range must sit below the real-label range");
    }
};

struct TrainResult {
    std::vector<std::string> log_lines;
    double init_val_l1 = 0, final_val_l1 = 0;
    double init_val_psnr = 0, final_val_psnr = 0;
    double best_val_psnr = 0;
    int best_epoch = 0;
    Checkpoint best_checkpoint, final_checkpoint;
    std::vector<std::string> param_names;
};

namespace detail {

inline double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

template <typename T>
void fill_batch(ad::Var<T> dst, const std::vector<SampleTriple>& data,
                const std::vector<std::size_t>& order, std::size_t begin, int batch,
                const ImageTensor SampleTriple::*field) {
    const std::size_t per = dst.value().size() / static_cast<std::size_t>(batch);
    for (int i = 0; i < batch; ++i) {
        const ImageTensor& img = data[order[begin + i]].*field;
        if (img.size() != per) throw ShapeError("train: sample shape mismatch in batch");
        std::copy(img.data.begin(), img.data.end(),
                  dst.value().data() + static_cast<std::size_t>(i) * per);
    }
}

}  // namespace detail

template <typename T>
ImageTensor tensor_to_image(const ad::Tensor<T>& t, int sample = 0) {
    ImageTensor img(t.c, t.h, t.w);
    const std::size_t per = static_cast<std::size_t>(t.c) * t.h * t.w;
    for (std::size_t i = 0; i < per; ++i)
        img.data[i] = static_cast<float>(t.v[static_cast<std::size_t>(sample) * per + i]);
    return img;
}

inline TrainResult train(const Dataset& data, const GeneratorConfig& gen_cfg,
                         const TrainConfig& cfg, const std::string& out_dir = "") {
    using T = float;
    gen_cfg.validate();
    cfg.validate();
    if (data.train.empty()) throw ValueError("train: empty training split");
    const ImageTensor& lr0 = data.train[0].lrms;
    const int lr_h = lr0.height, lr_w = lr0.width;
    if (lr0.channels != gen_cfg.bands)
        throw ShapeError("train: dataset has " + std::to_string(lr0.channels) +
                         " bands, config expects " + std::to_string(gen_cfg.bands));
    if (data.train[0].pan.height != lr_h * gen_cfg.sus)
        throw ShapeError("train: pan/lrms dims inconsistent with sus=" +
                         std::to_string(gen_cfg.sus));
    const int batch = std::min<int>(cfg.batch, static_cast<int>(data.train.size()));
    const std::size_t steps_per_epoch = data.train.size() / static_cast<std::size_t>(batch);
    const bool gan = gen_cfg.use_gan;

    GeneratorNet<T> gen = make_generator<T>(gen_cfg, cfg.seed);
    DiscriminatorNet<T> disc;
    if (gan) disc = make_discriminator<T>(gen_cfg.bands, cfg.seed);

    // Training graph: generator, then (under GAN) the discriminator applied
    // to the attached candidate, then the generator loss.
    ad::Graph<T> g_train(true);
    GeneratorGraph<T> gg = build_generator(g_train, gen, batch, lr_h, lr_w);
    ad::Var<T> ref_in = g_train.input(batch, gen_cfg.bands, lr_h * gen_cfg.sus,
                                      lr_w * gen_cfg.sus);
    const std::size_t gen_end = gg.output.node->index + 1;
    ad::Var<T> label_a, d_on_cand;
    if (gan) {
        label_a = g_train.input(1, 1, 1, 1);
        d_on_cand = build_discriminator(g_train, disc, gg.output, gg.lrms_up, gg.pan, true).score;
    }
    GeneratorLoss<T> gloss = generator_loss(g_train, gg.output, ref_in, d_on_cand,
                                            static_cast<T>(gan ? cfg.alpha : 0.0), label_a);

    // Discriminator step graph: detached candidate and the reference.
    ad::Graph<T> g_disc(true);
    ad::Var<T> d_cand, d_ref, d_lrmsup, d_pan, label_b, label_c, dloss;
    if (gan) {
        const int hh = lr_h * gen_cfg.sus, ww = lr_w * gen_cfg.sus;
        d_cand = g_disc.input(batch, gen_cfg.bands, hh, ww);
        d_ref = g_disc.input(batch, gen_cfg.bands, hh, ww);
        d_lrmsup = g_disc.input(batch, gen_cfg.bands, hh, ww);
        d_pan = g_disc.input(batch, 1, hh, ww);
        label_b = g_disc.input(1, 1, 1, 1);
        label_c = g_disc.input(1, 1, 1, 1);
        auto fake = build_discriminator(g_disc, disc, d_cand, d_lrmsup, d_pan, true).score;
        auto real = build_discriminator(g_disc, disc, d_ref, d_lrmsup, d_pan, true).score;
        dloss = discriminator_loss(g_disc, fake, real, label_b, label_c);
    }

    // Per-scene inference graph for validation metrics.
    ad::Graph<T> g_val(false);
    GeneratorGraph<T> gv = build_generator(g_val, gen, 1, lr_h, lr_w);
    auto validate = [&](double& out_l1, double& out_psnr) {
        double l1 = 0, ps = 0;
        for (const auto& s : data.val) {
            std::copy(s.pan.data.begin(), s.pan.data.end(), gv.pan.value().data());
            std::copy(s.lrms.data.begin(), s.lrms.data.end(), gv.lrms.value().data());
            g_val.forward();
            const ImageTensor pred = tensor_to_image(gv.output.value());
            double acc = 0;
            for (std::size_t i = 0; i < pred.data.size(); ++i)
                acc += std::abs(static_cast<double>(pred.data[i]) - s.ref.data[i]);
            l1 += acc / static_cast<double>(pred.data.size());
            ps += psnr(pred, s.ref);
        }
        const double n = std::max<std::size_t>(data.val.size(), 1);
        out_l1 = l1 / n;
        out_psnr = ps / n;
    };

    auto snapshot = [&]() {
        Checkpoint ck = checkpoint_of(gen.params);
        if (gan) {
            Checkpoint dk = checkpoint_of(disc.params);
            ck.insert(ck.end(), dk.begin(), dk.end());
            append_bn_states(ck, disc.bn, "disc.bn");
        }
        ck.push_back({"_meta.fgf", {2}, {static_cast<float>(gen_cfg.filter.r),
                                         static_cast<float>(gen_cfg.filter.eps)}});
        return ck;
    };

    std::set<const ad::Param<T>*> gen_set;
    for (const auto* p : gen.params.all()) gen_set.insert(p);

    TrainResult res;
    for (const auto* p : gen.params.all()) res.param_names.push_back(p->name);
    if (gan)
        for (const auto* p : disc.params.all()) res.param_names.push_back(p->name);

    std::mt19937_64 rng_data(ad::detail::splitmix64(cfg.seed ^ 0x64617461));
    std::mt19937_64 rng_labels(ad::detail::splitmix64(cfg.seed ^ 0x6c61626c));

    validate(res.init_val_l1, res.init_val_psnr);
    res.best_val_psnr = res.init_val_psnr;
    res.best_epoch = 0;
    res.best_checkpoint = snapshot();

    ad::AdamConfig adam;
    adam.lr = cfg.lr;
    std::int64_t t_gen = 0, t_disc = 0;
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng_data() % i]);
        double ep_l1 = 0, ep_adv = 0, ep_dloss = 0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t begin = step * static_cast<std::size_t>(batch);
            detail::fill_batch(gg.pan, data.train, order, begin, batch, &SampleTriple::pan);
            detail::fill_batch(gg.lrms, data.train, order, begin, batch, &SampleTriple::lrms);
            detail::fill_batch(ref_in, data.train, order, begin, batch, &SampleTriple::ref);
            if (gan) {
                const double la = detail::draw_uniform(rng_labels, cfg.label_a_lo, cfg.label_a_hi);
                const double lb = detail::draw_uniform(rng_labels, cfg.label_b_lo, cfg.label_b_hi);
                const double lc = detail::draw_uniform(rng_labels, cfg.label_c_lo, cfg.label_c_hi);
                g_train.forward_range(0, gen_end);
                // (1) discriminator step on the detached candidate
                std::copy(gg.output.value().v.begin(), gg.output.value().v.end(),
                          d_cand.value().data());
                std::copy(gg.lrms_up.value().v.begin(), gg.lrms_up.value().v.end(),
                          d_lrmsup.value().data());
                std::copy(gg.pan.value().v.begin(), gg.pan.value().v.end(), d_pan.value().data());
                std::copy(ref_in.value().v.begin(), ref_in.value().v.end(), d_ref.value().data());
                label_b.value().v[0] = static_cast<T>(lb);
                label_c.value().v[0] = static_cast<T>(lc);
                g_disc.forward();
                g_disc.backward(dloss);
                ++t_disc;
                for (const auto& bind : g_disc.bindings())
                    if (bind.node->grad_set)
                        ad::adam_step(*bind.param, bind.node->grad.data(), adam, t_disc);
                const double dl = dloss.value().v[0];
                // (2) generator step against the updated discriminator
                label_a.value().v[0] = static_cast<T>(la);
                g_train.forward_range(gen_end, g_train.node_count());
                g_train.backward(gloss.total);
                ++t_gen;
                for (const auto& bind : g_train.bindings())
                    if (gen_set.count(bind.param) && bind.node->grad_set)
                        ad::adam_step(*bind.param, bind.node->grad.data(), adam, t_gen);
                const double l1v = gloss.l1.value().v[0];
                const double advv = gloss.adv ? gloss.adv.value().v[0] : 0.0;
                if (!std::isfinite(l1v) || !std::isfinite(advv) || !std::isfinite(dl))
                    throw ValueError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(step));
                ep_l1 += l1v;
                ep_adv += advv;
                ep_dloss += dl;
            } else {
                g_train.forward();
                g_train.backward(gloss.total);
                ++t_gen;
                for (const auto& bind : g_train.bindings())
                    if (bind.node->grad_set)
                        ad::adam_step(*bind.param, bind.node->grad.data(), adam, t_gen);
                const double l1v = gloss.l1.value().v[0];
                if (!std::isfinite(l1v))
                    throw ValueError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(step));
                ep_l1 += l1v;
            }
        }
        const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
        double val_l1 = 0, val_psnr = 0;
        validate(val_l1, val_psnr);
        char line[256];
        std::snprintf(line, sizeof(line), "epoch %d l1 %.6g g_adv %.6g d_loss %.6g val_psnr %.6g lr %.6g",
                      epoch, ep_l1 * inv_steps, ep_adv * inv_steps, ep_dloss * inv_steps, val_psnr,
                      adam.lr);
        res.log_lines.emplace_back(line);
        log_info(line);
        if (val_psnr > res.best_val_psnr) {
            res.best_val_psnr = val_psnr;
            res.best_epoch = epoch;
            res.best_checkpoint = snapshot();
        }
        if (epoch == cfg.epochs) {
            res.final_val_l1 = val_l1;
            res.final_val_psnr = val_psnr;
        }
        if (epoch == cfg.lr_decay_epoch) adam.lr *= cfg.lr_decay;
    }
    res.final_checkpoint = snapshot();

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        save_checkpoint(res.best_checkpoint, out_dir + "/best.fckpt");
        save_checkpoint(res.final_checkpoint, out_dir + "/final.fckpt");
        std::ofstream log(out_dir + "/train.log", std::ios::trunc);
        for (const auto& l : res.log_lines) log << l << "\n";
    }
    return res;
}

// Runs the generator from a checkpoint (or a fresh net) on one PAN/LRMS
// pair; builds a single-sample inference graph for the image's dims.
inline ImageTensor generator_predict(GeneratorNet<float>& net, const ImageTensor& pan,
                                     const ImageTensor& lrms) {
    if (pan.channels != 1) throw ShapeError("generator_predict: pan must be single-channel");
    if (pan.height != lrms.height * net.cfg.sus || pan.width != lrms.width * net.cfg.sus)
        throw ShapeError("generator_predict: pan dims must be sus x lrms dims");
    ad::Graph<float> g(false);
    GeneratorGraph<float> gg = build_generator(g, net, 1, lrms.height, lrms.width);
    std::copy(pan.data.begin(), pan.data.end(), gg.pan.value().data());
    std::copy(lrms.data.begin(), lrms.data.end(), gg.lrms.value().data());
    g.forward();
    return tensor_to_image(gg.output.value());
}

}  // namespace pansharp
