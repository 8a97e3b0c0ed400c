// The class-conditional GAN: generator and discriminator architectures, the
// two-head adversarial training loop, conditional sampling and checkpoints.
//
// The generator maps (label, noise) through an embedding and two dense
// branches to a 7x7 stack, then upsamples with stride-2 transpose
// convolutions to the output resolution. The discriminator mirrors it with
// strided convolutions into two heads: sigmoid realness and softmax class.
// The full presets follow the published layer widths; the desk presets keep
// the same shape laws at 1/8 width for CPU-scale runs.
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthaug/binding.hpp"
#include "synthaug/checkpoint.hpp"
#include "synthaug/datapipe.hpp"
#include "synthaug/params.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/tape.hpp"

namespace synthaug {

// published corpus sizes for the synthetic set
inline constexpr std::size_t kPaperSyntheticCovid = 1669;
inline constexpr std::size_t kPaperSyntheticNormal = 1399;

struct GeneratorConfig {
    std::size_t latent_dim = 100;
    std::size_t embed_dim = 50;
    std::size_t num_classes = 2;
    std::size_t base_resolution = 7;
    std::size_t noise_channels = 1024;                      // at base resolution
    std::vector<std::size_t> upsample_channels = {512, 256, 128, 3};
    std::size_t kernel = 5;
    std::size_t stride = 2;
    std::size_t resolution = 112;
    double noise_stddev = 1.0;  // latent scale; see init_stddev for weights
    double init_stddev = 0.02;
    std::size_t scale_factor = 1;

    // scale_factor divides the channel schedule; fewer upsampling layers shrink
    // the output per resolution = base * 2^layers
    static GeneratorConfig with_scale(std::size_t scale, std::size_t upsample_layers) {
        static const std::size_t trunk[] = {512, 256, 128};
        if (upsample_layers < 1 || upsample_layers > 4)
            throw ValueError("generator supports 1..4 upsampling layers");
        GeneratorConfig cfg;
        cfg.scale_factor = scale;
        cfg.noise_channels = 1024 / scale;
        cfg.upsample_channels.clear();
        for (std::size_t i = 0; i + 1 < upsample_layers; ++i)
            cfg.upsample_channels.push_back(trunk[i] / scale);
        cfg.upsample_channels.push_back(3);
        cfg.resolution = cfg.base_resolution << upsample_layers;
        return cfg;
    }

    static GeneratorConfig full() { return with_scale(1, 4); }
    static GeneratorConfig desk() { return with_scale(8, 2); }

    std::size_t label_dense_width() const { return base_resolution * base_resolution; }
    std::size_t noise_dense_width() const {
        return base_resolution * base_resolution * noise_channels;
    }

    void validate() const {
        if (upsample_channels.empty() || upsample_channels.back() != 3)
            throw ValueError("generator channel schedule must end in 3, got " +
                             std::to_string(upsample_channels.empty() ? 0 : upsample_channels.back()));
        const std::size_t expect = base_resolution << upsample_channels.size();
        if (resolution != expect)
            throw ValueError("generator resolution " + std::to_string(resolution) +
                             " does not equal base*2^layers = " + std::to_string(expect));
        if (latent_dim == 0 || embed_dim == 0 || noise_channels == 0 || stride != 2)
            throw ValueError("generator config has degenerate dimensions");
    }
};

struct DiscriminatorConfig {
    std::size_t input_resolution = 112;
    std::size_t num_classes = 2;
    std::vector<std::size_t> channels = {32, 64, 128, 256, 512};
    std::vector<std::size_t> strides = {1, 2, 2, 2, 2};
    std::size_t kernel = 3;
    double leaky_slope = 0.2;
    double dropout = 0.5;
    double init_stddev = 0.02;
    std::size_t scale_factor = 1;

    static DiscriminatorConfig with_scale(std::size_t scale, std::size_t downsample_layers) {
        static const std::size_t trunk[] = {32, 64, 128, 256, 512};
        if (downsample_layers < 1 || downsample_layers > 4)
            throw ValueError("discriminator supports 1..4 downsampling layers");
        DiscriminatorConfig cfg;
        cfg.scale_factor = scale;
        cfg.channels.clear();
        cfg.strides.clear();
        cfg.channels.push_back(std::max<std::size_t>(trunk[0] / scale, 1));
        cfg.strides.push_back(1);
        for (std::size_t i = 0; i < downsample_layers; ++i) {
            cfg.channels.push_back(std::max<std::size_t>(trunk[i + 1] / scale, 1));
            cfg.strides.push_back(2);
        }
        cfg.input_resolution = std::size_t(7) << downsample_layers;
        return cfg;
    }

    static DiscriminatorConfig full() { return with_scale(1, 4); }
    static DiscriminatorConfig desk() { return with_scale(8, 2); }

    std::size_t final_resolution() const {
        std::size_t r = input_resolution;
        for (std::size_t s : strides) r = (r + s - 1) / s;
        return r;
    }

    void validate() const {
        if (channels.size() != strides.size() || channels.empty())
            throw ValueError("discriminator channel/stride schedules must align");
        if (final_resolution() != 7)
            throw ValueError("discriminator schedule does not reduce " +
                             std::to_string(input_resolution) + " to the 7x7 head");
    }
};

// -- models -------------------------------------------------------------------

struct Generator {
    GeneratorConfig cfg;
    ParamSet<float> params;

    // noise [n, latent_dim]; one label per sample
    Var forward(Tape<float>& tape, const std::vector<Var>& p, Var noise,
                const std::vector<std::size_t>& labels, BnMode mode, bool update_running,
                std::vector<Shape>* trace = nullptr) {
        const std::size_t n = tape.value(noise).dim(0);
        const std::size_t base = cfg.base_resolution;

        Var lbl = tape.embed(labels, p[idx("embed.table")]);
        Var a = tape.dense(lbl, p[idx("label_dense.w")], p[idx("label_dense.b")]);
        a = tape.reshape(a, {n, base, base, 1});
        Var z = tape.dense(noise, p[idx("noise_dense.w")], p[idx("noise_dense.b")]);
        z = tape.reshape(z, {n, base, base, cfg.noise_channels});
        Var x = tape.concat_last(a, z);
        if (trace) trace->push_back(tape.value(x).shape());

        for (std::size_t i = 0; i < cfg.upsample_channels.size(); ++i) {
            const std::string tag = "up" + std::to_string(i);
            x = tape.conv_transpose2d(x, p[idx(tag + ".kernel")], cfg.stride);
            x = tape.channel_bias(x, p[idx(tag + ".bias")]);
            if (trace) trace->push_back(tape.value(x).shape());
            if (i + 1 < cfg.upsample_channels.size()) {
                x = tape.batch_norm(x, p[idx(tag + ".bn.gamma")], p[idx(tag + ".bn.beta")],
                                    params.buffer_value(tag + ".bn.mean"),
                                    params.buffer_value(tag + ".bn.var"), mode, 0.99f, 1e-5f,
                                    update_running);
                x = tape.activation(x, Activation::Relu);
            } else {
                x = tape.activation(x, Activation::Tanh);
            }
        }
        return x;
    }

    std::size_t idx(const std::string& name) const { return index_.at(name); }
    std::map<std::string, std::size_t> index_;
};

struct DiscriminatorOut {
    Var source;  // [n,1] sigmoid realness
    Var label;   // [n,num_classes] softmax
};

struct Discriminator {
    DiscriminatorConfig cfg;
    ParamSet<float> params;

    DiscriminatorOut forward(Tape<float>& tape, const std::vector<Var>& p, Var images, BnMode mode,
                             bool update_running, bool dropout_active, Rng& dropout_rng,
                             std::vector<Shape>* trace = nullptr) {
        Var x = images;
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            const std::string tag = "conv" + std::to_string(i);
            x = tape.conv2d(x, p[idx(tag + ".kernel")], cfg.strides[i], Padding::Same);
            x = tape.channel_bias(x, p[idx(tag + ".bias")]);
            if (trace) trace->push_back(tape.value(x).shape());
            x = tape.batch_norm(x, p[idx(tag + ".bn.gamma")], p[idx(tag + ".bn.beta")],
                                params.buffer_value(tag + ".bn.mean"),
                                params.buffer_value(tag + ".bn.var"), mode, 0.99f, 1e-5f,
                                update_running);
            x = tape.activation(x, Activation::LeakyRelu, float(cfg.leaky_slope));
            x = tape.dropout(x, float(cfg.dropout), dropout_active, dropout_rng);
        }
        const auto& shape = tape.value(x).shape();
        const std::size_t flat = shape[1] * shape[2] * shape[3];
        x = tape.reshape(x, {shape[0], flat});
        DiscriminatorOut out;
        out.source = tape.activation(tape.dense(x, p[idx("src.w")], p[idx("src.b")]),
                                     Activation::Sigmoid);
        out.label = tape.activation(tape.dense(x, p[idx("cls.w")], p[idx("cls.b")]),
                                    Activation::Softmax);
        return out;
    }

    std::size_t idx(const std::string& name) const { return index_.at(name); }
    std::map<std::string, std::size_t> index_;
};

namespace detail_gan {

inline std::size_t add_param(ParamSet<float>& ps, std::map<std::string, std::size_t>& index,
                             const std::string& name, Tensor<float> value, bool trainable = true) {
    const std::size_t i = ps.add(name, std::move(value), trainable);
    index[name] = i;
    return i;
}

inline Tensor<float> normal_init(const Shape& shape, Rng& rng, double stddev) {
    Tensor<float> t(shape);
    fill_normal(t, rng, 0.0, stddev);
    return t;
}

inline void add_bn(ParamSet<float>& ps, std::map<std::string, std::size_t>& index,
                   const std::string& tag, std::size_t channels) {
    Tensor<float> gamma({channels});
    gamma.fill(1.0f);
    add_param(ps, index, tag + ".gamma", std::move(gamma));
    add_param(ps, index, tag + ".beta", Tensor<float>({channels}));
    ps.add_buffer(tag + ".mean", Tensor<float>({channels}));
    Tensor<float> var({channels});
    var.fill(1.0f);
    ps.add_buffer(tag + ".var", std::move(var));
}

}  // namespace detail_gan

inline Generator build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Generator g;
    g.cfg = cfg;
    Rng rng(derive_seed(seed, "init.generator"));
    using detail_gan::add_param;
    using detail_gan::normal_init;

    add_param(g.params, g.index_, "embed.table",
              normal_init({cfg.num_classes, cfg.embed_dim}, rng, cfg.init_stddev));
    add_param(g.params, g.index_, "label_dense.w",
              normal_init({cfg.embed_dim, cfg.label_dense_width()}, rng, cfg.init_stddev));
    add_param(g.params, g.index_, "label_dense.b", Tensor<float>({cfg.label_dense_width()}));
    add_param(g.params, g.index_, "noise_dense.w",
              normal_init({cfg.latent_dim, cfg.noise_dense_width()}, rng, cfg.init_stddev));
    add_param(g.params, g.index_, "noise_dense.b", Tensor<float>({cfg.noise_dense_width()}));

    std::size_t in_ch = cfg.noise_channels + 1;
    for (std::size_t i = 0; i < cfg.upsample_channels.size(); ++i) {
        const std::size_t out_ch = cfg.upsample_channels[i];
        const std::string tag = "up" + std::to_string(i);
        // transpose kernels are stored conv-oriented: [kh, kw, out, in]
        add_param(g.params, g.index_, tag + ".kernel",
                  normal_init({cfg.kernel, cfg.kernel, out_ch, in_ch}, rng, cfg.init_stddev));
        add_param(g.params, g.index_, tag + ".bias", Tensor<float>({out_ch}));
        if (i + 1 < cfg.upsample_channels.size())
            detail_gan::add_bn(g.params, g.index_, tag + ".bn", out_ch);
        in_ch = out_ch;
    }
    return g;
}

inline Discriminator build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Discriminator d;
    d.cfg = cfg;
    Rng rng(derive_seed(seed, "init.discriminator"));
    using detail_gan::add_param;
    using detail_gan::normal_init;

    std::size_t in_ch = 3;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        const std::size_t out_ch = cfg.channels[i];
        const std::string tag = "conv" + std::to_string(i);
        add_param(d.params, d.index_, tag + ".kernel",
                  normal_init({cfg.kernel, cfg.kernel, in_ch, out_ch}, rng, cfg.init_stddev));
        add_param(d.params, d.index_, tag + ".bias", Tensor<float>({out_ch}));
        detail_gan::add_bn(d.params, d.index_, tag + ".bn", out_ch);
        in_ch = out_ch;
    }
    const std::size_t flat = 7 * 7 * cfg.channels.back();
    add_param(d.params, d.index_, "src.w", normal_init({flat, 1}, rng, cfg.init_stddev));
    add_param(d.params, d.index_, "src.b", Tensor<float>({1}));
    add_param(d.params, d.index_, "cls.w", normal_init({flat, cfg.num_classes}, rng, cfg.init_stddev));
    add_param(d.params, d.index_, "cls.b", Tensor<float>({cfg.num_classes}));
    return d;
}

struct GanModel {
    Generator g;
    Discriminator d;
};

inline GanModel build_gan(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                          std::uint64_t seed) {
    if (gcfg.resolution != dcfg.input_resolution)
        throw ValueError("generator resolution does not match discriminator input");
    return {build_generator(gcfg, seed), build_discriminator(dcfg, seed)};
}

struct GanHyper {
    std::size_t batch = 64;
    double learning_rate = 0.0002;
    double beta1 = 0.5;
    std::size_t epochs = 2000;

    AdamConfig adam() const { return {learning_rate, beta1, 0.999, 1e-8}; }
};

struct BatchLoss {
    float d_source = 0, d_class = 0, g_source = 0, g_class = 0;
};

struct GanTrainState {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;  // completed epochs
    std::size_t step = 0;   // completed optimizer step pairs
    std::vector<BatchLoss> losses;
    AdamState<float> g_opt;
    AdamState<float> d_opt;
};

inline GanTrainState init_train_state(const GanModel& model, const GanHyper& hyper,
                                      std::uint64_t seed) {
    GanTrainState st;
    st.seed = seed;
    st.g_opt = AdamState<float>(hyper.adam(), model.g.params);
    st.d_opt = AdamState<float>(hyper.adam(), model.d.params);
    return st;
}

// Conditional sampling. Deterministic for a fixed seed; inference-mode batch
// norm, values in [-1, 1].
inline Tensor<float> generate(GanModel& model, const std::vector<std::size_t>& labels,
                              std::uint64_t seed) {
    for (std::size_t l : labels)
        if (l >= model.g.cfg.num_classes)
            throw ValueError("generate: label " + std::to_string(l) + " out of range");
    const std::size_t n = labels.size();
    Rng rng(derive_seed(seed, "generate"));
    Tensor<float> noise({n, model.g.cfg.latent_dim});
    fill_normal(noise, rng, 0.0, model.g.cfg.noise_stddev);

    Tape<float> tape(false);
    auto p = bind_params_frozen(tape, model.g.params);
    Var out = model.g.forward(tape, p, tape.leaf(std::move(noise)), labels, BnMode::Infer, false);
    return tape.value(out);
}

namespace detail_gan {

inline Tensor<float> gather_images(const Tensor<float>& images, const std::vector<std::size_t>& idx) {
    const std::size_t r = images.dim(1), c = images.dim(2), ch = images.dim(3);
    Tensor<float> out({idx.size(), r, c, ch});
    const std::size_t stride = r * c * ch;
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(images.data() + idx[i] * stride, stride, out.data() + i * stride);
    return out;
}

}  // namespace detail_gan

// One pass over the real set per epoch, consuming half a batch of real
// images per step. Each step: (1) discriminator update on half real / half
// generated with source targets 1/0 and class targets; (2) generator update
// through the frozen discriminator with source target 1 (non-saturating).
inline void train_gan(GanModel& model, GanTrainState& state, const Tensor<float>& images,
                      const std::vector<std::size_t>& labels, const GanHyper& hyper,
                      std::size_t epochs_to_run, bool freeze_audit = true) {
    if (images.rank() != 4 || images.dim(0) != labels.size())
        throw TrainingError("train_gan: images and labels disagree");
    const std::size_t n = images.dim(0);
    if (n == 0) throw TrainingError("train_gan: empty training set");
    std::vector<bool> seen(model.g.cfg.num_classes, false);
    for (std::size_t l : labels) {
        if (l >= seen.size()) throw TrainingError("train_gan: label out of range");
        seen[l] = true;
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (!seen[c]) throw TrainingError("train_gan: need at least one sample per class");
    for (std::size_t i = 0; i < images.numel(); ++i)
        if (images[i] < -1.0f || images[i] > 1.0f)
            throw TrainingError("train_gan: images must be preprocessed to [-1,1]");

    const std::size_t half = std::max<std::size_t>(1, std::min(hyper.batch / 2, n));
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n / half);
    const std::size_t num_classes = model.g.cfg.num_classes;

    for (std::size_t e = 0; e < epochs_to_run; ++e) {
        const std::size_t epoch = state.epoch;
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(state.seed, "gan.shuffle", epoch));
        shuffle_rng.shuffle(order.begin(), order.end());

        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t step = state.step;
            BatchLoss losses;

            // ---- discriminator step: half real, half fake
            std::vector<std::size_t> real_idx(order.begin() + b * half,
                                              order.begin() + (b + 1) * half);
            Tensor<float> real = detail_gan::gather_images(images, real_idx);
            std::vector<std::size_t> real_labels(half);
            for (std::size_t i = 0; i < half; ++i) real_labels[i] = labels[real_idx[i]];

            Rng fake_label_rng(derive_seed(state.seed, "gan.fakelabels.d", step));
            std::vector<std::size_t> fake_labels(half);
            for (auto& l : fake_labels) l = fake_label_rng.uniform_index(num_classes);
            Rng noise_rng(derive_seed(state.seed, "gan.noise.d", step));
            Tensor<float> noise({half, model.g.cfg.latent_dim});
            fill_normal(noise, noise_rng, 0.0, model.g.cfg.noise_stddev);

            Tensor<float> fake;
            {
                Tape<float> gtape(false);
                auto gp = bind_params_frozen(gtape, model.g.params);
                Var out = model.g.forward(gtape, gp, gtape.leaf(std::move(noise)), fake_labels,
                                          BnMode::Train, false);
                fake = gtape.value(out);
            }

            {
                // one optimizer step over both halves; each half is its own
                // forward so batch-norm statistics never mix real and fake
                Tape<float> tape(true);
                auto dp = bind_params(tape, model.d.params);
                Rng drop_rng(derive_seed(state.seed, "gan.dropout.d", step));

                Tensor<float> ones({half, 1}), zeros({half, 1});
                ones.fill(1.0f);
                auto out_real = model.d.forward(tape, dp, tape.leaf(std::move(real)), BnMode::Train,
                                                true, true, drop_rng);
                auto out_fake = model.d.forward(tape, dp, tape.leaf(std::move(fake)), BnMode::Train,
                                                true, true, drop_rng);
                Var l_src = tape.scale(tape.add(tape.loss(Loss::Bce, out_real.source, ones),
                                                tape.loss(Loss::Bce, out_fake.source, zeros)),
                                       0.5f);
                Var l_cls = tape.scale(tape.add(tape.sparse_ce(out_real.label, real_labels),
                                                tape.sparse_ce(out_fake.label, fake_labels)),
                                       0.5f);
                Var total = tape.add(l_src, l_cls);
                losses.d_source = tape.scalar(l_src);
                losses.d_class = tape.scalar(l_cls);
                tape.backward(total);
                auto grads = collect_grads(tape, dp, model.d.params);
                adam_step(model.d.params, grads, state.d_opt);
            }

            // ---- generator step through the frozen discriminator
            NamedTensors d_before;
            if (freeze_audit) d_before = paramset_entries("", model.d.params);

            {
                Rng g_label_rng(derive_seed(state.seed, "gan.fakelabels.g", step));
                std::vector<std::size_t> g_labels(hyper.batch);
                for (auto& l : g_labels) l = g_label_rng.uniform_index(num_classes);
                Rng g_noise_rng(derive_seed(state.seed, "gan.noise.g", step));
                Tensor<float> g_noise({hyper.batch, model.g.cfg.latent_dim});
                fill_normal(g_noise, g_noise_rng, 0.0, model.g.cfg.noise_stddev);

                Tape<float> tape(true);
                auto gp = bind_params(tape, model.g.params);
                auto dp = bind_params_frozen(tape, model.d.params);
                Var imgs = model.g.forward(tape, gp, tape.leaf(std::move(g_noise)), g_labels,
                                           BnMode::Train, true);
                Rng drop_rng(derive_seed(state.seed, "gan.dropout.g", step));
                // frozen pass: batch statistics, no running-stat update
                auto out =
                    model.d.forward(tape, dp, imgs, BnMode::Train, false, true, drop_rng);
                Tensor<float> ones({hyper.batch, 1});
                ones.fill(1.0f);
                Var l_src = tape.loss(Loss::Bce, out.source, ones);
                Var l_cls = tape.sparse_ce(out.label, g_labels);
                Var total = tape.add(l_src, l_cls);
                losses.g_source = tape.scalar(l_src);
                losses.g_class = tape.scalar(l_cls);
                tape.backward(total);
                auto grads = collect_grads(tape, gp, model.g.params);
                adam_step(model.g.params, grads, state.g_opt);
            }

            if (freeze_audit) {
                NamedTensors d_after = paramset_entries("", model.d.params);
                for (std::size_t i = 0; i < d_before.size(); ++i)
                    if (!bitwise_equal(d_before[i].second, d_after[i].second))
                        throw TrainingError("discriminator parameter " + d_before[i].first +
                                            " changed during a generator update");
            }

            for (float l : {losses.d_source, losses.d_class, losses.g_source, losses.g_class})
                if (!std::isfinite(l))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                        " batch " + std::to_string(b));
            state.losses.push_back(losses);
            state.step += 1;
        }
        state.epoch += 1;
    }
}

// -- persistence ---------------------------------------------------------------

inline nlohmann::json generator_config_json(const GeneratorConfig& c) {
    return {{"latent_dim", c.latent_dim},
            {"embed_dim", c.embed_dim},
            {"num_classes", c.num_classes},
            {"base_resolution", c.base_resolution},
            {"noise_channels", c.noise_channels},
            {"upsample_channels", c.upsample_channels},
            {"kernel", c.kernel},
            {"stride", c.stride},
            {"resolution", c.resolution},
            {"noise_stddev", c.noise_stddev},
            {"init_stddev", c.init_stddev},
            {"scale_factor", c.scale_factor}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.latent_dim = j.at("latent_dim");
    c.embed_dim = j.at("embed_dim");
    c.num_classes = j.at("num_classes");
    c.base_resolution = j.at("base_resolution");
    c.noise_channels = j.at("noise_channels");
    c.upsample_channels = j.at("upsample_channels").get<std::vector<std::size_t>>();
    c.kernel = j.at("kernel");
    c.stride = j.at("stride");
    c.resolution = j.at("resolution");
    c.noise_stddev = j.at("noise_stddev");
    c.init_stddev = j.at("init_stddev");
    c.scale_factor = j.at("scale_factor");
    return c;
}

inline nlohmann::json discriminator_config_json(const DiscriminatorConfig& c) {
    return {{"input_resolution", c.input_resolution},
            {"num_classes", c.num_classes},
            {"channels", c.channels},
            {"strides", c.strides},
            {"kernel", c.kernel},
            {"leaky_slope", c.leaky_slope},
            {"dropout", c.dropout},
            {"init_stddev", c.init_stddev},
            {"scale_factor", c.scale_factor}};
}

inline DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
    DiscriminatorConfig c;
    c.input_resolution = j.at("input_resolution");
    c.num_classes = j.at("num_classes");
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.strides = j.at("strides").get<std::vector<std::size_t>>();
    c.kernel = j.at("kernel");
    c.leaky_slope = j.at("leaky_slope");
    c.dropout = j.at("dropout");
    c.init_stddev = j.at("init_stddev");
    c.scale_factor = j.at("scale_factor");
    return c;
}

inline nlohmann::json gan_hyper_json(const GanHyper& h) {
    return {{"batch", h.batch},
            {"learning_rate", h.learning_rate},
            {"beta1", h.beta1},
            {"epochs", h.epochs}};
}

inline GanHyper gan_hyper_from_json(const nlohmann::json& j) {
    GanHyper h;
    h.batch = j.at("batch");
    h.learning_rate = j.at("learning_rate");
    h.beta1 = j.at("beta1");
    h.epochs = j.at("epochs");
    return h;
}

// Checkpoint layout: <path> is the CGW1 container; <path>.json the sidecar;
// <path>.losses.csv the loss history.
inline void save_gan_checkpoint(const std::string& path, const GanModel& model,
                                const GanTrainState& state, const GanHyper& hyper) {
    NamedTensors tensors = paramset_entries("g/", model.g.params);
    NamedTensors d = paramset_entries("d/", model.d.params);
    tensors.insert(tensors.end(), d.begin(), d.end());
    for (std::size_t i = 0; i < model.g.params.size(); ++i) {
        tensors.emplace_back("opt.g.m/" + model.g.params[i].name, state.g_opt.m[i]);
        tensors.emplace_back("opt.g.v/" + model.g.params[i].name, state.g_opt.v[i]);
    }
    for (std::size_t i = 0; i < model.d.params.size(); ++i) {
        tensors.emplace_back("opt.d.m/" + model.d.params[i].name, state.d_opt.m[i]);
        tensors.emplace_back("opt.d.v/" + model.d.params[i].name, state.d_opt.v[i]);
    }
    save_cgw1(path, tensors);

    const std::string losses_path = path + ".losses.csv";
    {
        std::ofstream os(losses_path);
        os << "step,d_source,d_class,g_source,g_class\n";
        char buf[128];
        for (std::size_t i = 0; i < state.losses.size(); ++i) {
            const auto& l = state.losses[i];
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", i, double(l.d_source),
                          double(l.d_class), double(l.g_source), double(l.g_class));
            os << buf;
        }
    }

    nlohmann::json sidecar{{"schema_version", 1},
                           {"config",
                            {{"generator", generator_config_json(model.g.cfg)},
                             {"discriminator", discriminator_config_json(model.d.cfg)},
                             {"hyper", gan_hyper_json(hyper)}}},
                           {"epoch", state.epoch},
                           {"step", state.step},
                           {"seed", state.seed},
                           {"adam_t", {{"g", state.g_opt.t}, {"d", state.d_opt.t}}},
                           {"loss_history_path",
                            std::filesystem::path(losses_path).filename().string()}};
    std::ofstream os(path + ".json");
    if (!os) throw FormatError("cannot write checkpoint sidecar: " + path + ".json");
    os << sidecar.dump(2) << "\n";
}

struct GanCheckpoint {
    GanModel model;
    GanTrainState state;
    GanHyper hyper;
};

inline GanCheckpoint load_gan_checkpoint(const std::string& path) {
    std::ifstream sidecar_in(path + ".json");
    if (!sidecar_in) throw FormatError("cannot open checkpoint sidecar: " + path + ".json");
    nlohmann::json sidecar;
    sidecar_in >> sidecar;
    if (sidecar.value("schema_version", 0) != 1)
        throw FormatError("unsupported checkpoint schema version");

    GanCheckpoint cp;
    const auto& cfg = sidecar.at("config");
    GeneratorConfig gcfg = generator_config_from_json(cfg.at("generator"));
    DiscriminatorConfig dcfg = discriminator_config_from_json(cfg.at("discriminator"));
    cp.hyper = gan_hyper_from_json(cfg.at("hyper"));
    cp.model = build_gan(gcfg, dcfg, 0);

    NamedTensors tensors = load_cgw1(path);
    restore_paramset("g/", tensors, cp.model.g.params);
    restore_paramset("d/", tensors, cp.model.d.params);

    cp.state = init_train_state(cp.model, cp.hyper, sidecar.at("seed").get<std::uint64_t>());
    cp.state.epoch = sidecar.at("epoch");
    cp.state.step = sidecar.at("step");
    cp.state.g_opt.t = sidecar.at("adam_t").at("g");
    cp.state.d_opt.t = sidecar.at("adam_t").at("d");

    auto restore_opt = [&](const std::string& prefix, const ParamSet<float>& params,
                           std::vector<Tensor<float>>& m, std::vector<Tensor<float>>& v) {
        for (const auto& [name, t] : tensors) {
            if (name.rfind(prefix + "m/", 0) == 0) {
                const std::string local = name.substr(prefix.size() + 2);
                for (std::size_t i = 0; i < params.size(); ++i)
                    if (params[i].name == local) m[i] = t;
            } else if (name.rfind(prefix + "v/", 0) == 0) {
                const std::string local = name.substr(prefix.size() + 2);
                for (std::size_t i = 0; i < params.size(); ++i)
                    if (params[i].name == local) v[i] = t;
            }
        }
    };
    restore_opt("opt.g.", cp.model.g.params, cp.state.g_opt.m, cp.state.g_opt.v);
    restore_opt("opt.d.", cp.model.d.params, cp.state.d_opt.m, cp.state.d_opt.v);

    const std::string losses_path =
        (std::filesystem::path(path).parent_path() /
         sidecar.at("loss_history_path").get<std::string>())
            .string();
    std::ifstream lf(losses_path);
    if (lf) {
        std::string line;
        std::getline(lf, line);  // header
        while (std::getline(lf, line)) {
            BatchLoss l;
            std::size_t step;
            if (std::sscanf(line.c_str(), "%zu,%f,%f,%f,%f", &step, &l.d_source, &l.d_class,
                            &l.g_source, &l.g_class) == 5)
                cp.state.losses.push_back(l);
        }
    }
    return cp;
}

// Map symmetric-range images back to 8-bit and write them as PNGs with a
// manifest tagging origin "synthetic".
inline DatasetManifest export_synthetic(const Tensor<float>& images,
                                        const std::vector<std::size_t>& labels,
                                        const std::string& dir) {
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    const std::size_t h = images.dim(1), w = images.dim(2);
    for (std::size_t i = 0; i < images.dim(0); ++i) {
        Image8 img(h, w, 3);
        for (std::size_t p = 0; p < h * w * 3; ++p) {
            const float v = (images[i * h * w * 3 + p] + 1.0f) * 127.5f;
            img.pixels[p] = std::uint8_t(std::clamp(v, 0.0f, 255.0f) + 0.5f);
        }
        char name[64];
        std::snprintf(name, sizeof(name), "synthetic-class%zu-%05zu.png", labels[i], i);
        save_png((std::filesystem::path(dir) / name).string(), img);
        m.entries.push_back({name, labels[i], "synthetic"});
    }
    save_manifest((std::filesystem::path(dir) / "manifest.json").string(), m);
    return m;
}

// label vector realizing the published synthetic corpus sizes
inline std::vector<std::size_t> paper_generation_labels() {
    std::vector<std::size_t> labels(kPaperSyntheticCovid, 0);
    labels.insert(labels.end(), kPaperSyntheticNormal, 1);
    return labels;
}

}  // namespace synthaug
