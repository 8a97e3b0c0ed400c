// The detection CNN: a VGG-style convolutional backbone under a custom head
// (global average pooling, dense 64 + ReLU, dropout 0.5, softmax). The
// backbone can be frozen for fine-tuning so only the head trains. The desk
// preset keeps the 3x3/stride-1 + 2x2-pool shape laws at toy scale.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthaug/binding.hpp"
#include "synthaug/checkpoint.hpp"
#include "synthaug/params.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/tape.hpp"

namespace synthaug {

struct BackboneConfig {
    // blocks of (channel width, conv count); a 2x2 stride-2 max-pool follows
    // each block; all convs are 3x3 stride 1 with same padding
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    std::size_t input_resolution = 112;
    std::string weights_path;  // optional CGW1 file for the backbone
    double init_stddev = 0.0;  // 0 = He scaling sqrt(2/fan_in) per layer

    // the standard 13-conv VGG16 stack
    static BackboneConfig full() {
        BackboneConfig cfg;
        cfg.blocks = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
        cfg.input_resolution = 112;
        return cfg;
    }

    static BackboneConfig desk() {
        BackboneConfig cfg;
        cfg.blocks = {{16, 2}, {32, 2}};
        cfg.input_resolution = 28;
        return cfg;
    }

    std::size_t feature_channels() const { return blocks.back().first; }

    // Pools halve even extents exactly; an odd extent floors, which is what
    // the published stack does on its fifth pool (112 -> ... -> 7 -> 3).
    void validate() const {
        if (blocks.empty()) throw ValueError("backbone needs at least one block");
        std::size_t r = input_resolution;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (r < 2)
                throw ValueError("input resolution " + std::to_string(input_resolution) +
                                 " cannot support " + std::to_string(blocks.size()) +
                                 " pooling stages");
            r = (r - 2) / 2 + 1;
        }
    }
};

struct HeadConfig {
    std::size_t dense_units = 64;
    double dropout = 0.5;
    std::size_t num_classes = 2;
};

struct ClassifierTrainConfig {
    AdamConfig adam = AdamConfig::classifier_preset();  // lr 0.001, beta1 0.9
    std::size_t batch = 16;
    std::size_t epochs = 25;
    std::uint64_t seed = 0;
};

struct Classifier {
    BackboneConfig backbone;
    HeadConfig head;
    bool freeze_backbone = false;
    ParamSet<float> params;
    std::map<std::string, std::size_t> index_;

    std::size_t idx(const std::string& name) const { return index_.at(name); }

    struct Outputs {
        Var probs;     // [n, num_classes] softmax
        Var features;  // [n, dense_units] post-ReLU, pre-dropout
    };

    Outputs forward(Tape<float>& tape, const std::vector<Var>& p, Var images, bool train,
                    Rng& dropout_rng, std::vector<Shape>* trace = nullptr) {
        Var x = images;
        for (std::size_t b = 0; b < backbone.blocks.size(); ++b) {
            for (std::size_t c = 0; c < backbone.blocks[b].second; ++c) {
                const std::string tag = "backbone.b" + std::to_string(b) + ".c" + std::to_string(c);
                x = tape.conv2d(x, p[idx(tag + ".kernel")], 1, Padding::Same);
                x = tape.channel_bias(x, p[idx(tag + ".bias")]);
                x = tape.activation(x, Activation::Relu);
            }
            x = tape.max_pool(x, 2, 2);
            if (trace) trace->push_back(tape.value(x).shape());
        }
        x = tape.global_avg_pool(x);
        Var feat = tape.activation(tape.dense(x, p[idx("head.dense.w")], p[idx("head.dense.b")]),
                                   Activation::Relu);
        Var dropped = tape.dropout(feat, float(head.dropout), train, dropout_rng);
        Var logits = tape.dense(dropped, p[idx("head.out.w")], p[idx("head.out.b")]);
        return {tape.activation(logits, Activation::Softmax), feat};
    }
};

inline Classifier build_classifier(const BackboneConfig& backbone, const HeadConfig& head,
                                   bool freeze_backbone, std::uint64_t seed) {
    backbone.validate();
    Classifier clf;
    clf.backbone = backbone;
    clf.head = head;
    clf.freeze_backbone = freeze_backbone;
    Rng rng(derive_seed(seed, "init.classifier"));

    auto add = [&](const std::string& name, Tensor<float> value, bool trainable) {
        clf.index_[name] = clf.params.add(name, std::move(value), trainable);
    };

    auto stddev = [&](std::size_t fan_in) {
        return backbone.init_stddev > 0.0 ? backbone.init_stddev : std::sqrt(2.0 / double(fan_in));
    };
    std::size_t in_ch = 3;
    for (std::size_t b = 0; b < backbone.blocks.size(); ++b) {
        const auto [width, convs] = backbone.blocks[b];
        for (std::size_t c = 0; c < convs; ++c) {
            const std::string tag = "backbone.b" + std::to_string(b) + ".c" + std::to_string(c);
            Tensor<float> k({3, 3, in_ch, width});
            fill_normal(k, rng, 0.0, stddev(9 * in_ch));
            add(tag + ".kernel", std::move(k), !freeze_backbone);
            add(tag + ".bias", Tensor<float>({width}), !freeze_backbone);
            in_ch = width;
        }
    }
    Tensor<float> wd({backbone.feature_channels(), head.dense_units});
    fill_normal(wd, rng, 0.0, stddev(backbone.feature_channels()));
    add("head.dense.w", std::move(wd), true);
    add("head.dense.b", Tensor<float>({head.dense_units}), true);
    Tensor<float> wo({head.dense_units, head.num_classes});
    fill_normal(wo, rng, 0.0, stddev(head.dense_units));
    add("head.out.w", std::move(wo), true);
    add("head.out.b", Tensor<float>({head.num_classes}), true);

    if (!backbone.weights_path.empty()) {
        NamedTensors tensors = load_cgw1(backbone.weights_path);
        std::size_t hits = 0;
        for (const auto& [name, t] : tensors) {
            auto it = clf.index_.find(name);
            if (it == clf.index_.end() || name.rfind("backbone.", 0) != 0) continue;
            if (!clf.params[it->second].value.same_shape(t))
                throw FormatError("backbone weight " + name + " has shape " + shape_str(t.shape()) +
                                  ", expected " +
                                  shape_str(clf.params[it->second].value.shape()));
            clf.params[it->second].value = t;
            ++hits;
        }
        if (hits == 0)
            throw FormatError("no backbone tensors found in " + backbone.weights_path);
    }
    return clf;
}

struct EpochStats {
    double loss = 0;
    double accuracy = 0;
};

namespace detail_clf {

inline Tensor<float> gather_rows4(const Tensor<float>& x, const std::vector<std::size_t>& idx) {
    const std::size_t stride = x.dim(1) * x.dim(2) * x.dim(3);
    Tensor<float> out({idx.size(), x.dim(1), x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(x.data() + idx[i] * stride, stride, out.data() + i * stride);
    return out;
}

}  // namespace detail_clf

// Supervised training with categorical cross-entropy on one-hot targets.
// History carries one (loss, accuracy) row per epoch, averaged over batches.
inline std::vector<EpochStats> train_classifier(Classifier& clf, const Tensor<float>& images,
                                                const Tensor<float>& onehot,
                                                const ClassifierTrainConfig& cfg) {
    if (images.rank() != 4 || onehot.rank() != 2 || images.dim(0) != onehot.dim(0))
        throw TrainingError("train_classifier: images and targets disagree");
    if (onehot.dim(1) != clf.head.num_classes)
        throw TrainingError("train_classifier: one-hot width does not match the head");
    for (std::size_t i = 0; i < images.numel(); ++i)
        if (images[i] < 0.0f || images[i] > 1.0f)
            throw TrainingError("train_classifier: images must be preprocessed to [0,1]");
    const std::size_t n = images.dim(0);
    const std::size_t resolution = images.dim(1);
    if (resolution != clf.backbone.input_resolution)
        throw TrainingError("train_classifier: resolution " + std::to_string(resolution) +
                            " does not match the model's " +
                            std::to_string(clf.backbone.input_resolution));

    AdamState<float> opt(cfg.adam, clf.params);
    std::vector<EpochStats> history;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, "clf.shuffle", epoch));
        shuffle_rng.shuffle(order.begin(), order.end());

        EpochStats stats;
        std::size_t batches = 0, correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t stop = std::min(n, start + cfg.batch);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            Tensor<float> x = detail_clf::gather_rows4(images, idx);
            Tensor<float> y({idx.size(), clf.head.num_classes});
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t c = 0; c < clf.head.num_classes; ++c)
                    y.at2(i, c) = onehot.at2(idx[i], c);

            Tape<float> tape(true);
            auto p = bind_params(tape, clf.params);
            Rng drop_rng(derive_seed(cfg.seed, "clf.dropout", step));
            auto out = clf.forward(tape, p, tape.leaf(std::move(x)), true, drop_rng);
            Var loss = tape.loss(Loss::CategoricalCe, out.probs, y);
            const float loss_value = tape.scalar(loss);
            if (!std::isfinite(loss_value))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batches));
            tape.backward(loss);
            auto grads = collect_grads(tape, p, clf.params);
            adam_step(clf.params, grads, opt);

            const auto& probs = tape.value(out.probs);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t c = 1; c < clf.head.num_classes; ++c)
                    if (probs.at2(i, c) > probs.at2(i, arg)) arg = c;
                std::size_t truth = 0;
                for (std::size_t c = 1; c < clf.head.num_classes; ++c)
                    if (y.at2(i, c) > y.at2(i, truth)) truth = c;
                correct += arg == truth;
            }
            stats.loss += loss_value;
            ++batches;
            ++step;
        }
        stats.loss /= double(batches);
        stats.accuracy = double(correct) / double(n);
        history.push_back(stats);
    }
    return history;
}

struct Prediction {
    Tensor<float> probs;              // [n, num_classes]
    std::vector<std::size_t> labels;  // argmax, ties toward the lower index
};

// Inference is side-effect-free: dropout off, parameters untouched.
inline Prediction predict(Classifier& clf, const Tensor<float>& images,
                          std::size_t batch_size = 64) {
    if (images.rank() != 4 || images.dim(1) != clf.backbone.input_resolution)
        throw TrainingError("predict: input resolution does not match the model");
    const std::size_t n = images.dim(0);
    Prediction pred;
    pred.probs = Tensor<float>({n, clf.head.num_classes});
    pred.labels.resize(n);
    Rng dummy(0);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Tape<float> tape(false);
        auto p = bind_params_frozen(tape, clf.params);
        auto out = clf.forward(tape, p, tape.leaf(detail_clf::gather_rows4(images, idx)), false, dummy);
        const auto& probs = tape.value(out.probs);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t arg = 0;
            for (std::size_t c = 0; c < clf.head.num_classes; ++c) {
                pred.probs.at2(start + i, c) = probs.at2(i, c);
                if (probs.at2(i, c) > probs.at2(i, arg)) arg = c;
            }
            pred.labels[start + i] = arg;
        }
    }
    return pred;
}

// The penultimate activations (dense-64 after ReLU, before dropout).
inline Tensor<float> extract_features(Classifier& clf, const Tensor<float>& images,
                                      std::size_t batch_size = 64) {
    if (images.rank() != 4 || images.dim(1) != clf.backbone.input_resolution)
        throw TrainingError("extract_features: input resolution does not match the model");
    const std::size_t n = images.dim(0);
    Tensor<float> features({n, clf.head.dense_units});
    Rng dummy(0);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Tape<float> tape(false);
        auto p = bind_params_frozen(tape, clf.params);
        auto out = clf.forward(tape, p, tape.leaf(detail_clf::gather_rows4(images, idx)), false, dummy);
        const auto& feat = tape.value(out.features);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < clf.head.dense_units; ++c)
                features.at2(start + i, c) = feat.at2(i, c);
    }
    return features;
}

// -- persistence -----------------------------------------------------------------

inline nlohmann::json backbone_config_json(const BackboneConfig& c) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& [width, convs] : c.blocks) blocks.push_back({{"width", width}, {"convs", convs}});
    return {{"blocks", blocks},
            {"input_resolution", c.input_resolution},
            {"weights_path", c.weights_path},
            {"init_stddev", c.init_stddev}};
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.blocks.clear();
    for (const auto& b : j.at("blocks"))
        c.blocks.emplace_back(b.at("width").get<std::size_t>(), b.at("convs").get<std::size_t>());
    c.input_resolution = j.at("input_resolution");
    c.weights_path = j.value("weights_path", std::string());
    c.init_stddev = j.at("init_stddev");
    return c;
}

inline void save_classifier_checkpoint(const std::string& path, const Classifier& clf) {
    save_cgw1(path, paramset_entries("", clf.params));
    nlohmann::json sidecar{{"schema_version", 1},
                           {"backbone", backbone_config_json(clf.backbone)},
                           {"head",
                            {{"dense_units", clf.head.dense_units},
                             {"dropout", clf.head.dropout},
                             {"num_classes", clf.head.num_classes}}},
                           {"freeze_backbone", clf.freeze_backbone}};
    std::ofstream os(path + ".json");
    if (!os) throw FormatError("cannot write classifier sidecar: " + path + ".json");
    os << sidecar.dump(2) << "\n";
}

inline Classifier load_classifier_checkpoint(const std::string& path) {
    std::ifstream is(path + ".json");
    if (!is) throw FormatError("cannot open classifier sidecar: " + path + ".json");
    nlohmann::json sidecar;
    is >> sidecar;
    if (sidecar.value("schema_version", 0) != 1)
        throw FormatError("unsupported classifier schema version");
    BackboneConfig backbone = backbone_config_from_json(sidecar.at("backbone"));
    backbone.weights_path.clear();  // weights come from the checkpoint itself
    HeadConfig head;
    head.dense_units = sidecar.at("head").at("dense_units");
    head.dropout = sidecar.at("head").at("dropout");
    head.num_classes = sidecar.at("head").at("num_classes");
    Classifier clf = build_classifier(backbone, head, sidecar.at("freeze_backbone"), 0);
    restore_paramset("", load_cgw1(path), clf.params);
    return clf;
}

inline void save_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write history: " + path);
    os << "epoch,loss,accuracy\n";
    char buf[96];
    for (std::size_t i = 0; i < history.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i, history[i].loss, history[i].accuracy);
        os << buf;
    }
}

}  // namespace synthaug
