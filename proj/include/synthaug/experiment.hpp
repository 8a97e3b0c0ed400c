// Experiment orchestration: a JSON-configured pipeline that builds the
// corpus, trains the baseline classifier, trains the GAN, synthesizes
// augments, trains the augmented classifier, evaluates both arms on the
// identical all-real test set and emits reports, features and the PCA
// scatter. Every stage draws its seed from the master seed by name, so one
// stage's randomness never leaks into another.
#pragma once

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthaug/classifier.hpp"
#include "synthaug/datapipe.hpp"
#include "synthaug/gan.hpp"
#include "synthaug/metrics.hpp"
#include "synthaug/pca.hpp"

namespace synthaug {

namespace fs = std::filesystem;

// -- logging --------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel parse_log_level(const std::string& s) {
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    throw ValueError("unknown log level: " + s);
}

// Console plus optional file sink. Log lines carry no timestamps so reruns
// produce byte-identical files.
class Logger {
public:
    explicit Logger(LogLevel level = LogLevel::Info) : level_(level) {}

    void open_file(const std::string& path) { file_.open(path); }
    void set_level(LogLevel level) { level_ = level; }

    void log(LogLevel level, const std::string& msg) {
        if (level > level_) return;
        static const char* names[] = {"error", "warn", "info", "debug"};
        const std::string line = std::string("[") + names[int(level)] + "] " + msg;
        std::cerr << line << "\n";
        if (file_.is_open()) file_ << line << "\n";
    }

    void info(const std::string& msg) { log(LogLevel::Info, msg); }
    void warn(const std::string& msg) { log(LogLevel::Warn, msg); }
    void error(const std::string& msg) { log(LogLevel::Error, msg); }
    void debug(const std::string& msg) { log(LogLevel::Debug, msg); }

private:
    LogLevel level_;
    std::ofstream file_;
};

// -- config -----------------------------------------------------------------------

struct CorpusConfig {
    std::string kind = "toy";  // "toy" | "manifest"
    // toy
    ToyCorpusSpec toy{28, 90, 0.3, 0};
    // manifest
    std::string manifest_path;
    std::string base_dir;
};

struct SplitConfig {
    double test_fraction = 2.0 / 3.0;
};

struct GanStageConfig {
    std::string preset = "desk";  // "desk" | "full"
    GanHyper hyper{64, 0.0002, 0.5, 300};
    bool freeze_audit = true;
    // when set, replaces the derived GAN stage seed; the other stages keep
    // their master-derived seeds, so the baseline arm is untouched
    std::optional<std::uint64_t> seed_override;
};

struct ClassifierStageConfig {
    std::string preset = "desk";
    ClassifierTrainConfig train;  // batch 16, lr 0.001, beta1 0.9, epochs 25
    bool freeze_backbone = false;
    std::string weights_path;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    CorpusConfig corpus;
    int dedup_threshold = 0;
    SplitConfig split;
    GanStageConfig gan;
    ClassifierStageConfig classifier;
    std::array<std::size_t, kNumClasses> synthetic_per_class = {60, 60};
    std::size_t pca_components = 2;

    std::size_t resolution() const {
        return corpus.kind == "toy" ? corpus.toy.resolution : 28;
    }
};

inline nlohmann::json experiment_config_json(const ExperimentConfig& c) {
    nlohmann::json corpus;
    if (c.corpus.kind == "toy") {
        corpus = {{"kind", "toy"},
                  {"resolution", c.corpus.toy.resolution},
                  {"per_class", c.corpus.toy.per_class},
                  {"noise", c.corpus.toy.noise}};
    } else {
        corpus = {{"kind", "manifest"},
                  {"path", c.corpus.manifest_path},
                  {"base_dir", c.corpus.base_dir}};
    }
    return {{"schema_version", 1},
            {"seed", c.seed},
            {"corpus", corpus},
            {"dedup_threshold", c.dedup_threshold},
            {"split", {{"test_fraction", c.split.test_fraction}}},
            {"gan",
             {{"preset", c.gan.preset},
              {"hyper", gan_hyper_json(c.gan.hyper)},
              {"freeze_audit", c.gan.freeze_audit},
              {"seed_override",
               c.gan.seed_override ? nlohmann::json(*c.gan.seed_override) : nlohmann::json()}}},
            {"classifier",
             {{"preset", c.classifier.preset},
              {"batch", c.classifier.train.batch},
              {"epochs", c.classifier.train.epochs},
              {"learning_rate", c.classifier.train.adam.learning_rate},
              {"beta1", c.classifier.train.adam.beta1},
              {"freeze_backbone", c.classifier.freeze_backbone},
              {"weights_path", c.classifier.weights_path}}},
            {"synthetic_per_class", c.synthetic_per_class},
            {"pca_components", c.pca_components}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    if (j.value("schema_version", 0) != 1)
        throw ValueError("unsupported experiment schema_version; expected 1");
    ExperimentConfig c;
    c.seed = j.value("seed", std::uint64_t(0));
    const auto& corpus = j.at("corpus");
    c.corpus.kind = corpus.at("kind").get<std::string>();
    if (c.corpus.kind == "toy") {
        c.corpus.toy.resolution = corpus.value("resolution", std::size_t(28));
        c.corpus.toy.per_class = corpus.value("per_class", std::size_t(90));
        c.corpus.toy.noise = corpus.value("noise", 0.3);
    } else if (c.corpus.kind == "manifest") {
        c.corpus.manifest_path = corpus.at("path").get<std::string>();
        c.corpus.base_dir = corpus.value("base_dir", std::string());
    } else {
        throw ValueError("corpus.kind must be toy or manifest");
    }
    c.dedup_threshold = j.value("dedup_threshold", 0);
    if (j.contains("split")) c.split.test_fraction = j.at("split").value("test_fraction", 2.0 / 3.0);
    if (j.contains("gan")) {
        const auto& g = j.at("gan");
        c.gan.preset = g.value("preset", std::string("desk"));
        if (g.contains("hyper")) c.gan.hyper = gan_hyper_from_json(g.at("hyper"));
        c.gan.freeze_audit = g.value("freeze_audit", true);
        if (g.contains("seed_override") && !g.at("seed_override").is_null())
            c.gan.seed_override = g.at("seed_override").get<std::uint64_t>();
    }
    if (j.contains("classifier")) {
        const auto& k = j.at("classifier");
        c.classifier.preset = k.value("preset", std::string("desk"));
        c.classifier.train.batch = k.value("batch", std::size_t(16));
        c.classifier.train.epochs = k.value("epochs", std::size_t(25));
        c.classifier.train.adam.learning_rate = k.value("learning_rate", 0.001);
        c.classifier.train.adam.beta1 = k.value("beta1", 0.9);
        c.classifier.freeze_backbone = k.value("freeze_backbone", false);
        c.classifier.weights_path = k.value("weights_path", std::string());
    }
    if (j.contains("synthetic_per_class")) {
        auto v = j.at("synthetic_per_class").get<std::vector<std::size_t>>();
        if (v.size() != kNumClasses) throw ValueError("synthetic_per_class needs one count per class");
        std::copy(v.begin(), v.end(), c.synthetic_per_class.begin());
    }
    c.pca_components = j.value("pca_components", std::size_t(2));
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValueError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValueError("config " + path + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

// -- run index --------------------------------------------------------------------

inline std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot hash missing file: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
        EVP_DigestUpdate(ctx, buf, std::size_t(is.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

// Tracks which stage produced each file and writes index.json at the end.
class RunIndex {
public:
    explicit RunIndex(fs::path root) : root_(std::move(root)) {}

    void note(const fs::path& path, const std::string& stage) {
        produced_[fs::relative(path, root_).generic_string()] = stage;
    }

    // every file under the run directory must have a producer on record
    void write() const {
        nlohmann::json index = nlohmann::json::object();
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(root_))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::string rel = fs::relative(f, root_).generic_string();
            if (rel == "index.json") continue;
            auto it = produced_.find(rel);
            if (it == produced_.end())
                throw FormatError("file " + rel + " was written outside the run index");
            index[rel] = {{"sha256", sha256_file(f.string())},
                          {"bytes", fs::file_size(f)},
                          {"stage", it->second}};
        }
        std::ofstream os(root_ / "index.json");
        os << index.dump(2) << "\n";
    }

private:
    fs::path root_;
    std::map<std::string, std::string> produced_;
};

// -- experiment -------------------------------------------------------------------

struct ArmResult {
    SummaryReport report;
    std::vector<EpochStats> history;
};

struct ExperimentResult {
    ArmResult baseline;   // CNN-AD: actual data only
    ArmResult augmented;  // CNN-SA: actual + synthetic
    double fidelity = 0;  // probe-free proxy: fraction of synthetic samples the
                          // baseline assigns to their requested class
    double same_class_centroid_gap = 0;
    double cross_class_centroid_gap = 0;
};

namespace detail_exp {

inline BackboneConfig backbone_for(const ClassifierStageConfig& cfg, std::size_t resolution) {
    BackboneConfig bb = cfg.preset == "full" ? BackboneConfig::full() : BackboneConfig::desk();
    bb.input_resolution = resolution;
    bb.weights_path = cfg.weights_path;
    return bb;
}

inline std::pair<GeneratorConfig, DiscriminatorConfig> gan_for(const GanStageConfig& cfg,
                                                               std::size_t resolution) {
    GeneratorConfig g = cfg.preset == "full" ? GeneratorConfig::full() : GeneratorConfig::desk();
    DiscriminatorConfig d =
        cfg.preset == "full" ? DiscriminatorConfig::full() : DiscriminatorConfig::desk();
    if (g.resolution != resolution)
        throw ValueError("gan preset resolution " + std::to_string(g.resolution) +
                         " does not match corpus resolution " + std::to_string(resolution));
    return {g, d};
}

inline Tensor<float> one_hot(const std::vector<std::size_t>& labels) {
    Tensor<float> y({labels.size(), kNumClasses});
    for (std::size_t i = 0; i < labels.size(); ++i) y.at2(i, labels[i]) = 1.0f;
    return y;
}

inline std::vector<ImageRecord> select_records(const std::vector<ImageRecord>& records,
                                               const std::vector<std::string>& ids) {
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;
    std::vector<ImageRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(*by_id.at(id));
    return out;
}

inline void write_predictions_csv(const std::string& path, const std::vector<ImageRecord>& records,
                                  const std::vector<std::size_t>& predicted) {
    std::ofstream os(path);
    os << "id,true_label,predicted_label\n";
    for (std::size_t i = 0; i < records.size(); ++i)
        os << records[i].id << ',' << label_name(records[i].label) << ','
           << label_name(predicted[i]) << "\n";
}

}  // namespace detail_exp

// Full pipeline. Stage seeds derive from the master seed by name; the
// classifier stage seed is shared by both arms so a zero-synthetic run
// reproduces the baseline bit-for-bit, and the GAN seed never perturbs the
// baseline arm.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                       Logger& log) {
    const fs::path out(out_dir);
    fs::create_directories(out / "logs");
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "reports");
    fs::create_directories(out / "features");
    fs::create_directories(out / "predictions");
    RunIndex index(out);
    log.open_file((out / "logs" / "run.log").string());

    {
        std::ofstream os(out / "config.json");
        os << experiment_config_json(cfg).dump(2) << "\n";
        index.note(out / "config.json", "config");
        index.note(out / "logs" / "run.log", "log");
    }

    // ---- stage 1: corpus, dedup, split
    log.info("stage corpus: building records");
    std::vector<ImageRecord> records;
    if (cfg.corpus.kind == "toy") {
        ToyCorpusSpec spec = cfg.corpus.toy;
        spec.seed = derive_seed(cfg.seed, "corpus");
        records = gen_toy_corpus(spec);
        auto manifest = export_records(records, (out / "corpus").string());
        for (const auto& e : manifest.entries) index.note(out / "corpus" / e.path, "corpus");
        index.note(out / "corpus" / "manifest.json", "corpus");
    } else {
        auto manifest = load_manifest(cfg.corpus.manifest_path);
        std::string base = cfg.corpus.base_dir.empty()
                               ? fs::path(cfg.corpus.manifest_path).parent_path().string()
                               : cfg.corpus.base_dir;
        IngestReport report;
        records = ingest(manifest, base, &report);
        log.info("ingested " + std::to_string(report.total) + " records (" +
                 std::to_string(report.class_counts[0]) + "/" +
                 std::to_string(report.class_counts[1]) + ")");
    }

    std::vector<DedupRemoval> removals;
    records = dedup(records, cfg.dedup_threshold, &removals);
    save_dedup_report((out / "dedup_report.json").string(), removals);
    index.note(out / "dedup_report.json", "dedup");
    log.info("dedup removed " + std::to_string(removals.size()) + " records, kept " +
             std::to_string(records.size()));

    SplitSpec split_spec = split(records, cfg.split.test_fraction, derive_seed(cfg.seed, "split"));
    save_split((out / "split.json").string(), split_spec);
    index.note(out / "split.json", "split");

    auto train_records = detail_exp::select_records(records, split_spec.train_ids);
    auto test_records = detail_exp::select_records(records, split_spec.test_ids);
    log.info("split: " + std::to_string(train_records.size()) + " train / " +
             std::to_string(test_records.size()) + " test");

    const std::size_t resolution = cfg.resolution();
    auto train_unit = preprocess(train_records, resolution, resolution, PixelRange::Unit);
    auto test_unit = preprocess(test_records, resolution, resolution, PixelRange::Unit);
    std::vector<std::size_t> train_labels, test_labels;
    for (const auto& r : train_records) train_labels.push_back(r.label);
    for (const auto& r : test_records) test_labels.push_back(r.label);

    // ---- stage 2: baseline classifier (actual data)
    log.info("stage clf-ad: training baseline classifier");
    const std::uint64_t clf_seed = derive_seed(cfg.seed, "classifier");
    auto bb = detail_exp::backbone_for(cfg.classifier, resolution);
    Classifier clf_ad = build_classifier(bb, HeadConfig{}, cfg.classifier.freeze_backbone, clf_seed);
    ClassifierTrainConfig tc = cfg.classifier.train;
    tc.seed = clf_seed;
    ExperimentResult result;
    result.baseline.history = train_classifier(clf_ad, train_unit, detail_exp::one_hot(train_labels), tc);
    save_history_csv((out / "checkpoints" / "clf_ad_history.csv").string(), result.baseline.history);
    index.note(out / "checkpoints" / "clf_ad_history.csv", "clf-ad");
    save_classifier_checkpoint((out / "checkpoints" / "clf_ad.cgw1").string(), clf_ad);
    index.note(out / "checkpoints" / "clf_ad.cgw1", "clf-ad");
    index.note(out / "checkpoints" / "clf_ad.cgw1.json", "clf-ad");

    // ---- stage 3: GAN on the real training split
    const std::size_t total_synthetic = cfg.synthetic_per_class[0] + cfg.synthetic_per_class[1];
    GanModel gan_model;
    if (total_synthetic > 0) {
        log.info("stage gan: training on the real training split");
        auto [gcfg, dcfg] = detail_exp::gan_for(cfg.gan, resolution);
        const std::uint64_t gan_seed =
            cfg.gan.seed_override ? *cfg.gan.seed_override : derive_seed(cfg.seed, "gan");
        gan_model = build_gan(gcfg, dcfg, gan_seed);
        GanTrainState state = init_train_state(gan_model, cfg.gan.hyper, gan_seed);
        auto train_sym = preprocess(train_records, resolution, resolution, PixelRange::Symmetric);
        train_gan(gan_model, state, train_sym, train_labels, cfg.gan.hyper, cfg.gan.hyper.epochs,
                  cfg.gan.freeze_audit);
        save_gan_checkpoint((out / "checkpoints" / "gan.cgw1").string(), gan_model, state,
                            cfg.gan.hyper);
        index.note(out / "checkpoints" / "gan.cgw1", "gan");
        index.note(out / "checkpoints" / "gan.cgw1.json", "gan");
        index.note(out / "checkpoints" / "gan.cgw1.losses.csv", "gan");
    }

    // ---- stage 4: synthesize augments
    std::vector<std::size_t> synthetic_labels;
    for (std::size_t c = 0; c < kNumClasses; ++c)
        synthetic_labels.insert(synthetic_labels.end(), cfg.synthetic_per_class[c], c);
    Tensor<float> synthetic_sym;
    if (total_synthetic > 0) {
        log.info("stage generate: " + std::to_string(total_synthetic) + " synthetic samples");
        synthetic_sym = generate(gan_model, synthetic_labels, derive_seed(cfg.seed, "generate"));
        auto manifest = export_synthetic(synthetic_sym, synthetic_labels, (out / "synthetic").string());
        for (const auto& e : manifest.entries) index.note(out / "synthetic" / e.path, "generate");
        index.note(out / "synthetic" / "manifest.json", "generate");
    }

    // ---- stage 5: augmented classifier (actual + synthetic)
    log.info("stage clf-sa: training augmented classifier");
    Classifier clf_sa = build_classifier(bb, HeadConfig{}, cfg.classifier.freeze_backbone, clf_seed);
    {
        Tensor<float> combined = train_unit;
        std::vector<std::size_t> combined_labels = train_labels;
        if (total_synthetic > 0) {
            combined = Tensor<float>({train_unit.dim(0) + total_synthetic, resolution, resolution, 3});
            std::copy_n(train_unit.data(), train_unit.numel(), combined.data());
            // symmetric [-1,1] -> unit [0,1]
            for (std::size_t i = 0; i < synthetic_sym.numel(); ++i)
                combined[train_unit.numel() + i] = (synthetic_sym[i] + 1.0f) * 0.5f;
            combined_labels.insert(combined_labels.end(), synthetic_labels.begin(),
                                   synthetic_labels.end());
        }
        result.augmented.history =
            train_classifier(clf_sa, combined, detail_exp::one_hot(combined_labels), tc);
    }
    save_history_csv((out / "checkpoints" / "clf_sa_history.csv").string(), result.augmented.history);
    index.note(out / "checkpoints" / "clf_sa_history.csv", "clf-sa");
    save_classifier_checkpoint((out / "checkpoints" / "clf_sa.cgw1").string(), clf_sa);
    index.note(out / "checkpoints" / "clf_sa.cgw1", "clf-sa");
    index.note(out / "checkpoints" / "clf_sa.cgw1.json", "clf-sa");

    // ---- stage 6: evaluate both arms on the identical all-real test set
    log.info("stage evaluate: " + std::to_string(test_records.size()) + " held-out real samples");
    std::set<std::string> test_ids(split_spec.test_ids.begin(), split_spec.test_ids.end());
    for (std::size_t i = 0; i < synthetic_labels.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "synthetic-class%zu-%05zu.png", synthetic_labels[i], i);
        if (test_ids.count(name))
            throw TrainingError("test-set purity violated: synthetic id in evaluation set");
    }
    for (const auto& r : test_records)
        if (r.source == "synthetic")
            throw TrainingError("test-set purity violated: synthetic record in evaluation set");

    auto evaluate_arm = [&](Classifier& clf, const std::string& tag) {
        auto pred = predict(clf, test_unit);
        detail_exp::write_predictions_csv((out / "predictions" / (tag + ".csv")).string(),
                                          test_records, pred.labels);
        index.note(out / "predictions" / (tag + ".csv"), "evaluate");
        std::vector<std::string> predicted, truth;
        for (std::size_t i = 0; i < test_records.size(); ++i) {
            predicted.push_back(label_name(pred.labels[i]));
            truth.push_back(label_name(test_records[i].label));
        }
        auto cm = confusion(predicted, truth, label_name(0), label_name(1));
        auto report = compute_metrics(cm);
        for (auto format : {ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json}) {
            const char* ext = format == ReportFormat::Markdown ? ".md"
                              : format == ReportFormat::Csv    ? ".csv"
                                                               : ".json";
            std::ofstream os(out / "reports" / (tag + ext));
            os << render_report(report, format);
            index.note(out / "reports" / (tag + ext), "evaluate");
        }
        return report;
    };
    result.baseline.report = evaluate_arm(clf_ad, "cnn_ad");
    result.augmented.report = evaluate_arm(clf_sa, "cnn_sa");

    // ---- stage 7: features of real + synthetic samples, PCA scatter
    log.info("stage pca: projecting features");
    {
        std::vector<ImageRecord> feature_records = train_records;
        Tensor<float> feature_images = train_unit;
        std::vector<std::string> origins(train_records.size(), "real");
        if (total_synthetic > 0) {
            feature_images =
                Tensor<float>({train_unit.dim(0) + total_synthetic, resolution, resolution, 3});
            std::copy_n(train_unit.data(), train_unit.numel(), feature_images.data());
            for (std::size_t i = 0; i < synthetic_sym.numel(); ++i)
                feature_images[train_unit.numel() + i] = (synthetic_sym[i] + 1.0f) * 0.5f;
        }
        auto feats = extract_features(clf_sa, feature_images);
        FeatureMatrix fm;
        fm.rows = feats.dim(0);
        fm.cols = feats.dim(1);
        fm.values.assign(feats.data(), feats.data() + feats.numel());
        for (std::size_t i = 0; i < train_records.size(); ++i)
            fm.meta.push_back({train_records[i].id, label_name(train_records[i].label), "real"});
        for (std::size_t i = 0; i < synthetic_labels.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "synthetic-class%zu-%05zu.png", synthetic_labels[i], i);
            fm.meta.push_back({name, label_name(synthetic_labels[i]), "synthetic"});
        }
        save_features_csv((out / "features" / "features.csv").string(), fm);
        index.note(out / "features" / "features.csv", "pca");

        StandardizationParams sp;
        auto z = standardize(fm, sp);
        auto pairs = eigen_decompose(covariance(z));
        auto scores = project(z, pairs, std::max<std::size_t>(cfg.pca_components, 2));
        write_scatter_csv((out / "features" / "scatter.csv").string(), scores);
        index.note(out / "features" / "scatter.csv", "pca");
        write_scatter_svg((out / "features" / "scatter.svg").string(), scores);
        index.note(out / "features" / "scatter.svg", "pca");

        if (total_synthetic > 0) {
            // centroid gaps in score space: same class real vs synthetic,
            // versus cross-class real centroids
            std::map<std::string, std::array<double, 2>> centroid;
            std::map<std::string, std::size_t> count;
            for (std::size_t r = 0; r < scores.rows; ++r) {
                const std::string key = scores.meta[r].label + "/" + scores.meta[r].origin;
                centroid[key][0] += scores.at(r, 0);
                centroid[key][1] += scores.at(r, 1);
                count[key]++;
            }
            for (auto& [key, c] : centroid) {
                c[0] /= double(count[key]);
                c[1] /= double(count[key]);
            }
            auto dist = [&](const std::string& a, const std::string& b) {
                const double dx = centroid[a][0] - centroid[b][0];
                const double dy = centroid[a][1] - centroid[b][1];
                return std::sqrt(dx * dx + dy * dy);
            };
            const std::string c0 = label_name(0), c1 = label_name(1);
            result.same_class_centroid_gap = 0.5 * (dist(c0 + "/real", c0 + "/synthetic") +
                                                    dist(c1 + "/real", c1 + "/synthetic"));
            result.cross_class_centroid_gap = 0.5 * (dist(c0 + "/real", c1 + "/synthetic") +
                                                     dist(c1 + "/real", c0 + "/synthetic"));
        }

        // conditioning proxy: the baseline classifier's view of the augments
        if (total_synthetic > 0) {
            Tensor<float> synth_unit({total_synthetic, resolution, resolution, 3});
            for (std::size_t i = 0; i < synthetic_sym.numel(); ++i)
                synth_unit[i] = (synthetic_sym[i] + 1.0f) * 0.5f;
            auto pred = predict(clf_ad, synth_unit);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < synthetic_labels.size(); ++i)
                hits += pred.labels[i] == synthetic_labels[i];
            result.fidelity = double(hits) / double(total_synthetic);
        }
    }

    // ---- stage 8: side-by-side comparison report
    log.info("stage report: comparison");
    {
        nlohmann::json comparison{{"schema_version", 1},
                                  {"arms",
                                   {{"cnn_ad", report_to_json(result.baseline.report)},
                                    {"cnn_sa", report_to_json(result.augmented.report)}}},
                                  {"synthetic_fidelity", result.fidelity},
                                  {"centroid_gap",
                                   {{"same_class", result.same_class_centroid_gap},
                                    {"cross_class", result.cross_class_centroid_gap}}}};
        std::ofstream js(out / "reports" / "comparison.json");
        js << comparison.dump(2) << "\n";
        index.note(out / "reports" / "comparison.json", "report");

        std::ofstream md(out / "reports" / "comparison.md");
        md << "# Actual data vs synthetic augmentation\n\n";
        md << "## CNN-AD (actual data)\n\n"
           << render_report(result.baseline.report, ReportFormat::Markdown) << "\n";
        md << "## CNN-SA (actual + synthetic augmentation)\n\n"
           << render_report(result.augmented.report, ReportFormat::Markdown) << "\n";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "accuracy: %.4f -> %.4f\n", result.baseline.report.accuracy,
                      result.augmented.report.accuracy);
        md << buf;
        index.note(out / "reports" / "comparison.md", "report");
    }

    index.write();
    log.info("run complete");
    return result;
}

}  // namespace synthaug
