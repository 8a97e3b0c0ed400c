// synthaug command-line interface: dataset plumbing, GAN and classifier
// training, evaluation, PCA and the end-to-end augmentation experiment.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "synthaug/experiment.hpp"

using namespace synthaug;
namespace fs = std::filesystem;

namespace {

Logger g_log;

struct CommonOpts {
    std::string out = "run";
    std::uint64_t seed = 0;
    std::string log_level = "info";
    std::string config_path;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = false) {
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--seed", opts.seed, "master seed");
    cmd->add_option("--log-level", opts.log_level, "error|warn|info|debug");
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config JSON");
    if (needs_config) c->required();
}

void apply_log_level(const CommonOpts& opts) {
    const char* env = std::getenv("SYNTHAUG_LOG");
    g_log.set_level(parse_log_level(env ? env : opts.log_level));
}

ExperimentConfig config_for(const CommonOpts& opts, bool seed_given) {
    ExperimentConfig cfg = load_experiment_config(opts.config_path);
    if (seed_given) cfg.seed = opts.seed;  // flags override file values
    return cfg;
}

std::vector<ImageRecord> corpus_records(const ExperimentConfig& cfg) {
    if (cfg.corpus.kind == "toy") {
        ToyCorpusSpec spec = cfg.corpus.toy;
        spec.seed = derive_seed(cfg.seed, "corpus");
        return gen_toy_corpus(spec);
    }
    auto manifest = load_manifest(cfg.corpus.manifest_path);
    std::string base = cfg.corpus.base_dir.empty()
                           ? fs::path(cfg.corpus.manifest_path).parent_path().string()
                           : cfg.corpus.base_dir;
    return ingest(manifest, base);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-augmentation pipeline: conditional GAN, CNN classifier, evaluation"};
    app.require_subcommand(1);

    // ---- ingest
    auto ingest_cmd = app.add_subcommand("ingest", "load a manifest and report class counts");
    CommonOpts ingest_opts;
    std::string ingest_manifest, ingest_base;
    ingest_cmd->add_option("--manifest", ingest_manifest, "manifest JSON")->required();
    ingest_cmd->add_option("--base-dir", ingest_base, "base directory for relative paths");
    add_common(ingest_cmd, ingest_opts);

    // ---- dedup
    auto dedup_cmd = app.add_subcommand("dedup", "remove near-duplicate images by average hash");
    CommonOpts dedup_opts;
    std::string dedup_manifest, dedup_base;
    int dedup_threshold = 0;
    dedup_cmd->add_option("--manifest", dedup_manifest, "manifest JSON")->required();
    dedup_cmd->add_option("--base-dir", dedup_base, "base directory for relative paths");
    dedup_cmd->add_option("--threshold", dedup_threshold, "Hamming distance threshold (default 0)");
    add_common(dedup_cmd, dedup_opts);

    // ---- toy-gen
    auto toy_cmd = app.add_subcommand("toy-gen", "generate the procedural toy corpus");
    CommonOpts toy_opts;
    std::size_t toy_per_class = 50, toy_res = 32;
    double toy_noise = 0.1;
    toy_cmd->add_option("--per-class", toy_per_class, "samples per class");
    toy_cmd->add_option("--res", toy_res, "image resolution");
    toy_cmd->add_option("--noise", toy_noise, "noise level in [0,1]");
    add_common(toy_cmd, toy_opts);

    // ---- split
    auto split_cmd = app.add_subcommand("split", "stratified train/test split");
    CommonOpts split_opts;
    std::string split_manifest, split_base;
    double split_fraction = 0.2;
    std::vector<std::size_t> split_counts_opt;
    split_cmd->add_option("--manifest", split_manifest, "manifest JSON")->required();
    split_cmd->add_option("--base-dir", split_base, "base directory for relative paths");
    split_cmd->add_option("--test-fraction", split_fraction, "test fraction per class");
    split_cmd->add_option("--test-counts", split_counts_opt,
                          "explicit per-class test counts (covid normal)");
    add_common(split_cmd, split_opts);

    // ---- train-gan
    auto tg_cmd = app.add_subcommand("train-gan", "train the conditional GAN on the config corpus");
    CommonOpts tg_opts;
    add_common(tg_cmd, tg_opts, true);

    // ---- generate
    auto gen_cmd = app.add_subcommand("generate", "sample synthetic images from a GAN checkpoint");
    CommonOpts gen_opts;
    std::string gen_checkpoint;
    std::vector<std::size_t> gen_counts = {10, 10};
    bool gen_paper_counts = false;
    gen_cmd->add_option("--checkpoint", gen_checkpoint, "GAN checkpoint (CGW1)")->required();
    gen_cmd->add_option("--per-class", gen_counts, "counts per class (covid normal)");
    gen_cmd->add_flag("--paper-counts", gen_paper_counts, "use the published 1669/1399 counts");
    add_common(gen_cmd, gen_opts);

    // ---- train-clf
    auto tc_cmd = app.add_subcommand("train-clf", "train the classifier on the config corpus");
    CommonOpts tc_opts;
    std::string tc_augment;
    tc_cmd->add_option("--augment", tc_augment, "manifest of synthetic images to mix in");
    add_common(tc_cmd, tc_opts, true);

    // ---- evaluate
    auto eval_cmd = app.add_subcommand("evaluate", "confusion metrics from a prediction dump");
    CommonOpts eval_opts;
    std::string eval_pred, eval_positive = "COVID-CXR", eval_negative = "Normal-CXR";
    eval_cmd->add_option("--pred", eval_pred, "prediction CSV (id,true_label,predicted_label)")
        ->required();
    eval_cmd->add_option("--positive", eval_positive, "positive class label");
    eval_cmd->add_option("--negative", eval_negative, "negative class label");
    add_common(eval_cmd, eval_opts);

    // ---- pca
    auto pca_cmd = app.add_subcommand("pca", "project a feature dump onto principal components");
    CommonOpts pca_opts;
    std::string pca_features;
    std::size_t pca_k = 2;
    bool pca_svg = false;
    pca_cmd->add_option("--features", pca_features, "feature CSV from the classifier")->required();
    pca_cmd->add_option("--components", pca_k, "number of components (default 2)");
    pca_cmd->add_flag("--svg", pca_svg, "also write a scatter SVG");
    add_common(pca_cmd, pca_opts);

    // ---- report
    auto rep_cmd = app.add_subcommand("report", "re-render a stored summary report");
    CommonOpts rep_opts;
    std::string rep_summary, rep_format = "markdown";
    rep_cmd->add_option("--summary", rep_summary, "summary report JSON")->required();
    rep_cmd->add_option("--format", rep_format, "markdown|csv|json");
    add_common(rep_cmd, rep_opts);

    // ---- experiment
    auto exp_cmd = app.add_subcommand("experiment", "run the full augmentation comparison");
    CommonOpts exp_opts;
    add_common(exp_cmd, exp_opts, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*ingest_cmd) {
            apply_log_level(ingest_opts);
            auto manifest = load_manifest(ingest_manifest);
            std::string base = ingest_base.empty()
                                   ? fs::path(ingest_manifest).parent_path().string()
                                   : ingest_base;
            IngestReport report;
            ingest(manifest, base, &report);
            fs::create_directories(ingest_opts.out);
            nlohmann::json j{{"total", report.total},
                             {"class_counts",
                              {{label_name(0), report.class_counts[0]},
                               {label_name(1), report.class_counts[1]}}}};
            std::ofstream os(fs::path(ingest_opts.out) / "ingest_report.json");
            os << j.dump(2) << "\n";
            std::cout << j.dump(2) << "\n";
        } else if (*dedup_cmd) {
            apply_log_level(dedup_opts);
            auto manifest = load_manifest(dedup_manifest);
            std::string base = dedup_base.empty() ? fs::path(dedup_manifest).parent_path().string()
                                                  : dedup_base;
            auto records = ingest(manifest, base);
            std::vector<DedupRemoval> removals;
            auto kept = dedup(records, dedup_threshold, &removals);
            fs::create_directories(dedup_opts.out);
            save_dedup_report((fs::path(dedup_opts.out) / "dedup_report.json").string(), removals);
            DatasetManifest kept_manifest;
            std::map<std::string, const ManifestEntry*> by_path;
            for (const auto& e : manifest.entries) by_path[e.path] = &e;
            for (const auto& r : kept) kept_manifest.entries.push_back(*by_path.at(r.id));
            save_manifest((fs::path(dedup_opts.out) / "manifest.json").string(), kept_manifest);
            g_log.info("kept " + std::to_string(kept.size()) + ", removed " +
                       std::to_string(removals.size()));
        } else if (*toy_cmd) {
            apply_log_level(toy_opts);
            auto records = gen_toy_corpus({toy_res, toy_per_class, toy_noise, toy_opts.seed});
            export_records(records, toy_opts.out);
            g_log.info("wrote " + std::to_string(records.size()) + " images to " + toy_opts.out);
        } else if (*split_cmd) {
            apply_log_level(split_opts);
            auto manifest = load_manifest(split_manifest);
            std::string base = split_base.empty() ? fs::path(split_manifest).parent_path().string()
                                                  : split_base;
            auto records = ingest(manifest, base);
            SplitSpec spec;
            if (!split_counts_opt.empty()) {
                if (split_counts_opt.size() != kNumClasses)
                    throw ValueError("--test-counts needs one count per class");
                spec = split_counts(records, {split_counts_opt[0], split_counts_opt[1]},
                                    split_opts.seed);
            } else {
                spec = split(records, split_fraction, split_opts.seed);
            }
            fs::create_directories(split_opts.out);
            save_split((fs::path(split_opts.out) / "split.json").string(), spec);
            g_log.info("train " + std::to_string(spec.train_ids.size()) + " / test " +
                       std::to_string(spec.test_ids.size()));
        } else if (*tg_cmd) {
            apply_log_level(tg_opts);
            ExperimentConfig cfg = config_for(tg_opts, tg_cmd->count("--seed") > 0);
            auto records = corpus_records(cfg);
            std::vector<DedupRemoval> removals;
            records = dedup(records, cfg.dedup_threshold, &removals);
            auto spec = split(records, cfg.split.test_fraction, derive_seed(cfg.seed, "split"));
            std::map<std::string, const ImageRecord*> by_id;
            for (const auto& r : records) by_id[r.id] = &r;
            std::vector<ImageRecord> train;
            for (const auto& id : spec.train_ids) train.push_back(*by_id.at(id));
            const std::size_t res = cfg.resolution();
            auto images = preprocess(train, res, res, PixelRange::Symmetric);
            std::vector<std::size_t> labels;
            for (const auto& r : train) labels.push_back(r.label);

            auto [gcfg, dcfg] = cfg.gan.preset == "full"
                                    ? std::pair{GeneratorConfig::full(), DiscriminatorConfig::full()}
                                    : std::pair{GeneratorConfig::desk(), DiscriminatorConfig::desk()};
            const std::uint64_t gan_seed = derive_seed(cfg.seed, "gan");
            GanModel model = build_gan(gcfg, dcfg, gan_seed);
            GanTrainState state = init_train_state(model, cfg.gan.hyper, gan_seed);
            g_log.info("training GAN for " + std::to_string(cfg.gan.hyper.epochs) + " epochs on " +
                       std::to_string(train.size()) + " images");
            train_gan(model, state, images, labels, cfg.gan.hyper, cfg.gan.hyper.epochs,
                      cfg.gan.freeze_audit);
            fs::create_directories(fs::path(tg_opts.out) / "checkpoints");
            save_gan_checkpoint((fs::path(tg_opts.out) / "checkpoints" / "gan.cgw1").string(), model,
                                state, cfg.gan.hyper);
            g_log.info("checkpoint written");
        } else if (*gen_cmd) {
            apply_log_level(gen_opts);
            auto cp = load_gan_checkpoint(gen_checkpoint);
            std::vector<std::size_t> labels;
            if (gen_paper_counts) {
                labels = paper_generation_labels();
            } else {
                if (gen_counts.size() != kNumClasses)
                    throw ValueError("--per-class needs one count per class");
                for (std::size_t c = 0; c < kNumClasses; ++c)
                    labels.insert(labels.end(), gen_counts[c], c);
            }
            auto images = generate(cp.model, labels, derive_seed(gen_opts.seed, "generate"));
            export_synthetic(images, labels, gen_opts.out);
            g_log.info("wrote " + std::to_string(labels.size()) + " synthetic images");
        } else if (*tc_cmd) {
            apply_log_level(tc_opts);
            ExperimentConfig cfg = config_for(tc_opts, tc_cmd->count("--seed") > 0);
            auto records = corpus_records(cfg);
            std::vector<DedupRemoval> removals;
            records = dedup(records, cfg.dedup_threshold, &removals);
            auto spec = split(records, cfg.split.test_fraction, derive_seed(cfg.seed, "split"));
            std::map<std::string, const ImageRecord*> by_id;
            for (const auto& r : records) by_id[r.id] = &r;
            std::vector<ImageRecord> train;
            for (const auto& id : spec.train_ids) train.push_back(*by_id.at(id));
            if (!tc_augment.empty()) {
                auto am = load_manifest(tc_augment);
                auto extra = ingest(am, fs::path(tc_augment).parent_path().string());
                train.insert(train.end(), extra.begin(), extra.end());
            }
            const std::size_t res = cfg.resolution();
            auto images = preprocess(train, res, res, PixelRange::Unit);
            Tensor<float> onehot({train.size(), kNumClasses});
            for (std::size_t i = 0; i < train.size(); ++i) onehot.at2(i, train[i].label) = 1.0f;

            const std::uint64_t clf_seed = derive_seed(cfg.seed, "classifier");
            BackboneConfig bb =
                cfg.classifier.preset == "full" ? BackboneConfig::full() : BackboneConfig::desk();
            bb.input_resolution = res;
            bb.weights_path = cfg.classifier.weights_path;
            Classifier clf = build_classifier(bb, HeadConfig{}, cfg.classifier.freeze_backbone,
                                              clf_seed);
            ClassifierTrainConfig train_cfg = cfg.classifier.train;
            train_cfg.seed = clf_seed;
            g_log.info("training classifier on " + std::to_string(train.size()) + " images");
            auto history = train_classifier(clf, images, onehot, train_cfg);
            fs::create_directories(fs::path(tc_opts.out) / "checkpoints");
            save_classifier_checkpoint(
                (fs::path(tc_opts.out) / "checkpoints" / "classifier.cgw1").string(), clf);
            save_history_csv(
                (fs::path(tc_opts.out) / "checkpoints" / "classifier_history.csv").string(),
                history);
            g_log.info("final training accuracy " +
                       std::to_string(history.empty() ? 0.0 : history.back().accuracy));
        } else if (*eval_cmd) {
            apply_log_level(eval_opts);
            std::vector<std::string> ids, truth, predicted;
            load_prediction_csv(eval_pred, ids, truth, predicted);
            auto cm = confusion(predicted, truth, eval_positive, eval_negative);
            auto report = compute_metrics(cm);
            fs::create_directories(eval_opts.out);
            for (auto format : {ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json}) {
                const char* ext = format == ReportFormat::Markdown ? "report.md"
                                  : format == ReportFormat::Csv    ? "report.csv"
                                                                   : "report.json";
                std::ofstream os(fs::path(eval_opts.out) / ext);
                os << render_report(report, format);
            }
            std::cout << render_report(report, ReportFormat::Markdown);
        } else if (*pca_cmd) {
            apply_log_level(pca_opts);
            auto features = load_features_csv(pca_features);
            StandardizationParams sp;
            auto z = standardize(features, sp);
            if (sp.any_degenerate()) g_log.warn("degenerate (constant) feature columns were zeroed");
            auto pairs = eigen_decompose(covariance(z));
            auto scores = project(z, pairs, std::max<std::size_t>(pca_k, 2));
            fs::create_directories(pca_opts.out);
            write_scatter_csv((fs::path(pca_opts.out) / "scatter.csv").string(), scores);
            if (pca_svg) write_scatter_svg((fs::path(pca_opts.out) / "scatter.svg").string(), scores);
            g_log.info("projected " + std::to_string(scores.rows) + " rows");
        } else if (*rep_cmd) {
            apply_log_level(rep_opts);
            std::ifstream is(rep_summary);
            if (!is) throw ValueError("cannot open summary: " + rep_summary);
            nlohmann::json j;
            is >> j;
            auto report = report_from_json(j);
            ReportFormat format = rep_format == "csv"    ? ReportFormat::Csv
                                  : rep_format == "json" ? ReportFormat::Json
                                                         : ReportFormat::Markdown;
            std::cout << render_report(report, format);
        } else if (*exp_cmd) {
            apply_log_level(exp_opts);
            ExperimentConfig cfg = config_for(exp_opts, exp_cmd->count("--seed") > 0);
            auto result = run_experiment(cfg, exp_opts.out, g_log);
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "CNN-AD accuracy %.4f | CNN-SA accuracy %.4f | fidelity %.3f",
                          result.baseline.report.accuracy, result.augmented.report.accuracy,
                          result.fidelity);
            std::cout << buf << "\n";
        }
    } catch (const ValueError& e) {
        g_log.error(e.what());
        return 1;
    } catch (const DataError& e) {
        g_log.error(e.what());
        return 1;
    } catch (const MetricsError& e) {
        g_log.error(e.what());
        return 1;
    } catch (const PcaError& e) {
        g_log.error(e.what());
        return 1;
    } catch (const ShapeError& e) {
        g_log.error(e.what());
        return 1;
    } catch (const std::exception& e) {
        g_log.error(e.what());
        return 2;
    }
    return 0;
}
