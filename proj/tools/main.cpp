// Command-line front end: dataset preparation, training, and evaluation of the
// cycle-consistent feature-synthesis pipeline.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "zslfeat/dataset.hpp"
#include "zslfeat/evaluation.hpp"
#include "zslfeat/networks.hpp"
#include "zslfeat/textfeat.hpp"
#include "zslfeat/training.hpp"

namespace fs = std::filesystem;
using namespace zsl;

namespace {

Split parse_split_style(const Dataset& ds, const std::string& style, double unseen_fraction,
                        std::uint64_t seed) {
    SplitStyle s;
    if (style == "scs" || style == "SCS")
        s = SplitStyle::SCS;
    else if (style == "sce" || style == "SCE")
        s = SplitStyle::SCE;
    else
        throw CLI::ValidationError("--split-style", "must be scs or sce");
    return make_split(ds, s, unseen_fraction, seed);
}

std::vector<double> unseen_semantics(const Dataset& ds, const Split& split) {
    std::vector<double> out;
    out.reserve(split.unseen_classes.size() * ds.d_s);
    for (auto c : split.unseen_classes)
        out.insert(out.end(), ds.semantic_row(c), ds.semantic_row(c) + ds.d_s);
    return out;
}

double zsl_top1(const CheckpointView& view, const Dataset& ds, const Split& split,
                std::size_t per_class, std::size_t k, std::uint64_t seed) {
    SynthesizedBank bank = synthesize(view.spec, view.nets.g1, view.scaler,
                                      unseen_semantics(ds, split), split.unseen_classes, per_class,
                                      seed);
    ReferenceSet refs;
    refs.dim = bank.dim;
    for (std::size_t i = 0; i < bank.rows(); ++i) refs.append(bank.row(i), bank.label_of_row(i));

    std::vector<double> queries;
    std::vector<std::uint32_t> truth;
    for (std::size_t i = 0; i < ds.num_samples; ++i) {
        if (split.is_seen(ds.labels[i])) continue;
        queries.insert(queries.end(), ds.visual_row(i), ds.visual_row(i) + ds.d_v);
        truth.push_back(ds.labels[i]);
    }
    if (truth.empty()) throw std::runtime_error("no unseen-class samples in the dataset");
    return top1(knn_classify(refs, queries, k), truth);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

int run_prepare(const std::string& corpus_dir, const std::string& out_dir, std::size_t min_df,
                const std::string& visual_from) {
    Corpus corpus = load_corpus(corpus_dir);
    Vocabulary vocab = build_vocab(corpus, min_df);
    TfidfMatrix m = tfidf(corpus, vocab);

    Dataset ds;
    ds.num_classes = m.num_docs;
    ds.d_s = m.vocab_size;
    ds.semantic = m.values;
    ds.class_names = corpus.class_ids;

    if (!visual_from.empty()) {
        Dataset base = load_dataset(visual_from);
        if (base.num_classes != ds.num_classes)
            throw std::runtime_error("--visual-from dataset has " +
                                     std::to_string(base.num_classes) + " classes, corpus has " +
                                     std::to_string(ds.num_classes));
        ds.num_samples = base.num_samples;
        ds.d_v = base.d_v;
        ds.visual = base.visual;
        ds.labels = base.labels;
        if (base.has_super_class()) ds.super_class = base.super_class;
    }
    save_dataset(ds, out_dir);
    std::cout << "wrote " << out_dir << ": " << ds.num_classes << " classes, vocabulary "
              << m.vocab_size << ", samples " << ds.num_samples << "\n";
    return 0;
}

int run_synth_data(SynthConfig cfg, double noise_rel, const std::string& out_dir,
                   const std::string& split_out, const std::string& split_style,
                   double unseen_fraction, std::uint64_t split_seed) {
    if (noise_rel > 0.0) cfg.noise_scale = noise_rel * median_intermean_distance(cfg);
    Dataset ds = generate_synthetic(cfg);
    save_dataset(ds, out_dir);
    std::cout << "wrote " << out_dir << ": " << ds.num_classes << " classes, "
              << ds.num_samples << " samples, noise scale " << cfg.noise_scale << "\n";
    if (!split_out.empty()) {
        Split split = parse_split_style(ds, split_style, unseen_fraction, split_seed);
        save_split(split, split_out);
        std::cout << "wrote " << split_out << ": " << split.seen_classes.size() << " seen / "
                  << split.unseen_classes.size() << " unseen\n";
    }
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& split_path, const std::string& out_dir,
              const std::string& loss_csv, const std::string& resume_dir,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> iterations) {
    Dataset ds = load_dataset(data_dir);
    Split split = load_split(split_path);

    std::optional<Trainer> trainer;
    if (!resume_dir.empty()) {
        // resume keeps the stored config; --iterations only moves the horizon
        trainer.emplace(Trainer::load_checkpoint(resume_dir, ds, split));
    } else {
        TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
        if (seed) cfg.seed = *seed;
        if (iterations) cfg.iterations = *iterations;
        trainer.emplace(ds, split, cfg);
    }

    const std::size_t target = iterations ? *iterations : trainer->config().iterations;
    while (trainer->iteration() < target) {
        trainer->train_step();
        if (trainer->iteration() % 50 == 0 || trainer->iteration() == target) {
            const LossRow& r = trainer->history().back();
            std::fprintf(stderr, "iter %zu  d1 %.4f  g1 %.4f  d2 %.4f  g2 %.4f  cyc %.4f\n",
                         trainer->iteration(), r.d1, r.g1, r.d2, r.g2, r.cyc);
        }
    }
    trainer->save_checkpoint(out_dir);
    if (!loss_csv.empty()) trainer->write_loss_csv(loss_csv);
    std::cout << "trained " << trainer->iteration() << " iterations, checkpoint in " << out_dir
              << "\n";
    return 0;
}

int run_eval(const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split_path, std::size_t per_class, std::size_t k,
             std::uint64_t seed, const std::string& out_path, bool with_timing) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckpointView view = load_checkpoint_view(ckpt_dir);
    Dataset ds = load_dataset(data_dir);
    Split split = load_split(split_path);

    EvalReport report;
    report.top1_unseen = zsl_top1(view, ds, split, per_class, k, seed);
    report.config_hash = view.hash;
    report.seed = seed;
    if (with_timing) {
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const std::string json = report.to_json();
    if (out_path.empty())
        std::cout << json;
    else
        write_text_file(out_path, json);
    std::fprintf(stderr, "unseen top-1: %.4f\n", report.top1_unseen);
    return 0;
}

int run_gzsl(const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split_path, std::size_t per_class, std::size_t k,
             std::uint64_t seed, double holdout_fraction, std::uint64_t holdout_seed,
             const std::string& curve_out, const std::string& out_path, bool with_timing) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckpointView view = load_checkpoint_view(ckpt_dir);
    Dataset ds = load_dataset(data_dir);
    Split split = load_split(split_path);
    SamplePartition part = make_sample_partition(ds, split, holdout_fraction, holdout_seed);
    if (part.seen_test.empty())
        throw std::runtime_error("holdout fraction left no seen-class test samples");

    SynthesizedBank bank = synthesize(view.spec, view.nets.g1, view.scaler,
                                      unseen_semantics(ds, split), split.unseen_classes, per_class,
                                      seed);
    GzslScorer scorer = GzslScorer::build(ds, split, part.train, bank);
    auto grid = default_gamma_grid(scorer, ds, part.seen_test, part.unseen_test);
    SUCurve curve = su_curve(scorer, ds, part.seen_test, part.unseen_test, grid);

    EvalReport report;
    report.top1_unseen = zsl_top1(view, ds, split, per_class, k, seed);
    report.ausuc_value = ausuc(curve);
    report.curve = curve;
    report.config_hash = view.hash;
    report.seed = seed;
    if (with_timing) {
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (!curve_out.empty()) write_curve_csv(curve, curve_out);
    const std::string json = report.to_json();
    if (out_path.empty())
        std::cout << json;
    else
        write_text_file(out_path, json);
    std::fprintf(stderr, "ausuc: %.4f  unseen top-1: %.4f\n", report.ausuc_value,
                 report.top1_unseen);
    return 0;
}

int run_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& split_path, const std::vector<std::uint64_t>& seeds,
               std::size_t per_class, std::size_t k, const std::string& out_path) {
    Dataset ds = load_dataset(data_dir);
    Split split = load_split(split_path);
    TrainConfig base = config_path.empty() ? TrainConfig{} : load_train_config(config_path);

    const std::vector<std::pair<std::string, Ablation>> variants = {
        {"full", Ablation::Full},
        {"cyc_only", Ablation::CycOnly},
        {"adv_cyc", Ablation::AdvCyc},
        {"cla_cyc", Ablation::ClaCyc},
        {"single_gan", Ablation::SingleGan},
    };

    std::string table = "variant";
    for (auto s : seeds) table += ",seed_" + std::to_string(s);
    table += ",mean\n";

    for (const auto& [name, ablation] : variants) {
        double sum = 0.0;
        table += name;
        for (auto s : seeds) {
            TrainConfig cfg = base;
            cfg.ablation = ablation;
            cfg.seed = s;
            Trainer trainer(ds, split, cfg);
            trainer.run();
            trainer.save_checkpoint((fs::temp_directory_path() / "zslfeat_ablate_ckpt").string());
            CheckpointView view =
                load_checkpoint_view((fs::temp_directory_path() / "zslfeat_ablate_ckpt").string());
            const double acc = zsl_top1(view, ds, split, per_class, k, s);
            sum += acc;
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.4f", acc);
            table += buf;
            std::fprintf(stderr, "%s seed %llu: top-1 %.4f\n", name.c_str(),
                         static_cast<unsigned long long>(s), acc);
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), ",%.4f\n", sum / static_cast<double>(seeds.size()));
        table += buf;
    }
    fs::remove_all(fs::temp_directory_path() / "zslfeat_ablate_ckpt");

    if (out_path.empty())
        std::cout << table;
    else
        write_text_file(out_path, table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cycle-consistent adversarial feature synthesis for zero-shot learning"};
    app.require_subcommand(1);

    // prepare
    std::string corpus_dir, prepare_out, visual_from;
    std::size_t min_df = 1;
    auto* prepare = app.add_subcommand("prepare", "build a TF-IDF dataset from a text corpus");
    prepare->add_option("--corpus", corpus_dir, "directory of one UTF-8 text file per class")
        ->required();
    prepare->add_option("--out", prepare_out, "output dataset directory")->required();
    prepare->add_option("--min-df", min_df, "minimum document frequency for vocabulary tokens");
    prepare->add_option("--visual-from", visual_from,
                        "existing dataset whose visual features and labels are carried over");

    // synth-data
    SynthConfig synth_cfg;
    double noise_rel = 0.0, unseen_fraction = 0.3, split_seed_set = 0;
    std::string synth_out, split_out, split_style = "scs";
    std::uint64_t split_seed = 0;
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic benchmark dataset");
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--classes", synth_cfg.num_classes, "total class count");
    synth->add_option("--seen", synth_cfg.num_seen, "seen class count (must be < --classes)");
    synth->add_option("--samples-per-class", synth_cfg.samples_per_class, "samples per class");
    synth->add_option("--d-s", synth_cfg.d_s, "semantic dimensionality");
    synth->add_option("--d-v", synth_cfg.d_v, "visual dimensionality");
    synth->add_option("--noise-scale", synth_cfg.noise_scale, "absolute sample noise scale");
    synth->add_option("--noise-rel", noise_rel,
                      "noise scale as a fraction of the median inter-class-mean distance "
                      "(overrides --noise-scale)");
    synth->add_option("--superclasses", synth_cfg.num_superclasses,
                      "cluster semantics into this many super-classes (0 = none)");
    synth->add_option("--seed", synth_cfg.seed, "generator seed");
    synth->add_option("--split-out", split_out, "also write a split JSON here");
    synth->add_option("--split-style", split_style, "scs or sce");
    synth->add_option("--unseen-fraction", unseen_fraction, "fraction of classes held unseen");
    synth->add_option("--split-seed", split_seed, "split seed");
    (void)split_seed_set;

    // train
    std::string train_config, train_data, train_split, train_out, loss_csv, resume_dir;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::size_t> train_iters;
    auto* train = app.add_subcommand("train", "train the generator pair on a dataset");
    train->add_option("--config", train_config, "TrainConfig JSON (defaults when omitted)");
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--split", train_split, "split JSON")->required();
    train->add_option("--out", train_out, "checkpoint output directory")->required();
    train->add_option("--loss-csv", loss_csv, "write the loss history CSV here");
    train->add_option("--resume", resume_dir, "resume from this checkpoint directory");
    train->add_option("--seed", train_seed, "override the config seed");
    train->add_option("--iterations", train_iters, "override the config iteration count");

    // eval
    std::string eval_ckpt, eval_data, eval_split, eval_out;
    std::size_t per_class = 60, knn_k = 1;
    std::uint64_t eval_seed = 0;
    bool with_timing = false;
    auto* eval = app.add_subcommand("eval", "zero-shot evaluation of a checkpoint");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--split", eval_split, "split JSON")->required();
    eval->add_option("--per-class", per_class, "synthesized samples per unseen class");
    eval->add_option("--k", knn_k, "nearest-neighbor count");
    eval->add_option("--seed", eval_seed, "synthesis seed");
    eval->add_option("--out", eval_out, "report JSON path (stdout when omitted)");
    eval->add_flag("--timing", with_timing,
                   "include wall-clock time in the report (breaks byte determinism)");

    // gzsl
    std::string gzsl_ckpt, gzsl_data, gzsl_split, gzsl_out, curve_out;
    std::size_t gzsl_per_class = 60, gzsl_k = 1;
    std::uint64_t gzsl_seed = 0, holdout_seed = 0;
    double holdout_fraction = 0.2;
    bool gzsl_timing = false;
    auto* gzsl = app.add_subcommand("gzsl", "generalized zero-shot curve and area");
    gzsl->add_option("--ckpt", gzsl_ckpt, "checkpoint directory")->required();
    gzsl->add_option("--data", gzsl_data, "dataset directory")->required();
    gzsl->add_option("--split", gzsl_split, "split JSON")->required();
    gzsl->add_option("--per-class", gzsl_per_class, "synthesized samples per unseen class");
    gzsl->add_option("--k", gzsl_k, "nearest-neighbor count for the unseen top-1");
    gzsl->add_option("--seed", gzsl_seed, "synthesis seed");
    gzsl->add_option("--holdout-fraction", holdout_fraction,
                     "fraction of each seen class held out as test queries");
    gzsl->add_option("--holdout-seed", holdout_seed, "holdout partition seed");
    gzsl->add_option("--curve-out", curve_out, "seen-unseen curve CSV path");
    gzsl->add_option("--out", gzsl_out, "report JSON path (stdout when omitted)");
    gzsl->add_flag("--timing", gzsl_timing, "include wall-clock time in the report");

    // ablate
    std::string abl_config, abl_data, abl_split, abl_out;
    std::vector<std::uint64_t> abl_seeds{0, 1, 2, 3, 4};
    std::size_t abl_per_class = 60, abl_k = 1;
    auto* ablate = app.add_subcommand("ablate", "train and compare the ablation variants");
    ablate->add_option("--config", abl_config, "base TrainConfig JSON");
    ablate->add_option("--data", abl_data, "dataset directory")->required();
    ablate->add_option("--split", abl_split, "split JSON")->required();
    ablate->add_option("--seeds", abl_seeds, "training seeds, one run per seed per variant");
    ablate->add_option("--per-class", abl_per_class, "synthesized samples per unseen class");
    ablate->add_option("--k", abl_k, "nearest-neighbor count");
    ablate->add_option("--out", abl_out, "comparison table CSV path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return run_prepare(corpus_dir, prepare_out, min_df, visual_from);
        if (synth->parsed())
            return run_synth_data(synth_cfg, noise_rel, synth_out, split_out, split_style,
                                  unseen_fraction, split_seed);
        if (train->parsed())
            return run_train(train_config, train_data, train_split, train_out, loss_csv,
                             resume_dir, train_seed, train_iters);
        if (eval->parsed())
            return run_eval(eval_ckpt, eval_data, eval_split, per_class, knn_k, eval_seed,
                            eval_out, with_timing);
        if (gzsl->parsed())
            return run_gzsl(gzsl_ckpt, gzsl_data, gzsl_split, gzsl_per_class, gzsl_k, gzsl_seed,
                            holdout_fraction, holdout_seed, curve_out, gzsl_out, gzsl_timing);
        if (ablate->parsed())
            return run_ablate(abl_config, abl_data, abl_split, abl_seeds, abl_per_class, abl_k,
                              abl_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
