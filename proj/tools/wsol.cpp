#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "wsol/config_file.hpp"
#include "wsol/eval.hpp"
#include "wsol/gradcheck.hpp"
#include "wsol/train.hpp"

namespace {

using namespace wsol;

// Exit codes: 0 success, 1 usage, 2 data/config error, 3 numerical failure.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int env_threads() {
    if (const char* value = std::getenv("WSOL_THREADS")) {
        const int threads = std::atoi(value);
        if (threads >= 1) return threads;
    }
    return 1;
}

void print_model(const ModelConfig& model) {
    std::printf("input_size = %d\nnum_classes = %d\nfeature_channels = %d\nfeature_stride = %d\n"
                "backbone_blocks = %d\nseed = %u\n",
                model.input_size, model.num_classes, model.feature_channels, model.feature_stride,
                model.backbone_blocks, model.seed);
}

void print_loss(const LossConfig& loss) {
    std::printf("t1 = %g\nt2 = %g\nt3 = %g\nt4 = %g\n", loss.thresholds.t1, loss.thresholds.t2, loss.thresholds.t3,
                loss.thresholds.t4);
    for (int i = 0; i < 6; ++i) std::printf("gamma%d = %g\n", i + 1, loss.gamma[static_cast<std::size_t>(i)]);
    std::printf("epsilon = %g\nbas_detach_classifier = %s\n", loss.epsilon,
                loss.bas_detach_classifier ? "true" : "false");
    std::printf("enabled = cls%s%s%s%s%s%s\n", loss.enable_cls_fg ? ",cls-fg" : "", loss.enable_ae ? ",ae" : "",
                loss.enable_ae_fg ? ",ae-fg" : "", loss.enable_pseudo ? ",pseudo" : "", loss.enable_bas ? ",bas" : "",
                loss.enable_ac ? ",ac" : "");
}

void print_train(const TrainConfig& train) {
    std::printf("learning_rate = %g\nmomentum = %g\nepochs = %d\nbatch_size = %d\ntrain_seed = %u\n"
                "shuffle = %s\nthreads = %d\n",
                train.learning_rate, train.momentum, train.epochs, train.batch_size, train.seed,
                train.shuffle ? "true" : "false", train.threads);
}

std::vector<Prediction> predict_dataset(const WsolNet& net, const Dataset& dataset) {
    std::vector<Prediction> predictions;
    predictions.reserve(dataset.samples.size());
    const int S = dataset.image_size;
    const int C = net.config().num_classes;
    for (const Sample& sample : dataset.samples) {
        Tensor image = Tensor::view({1, 3, S, S}, sample.image);
        ActivationBundle bundle = forward(net, image, ClassSelect::GroundTruth, {sample.label});
        Tensor heatmap = foreground_heatmap(bundle, S);
        predictions.push_back({Tensor::view({C}, bundle.probs), Tensor::view({1, S, S}, heatmap)});
    }
    return predictions;
}

int run_synth(const std::string& out_dir, DatasetSpec spec) {
    std::printf("command = synth\nout = %s\nnum_classes = %d\nsamples_per_class = %d\nimage_size = %d\n"
                "noise_level = %g\nseed = %u\n",
                out_dir.c_str(), spec.num_classes, spec.samples_per_class, spec.image_size, spec.noise_level,
                spec.seed);
    Dataset dataset = generate(spec);
    save_dataset(dataset, out_dir);
    std::printf("wrote %zu samples to %s\n", dataset.samples.size(), out_dir.c_str());
    return 0;
}

struct TrainFlags {
    std::string data_dir;
    std::string out_path;
    std::string config_path;
    std::string log_path;
    std::vector<std::string> disabled;
    int epochs = -1;
    long long seed = -1;
    double learning_rate = -1.0;
    int batch_size = -1;
    int feature_channels = -1;
    int feature_stride = -1;
};

int run_train(const TrainFlags& flags) {
    RunConfig config;
    if (!flags.config_path.empty()) load_config_file(config, flags.config_path);
    // Flags override the config file.
    if (flags.epochs >= 0) config.train.epochs = flags.epochs;
    if (flags.seed >= 0) {
        config.model.seed = static_cast<std::uint32_t>(flags.seed);
        config.train.seed = static_cast<std::uint32_t>(flags.seed);
    }
    if (flags.learning_rate > 0.0) config.train.learning_rate = flags.learning_rate;
    if (flags.batch_size > 0) config.train.batch_size = flags.batch_size;
    if (flags.feature_channels > 0) config.model.feature_channels = flags.feature_channels;
    if (flags.feature_stride > 0) config.model.feature_stride = flags.feature_stride;
    for (const std::string& term : flags.disabled) config.loss.disable(term);
    config.train.threads = env_threads();

    Dataset dataset = load_dataset(flags.data_dir);
    config.model.num_classes = dataset.num_classes;
    config.model.input_size = dataset.image_size;

    std::printf("command = train\ndata = %s\nout = %s\n", flags.data_dir.c_str(), flags.out_path.c_str());
    print_model(config.model);
    print_train(config.train);
    print_loss(config.loss);

    WsolNet net(config.model);
    Trainer trainer(net, config.train, config.loss);
    std::vector<EpochStats> log;
    for (int e = 0; e < config.train.epochs; ++e) {
        EpochStats stats = trainer.run_epoch(dataset);
        std::printf("epoch %d total=%.6f cls=%.6f bas_skipped=%d\n", stats.epoch, stats.total, stats.cls,
                    stats.bas_skipped);
        log.push_back(stats);
    }
    save_checkpoint(make_checkpoint(trainer), flags.out_path);
    const std::string log_path = flags.log_path.empty() ? flags.out_path + ".log" : flags.log_path;
    write_train_log(log, log_path);
    std::printf("checkpoint = %s\nlog = %s\n", flags.out_path.c_str(), log_path.c_str());
    return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt_path, double theta, double iou_threshold,
             bool sweep, const std::string& out_path) {
    std::printf("command = eval\ndata = %s\nckpt = %s\ntheta = %g\niou_threshold = %g\n", data_dir.c_str(),
                ckpt_path.c_str(), theta, iou_threshold);
    Dataset dataset = load_dataset(data_dir);
    Checkpoint checkpoint = load_checkpoint(ckpt_path);
    if (checkpoint.model.num_classes != dataset.num_classes) {
        throw ConfigError("eval: checkpoint has " + std::to_string(checkpoint.model.num_classes) +
                          " classes but the dataset has " + std::to_string(dataset.num_classes));
    }
    if (checkpoint.model.input_size != dataset.image_size) {
        throw ConfigError("eval: checkpoint input size " + std::to_string(checkpoint.model.input_size) +
                          " does not match dataset image size " + std::to_string(dataset.image_size));
    }
    WsolNet net = restore_net(checkpoint);
    print_model(net.config());

    LocalizationReport report = evaluate(dataset.samples, predict_dataset(net, dataset), iou_threshold, theta);
    print_report(report, std::cout);
    if (sweep) {
        std::printf("sweep rows = %zu\n", report.sweep.size());
    }
    write_report(report, out_path);
    std::printf("metrics = %s\n", out_path.c_str());
    return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& image_path, const std::string& out_path,
              int class_index, double theta) {
    std::printf("command = infer\nckpt = %s\nimage = %s\nout = %s\ntheta = %g\n", ckpt_path.c_str(),
                image_path.c_str(), out_path.c_str(), theta);
    Checkpoint checkpoint = load_checkpoint(ckpt_path);
    WsolNet net = restore_net(checkpoint);
    print_model(net.config());

    Tensor image = read_ppm(image_path);
    const int S = net.config().input_size;
    if (image.dim(1) != S || image.dim(2) != S) {
        throw ConfigError("infer: image is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1)) +
                          " but the model expects " + std::to_string(S) + "x" + std::to_string(S));
    }
    if (class_index >= net.config().num_classes) {
        throw ConfigError("infer: class index out of range");
    }

    Tensor batched = Tensor::view({1, 3, S, S}, image);
    ActivationBundle bundle = class_index >= 0
                                  ? forward(net, batched, ClassSelect::GroundTruth, {class_index})
                                  : forward(net, batched, ClassSelect::Predicted);
    Tensor heatmap = foreground_heatmap(bundle, S);
    write_pgm(heatmap, out_path);

    const int predicted = bundle.selected_classes[0];
    const Box box = extract_box(Tensor::view({1, S, S}, heatmap), theta);
    std::printf("class = %d\nprobability = %.6f\nbox = %d %d %d %d\nheatmap = %s\n", predicted,
                bundle.probs.data()[predicted], box.x0, box.y0, box.x1, box.y1, out_path.c_str());
    return 0;
}

int run_gradcheck(long long seed) {
    GradCheckOptions options;
    options.seed = seed >= 0 ? static_cast<std::uint32_t>(seed) : 0;
    options.corrupt = std::getenv("WSOL_GRADCHECK_CORRUPT") != nullptr;
    std::printf("command = gradcheck\nseed = %u\nfd_step = %g\ntolerance = %g\n", options.seed, options.fd_step,
                options.tolerance);
    bool all_passed = true;
    for (const GradCheckReport& report : gradcheck_losses(options)) {
        std::printf("%-7s worst_rel_err = %.3e at %s [%s]\n", report.term.c_str(), report.worst_rel_err,
                    report.worst_param.c_str(), report.passed ? "ok" : "FAIL");
        all_passed = all_passed && report.passed;
    }
    std::printf("gradcheck: %s\n", all_passed ? "ok" : "FAILED");
    return all_passed ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly-supervised object localization training and evaluation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic shapes dataset");
    std::string synth_out;
    DatasetSpec spec;
    long long synth_seed = 0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--classes", spec.num_classes, "Number of shape/color classes");
    synth->add_option("--per-class", spec.samples_per_class, "Samples per class");
    synth->add_option("--size", spec.image_size, "Image size in pixels");
    synth->add_option("--noise", spec.noise_level, "Background noise level in [0,1]");
    synth->add_option("--seed", synth_seed, "Generator seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
    TrainFlags train_flags;
    train_cmd->add_option("--data", train_flags.data_dir, "Dataset directory")->required();
    train_cmd->add_option("--out", train_flags.out_path, "Checkpoint output path")->required();
    train_cmd->add_option("--config", train_flags.config_path, "key = value configuration file");
    train_cmd->add_option("--epochs", train_flags.epochs, "Training epochs");
    train_cmd->add_option("--seed", train_flags.seed, "Model and shuffle seed");
    train_cmd->add_option("--lr", train_flags.learning_rate, "Learning rate");
    train_cmd->add_option("--batch-size", train_flags.batch_size, "Batch size");
    train_cmd->add_option("--feature-channels", train_flags.feature_channels, "Feature channels");
    train_cmd->add_option("--feature-stride", train_flags.feature_stride, "Feature stride");
    train_cmd->add_option("--log", train_flags.log_path, "Per-epoch log path (default <out>.log)");
    train_cmd->add_option("--disable", train_flags.disabled,
                          "Disable a loss term (cls-fg, ae, ae-fg, pseudo, bas, ac); repeatable");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate localization metrics");
    std::string eval_data, eval_ckpt, eval_out = "metrics.txt";
    double eval_theta = 0.45, eval_iou = 0.5;
    bool eval_sweep = false;
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--theta", eval_theta, "Box binarization fraction of the heatmap maximum");
    eval_cmd->add_option("--iou-threshold", eval_iou, "IoU correctness threshold");
    eval_cmd->add_flag("--sweep", eval_sweep, "Print the 0.1..0.9 threshold sweep");
    eval_cmd->add_option("--out", eval_out, "Machine-readable metrics path");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Heatmap and box for one image");
    std::string infer_ckpt, infer_image, infer_out;
    int infer_class = -1;
    double infer_theta = 0.45;
    infer_cmd->add_option("--ckpt", infer_ckpt, "Checkpoint path")->required();
    infer_cmd->add_option("--image", infer_image, "Input PPM image")->required();
    infer_cmd->add_option("--out", infer_out, "Output PGM heatmap path")->required();
    infer_cmd->add_option("--class", infer_class, "Use this class channel instead of the prediction");
    infer_cmd->add_option("--theta", infer_theta, "Box binarization fraction");

    // gradcheck
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all seven loss terms");
    long long gradcheck_seed = 0;
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "Toy network seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            if (synth_seed < 0) throw ConfigError("synth: seed must be non-negative");
            spec.seed = static_cast<std::uint32_t>(synth_seed);
            return run_synth(synth_out, spec);
        }
        if (train_cmd->parsed()) return run_train(train_flags);
        if (eval_cmd->parsed()) return run_eval(eval_data, eval_ckpt, eval_theta, eval_iou, eval_sweep, eval_out);
        if (infer_cmd->parsed()) return run_infer(infer_ckpt, infer_image, infer_out, infer_class, infer_theta);
        if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck_seed);
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
