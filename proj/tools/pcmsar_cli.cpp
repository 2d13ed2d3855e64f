// Command-line front end: batch augmentation, the training demo, and the
// noise model comparison.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "pcmsar/pcmsar.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string input;
    std::string output;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int views = 0;
    std::vector<double> lambda2;
    int steps = -1;
};

pcmsar::RunConfig build_config(const CliArgs& args) {
    pcmsar::RunConfig cfg;
    if (!args.config_path.empty())
        cfg = pcmsar::RunConfig::from_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.input.empty()) cfg.input_dir = args.input;
    if (!args.output.empty()) cfg.output_dir = args.output;
    if (args.views > 0) cfg.views_per_image = args.views;
    if (args.steps >= 0) cfg.trainer.steps = args.steps;
    return cfg;
}

int cmd_augment(const CliArgs& args) {
    pcmsar::RunConfig cfg = build_config(args);
    if (cfg.input_dir.empty() || cfg.output_dir.empty())
        throw pcmsar::UsageError("augment needs --input and --output");
    pcmsar::Manifest man = pcmsar::run_augment(cfg);
    std::printf("augment: %d inputs, %d ok, %d failed, %d views, %d patches\n",
                man.total_inputs, man.total_ok, man.total_failed,
                man.total_nsg_views, man.total_ssg_patches);
    return 0;
}

int cmd_train_demo(const CliArgs& args) {
    pcmsar::RunConfig cfg = build_config(args);
    if (cfg.output_dir.empty())
        throw pcmsar::UsageError("train-demo needs --output");
    std::filesystem::create_directories(cfg.output_dir);

    std::vector<double> sweep = args.lambda2;
    if (sweep.empty()) sweep.push_back(cfg.trainer.loss_weights.lambda2);

    for (double l2 : sweep) {
        pcmsar::RunConfig run = cfg;
        run.trainer.loss_weights.lambda2 = l2;
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "%g", l2);
        std::string path = (std::filesystem::path(cfg.output_dir) /
                            ("train_report_l2_" + std::string(suffix) +
                             ".jsonl"))
                               .string();
        pcmsar::TrainReport rep = pcmsar::run_train_demo(run, path);
        std::printf(
            "train-demo lambda2=%g: knn %.3f (random %.3f), linear %.3f "
            "(random %.3f) -> %s\n",
            l2, rep.knn_acc, rep.knn_random, rep.linear_acc,
            rep.linear_random, path.c_str());
    }
    return 0;
}

int cmd_noise_compare(const CliArgs& args) {
    pcmsar::RunConfig cfg = build_config(args);
    if (args.input.empty() || cfg.output_dir.empty())
        throw pcmsar::UsageError(
            "noise-compare needs --input IMAGE and --output DIR");
    auto report = pcmsar::run_noise_compare(cfg, args.input);
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-driven SAR sample generation and toy trainer"};
    app.require_subcommand(1);

    CliArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "key=value config file");
        sub->add_option("--seed", args.seed, "master seed")
            ->each([&](const std::string&) { args.seed_set = true; });
        sub->add_option("--input", args.input, "input directory or image");
        sub->add_option("--output", args.output, "output directory");
    };

    CLI::App* augment = app.add_subcommand("augment", "batch view generation");
    add_common(augment);
    augment->add_option("--views", args.views, "speckle views per image");

    CLI::App* train = app.add_subcommand("train-demo", "toy training run");
    add_common(train);
    train->add_option("--lambda2", args.lambda2,
                      "mutual-learning weight; repeat to sweep");
    train->add_option("--steps", args.steps, "training steps");

    CLI::App* compare =
        app.add_subcommand("noise-compare", "noise model comparison");
    add_common(compare);

    try {
        app.parse(argc, argv);
        if (augment->parsed()) return cmd_augment(args);
        if (train->parsed()) return cmd_train_demo(args);
        if (compare->parsed()) return cmd_noise_compare(args);
        return 1;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const pcmsar::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const pcmsar::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const pcmsar::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const pcmsar::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
