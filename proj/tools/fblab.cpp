// fblab command line: run experiments, evaluate checkpoints, dump hidden
// features for external embedding tools. Exit code 0 on success, 1 on abort.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fblab/checkpoint.hpp>
#include <fblab/harness.hpp>

namespace {

using namespace fblab;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            bool deterministic, const std::string& out_override)
{
    auto cfg = ExperimentConfig::from_file(config_path);
    if (seed) cfg.seed = *seed;
    if (deterministic) cfg.deterministic = true;
    if (!out_override.empty()) cfg.out_dir = out_override;

    ExperimentResult result;
    if (cfg.precision == "single") {
        result = run_experiment<float>(cfg);
    } else {
        result = run_experiment<double>(cfg);
    }
    if (result.diverged) {
        std::cerr << "run aborted: loss diverged (partial logs in " << cfg.out_dir << ")\n";
        return 1;
    }
    if (result.epochs.empty()) {
        std::cerr << "run produced no epochs\n";
        return 1;
    }
    const auto& last = result.epochs.back();
    std::cout << "finished after " << result.epochs.size() << " epochs, train error "
              << last.train_error_pct << "%, test error " << last.test_error_pct << "%"
              << (result.reached_stop ? " (stop criterion reached)" : "") << "\n";
    return 0;
}

const Dataset& pick_split(const DataBundleT<double>& bundle, const std::string& split)
{
    if (split == "train") return bundle.train;
    if (split == "test") return bundle.test;
    if (split == "validation") {
        if (!bundle.validation) throw HarnessError("no validation split configured");
        return *bundle.validation;
    }
    throw HarnessError("unknown split '" + split + "'");
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, const std::string& split)
{
    auto cfg = ExperimentConfig::from_file(config_path);
    auto net = load_network<double>(checkpoint);
    auto bundle = load_bundle<double>(cfg);
    const double err = evaluate(net, pick_split(bundle, split));
    std::cout << split << " error: " << err << "%\n";
    return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& config_path, const std::string& split,
             const std::string& layers_arg, const std::string& out_prefix)
{
    auto cfg = ExperimentConfig::from_file(config_path);
    auto net = load_network<double>(checkpoint);
    auto bundle = load_bundle<double>(cfg);

    std::vector<Index> layers;
    std::stringstream ss(layers_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) layers.push_back(std::stol(tok));

    const auto& data = pick_split(bundle, split);
    auto paths = dump_features(net, data.inputs, layers, out_prefix);
    for (const auto& p : paths) std::cout << "wrote " << p << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"feedback-learning lab: train networks with BP, FA, DFA or IFA"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, split = "test", layers = "0", out;
    std::uint64_t seed_value = 0;
    bool deterministic = false;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "experiment config path")->required();
    auto* seed_opt = run->add_option("--seed", seed_value, "override the config seed");
    run->add_flag("--deterministic", deterministic, "bitwise-stable logs (zeroed wall times)");
    run->add_option("--out", out, "override the output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval->add_option("checkpoint", checkpoint, "checkpoint path (.fbnc)")->required();
    eval->add_option("--config", config_path, "config describing the dataset")->required();
    eval->add_option("--split", split, "train | validation | test");

    auto* dump = app.add_subcommand("dump-features", "write hidden activations as CSV");
    dump->add_option("checkpoint", checkpoint, "checkpoint path (.fbnc)")->required();
    dump->add_option("--config", config_path, "config describing the dataset")->required();
    dump->add_option("--split", split, "train | validation | test");
    dump->add_option("--layers", layers, "comma-separated layer indices");
    dump->add_option("--out", out, "output path prefix");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            std::optional<std::uint64_t> seed;
            if (seed_opt->count() > 0) seed = seed_value;
            return cmd_run(config_path, seed, deterministic, out);
        }
        if (eval->parsed()) return cmd_eval(checkpoint, config_path, split);
        if (dump->parsed()) return cmd_dump(checkpoint, config_path, split, layers, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
