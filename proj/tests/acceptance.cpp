// Acceptance suite: one numbered criterion per function, each printing a
// single [PASS]/[FAIL] line. Criteria 4-10 train on the real MNIST IDX files
// (FBLAB_DATA_DIR or data/mnist, see README); without them they fail with a
// diagnostic rather than silently skipping.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run one
//   acceptance --list          list criteria

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fblab/harness.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fblab;
using namespace fblab::oracles;

namespace {

std::string data_dir()
{
    if (const char* env = std::getenv("FBLAB_DATA_DIR")) return env;
    return "data/mnist";
}

bool mnist_available(std::ostream& log)
{
    const std::string dir = data_dir();
    for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
        if (!fs::exists(dir + "/" + name) && !fs::exists(dir + "/" + name + std::string(".gz"))) {
            log << "MNIST file '" << dir << "/" << name
                << "[.gz]' not found; set FBLAB_DATA_DIR or place the IDX files (see README)";
            return false;
        }
    }
    return true;
}

std::string out_dir(const std::string& name)
{
    const std::string dir = "build/acceptance_runs/" + name;
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig mnist_config(const std::string& extra)
{
    return ExperimentConfig::from_string("dataset = mnist\ndata_dir = " + data_dir() + "\n" + extra);
}

// --------------------------------------------------------------------------
// 1. backward_bp against central finite differences, conv block included
// --------------------------------------------------------------------------
bool criterion_gradient_oracle(std::ostream& log)
{
    SeededRng rng(1001, Stream::init);
    double worst = 0.0;
    int nets = 0;
    for (Activation act : {Activation::Tanh, Activation::Logistic, Activation::ReLU}) {
        for (int depth = 1; depth <= 3; ++depth) {
            for (int rep = 0; rep < 12; ++rep) {
                std::vector<LayerSpec> specs;
                for (int l = 0; l < depth; ++l)
                    specs.push_back(LayerSpec::dense(2 + Index(rng.next_below(7)), act));
                const Index out = 2 + Index(rng.next_below(3));
                specs.push_back(LayerSpec::dense(out, Activation::Logistic));
                const Index in = 2 + Index(rng.next_below(5));
                auto net = init_network(Extent::vec(in), specs, InitScheme::UniformFanIn, rng);
                Matrix x = sample_uniform(in, 3, 1.0, rng);
                // finite differences need clearance from ReLU kinks
                while (!relu_kink_free(net, x)) x = sample_uniform(in, 3, 1.0, rng);
                Matrix y = random_targets(out, 3, rng);
                auto trace = forward(net, x);
                auto ud = backward_bp(net, trace, output_error(trace.output(), y));
                worst = std::max(worst, max_rel_error(finite_diff(net, x, y), ud));
                ++nets;
            }
        }
    }
    for (int rep = 0; rep < 4; ++rep) {  // conv + pool blocks
        std::vector<LayerSpec> specs = {LayerSpec::conv(2 + Index(rng.next_below(2)), 3, 3, 1, Activation::Tanh),
                                        LayerSpec::maxpool(2, 2, 2),
                                        LayerSpec::dense(5, Activation::Tanh),
                                        LayerSpec::dense(2, Activation::Logistic)};
        auto net = init_network(Extent::image(1, 6, 6), specs, InitScheme::UniformFanIn, rng);
        Matrix x = sample_uniform(36, 2, 0.5, rng);
        Matrix y = random_targets(2, 2, rng);
        auto trace = forward(net, x);
        auto ud = backward_bp(net, trace, output_error(trace.output(), y));
        worst = std::max(worst, max_rel_error(finite_diff(net, x, y), ud));
        ++nets;
    }
    log << nets << " random nets, max relative error " << worst << " (tolerance 1e-6)";
    return worst < 1e-6;
}

// --------------------------------------------------------------------------
// 2. FA == BP under transposed feedback; DFA == FA and IFA == DFA at depth 1
// --------------------------------------------------------------------------
bool criterion_method_equivalence(std::ostream& log)
{
    SeededRng rng(2002, Stream::init);
    double worst_fa_bp = 0.0;
    for (int depth = 1; depth <= 4; ++depth) {
        std::vector<LayerSpec> specs;
        for (int l = 0; l < depth; ++l) specs.push_back(LayerSpec::dense(6, Activation::Tanh));
        specs.push_back(LayerSpec::dense(3, Activation::Logistic));
        auto net = init_network(Extent::vec(5), specs, InitScheme::UniformFanIn, rng);

        FeedbackWeights fb;
        fb.method = Method::FA;
        for (const Site& s : hidden_sites(net))
            fb.matrices.push_back(net.weights[std::size_t(s.layer) + 1].transpose());
        Matrix x = sample_uniform(5, 4, 1.0, rng);
        Matrix y = random_targets(3, 4, rng);
        auto trace = forward(net, x);
        Matrix e = output_error(trace.output(), y);
        auto bp = backward_bp(net, trace, e);
        auto fa = backward_fa(net, fb, trace, e);
        for (std::size_t li = 0; li < net.weights.size(); ++li) {
            worst_fa_bp = std::max(worst_fa_bp,
                                   (bp.weight_grad[li] - fa.weight_grad[li]).cwiseAbs().maxCoeff());
            worst_fa_bp =
                std::max(worst_fa_bp, (bp.bias_grad[li] - fa.bias_grad[li]).cwiseAbs().maxCoeff());
        }
    }
    if (worst_fa_bp >= 1e-12) {
        log << "FA with transposed weights deviates from BP by " << worst_fa_bp;
        return false;
    }

    auto net1 = init_network(Extent::vec(7), dense_stack({5}, 3), InitScheme::UniformFanIn, rng);
    SeededRng fb_rng(7, Stream::feedback);
    auto dfa = init_feedback(Method::DFA, site_dims(net1), 3, fb_rng);
    FeedbackWeights fa1, ifa1;
    fa1.method = Method::FA;
    fa1.matrices = dfa.matrices;
    ifa1.method = Method::IFA;
    ifa1.matrices = dfa.matrices;
    Matrix x = sample_uniform(7, 4, 1.0, rng);
    Matrix y = random_targets(3, 4, rng);
    auto trace = forward(net1, x);
    Matrix e = output_error(trace.output(), y);
    auto ud_fa = backward_fa(net1, fa1, trace, e);
    auto ud_dfa = backward_dfa(net1, dfa, trace, e);
    auto ud_ifa = backward_ifa(net1, ifa1, trace, e);
    for (std::size_t li = 0; li < net1.weights.size(); ++li) {
        if (ud_fa.weight_grad[li] != ud_dfa.weight_grad[li] ||
            ud_fa.bias_grad[li] != ud_dfa.bias_grad[li]) {
            log << "DFA differs from FA at depth 1 (layer " << li << ")";
            return false;
        }
        if (ud_ifa.weight_grad[li] != ud_dfa.weight_grad[li] ||
            ud_ifa.bias_grad[li] != ud_dfa.bias_grad[li]) {
            log << "IFA differs from DFA at depth 1 (layer " << li << ")";
            return false;
        }
    }
    log << "FA|BP max deviation " << worst_fa_bp << " (< 1e-12); depth-1 DFA and IFA bitwise equal";
    return true;
}

// --------------------------------------------------------------------------
// 3. zero-init escape over 100 random instances
// --------------------------------------------------------------------------
bool criterion_zero_init_escape(std::ostream& log)
{
    SeededRng rng(3003, Stream::init);
    for (int trial = 0; trial < 100; ++trial) {
        const Index in = 2 + Index(rng.next_below(8));
        const Index hid = 2 + Index(rng.next_below(8));
        const Index out = 2 + Index(rng.next_below(5));
        auto net = init_network(Extent::vec(in), dense_stack({hid, hid}, out), InitScheme::Zero, rng);
        Matrix x = sample_uniform(in, 3, 1.0, rng);
        Matrix y = random_targets(out, 3, rng);
        auto trace = forward(net, x);
        Matrix e = output_error(trace.output(), y);
        if (e.cwiseAbs().maxCoeff() == 0.0) {
            log << "trial " << trial << ": degenerate zero error";
            return false;
        }

        auto bp_net = net;
        auto bp = backward_bp(bp_net, trace, e);
        sgd_step(bp_net, bp, 0.1);
        for (std::size_t li = 0; li < bp_net.weights.size(); ++li) {
            if (!bp_net.weights[li].isZero(0.0)) {
                log << "trial " << trial << ": BP step moved weights of layer " << li;
                return false;
            }
        }

        SeededRng fb_rng(std::uint64_t(3000 + trial), Stream::feedback);
        auto fb = init_feedback(Method::DFA, site_dims(net), out, fb_rng);
        auto dfa = backward_dfa(net, fb, trace, e);
        if (dfa.weight_grad[0].cwiseAbs().maxCoeff() == 0.0) {
            log << "trial " << trial << ": DFA produced a zero first-layer gradient";
            return false;
        }
    }
    log << "100 random zero-init nets: BP frozen at zero, DFA first-layer gradient nonzero";
    return true;
}

// --------------------------------------------------------------------------
// 4. sign constancy of e over 50 epochs of DFA on a 1000-sample MNIST subset
// --------------------------------------------------------------------------
bool criterion_sign_constancy(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto cfg = mnist_config("train_subset = 1000\narch = 2x100\nmethod = DFA\n"
                            "learning_rate = 3e-4\nout_dir = " + out_dir("c4") + "\n");
    auto bundle = load_bundle<double>(cfg);

    SeededRng init_rng(cfg.seed, Stream::init);
    auto net = build_from_config<double>(cfg, bundle.input_extent, bundle.classes, init_rng);
    SeededRng fb_rng(cfg.seed, Stream::feedback);
    auto fb = init_feedback(Method::DFA, site_dims(net), bundle.classes, fb_rng);
    auto rms = RmsState::like(net, cfg.learning_rate, cfg.rho, cfg.eps_rms);
    SeededRng shuffle_rng(cfg.seed, Stream::shuffle);

    auto signs = [&]() {
        auto trace = forward(net, bundle.train.inputs);
        Matrix e = output_error(trace.output(), bundle.train.targets);
        return e.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }).eval();
    };

    const Matrix initial = signs();
    std::vector<Index> order(std::size_t(bundle.train.count()));
    std::iota(order.begin(), order.end(), Index(0));
    long flips = 0;
    for (int epoch = 0; epoch < 50; ++epoch) {
        shuffle(order, shuffle_rng);
        for (Index start = 0; start < bundle.train.count(); start += cfg.batch_size) {
            const Index n = std::min<Index>(cfg.batch_size, bundle.train.count() - start);
            Matrix x(bundle.train.features(), n), y(bundle.classes, n);
            for (Index s = 0; s < n; ++s) {
                x.col(s) = bundle.train.inputs.col(order[std::size_t(start + s)]);
                y.col(s) = bundle.train.targets.col(order[std::size_t(start + s)]);
            }
            auto trace = forward(net, x);
            auto ud = backward_dfa(net, fb, trace, output_error(trace.output(), y));
            rmsprop_step(rms, net, ud);
        }
        const Matrix now = signs();
        // a flip is a strict sign crossing; exact zeros (saturated outputs) count as neither
        flips += ((initial.array() * now.array()) < 0.0).count();
    }
    log << "50 epochs, 1000 samples x 10 outputs: " << flips << " sign flips";
    return flips == 0;
}

// --------------------------------------------------------------------------
// 5. alignment onset: beta drops below 90 deg within 5 epochs, L stays positive
// --------------------------------------------------------------------------
bool criterion_alignment_onset(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto cfg = mnist_config("train_subset = 10000\narch = 2x50\nmethod = DFA\n"
                            "learning_rate = 3e-4\nout_dir = " + out_dir("c5") + "\n");
    auto bundle = load_bundle<double>(cfg);

    SeededRng init_rng(cfg.seed, Stream::init);
    auto net = build_from_config<double>(cfg, bundle.input_extent, bundle.classes, init_rng);
    if (cfg.resolved_init() != InitScheme::Zero) {
        log << "expected zero init for a DFA tanh net";
        return false;
    }
    SeededRng fb_rng(cfg.seed, Stream::feedback);
    auto fb = init_feedback(Method::DFA, site_dims(net), bundle.classes, fb_rng);
    auto rms = RmsState::like(net, cfg.learning_rate, cfg.rho, cfg.eps_rms);
    SeededRng shuffle_rng(cfg.seed, Stream::shuffle);

    const int epochs = 8;
    std::vector<std::vector<double>> beta_mean(2), l_mean(2);
    std::vector<Index> order(std::size_t(bundle.train.count()));
    std::iota(order.begin(), order.end(), Index(0));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        std::vector<double> beta_sum(2, 0.0), l_sum(2, 0.0);
        std::vector<long> beta_n(2, 0), l_n(2, 0);
        for (Index start = 0; start < bundle.train.count(); start += cfg.batch_size) {
            const Index n = std::min<Index>(cfg.batch_size, bundle.train.count() - start);
            Matrix x(bundle.train.features(), n), y(bundle.classes, n);
            for (Index s = 0; s < n; ++s) {
                x.col(s) = bundle.train.inputs.col(order[std::size_t(start + s)]);
                y.col(s) = bundle.train.targets.col(order[std::size_t(start + s)]);
            }
            auto trace = forward(net, x);
            auto ud = backward_dfa(net, fb, trace, output_error(trace.output(), y));
            for (const auto& rec : measure_alignment(net, trace, ud)) {
                const auto k = std::size_t(rec.layer);
                if (!std::isnan(rec.beta_deg)) {
                    beta_sum[k] += rec.beta_deg;
                    ++beta_n[k];
                }
                if (!std::isnan(rec.L)) {
                    l_sum[k] += rec.L;
                    ++l_n[k];
                }
            }
            rmsprop_step(rms, net, ud);
        }
        for (std::size_t k = 0; k < 2; ++k) {
            beta_mean[k].push_back(beta_n[k] ? beta_sum[k] / double(beta_n[k])
                                             : std::numeric_limits<double>::quiet_NaN());
            l_mean[k].push_back(l_n[k] ? l_sum[k] / double(l_n[k])
                                       : std::numeric_limits<double>::quiet_NaN());
        }
    }

    bool ok = true;
    std::ostringstream detail;
    for (std::size_t k = 0; k < 2; ++k) {
        int onset = -1;
        for (int e = 0; e < 5; ++e)
            if (!std::isnan(beta_mean[k][std::size_t(e)]) && beta_mean[k][std::size_t(e)] < 90.0) {
                onset = e;
                break;
            }
        if (onset < 0) {
            ok = false;
            detail << " layer " << k << ": beta never fell below 90 in the first 5 epochs;";
            continue;
        }
        for (int e = onset; e < epochs; ++e)
            if (!(l_mean[k][std::size_t(e)] > 0.0)) {
                ok = false;
                detail << " layer " << k << ": L not positive at epoch " << e << ";";
            }
        detail << " layer " << k << ": onset epoch " << onset << ", final beta "
               << beta_mean[k].back() << " deg, final L " << l_mean[k].back() << ";";
    }
    log << detail.str();
    return ok;
}

// --------------------------------------------------------------------------
// 6. zero training error at desk scale: 3x50 tanh DFA on 10000 samples
// --------------------------------------------------------------------------
bool criterion_zero_train_error(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto cfg = mnist_config("train_subset = 10000\narch = 3x50\nmethod = DFA\n"
                            "learning_rate = 3e-4\nmax_epochs = 100\nstop_train_error = 0\n"
                            "diag_every = 0\nout_dir = " + out_dir("c6") + "\n");
    auto result = run_experiment(cfg);
    if (result.diverged) {
        log << "training diverged";
        return false;
    }
    log << "train error " << result.epochs.back().train_error_pct << "% after "
        << result.epochs.size() << " epochs";
    return result.reached_stop && result.epochs.back().train_error_pct == 0.0;
}

// --------------------------------------------------------------------------
// 7. Table-1 spot check: 1x800 tanh on full MNIST, BP and DFA test errors
// --------------------------------------------------------------------------
bool criterion_table1_spot_check(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto run = [&](const std::string& method, const std::string& name) {
        auto cfg = mnist_config("arch = 1x800\nmethod = " + method +
                                "\nlearning_rate = 1e-4\ndiag_every = 0\nout_dir = " +
                                out_dir(name) + "\n");
        return run_experiment(cfg);
    };
    auto dfa = run("DFA", "c7_dfa");
    auto bp = run("BP", "c7_bp");
    if (dfa.diverged || bp.diverged) {
        log << "a run diverged";
        return false;
    }
    const double dfa_err = dfa.epochs.back().test_error_pct;
    const double bp_err = bp.epochs.back().test_error_pct;
    log << "DFA test " << dfa_err << "% (target 1.68 +- 0.4), BP test " << bp_err
        << "% (target 1.59 +- 0.4)";
    return std::abs(dfa_err - 1.68) <= 0.4 && std::abs(bp_err - 1.59) <= 0.4;
}

// --------------------------------------------------------------------------
// 8. deep-net trainability: 20x240 DFA from zero learns, BP stays at zero
// --------------------------------------------------------------------------
bool criterion_deep_net(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    // BP from an all-zero 20x240 tanh net: hidden weights must stay exactly zero
    {
        auto cfg = mnist_config("arch = 20x240\nmethod = BP\ninit = zero\n"
                                "learning_rate = 1e-4\nmax_epochs = 2\nstop_train_error = -1\n"
                                "diag_every = 0\nout_dir = " + out_dir("c8_bp") + "\n");
        auto result = run_experiment(cfg);
        if (result.diverged) {
            log << "BP run diverged";
            return false;
        }
        auto net = load_network<double>(result.checkpoint_path);
        for (Index li = 0; li < net.depth(); ++li) {
            if (!net.weights[std::size_t(li)].isZero(0.0)) {
                log << "BP from zero init moved weights of layer " << li;
                return false;
            }
        }
    }
    // DFA from the same zero init must reach < 1% train error within 300 epochs
    auto cfg = mnist_config("arch = 20x240\nmethod = DFA\ninit = zero\n"
                            "learning_rate = 1e-4\nmax_epochs = 300\nstop_train_error = 0.9\n"
                            "diag_every = 0\nout_dir = " + out_dir("c8_dfa") + "\n");
    auto result = run_experiment(cfg);
    if (result.diverged) {
        log << "DFA run diverged";
        return false;
    }
    const double final_err = result.epochs.back().train_error_pct;
    log << "BP hidden weights pinned at zero; DFA train error " << final_err << "% after "
        << result.epochs.size() << " epochs (need < 1%)";
    return final_err < 1.0;
}

// --------------------------------------------------------------------------
// 9. IFA: 4x100 tanh on full MNIST reaches 0% train, test <= 5.5%
// --------------------------------------------------------------------------
bool criterion_ifa(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto cfg = mnist_config("arch = 4x100\nmethod = IFA\ninit = uniform_fanin\n"
                            "learning_rate = 1e-4\nmax_epochs = 300\nstop_train_error = 0\n"
                            "diag_every = 0\nout_dir = " + out_dir("c9") + "\n");
    auto result = run_experiment(cfg);
    if (result.diverged) {
        log << "training diverged";
        return false;
    }
    const double train_err = result.epochs.back().train_error_pct;
    const double test_err = result.epochs.back().test_error_pct;
    log << "train " << train_err << "%, test " << test_err << "% after " << result.epochs.size()
        << " epochs (need 0% train, <= 5.5% test)";
    return train_err == 0.0 && test_err <= 5.5;
}

// --------------------------------------------------------------------------
// 10. frozen-layer curve: error rises after the BP->DFA switch, then returns to 0
// --------------------------------------------------------------------------
bool criterion_frozen_layer(std::ostream& log)
{
    if (!mnist_available(log)) return false;
    auto cfg = mnist_config("train_subset = 10000\narch = 3x50\nmethod = BP\n"
                            "init = uniform_fanin\nlearning_rate = 3e-4\n"
                            "out_dir = " + out_dir("c10") + "\n");
    auto bundle = load_bundle<double>(cfg);

    SeededRng init_rng(cfg.seed, Stream::init);
    auto net = build_from_config<double>(cfg, bundle.input_extent, bundle.classes, init_rng);
    net.layers[0].frozen = true;  // random first layer, fixed during phase A

    SeededRng fb_rng(cfg.seed, Stream::feedback);
    FeedbackWeights none;  // BP phase uses no feedback matrices
    auto rms = RmsState::like(net, cfg.learning_rate, cfg.rho, cfg.eps_rms);
    SeededRng shuffle_rng(cfg.seed, Stream::shuffle);
    std::vector<Index> order(std::size_t(bundle.train.count()));
    std::iota(order.begin(), order.end(), Index(0));

    auto epoch_pass = [&](Method method, const FeedbackWeights& fb) {
        shuffle(order, shuffle_rng);
        for (Index start = 0; start < bundle.train.count(); start += cfg.batch_size) {
            const Index n = std::min<Index>(cfg.batch_size, bundle.train.count() - start);
            Matrix x(bundle.train.features(), n), y(bundle.classes, n);
            for (Index s = 0; s < n; ++s) {
                x.col(s) = bundle.train.inputs.col(order[std::size_t(start + s)]);
                y.col(s) = bundle.train.targets.col(order[std::size_t(start + s)]);
            }
            auto trace = forward(net, x);
            auto ud = backward(method, net, fb, trace, output_error(trace.output(), y));
            rmsprop_step(rms, net, ud);
        }
        return evaluate(net, bundle.train);
    };

    // Phase A: two upper layers trained with BP for 30 epochs
    double pre_switch = 100.0;
    for (int epoch = 0; epoch < 30; ++epoch) pre_switch = epoch_pass(Method::BP, none);

    // Phase B: unfreeze the first layer and continue with DFA
    net.layers[0].frozen = false;
    auto fb = init_feedback(Method::DFA, site_dims(net), bundle.classes, fb_rng);
    std::vector<double> after;
    bool reached_zero = false;
    for (int epoch = 0; epoch < 100; ++epoch) {
        after.push_back(epoch_pass(Method::DFA, fb));
        if (after.back() == 0.0) {
            reached_zero = true;
            break;
        }
    }
    const double spike = *std::max_element(after.begin(), after.begin() + std::min<std::size_t>(3, after.size()));
    log << "pre-switch train error " << pre_switch << "%, max over 3 post-switch epochs " << spike
        << "%, reached 0% after " << after.size() << " DFA epochs";
    return spike > pre_switch && reached_zero;
}

// --------------------------------------------------------------------------
// 11. long-run recipes exist and miniature versions of their architectures
//     pass the gradient / equivalence property suites
// --------------------------------------------------------------------------
bool criterion_long_run_recipes(std::ostream& log)
{
    // recipes for the full-scale rows, with the published numbers recorded
    const std::vector<std::string> required = {
        "recipes/cifar10/conv_bp.cfg",    "recipes/cifar10/conv_fa.cfg",
        "recipes/cifar10/conv_dfa.cfg",   "recipes/cifar100/conv_bp.cfg",
        "recipes/cifar100/conv_fa.cfg",   "recipes/cifar100/conv_dfa.cfg",
        "recipes/mnist/2x800_tanh_do_dfa.cfg", "recipes/mnist/100x240_tanh_dfa.cfg",
    };
    for (const auto& path : required) {
        if (!fs::exists(path)) {
            log << "missing recipe '" << path << "'";
            return false;
        }
        std::ifstream is(path);
        std::stringstream ss;
        ss << is.rdbuf();
        if (ss.str().find("published result") == std::string::npos) {
            log << "recipe '" << path << "' does not record the published result";
            return false;
        }
        try {
            (void)ExperimentConfig::from_file(path);
        } catch (const std::exception& e) {
            log << "recipe '" << path << "' does not parse: " << e.what();
            return false;
        }
    }

    // miniature pinned conv stack: same shape, small filters, synthetic data
    SeededRng rng(1111, Stream::init);
    std::vector<LayerSpec> mini;
    for (Index filters : {2, 3, 4}) {
        mini.push_back(LayerSpec::conv(filters, 5, 5, 1, Activation::Tanh));
        mini.push_back(LayerSpec::maxpool(3, 3, 2));
    }
    mini.push_back(LayerSpec::dense(10, Activation::Tanh));
    mini.push_back(LayerSpec::dense(10, Activation::Tanh));
    mini.push_back(LayerSpec::dense(3, Activation::Logistic));
    auto net = init_network(Extent::image(1, 16, 16), mini, InitScheme::UniformFanIn, rng);

    Matrix x = sample_uniform(256, 2, 0.5, rng);
    Matrix y = random_targets(3, 2, rng);
    auto trace = forward(net, x);
    auto ud = backward_bp(net, trace, output_error(trace.output(), y));
    const double worst = max_rel_error(finite_diff(net, x, y), ud);
    if (worst >= 1e-6) {
        log << "miniature conv stack gradient check failed: " << worst;
        return false;
    }

    // DFA on the same stack: zero error -> zero update, feedback immutable
    SeededRng fb_rng(22, Stream::feedback);
    auto fb = init_feedback(Method::DFA, site_dims(net), 3, fb_rng);
    const auto fb_sum = feedback_checksum(fb);
    Matrix e0 = Matrix::Zero(3, 2);
    if (!backward_dfa(net, fb, trace, e0).all_zero()) {
        log << "miniature conv stack: zero error produced a nonzero DFA update";
        return false;
    }
    auto rms = RmsState::like(net, 1e-3);
    for (int step = 0; step < 20; ++step) {
        auto t = forward(net, x);
        auto u = backward_dfa(net, fb, t, output_error(t.output(), y));
        rmsprop_step(rms, net, u);
    }
    if (feedback_checksum(fb) != fb_sum) {
        log << "feedback weights mutated during the miniature training run";
        return false;
    }

    // miniature dropout row (2x800+DO at desk scale): masked-loss gradcheck
    auto net_do = init_network(Extent::vec(6), dense_stack({16, 16}, 3), InitScheme::UniformFanIn, rng);
    Matrix xd = (sample_uniform(6, 4, 0.5, rng).array() + 0.5).matrix();
    Matrix yd = random_targets(3, 4, rng);
    DropoutSpec spec{0.1, 0.5, DropoutMode::train};
    auto loss_with_masks = [&](const Network& n) {
        SeededRng d(999, Stream::dropout);
        auto t = forward(n, xd, &spec, &d);
        return compute_loss(t.output(), yd, xd.cols());
    };
    SeededRng d0(999, Stream::dropout);
    auto trace_do = forward(net_do, xd, &spec, &d0);
    auto ud_do = backward_bp(net_do, trace_do, output_error(trace_do.output(), yd));
    double worst_do = 0.0;
    const double h = 1e-5;
    for (std::size_t li = 0; li < net_do.weights.size(); ++li)
        for (Index i = 0; i < net_do.weights[li].size(); ++i) {
            Network pert = net_do;
            pert.weights[li](i) += h;
            const double up = loss_with_masks(pert);
            pert.weights[li](i) -= 2.0 * h;
            const double dn = loss_with_masks(pert);
            const double fd = (up - dn) / (2.0 * h);
            const double got = ud_do.weight_grad[li](i);
            const double denom = std::max({std::abs(fd), std::abs(got), 1e-4});
            worst_do = std::max(worst_do, std::abs(fd - got) / denom);
        }
    if (worst_do >= 1e-6) {
        log << "miniature dropout row gradient check failed: " << worst_do;
        return false;
    }

    log << required.size() << " long-run recipes present and parseable; miniature conv gradcheck "
        << worst << ", dropout-row gradcheck " << worst_do;
    return true;
}

struct Criterion {
    int num;
    const char* name;
    std::function<bool(std::ostream&)> fn;
};

const std::vector<Criterion> criteria = {
    {1, "gradient oracle (BP vs central finite differences)", criterion_gradient_oracle},
    {2, "method equivalence (FA=BP transposed; DFA=FA, IFA=DFA at depth 1)", criterion_method_equivalence},
    {3, "zero-init escape (BP pinned, DFA moves layer 1)", criterion_zero_init_escape},
    {4, "sign constancy of e over 50 DFA epochs (MNIST 1000)", criterion_sign_constancy},
    {5, "alignment onset: beta < 90 deg within 5 epochs (MNIST 10000)", criterion_alignment_onset},
    {6, "zero training error at desk scale (MNIST 10000, 3x50 DFA)", criterion_zero_train_error},
    {7, "Table 1 spot check (full MNIST 1x800, BP and DFA)", criterion_table1_spot_check},
    {8, "deep-net trainability (full MNIST 20x240 DFA vs zero-init BP)", criterion_deep_net},
    {9, "IFA experiment (full MNIST 4x100)", criterion_ifa},
    {10, "frozen-layer curve shape (MNIST 10000, BP -> DFA switch)", criterion_frozen_layer},
    {11, "long-run recipes + miniature property suites", criterion_long_run_recipes},
};

}  // namespace

int main(int argc, char** argv)
{
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else if (arg == "--list") {
            for (const auto& c : criteria) std::cout << c.num << ": " << c.name << "\n";
            return 0;
        } else {
            std::cerr << "usage: acceptance [--criterion N | --list]\n";
            return 2;
        }
    }

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.num != only) continue;
        std::ostringstream log;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.fn(log);
        } catch (const std::exception& e) {
            log << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.num << ": " << c.name << " -- "
                  << log.str() << " (" << secs << "s)" << std::endl;
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
