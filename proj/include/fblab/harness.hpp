#ifndef FBLAB_HARNESS_HPP
#define FBLAB_HARNESS_HPP

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fblab/checkpoint.hpp"
#include "fblab/config.hpp"
#include "fblab/credit.hpp"
#include "fblab/data.hpp"
#include "fblab/diagnose.hpp"
#include "fblab/dropout.hpp"
#include "fblab/network.hpp"
#include "fblab/optim.hpp"
#include "fblab/regularize.hpp"

namespace fblab {

class HarnessError : public std::runtime_error {
public:
    explicit HarnessError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Argmax classification error in percent, dropout off, processed in chunks.
/// Ties resolve to the lowest class index.
template <typename Scalar>
double evaluate(const NetworkT<Scalar>& net, const DatasetT<Scalar>& data, Index chunk = 1000)
{
    if (data.count() == 0) throw ValueError("evaluate: empty split");
    if (static_cast<Index>(data.labels.size()) != data.count())
        throw ShapeError("evaluate: label count does not match the sample count");
    if (data.features() != net.in_units())
        throw ShapeError("evaluate: dataset features " + std::to_string(data.features()) +
                         " do not match network input " + std::to_string(net.in_units()));
    Index wrong = 0;
    for (Index start = 0; start < data.count(); start += chunk) {
        const Index n = std::min(chunk, data.count() - start);
        const MatrixX<Scalar> x = data.inputs.middleCols(start, n);
        const auto trace = forward(net, x);
        const auto& yhat = trace.output();
        for (Index s = 0; s < n; ++s) {
            Index pred = 0;
            yhat.col(s).maxCoeff(&pred);  // first maximum, i.e. lowest index on ties
            if (pred != data.labels[std::size_t(start + s)]) ++wrong;
        }
    }
    return 100.0 * double(wrong) / double(data.count());
}

// ---------------------------------------------------------------------------
// Freeze schedules
// ---------------------------------------------------------------------------

/// Layer `layer` stays frozen while epoch < until_epoch.
struct FreezeRule {
    Index layer = 0;
    int until_epoch = 0;
};

template <typename Scalar>
void freeze_schedule_step(NetworkT<Scalar>& net, const std::vector<FreezeRule>& schedule, int epoch)
{
    for (const FreezeRule& rule : schedule) {
        if (rule.layer < 0 || rule.layer >= net.depth())
            throw ValueError("freeze_schedule_step: layer " + std::to_string(rule.layer) +
                             " out of range");
        if (net.layers[std::size_t(rule.layer)].kind == LayerKind::MaxPool)
            throw ValueError("freeze_schedule_step: maxpool layers have no parameters to freeze");
        net.layers[std::size_t(rule.layer)].frozen = epoch < rule.until_epoch;
    }
}

// ---------------------------------------------------------------------------
// Feature dumps
// ---------------------------------------------------------------------------

/// Writes one CSV per requested layer: a row of h values per sample, for
/// external embedding tools.
template <typename Scalar>
std::vector<std::string> dump_features(const NetworkT<Scalar>& net, const MatrixX<Scalar>& inputs,
                                       const std::vector<Index>& layer_indices,
                                       const std::string& path_prefix, Index chunk = 1000)
{
    for (Index li : layer_indices)
        if (li < 0 || li >= net.depth())
            throw ValueError("dump_features: layer " + std::to_string(li) + " out of range");

    std::vector<std::string> paths;
    std::vector<std::ofstream> files;
    for (Index li : layer_indices) {
        paths.push_back(path_prefix + "layer" + std::to_string(li) + ".csv");
        files.emplace_back(paths.back());
        if (!files.back()) throw HarnessError("dump_features: cannot open '" + paths.back() + "'");
    }
    for (Index start = 0; start < inputs.cols(); start += chunk) {
        const Index n = std::min(chunk, inputs.cols() - start);
        const MatrixX<Scalar> x = inputs.middleCols(start, n);
        const auto trace = forward(net, x);
        for (std::size_t f = 0; f < layer_indices.size(); ++f) {
            const auto& h = trace.post[std::size_t(layer_indices[f])];
            for (Index s = 0; s < n; ++s) {
                for (Index r = 0; r < h.rows(); ++r) {
                    if (r) files[f] << ',';
                    files[f] << h(r, s);
                }
                files[f] << '\n';
            }
        }
    }
    for (auto& f : files)
        if (!f) throw HarnessError("dump_features: write failed");
    return paths;
}

// ---------------------------------------------------------------------------
// Dataset loading per config
// ---------------------------------------------------------------------------

namespace detail {

inline std::string existing_path(const std::string& dir, const std::string& name)
{
    namespace fs = std::filesystem;
    const std::string plain = dir + "/" + name;
    if (fs::exists(plain)) return plain;
    if (fs::exists(plain + ".gz")) return plain + ".gz";
    throw DataError("dataset file '" + plain + "[.gz]' not found");
}

}  // namespace detail

template <typename Scalar = double>
struct DataBundleT {
    DatasetT<Scalar> train;
    DatasetT<Scalar> test;
    std::optional<DatasetT<Scalar>> validation;
    Extent input_extent;
    Index classes = 0;
};

/// Loads the dataset named by the config, applies unit scaling (and ZCA
/// whitening fit on the training split when configured), carves out the
/// subset and validation tail.
template <typename Scalar = double>
DataBundleT<Scalar> load_bundle(const ExperimentConfig& cfg)
{
    DataBundleT<Scalar> bundle;
    std::vector<int> train_labels, test_labels;
    MatrixX<Scalar> train_x, test_x;

    if (cfg.dataset == "mnist") {
        auto [ti, tl] = load_mnist_idx(detail::existing_path(cfg.data_dir, "train-images-idx3-ubyte"),
                                       detail::existing_path(cfg.data_dir, "train-labels-idx1-ubyte"));
        auto [si, sl] = load_mnist_idx(detail::existing_path(cfg.data_dir, "t10k-images-idx3-ubyte"),
                                       detail::existing_path(cfg.data_dir, "t10k-labels-idx1-ubyte"));
        const Index d = ti.rows * ti.cols;
        train_x = scale_unit<Scalar>(ti.pixels, d, ti.count);
        test_x = scale_unit<Scalar>(si.pixels, d, si.count);
        train_labels.assign(tl.labels.begin(), tl.labels.end());
        test_labels.assign(sl.labels.begin(), sl.labels.end());
        bundle.classes = 10;
        bundle.input_extent = cfg.arch == "conv" ? Extent::image(1, ti.rows, ti.cols) : Extent::vec(d);
    } else {
        const bool c10 = cfg.dataset == "cifar10";
        std::vector<std::string> train_files, test_files;
        if (c10) {
            for (int b = 1; b <= 5; ++b)
                train_files.push_back(detail::existing_path(cfg.data_dir, "data_batch_" + std::to_string(b) + ".bin"));
            test_files.push_back(detail::existing_path(cfg.data_dir, "test_batch.bin"));
        } else {
            train_files.push_back(detail::existing_path(cfg.data_dir, "train.bin"));
            test_files.push_back(detail::existing_path(cfg.data_dir, "test.bin"));
        }
        const auto variant = c10 ? CifarVariant::cifar10 : CifarVariant::cifar100;
        RawCifar tr = load_cifar_binary(train_files, variant);
        RawCifar te = load_cifar_binary(test_files, variant);
        train_x = scale_unit<Scalar>(tr.pixels, 3072, tr.count);
        test_x = scale_unit<Scalar>(te.pixels, 3072, te.count);
        train_labels.assign(tr.labels.begin(), tr.labels.end());
        test_labels.assign(te.labels.begin(), te.labels.end());
        bundle.classes = c10 ? 10 : 100;
        bundle.input_extent = cfg.arch == "conv" ? Extent::image(3, 32, 32) : Extent::vec(3072);
    }

    bundle.train.kind = SplitKind::train;
    bundle.train.inputs = std::move(train_x);
    bundle.train.labels = std::move(train_labels);
    bundle.train.targets = one_hot<Scalar>(bundle.train.labels, bundle.classes);
    bundle.test.kind = SplitKind::test;
    bundle.test.inputs = std::move(test_x);
    bundle.test.labels = std::move(test_labels);
    bundle.test.targets = one_hot<Scalar>(bundle.test.labels, bundle.classes);

    if (cfg.train_subset > 0) bundle.train = take_prefix(bundle.train, cfg.train_subset);
    if (cfg.validation > 0) {
        auto [head, tail] = split_validation(bundle.train, cfg.validation);
        bundle.train = std::move(head);
        bundle.validation = std::move(tail);
    }
    if (cfg.resolved_whiten()) {
        auto t = whiten_fit<Scalar>(bundle.train.inputs);
        bundle.train.inputs = whiten_apply(t, bundle.train.inputs);
        bundle.test.inputs = whiten_apply(t, bundle.test.inputs);
        if (bundle.validation) bundle.validation->inputs = whiten_apply(t, bundle.validation->inputs);
    }
    return bundle;
}

/// The pinned conv stack for CIFAR: three conv blocks (96, 128, 256 filters,
/// 5x5 kernels, stride 1, same padding) each pooled 3x3 stride 2, then two
/// dense layers of 2048 units.
inline std::vector<LayerSpec> conv_architecture(Activation act, Index classes)
{
    std::vector<LayerSpec> specs;
    for (Index filters : {96, 128, 256}) {
        specs.push_back(LayerSpec::conv(filters, 5, 5, 1, act));
        specs.push_back(LayerSpec::maxpool(3, 3, 2));
    }
    specs.push_back(LayerSpec::dense(2048, act));
    specs.push_back(LayerSpec::dense(2048, act));
    specs.push_back(LayerSpec::dense(classes, Activation::Logistic));
    return specs;
}

template <typename Scalar = double>
NetworkT<Scalar> build_from_config(const ExperimentConfig& cfg, const Extent& input, Index classes,
                                   SeededRng& rng)
{
    std::vector<LayerSpec> specs;
    if (cfg.arch == "conv") {
        specs = conv_architecture(cfg.activation, classes);
    } else {
        for (Index w : cfg.hidden_widths()) specs.push_back(LayerSpec::dense(w, cfg.activation));
        specs.push_back(LayerSpec::dense(classes, Activation::Logistic));
    }
    if (cfg.freeze_layer >= 0) {
        if (cfg.freeze_layer >= static_cast<int>(specs.size()))
            throw ConfigError("config: freeze_layer out of range");
        specs[std::size_t(cfg.freeze_layer)].frozen = true;
    }
    return init_network<Scalar>(input, specs, cfg.resolved_init(), rng);
}

// ---------------------------------------------------------------------------
// The experiment loop
// ---------------------------------------------------------------------------

struct EpochReport {
    int epoch = 0;
    double train_error_pct = 0.0;
    double test_error_pct = 0.0;
    double loss = 0.0;  // mean training batch loss over the epoch
    double wall_seconds = 0.0;
    double val_error_pct = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
    std::vector<EpochReport> epochs;
    bool diverged = false;
    bool reached_stop = false;
    std::string checkpoint_path;
};

namespace detail {

inline void write_epoch_header(std::ostream& os)
{
    os << "epoch,train_error_pct,test_error_pct,loss,wall_seconds,val_error_pct\n";
}

inline void write_epoch_row(std::ostream& os, const EpochReport& r)
{
    os << r.epoch << ',' << r.train_error_pct << ',' << r.test_error_pct << ',' << r.loss << ','
       << r.wall_seconds << ',' << r.val_error_pct << '\n';
    os.flush();
}

inline void write_alignment_header(std::ostream& os)
{
    os << "epoch,batch,layer,K,L,beta_deg,norm_dh,norm_c,K_flat,L_flat,beta_flat_deg\n";
}

inline void write_alignment_rows(std::ostream& os, const std::vector<AlignmentRecord>& recs)
{
    for (const auto& r : recs)
        os << r.epoch << ',' << r.batch << ',' << r.layer << ',' << r.K << ',' << r.L << ','
           << r.beta_deg << ',' << r.norm_dh << ',' << r.norm_c << ',' << r.K_flat << ',' << r.L_flat
           << ',' << r.beta_flat_deg << '\n';
}

}  // namespace detail

/// Runs the full protocol: seeded shuffle each epoch, per-batch forward /
/// credit assignment / optimizer step, a dedicated dropout-free evaluation
/// pass for the stopping rule, CSV + checkpoint + resolved-config artifacts.
/// Training stops at stop_train_error percent or max_epochs, whichever comes
/// first; a non-finite loss aborts with partial logs on disk.
template <typename Scalar = double>
ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream echo(cfg.out_dir + "/config_resolved.cfg");
        echo << cfg.echo();
    }

    auto bundle = load_bundle<Scalar>(cfg);

    SeededRng init_rng(cfg.seed, Stream::init);
    auto net = build_from_config<Scalar>(cfg, bundle.input_extent, bundle.classes, init_rng);

    SeededRng fb_rng(cfg.seed, Stream::feedback);
    std::vector<Index> dims;
    for (const Site& s : hidden_sites(net)) dims.push_back(s.dim);
    auto fb = init_feedback<Scalar>(cfg.method, dims, bundle.classes, fb_rng, cfg.shared_feedback);
    const auto fb_sum_before = feedback_checksum(fb);

    std::optional<FeedbackWeightsT<Scalar>> switch_fb;
    const auto switched = cfg.switch_method_parsed();
    if (switched)
        switch_fb = init_feedback<Scalar>(*switched, dims, bundle.classes, fb_rng, cfg.shared_feedback);

    auto rms = RmsStateT<Scalar>::like(net, cfg.learning_rate, cfg.rho, cfg.eps_rms);
    SeededRng shuffle_rng(cfg.seed, Stream::shuffle);
    SeededRng dropout_rng(cfg.seed, Stream::dropout);
    DropoutSpec dropout{cfg.dropout_input, cfg.dropout_hidden, DropoutMode::train};
    const bool use_dropout = dropout.active();

    std::vector<FreezeRule> schedule;
    if (cfg.freeze_layer >= 0) schedule.push_back({Index(cfg.freeze_layer), cfg.unfreeze_epoch});

    std::ofstream epoch_csv(cfg.out_dir + "/epochs.csv");
    detail::write_epoch_header(epoch_csv);
    std::ofstream align_csv;
    if (cfg.diag_every > 0) {
        align_csv.open(cfg.out_dir + "/alignment.csv");
        detail::write_alignment_header(align_csv);
    }

    ExperimentResult result;
    std::vector<Index> order(std::size_t(bundle.train.count()));
    std::iota(order.begin(), order.end(), Index(0));
    const auto t0 = std::chrono::steady_clock::now();
    long batch_counter = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        freeze_schedule_step(net, schedule, epoch);
        const Method method = (switched && epoch >= cfg.unfreeze_epoch) ? *switched : cfg.method;
        const FeedbackWeightsT<Scalar>& fb_now =
            (switched && epoch >= cfg.unfreeze_epoch) ? *switch_fb : fb;

        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        long loss_count = 0;

        for (Index start = 0; start < bundle.train.count(); start += cfg.batch_size) {
            const Index n = std::min<Index>(cfg.batch_size, bundle.train.count() - start);
            MatrixX<Scalar> x(bundle.train.features(), n);
            MatrixX<Scalar> y(bundle.classes, n);
            for (Index s = 0; s < n; ++s) {
                x.col(s) = bundle.train.inputs.col(order[std::size_t(start + s)]);
                y.col(s) = bundle.train.targets.col(order[std::size_t(start + s)]);
            }
            if (cfg.adversarial_eps > 0.0) x = fast_sign_adversarial(net, x, y, cfg.adversarial_eps);

            const auto trace = use_dropout ? forward(net, x, &dropout, &dropout_rng) : forward(net, x);
            const double loss = compute_loss(trace.output(), y, n);
            if (!std::isfinite(loss)) {
                std::cerr << "run_experiment: loss diverged at epoch " << epoch << "\n";
                result.diverged = true;
                save_network(net, cfg.out_dir + "/net.fbnc");
                return result;
            }
            loss_sum += loss;
            ++loss_count;

            const auto e = output_error<Scalar>(trace.output(), y);
            const auto ud = backward(method, net, fb_now, trace, e);
            optimizer_step(cfg.optimizer, rms, net, ud);

            if (cfg.diag_every > 0 && batch_counter % cfg.diag_every == 0) {
                auto recs = measure_alignment(net, trace, ud);
                for (auto& r : recs) {
                    r.epoch = epoch;
                    r.batch = batch_counter;
                }
                detail::write_alignment_rows(align_csv, recs);
                align_csv.flush();
            }
            ++batch_counter;
        }

        EpochReport report;
        report.epoch = epoch;
        report.loss = loss_count ? loss_sum / double(loss_count) : 0.0;
        report.train_error_pct = evaluate(net, bundle.train);
        report.test_error_pct = evaluate(net, bundle.test);
        if (bundle.validation) report.val_error_pct = evaluate(net, *bundle.validation);
        report.wall_seconds =
            cfg.deterministic
                ? 0.0
                : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail::write_epoch_row(epoch_csv, report);
        result.epochs.push_back(report);

        if (report.train_error_pct <= cfg.stop_train_error) {
            result.reached_stop = true;
            break;
        }
        rms.lr *= cfg.lr_decay;
    }

    if (feedback_checksum(fb) != fb_sum_before)
        throw HarnessError("run_experiment: feedback weights mutated during training");

    result.checkpoint_path = cfg.out_dir + "/net.fbnc";
    save_network(net, result.checkpoint_path);
    return result;
}

}  // namespace fblab

#endif  // FBLAB_HARNESS_HPP
