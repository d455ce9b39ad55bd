#ifndef FBLAB_CONFIG_HPP
#define FBLAB_CONFIG_HPP

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fblab/activation.hpp"
#include "fblab/credit.hpp"
#include "fblab/linalg.hpp"
#include "fblab/optim.hpp"

namespace fblab {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat key=value experiment description, schema version 1. '#' starts a
/// comment, unknown keys are rejected, and every unset key takes the default
/// listed here. The fully resolved config is echoed into the output directory
/// before any work happens.
struct ExperimentConfig {
    int version = 1;
    std::string dataset = "mnist";    // mnist | cifar10 | cifar100
    std::string data_dir = "data/mnist";
    Index train_subset = 0;           // 0 = all samples
    Index validation = 0;             // 0 = none, else the last N train samples
    std::string arch = "1x800";       // NxM, comma list (e.g. 800,800), or conv
    Activation activation = Activation::Tanh;
    Method method = Method::DFA;
    std::string init = "auto";        // auto | zero | uniform_fanin
    bool shared_feedback = false;
    Optimizer optimizer = Optimizer::RMSprop;
    double learning_rate = 1e-4;
    double lr_decay = 1.0;            // per-epoch multiplicative factor
    double rho = 0.99;
    double eps_rms = 1e-8;
    Index batch_size = 64;
    int max_epochs = 300;
    double stop_train_error = 0.01;   // percent; negative = never stop early
    double dropout_input = 0.0;
    double dropout_hidden = 0.0;
    double adversarial_eps = 0.0;
    std::uint64_t seed = 1;
    int freeze_layer = -1;            // network layer index frozen from the start
    int unfreeze_epoch = -1;          // epoch at which the frozen layer thaws
    std::string switch_method;        // optional method used from unfreeze_epoch on
    int diag_every = 50;              // batches between alignment records, 0 = off
    bool deterministic = false;       // zero out wall-clock fields for bitwise-stable logs
    std::string whiten = "auto";      // auto | on | off (auto: on for the conv arch)
    std::string precision = "double"; // double | single
    std::string out_dir = "runs/out";

    InitScheme resolved_init() const
    {
        if (init == "zero") return InitScheme::Zero;
        if (init == "uniform_fanin") return InitScheme::UniformFanIn;
        // BP cannot leave zero and ReLU units die there; everyone else starts at zero
        if (method == Method::BP || activation == Activation::ReLU) return InitScheme::UniformFanIn;
        return InitScheme::Zero;
    }

    bool resolved_whiten() const
    {
        if (whiten == "on") return true;
        if (whiten == "off") return false;
        return arch == "conv";
    }

    std::optional<Method> switch_method_parsed() const
    {
        if (switch_method.empty()) return std::nullopt;
        return method_from_string(switch_method);
    }

    void validate() const
    {
        if (version != 1) throw ConfigError("config: unsupported version " + std::to_string(version));
        if (dataset != "mnist" && dataset != "cifar10" && dataset != "cifar100")
            throw ConfigError("config: unknown dataset '" + dataset + "'");
        if (init != "auto" && init != "zero" && init != "uniform_fanin")
            throw ConfigError("config: unknown init '" + init + "'");
        if (whiten != "auto" && whiten != "on" && whiten != "off")
            throw ConfigError("config: whiten must be auto, on or off");
        if (precision != "double" && precision != "single")
            throw ConfigError("config: precision must be double or single");
        if (batch_size <= 0) throw ConfigError("config: batch_size must be positive");
        if (max_epochs <= 0) throw ConfigError("config: max_epochs must be positive");
        if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be positive");
        if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("config: lr_decay must be in (0, 1]");
        if (dropout_input < 0.0 || dropout_input >= 1.0 || dropout_hidden < 0.0 || dropout_hidden >= 1.0)
            throw ConfigError("config: dropout probabilities must lie in [0, 1)");
        if (adversarial_eps < 0.0) throw ConfigError("config: adversarial_eps must be >= 0");
        if (adversarial_eps > 0.0 && resolved_whiten())
            throw ConfigError("config: adversarial training needs inputs in [0, 1]; disable whitening");
        if (train_subset < 0 || validation < 0) throw ConfigError("config: negative sample counts");
        if ((freeze_layer >= 0) != (unfreeze_epoch >= 0))
            throw ConfigError("config: freeze_layer and unfreeze_epoch must be set together");
        if (!switch_method.empty() && unfreeze_epoch < 0)
            throw ConfigError("config: switch_method needs an unfreeze_epoch");
        if (diag_every < 0) throw ConfigError("config: diag_every must be >= 0");
        (void)hidden_widths();            // throws on a malformed arch string
        (void)switch_method_parsed();     // throws on a malformed method name
        if (arch == "conv" && dataset == "mnist")
            throw ConfigError("config: the conv architecture is defined for the CIFAR datasets");
    }

    /// Hidden dense widths for NxM / comma-list archs; empty for conv.
    std::vector<Index> hidden_widths() const
    {
        auto positive = [this](const std::string& tok) {
            std::size_t used = 0;
            long v = 0;
            try {
                v = std::stol(tok, &used);
            } catch (const std::exception&) {
                throw ConfigError("config: bad arch '" + arch + "'");
            }
            if (used != tok.size() || v <= 0) throw ConfigError("config: bad arch '" + arch + "'");
            return v;
        };
        std::vector<Index> widths;
        if (arch == "conv") return widths;
        const auto x = arch.find('x');
        if (x != std::string::npos && arch.find(',') == std::string::npos) {
            const long depth = positive(arch.substr(0, x));
            const long width = positive(arch.substr(x + 1));
            widths.assign(std::size_t(depth), Index(width));
            return widths;
        }
        std::stringstream ss(arch);
        std::string tok;
        while (std::getline(ss, tok, ',')) widths.push_back(Index(positive(tok)));
        if (widths.empty()) throw ConfigError("config: bad arch '" + arch + "'");
        return widths;
    }

    static ExperimentConfig from_string(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string echo() const;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_string(const std::string& text)
{
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));

        try {
            if (key == "version") cfg.version = std::stoi(val);
            else if (key == "dataset") cfg.dataset = val;
            else if (key == "data_dir") cfg.data_dir = val;
            else if (key == "train_subset") cfg.train_subset = std::stol(val);
            else if (key == "validation") cfg.validation = std::stol(val);
            else if (key == "arch") cfg.arch = val;
            else if (key == "activation") cfg.activation = activation_from_string(val);
            else if (key == "method") cfg.method = method_from_string(val);
            else if (key == "init") cfg.init = val;
            else if (key == "shared_feedback") cfg.shared_feedback = (val == "true" || val == "1");
            else if (key == "optimizer") cfg.optimizer = optimizer_from_string(val);
            else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "lr_decay") cfg.lr_decay = std::stod(val);
            else if (key == "rho") cfg.rho = std::stod(val);
            else if (key == "eps_rms") cfg.eps_rms = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stol(val);
            else if (key == "max_epochs") cfg.max_epochs = std::stoi(val);
            else if (key == "stop_train_error") cfg.stop_train_error = std::stod(val);
            else if (key == "dropout_input") cfg.dropout_input = std::stod(val);
            else if (key == "dropout_hidden") cfg.dropout_hidden = std::stod(val);
            else if (key == "adversarial_eps") cfg.adversarial_eps = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "freeze_layer") cfg.freeze_layer = std::stoi(val);
            else if (key == "unfreeze_epoch") cfg.unfreeze_epoch = std::stoi(val);
            else if (key == "switch_method") cfg.switch_method = val;
            else if (key == "diag_every") cfg.diag_every = std::stoi(val);
            else if (key == "deterministic") cfg.deterministic = (val == "true" || val == "1");
            else if (key == "whiten") cfg.whiten = val;
            else if (key == "precision") cfg.precision = val;
            else if (key == "out_dir") cfg.out_dir = val;
            else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" + val +
                              "' for key '" + key + "'");
        } catch (const ValueError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

/// Every key with its final value, defaults included.
inline std::string ExperimentConfig::echo() const
{
    std::ostringstream os;
    os << "version = " << version << "\n";
    os << "dataset = " << dataset << "\n";
    os << "data_dir = " << data_dir << "\n";
    os << "train_subset = " << train_subset << "\n";
    os << "validation = " << validation << "\n";
    os << "arch = " << arch << "\n";
    os << "activation = " << to_string(activation) << "\n";
    os << "method = " << to_string(method) << "\n";
    os << "init = " << (resolved_init() == InitScheme::Zero ? "zero" : "uniform_fanin") << "\n";
    os << "shared_feedback = " << (shared_feedback ? "true" : "false") << "\n";
    os << "optimizer = " << to_string(optimizer) << "\n";
    os << "learning_rate = " << learning_rate << "\n";
    os << "lr_decay = " << lr_decay << "\n";
    os << "rho = " << rho << "\n";
    os << "eps_rms = " << eps_rms << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "max_epochs = " << max_epochs << "\n";
    os << "stop_train_error = " << stop_train_error << "\n";
    os << "dropout_input = " << dropout_input << "\n";
    os << "dropout_hidden = " << dropout_hidden << "\n";
    os << "adversarial_eps = " << adversarial_eps << "\n";
    os << "seed = " << seed << "\n";
    os << "freeze_layer = " << freeze_layer << "\n";
    os << "unfreeze_epoch = " << unfreeze_epoch << "\n";
    os << "switch_method = " << switch_method << "\n";
    os << "diag_every = " << diag_every << "\n";
    os << "deterministic = " << (deterministic ? "true" : "false") << "\n";
    os << "whiten = " << (resolved_whiten() ? "on" : "off") << "\n";
    os << "precision = " << precision << "\n";
    os << "out_dir = " << out_dir << "\n";
    return os.str();
}

}  // namespace fblab

#endif  // FBLAB_CONFIG_HPP
