#include "config.hpp"

#include "gmsnet/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>

namespace gms::cli {

TwoScaleMesh RunConfig::mesh() const { return build_mesh(nx, nx, cx, cx); }

GaussianFieldSpec RunConfig::gaussian() const {
    GaussianFieldSpec spec;
    spec.sigma2 = sigma2;
    spec.eta1 = eta1;
    spec.eta2 = eta2;
    spec.modes = std::min(modes, nx * nx);
    return spec;
}

DiskFieldSpec RunConfig::disks() const {
    DiskFieldSpec spec;
    spec.n_disks = n_disks;
    spec.kappa_b = kappa_b;
    spec.kappa_r = kappa_r;
    return spec;
}

void add_options(CLI::App& app, RunConfig& cfg, unsigned knobs) {
    app.add_option("--config", cfg.config, "JSON file with default values; flags win")->check(CLI::ExistingFile);
    app.add_option("--threads", cfg.threads, "Worker thread cap (0: hardware concurrency)");
    if (knobs & kField) {
        app.add_option("--profile", cfg.profile, "Coefficient profile")->check(CLI::IsMember({"gaussian", "disks"}));
        app.add_option("--sigma2", cfg.sigma2, "Log-Gaussian variance");
        app.add_option("--eta1", cfg.eta1, "Correlation length in x");
        app.add_option("--eta2", cfg.eta2, "Correlation length in y");
        app.add_option("--modes", cfg.modes, "Karhunen-Loeve terms of the log-Gaussian field");
        app.add_option("--kappa-b", cfg.kappa_b, "Disk permeability");
        app.add_option("--kappa-r", cfg.kappa_r, "Background permeability for disks");
        app.add_option("--n-disks", cfg.n_disks, "Number of disks");
        app.add_option("--nx", cfg.nx, "Fine cells per side");
        app.add_option("--cx", cfg.cx, "Coarse elements per side");
    }
    if (knobs & kSeed) app.add_option("--seed", cfg.seed, "Seed of the first sample");
    if (knobs & kCount) app.add_option("--count", cfg.count, "Number of consecutive seeds");
    if (knobs & kNc) app.add_option("--n-c", cfg.n_c, "Coarse basis functions per element")->delimiter(',');
    if (knobs & kSolver) {
        app.add_option("--tol", cfg.tol, "Relative residual tolerance");
        app.add_option("--maxit", cfg.maxit, "Iteration limit");
        app.add_option("--prolongation", cfg.prolongation, "Coarse basis source")
            ->check(CLI::IsMember({"lsp", "nn"}));
        app.add_option("--weights", cfg.weights, "Network weight file for --prolongation nn");
        app.add_option("--field", cfg.field, "Read the coefficient from a field file instead of sampling");
    }
    if (knobs & kDataset) {
        app.add_option("--augment", cfg.augment, "Augmentation")->check(CLI::IsMember({"none", "symmetry", "kl"}));
        app.add_option("--kl-l", cfg.kl_l, "Truncation of the tile KL model");
        app.add_option("--kl-m", cfg.kl_m, "KL reduction factor: fit on 1/M of the records");
    }
    if (knobs & kNetwork) {
        app.add_option("--levels", cfg.levels, "U-Net levels");
        app.add_option("--base-channels", cfg.base_channels, "Channels of the first level");
    }
    if (knobs & kOut) app.add_option("--out", cfg.out, "Output path");
}

namespace {

template <class T>
std::function<void(const nlohmann::json&)> setter(T& field) {
    return [&field](const nlohmann::json& v) { field = v.get<T>(); };
}

} // namespace

void apply_config_file(const CLI::App& app, RunConfig& cfg) {
    if (cfg.config.empty()) return;
    std::ifstream in(cfg.config);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cfg.config + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(cfg.config + ": expected a JSON object");

    const std::map<std::string, std::function<void(const nlohmann::json&)>> setters{
        {"profile", setter(cfg.profile)},
        {"sigma2", setter(cfg.sigma2)},
        {"eta1", setter(cfg.eta1)},
        {"eta2", setter(cfg.eta2)},
        {"modes", setter(cfg.modes)},
        {"kappa-b", setter(cfg.kappa_b)},
        {"kappa-r", setter(cfg.kappa_r)},
        {"n-disks", setter(cfg.n_disks)},
        {"seed", [&cfg](const nlohmann::json& v) { cfg.seed = v.get<std::uint64_t>(); }},
        {"count", setter(cfg.count)},
        {"nx", setter(cfg.nx)},
        {"cx", setter(cfg.cx)},
        {"n-c",
         [&cfg](const nlohmann::json& v) {
             cfg.n_c = v.is_array() ? v.get<std::vector<Index>>() : std::vector<Index>{v.get<Index>()};
         }},
        {"tol", setter(cfg.tol)},
        {"maxit", setter(cfg.maxit)},
        {"prolongation", setter(cfg.prolongation)},
        {"weights", setter(cfg.weights)},
        {"field", setter(cfg.field)},
        {"augment", setter(cfg.augment)},
        {"kl-l", setter(cfg.kl_l)},
        {"kl-m", setter(cfg.kl_m)},
        {"levels", setter(cfg.levels)},
        {"base-channels", setter(cfg.base_channels)},
        {"threads", setter(cfg.threads)},
        {"out", setter(cfg.out)},
    };
    for (const auto& [key, value] : doc.items()) {
        const auto it = setters.find(key);
        const CLI::Option* opt = nullptr;
        try {
            opt = app.get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
        }
        if (it == setters.end() || opt == nullptr)
            throw ConfigError(cfg.config + ": key '" + key + "' is not an option of " + app.get_name());
        if (opt->count() > 0) continue;
        try {
            it->second(value);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(cfg.config + ": key '" + key + "': " + e.what());
        }
    }
}

void validate(const RunConfig& cfg, unsigned knobs) {
    if (knobs & kField) {
        if (cfg.nx < 1 || cfg.cx < 1 || cfg.nx % cfg.cx != 0)
            throw ConfigError("--cx must divide --nx, got nx=" + std::to_string(cfg.nx) + " cx=" + std::to_string(cfg.cx));
        if (cfg.profile == "gaussian") {
            if (cfg.modes < 1) throw ConfigError("--modes must be positive");
            cfg.gaussian().validate(cfg.nx * cfg.nx);
        } else {
            cfg.disks().validate();
        }
    }
    if ((knobs & kSeed) && !cfg.seed) throw ConfigError("--seed is required");
    if ((knobs & kCount) && cfg.count < 1) throw ConfigError("--count must be at least 1");
    if (knobs & kNc) {
        const Index cells = (cfg.nx / std::max<Index>(cfg.cx, 1)) * (cfg.nx / std::max<Index>(cfg.cx, 1));
        for (Index n : cfg.n_c)
            if (n < 1 || n > cells)
                throw ConfigError("--n-c " + std::to_string(n) + " outside [1, " + std::to_string(cells) + "]");
    }
    if (knobs & kSolver) {
        if (!(cfg.tol > 0.0)) throw ConfigError("--tol must be positive");
        if (cfg.maxit < 1) throw ConfigError("--maxit must be at least 1");
        if (cfg.prolongation == "nn" && cfg.weights.empty()) throw ConfigError("--prolongation nn needs --weights");
    }
    if (knobs & kDataset) {
        if (cfg.augment == "kl" && (cfg.kl_m < 1 || cfg.kl_l < 1)) throw ConfigError("--kl-l and --kl-m must be positive");
    }
}

} // namespace gms::cli
