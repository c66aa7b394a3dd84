#include "config.hpp"

#include "gmsnet/assembly.hpp"
#include "gmsnet/coeff.hpp"
#include "gmsnet/datagen.hpp"
#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"
#include "gmsnet/precond.hpp"
#include "gmsnet/spectral.hpp"
#include "gmsnet/surrogate.hpp"
#include "gmsnet/verify.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

namespace fs = std::filesystem;
using namespace gms;
using gms::cli::RunConfig;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kNumerical = 3, kNotConverged = 4 };

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Samples fields for consecutive seeds. The Gaussian eigendecomposition is
// done once.
class FieldSource {
public:
    explicit FieldSource(const RunConfig& cfg) : cfg_(cfg), mesh_(cfg.mesh()) {
        if (cfg.profile == "gaussian") {
            const auto t0 = std::chrono::steady_clock::now();
            sampler_.emplace(mesh_, cfg.gaussian());
            spdlog::info("Karhunen-Loeve setup with {} modes: {:.2f} s", sampler_->modes(), seconds_since(t0));
        }
    }

    CoefficientField sample(std::uint64_t seed) const {
        if (sampler_) return sampler_->sample(seed);
        return sample_random_disks(mesh_, cfg_.disks(), seed);
    }

    const TwoScaleMesh& mesh() const { return mesh_; }

private:
    const RunConfig& cfg_;
    TwoScaleMesh mesh_;
    std::optional<GaussianFieldSampler> sampler_;
};

struct CsvRow {
    std::string profile;
    Index n_c;
    std::string source;
    std::uint64_t seed;
    Index iters;
    double final_relres;
};

void append_csv(const std::string& path, const std::vector<CsvRow>& rows) {
    if (path.empty()) return;
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw ConfigError("cannot open " + path + " for appending");
    if (fresh) out << "profile,n_c,source,seed,iters,final_relres\n";
    out.precision(6);
    for (const auto& r : rows)
        out << r.profile << ',' << r.n_c << ',' << r.source << ',' << r.seed << ',' << r.iters << ','
            << std::scientific << r.final_relres << std::defaultfloat << '\n';
}

SolveReport solve_with(const CoefficientField& kappa, const Prolongation& p, const RunConfig& cfg) {
    const auto& mesh = kappa.mesh();
    const auto a = assemble_tpfa(mesh, kappa);
    const auto f = assemble_source(mesh, SourcePattern::Corners);
    const auto two_grid = build_two_grid(a, p, build_block_jacobi(a, mesh));
    return pcg(a, f, two_grid, cfg.tol, cfg.maxit);
}

struct Prolongator {
    std::optional<UNetWeights> weights;

    explicit Prolongator(const RunConfig& cfg) {
        if (cfg.prolongation == "nn") weights.emplace(load_weights(cfg.weights));
    }

    Index n_c(Index requested) const {
        if (!weights) return requested;
        const Index from_weights = weights->architecture().out_channels + 1;
        if (requested != 0 && requested != from_weights)
            throw ConfigError("--n-c " + std::to_string(requested) + " does not match the network, which gives " +
                              std::to_string(from_weights));
        return from_weights;
    }

    Prolongation build(const CoefficientField& kappa, Index n_c) const {
        if (!weights) return build_prolongation(kappa.mesh(), kappa, n_c);
        auto net = predict_prolongation(*weights, kappa.mesh(), kappa);
        if (!net.fallback_elements.empty())
            spdlog::warn("{} elements fell back to the eigensolver", net.fallback_elements.size());
        return std::move(net.prolongation);
    }
};

int cmd_gen_field(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("--out is required");
    const FieldSource source(cfg);
    const auto kappa = source.sample(*cfg.seed);
    write_field(kappa, cfg.out);
    std::cout << "field " << cfg.out << " (" << cfg.nx << "x" << cfg.nx << ", " << cfg.profile << ", seed "
              << *cfg.seed << ")\n"
              << "min " << kappa.min() << "\nmax " << kappa.max() << "\ncontrast " << kappa.contrast() << "\n";
    return kOk;
}

int cmd_make_dataset(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("--out is required");
    const Index n_c = cfg.n_c.empty() ? 5 : cfg.n_c.front();
    if (cfg.n_c.size() > 1) throw ConfigError("make-dataset takes a single --n-c");
    if (n_c < 2) throw ConfigError("datasets need --n-c >= 2");
    const FieldSource source(cfg);
    const auto& mesh = source.mesh();

    std::vector<DatasetRecord> records;
    double label_time = 0.0;
    for (Index s = 0; s < cfg.count; ++s) {
        const auto kappa = source.sample(*cfg.seed + static_cast<std::uint64_t>(s));
        const auto t0 = std::chrono::steady_clock::now();
        auto batch = extract_records(mesh, kappa, n_c);
        label_time += seconds_since(t0);
        for (auto& r : batch) records.push_back(std::move(r));
    }
    const std::size_t extracted = records.size();

    if (cfg.augment == "symmetry") {
        std::vector<DatasetRecord> out;
        out.reserve(records.size() * 5);
        for (auto& r : records) {
            auto extra = symmetry_augment(r);
            out.push_back(std::move(r));
            for (auto& e : extra) out.push_back(std::move(e));
        }
        records = std::move(out);
    } else if (cfg.augment == "kl") {
        const auto total = records.size();
        const auto keep = total / static_cast<std::size_t>(cfg.kl_m);
        if (keep < 2) throw ConfigError("KL augmentation needs at least two source records");
        records.resize(keep);
        std::vector<Eigen::VectorXd> tiles;
        for (const auto& r : records) tiles.push_back(r.kappa);
        const auto model = fit_kl(tiles, mesh.mx(), std::min(cfg.kl_l, mesh.cells_per_element()));
        const auto fresh = kl_augment(model, static_cast<Index>(total - keep), *cfg.seed ^ 0x6b6c61756775ULL);
        std::vector<DatasetRecord> generated(fresh.size());
        const auto t0 = std::chrono::steady_clock::now();
        parallel_for(fresh.size(), [&](std::size_t k) {
            generated[k].m = mesh.mx();
            generated[k].kappa = fresh[k];
            generated[k].label = tile_labels(fresh[k], mesh.mx(), mesh.hx(), n_c);
        });
        label_time += seconds_since(t0);
        for (auto& r : generated) records.push_back(std::move(r));
    }

    write_dataset(records, cfg.out);
    std::cout << "dataset " << cfg.out << "\nextracted records " << extracted << "\nrecords " << records.size()
              << "\ntile " << mesh.mx() << "x" << mesh.mx() << "\nn_basis " << n_c - 1
              << "\nlabel generation seconds " << label_time << "\n";
    return kOk;
}

int cmd_solve(const RunConfig& cfg) {
    if (cfg.n_c.size() > 1) throw ConfigError("solve takes a single --n-c; use bench for sweeps");
    const Prolongator prolongator(cfg);
    const Index n_c = prolongator.n_c(cfg.n_c.empty() ? (prolongator.weights ? 0 : 5) : cfg.n_c.front());

    std::optional<CoefficientField> kappa;
    if (!cfg.field.empty()) {
        kappa.emplace(read_field(cfg.field, cfg.cx, cfg.cx));
    } else {
        if (!cfg.seed) throw ConfigError("--seed is required unless --field is given");
        kappa.emplace(FieldSource(cfg).sample(*cfg.seed));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = prolongator.build(*kappa, n_c);
    const auto report = solve_with(*kappa, p, cfg);
    const double elapsed = seconds_since(t0);

    std::cout << "iterations " << report.iterations << "\nconverged " << (report.converged ? "yes" : "no")
              << "\nfinal relative residual " << report.final_relative_residual() << "\ncoarse dimension "
              << p.coarse_dim() << "\nseconds " << elapsed << "\n";
    append_csv(cfg.out, {{cfg.field.empty() ? cfg.profile : "file", n_c, cfg.prolongation,
                          cfg.seed.value_or(0), report.iterations, report.final_relative_residual()}});
    if (!report.converged) {
        std::cerr << "no convergence within " << cfg.maxit << " iterations; residual history:\n";
        for (std::size_t k = 0; k < report.relative_residuals.size(); ++k)
            std::cerr << k << ' ' << report.relative_residuals[k] << '\n';
        return kNotConverged;
    }
    return kOk;
}

int cmd_bench(const RunConfig& cfg) {
    const Prolongator prolongator(cfg);
    std::vector<Index> levels = cfg.n_c;
    if (levels.empty()) levels = prolongator.weights ? std::vector<Index>{0} : std::vector<Index>{1, 3, 5};
    const FieldSource source(cfg);
    bool all_converged = true;
    std::cout << "profile,n_c,source,seed,iters,final_relres\n";
    for (Index s = 0; s < cfg.count; ++s) {
        const auto seed = *cfg.seed + static_cast<std::uint64_t>(s);
        const auto kappa = source.sample(seed);
        std::vector<CsvRow> rows;
        for (Index requested : levels) {
            const Index n_c = prolongator.n_c(requested);
            const auto report = solve_with(kappa, prolongator.build(kappa, n_c), cfg);
            if (!report.converged) {
                all_converged = false;
                spdlog::warn("seed {} n_c {}: no convergence within {} iterations", seed, n_c, cfg.maxit);
            }
            rows.push_back({cfg.profile, n_c, cfg.prolongation, seed, report.iterations,
                            report.final_relative_residual()});
            std::cout << rows.back().profile << ',' << n_c << ',' << cfg.prolongation << ',' << seed << ','
                      << report.iterations << ',' << report.final_relative_residual() << std::endl;
        }
        append_csv(cfg.out, rows);
    }
    return all_converged ? kOk : kNotConverged;
}

int cmd_verify(const RunConfig& cfg) {
    const auto results = run_verification(cfg.seed.value_or(1));
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
    }
    return ok ? kOk : kNumerical;
}

int cmd_init_weights(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("--out is required");
    UNetArchitecture arch;
    arch.levels = cfg.levels;
    arch.base_channels = cfg.base_channels;
    const Index n_c = cfg.n_c.empty() ? 5 : cfg.n_c.front();
    if (n_c < 2) throw ConfigError("a network needs --n-c >= 2");
    arch.out_channels = static_cast<std::uint32_t>(n_c - 1);
    arch.validate();
    save_weights(UNetWeights::random(arch, *cfg.seed), cfg.out);
    std::cout << "weights " << cfg.out << "\nparameters " << arch.parameter_count() << "\n";
    return kOk;
}

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("gmsnet");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    const char* level = std::getenv("MSG_LOG");
    const std::string name = level ? level : "info";
    if (name == "error")
        spdlog::set_level(spdlog::level::err);
    else if (name == "debug")
        spdlog::set_level(spdlog::level::debug);
    else
        spdlog::set_level(spdlog::level::info);
    if (name != "error" && name != "info" && name != "debug")
        spdlog::warn("MSG_LOG={} not one of error, info, debug; using info", name);
}

} // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Multiscale two-grid Darcy solver with learned coarse spaces"};
    app.require_subcommand(1);
    RunConfig cfg;
    using namespace gms::cli;

    struct Command {
        CLI::App* app;
        unsigned knobs;
        int (*run)(const RunConfig&);
    };
    const unsigned field = kField | kSeed;
    std::vector<Command> commands{
        {app.add_subcommand("gen-field", "Sample a coefficient field"), field | kOut, cmd_gen_field},
        {app.add_subcommand("make-dataset", "Build an MSDS training dataset"),
         field | kCount | kNc | kDataset | kOut, cmd_make_dataset},
        {app.add_subcommand("solve", "Run PCG with the two-grid preconditioner"),
         kField | kNc | kSolver | kOut, cmd_solve},
        {app.add_subcommand("bench", "Sweep seeds and coarse space sizes, append CSV rows"),
         field | kCount | kNc | kSolver | kOut, cmd_bench},
        {app.add_subcommand("verify", "Run the library self-checks"), 0, cmd_verify},
        {app.add_subcommand("init-weights", "Write randomly initialized network weights"),
         kSeed | kNc | kNetwork | kOut, cmd_init_weights},
    };
    for (auto& c : commands) add_options(*c.app, cfg, c.knobs);
    // solve takes --seed too, but it is optional when a field file is given
    commands[2].app->add_option("--seed", cfg.seed, "Seed of the sampled field");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        for (auto& c : commands) {
            if (!c.app->parsed()) continue;
            apply_config_file(*c.app, cfg);
            validate(cfg, c.knobs);
            set_max_threads(cfg.threads);
            return c.run(cfg);
        }
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const ContractError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const FormatError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    }
    return kValidation;
}
