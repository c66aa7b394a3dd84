#pragma once

#include "gmsnet/coeff.hpp"
#include "gmsnet/mesh.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gms::cli {

/// Every knob of the pipeline. Defaults, then the JSON config file, then
/// command-line flags; flags win.
struct RunConfig {
    std::string profile = "gaussian";
    double sigma2 = 2.0;
    double eta1 = 0.1;
    double eta2 = 0.1;
    Index modes = 256;  // field KL terms, capped at the cell count
    double kappa_b = 1e4;
    double kappa_r = 1.0;
    Index n_disks = 15;
    std::optional<std::uint64_t> seed;
    Index count = 1;
    Index nx = 128;
    Index cx = 8;
    std::vector<Index> n_c;  // empty: command default
    double tol = 1e-6;
    Index maxit = 500;
    std::string prolongation = "lsp";
    std::string weights;
    std::string field;
    std::string augment = "none";
    Index kl_l = 25;
    Index kl_m = 2;
    std::uint32_t levels = 4;
    std::uint32_t base_channels = 16;
    unsigned threads = 0;
    std::string out;
    std::string config;

    TwoScaleMesh mesh() const;
    GaussianFieldSpec gaussian() const;
    DiskFieldSpec disks() const;
};

enum Knob : unsigned {
    kField = 1u << 0,
    kSeed = 1u << 1,
    kCount = 1u << 2,
    kNc = 1u << 3,
    kSolver = 1u << 4,
    kDataset = 1u << 5,
    kNetwork = 1u << 6,
    kOut = 1u << 7,
};

/// Registers the flags selected by `knobs` on a subcommand, bound to cfg.
void add_options(CLI::App& app, RunConfig& cfg, unsigned knobs);

/// Fills every value whose flag was not given on the command line from the
/// JSON file named by --config. Unknown keys and keys that do not belong to
/// the subcommand are validation errors.
void apply_config_file(const CLI::App& app, RunConfig& cfg);

/// Checks the knobs used by the subcommand against the module
/// preconditions; throws ConfigError.
void validate(const RunConfig& cfg, unsigned knobs);

} // namespace gms::cli
