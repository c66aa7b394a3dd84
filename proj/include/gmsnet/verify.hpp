#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gms {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Quick self-check of the library invariants at small sizes: distance
/// metric axioms and projector identity, recombination invariance, TPFA
/// against a cell loop, local spectral problem against a dense solve,
/// label symmetry under grid transforms, and file format round trips.
/// Deterministic for a given seed.
std::vector<CheckResult> run_verification(std::uint64_t seed);

} // namespace gms
