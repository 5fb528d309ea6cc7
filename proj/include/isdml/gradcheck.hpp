#pragma once

// Central finite-difference audit of every analytic gradient in the library,
// on seeded random instances. Used by the `gradcheck` subcommand.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace isdml {

struct GradcheckEntry {
    std::string name;
    std::size_t instances = 0;  // instances actually compared
    std::size_t skipped = 0;    // instances too close to a hinge / ReLU kink
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return instances > 0 && max_rel_error < tolerance; }
};

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed, std::size_t instances = 100);

}  // namespace isdml
