#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "ash/tensor.hpp"

namespace ash {

struct FdOptions {
    double h = 1e-5;
    std::vector<std::int64_t> exclude;  // coordinates skipped (nondifferentiable points)
    std::int64_t max_coords = 0;        // 0 = check every coordinate
    std::uint64_t sample_seed = 0;      // seeds coordinate sampling when max_coords > 0
};

// Central-difference oracle. fn must map a tensor to a one-element tensor,
// recording onto the tape when one is given, and must be pure. Returns the
// max relative error between (f(x+h) - f(x-h)) / 2h and the reverse-mode
// gradient, with denominator max(|numeric|, |analytic|, 1e-8).
template <typename S>
double finite_diff_check(const std::function<TensorT<S>(const TensorT<S>&, TapeT<S>*)>& fn,
                         const TensorT<S>& point, const FdOptions& opt = {});

// Runs the double-precision gradient checks for every differentiable op and
// for the full ASH-U forward plus pairwise loss on a toy pair batch. Prints
// one line per check and returns the max relative error seen.
double run_gradient_suite(std::ostream& out);

}  // namespace ash
