#pragma once

#include "cmdp/kernel.hpp"
#include "cmdp/monitor.hpp"
#include "cmdp/slice.hpp"

namespace cmdp {

// Exact law of the monitor's verdict at the end of the sliced game. The three
// components sum to exactly 1; `undecided` is the mass of runs that left the
// slice (or started a boundary state) with the event still open.
struct ExactTriple {
    Rat success = 0;
    Rat failure = 0;
    Rat undecided = 0;
};

// Forward dynamic program over (slice state, memory mode, observer state) in
// topological order. Requires an acyclic slice with exactly one generator and
// a finite-mode kernel (MD, MR, FR, or one-bit); step-counting kernels must
// be lifted onto the step-encoded model first.
ExactTriple exact_event_probability(const FiniteSlice& slice, const Kernel& kernel,
                                    const Monitor& monitor);

}  // namespace cmdp
