#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cmdp/kernel.hpp"
#include "cmdp/model.hpp"
#include "cmdp/monitor.hpp"

#include "json.hpp"

namespace cmdp {

// One visited state of a sampled run: the memory mode held on arrival,
// whether the incoming transition was red-flagged, and whether the state is
// goal-labeled. The first record has red_taken = false.
struct TraceRec {
    std::uint64_t step;
    StateKey state;
    Mode mode;
    bool red_taken;
    bool goal;
};

struct RunTrace {
    std::vector<TraceRec> recs;  // horizon + 1 records unless the model jams
    nlohmann::json to_json(const Model& m) const;
};

// Reproducible single run: same (model, kernel, start, horizon, seed) gives
// the identical trace. Every mode transition is validated against the
// kernel's class discipline.
RunTrace sample_run(const Model& model, const Kernel& kernel, const StateKey& start,
                    std::uint64_t horizon, std::uint64_t seed);

struct Interval {
    double lo = 0;
    double hi = 0;
    double half_width() const { return (hi - lo) / 2; }
};

// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t successes, std::uint64_t samples, double z);

inline constexpr double kZ95 = 1.959963984540054;
inline constexpr double kZ99 = 2.5758293035489004;

// Monte Carlo event estimate. Undecided runs (the monitor could not settle
// the event within the horizon) are scored as failures in p_hat; p_hat_upper
// scores them as successes, bracketing the infinitary event.
struct Estimate {
    std::uint64_t samples = 0;
    std::uint64_t successes = 0;
    std::uint64_t failures = 0;
    std::uint64_t undecided = 0;
    double p_hat = 0;
    Interval wilson95;
    Interval wilson99;
    double p_hat_upper = 0;
    Interval upper95;
    nlohmann::json to_json() const;
};

Estimate make_estimate(std::uint64_t successes, std::uint64_t failures, std::uint64_t undecided);

struct EventQuery {
    std::uint64_t samples = 1000;
    std::uint64_t horizon = 100000;
    std::uint64_t seed = 1;
    bool validate_modes = false;       // per-step class checks
    std::uint64_t progress_every = 0;  // emit a stderr heartbeat every N samples
    // Optional run boundary: arrival at a matching state ends the run (after
    // the monitor sees the arrival), resolving it through at_end.
    std::function<bool(const StateKey&)> stop;
};

// Runs `samples` independent runs, each on substream (seed, sample index), and
// feeds every transition (plus the initial pseudo-transition) to the monitor.
// Runs end early at an absorbing verdict.
Estimate estimate_event(const Model& model, const Kernel& kernel, const StateKey& start,
                        const Monitor& monitor, const EventQuery& q);

// What to accumulate per run for mean estimation.
struct CountSpec {
    bool red_transitions = false;    // count red-flagged transitions
    std::uint32_t label_mask = 0;    // count arrivals at states with these labels
};

// When a run stops: on arrival at a state satisfying `stop`, or at `horizon`.
struct StopSpec {
    std::function<bool(const StateKey&)> stop;
    std::uint64_t horizon = 1000000;
};

struct MeanEstimate {
    std::uint64_t samples = 0;
    double mean = 0;
    double stddev = 0;
    double sem = 0;  // stddev / sqrt(samples)
    std::uint64_t min = 0;
    std::uint64_t max = 0;
    std::uint64_t stopped = 0;  // runs that hit the stop predicate (vs horizon)
    nlohmann::json to_json() const;
};

MeanEstimate estimate_mean(const Model& model, const Kernel& kernel, const StateKey& start,
                           const CountSpec& what, const StopSpec& until, std::uint64_t samples,
                           std::uint64_t seed);

// Pearson chi-square statistic of observed counts against expected
// proportions (as doubles); used to check fast samplers against exact laws.
double chi_square(const std::vector<std::uint64_t>& observed,
                  const std::vector<double>& expected_prop);

}  // namespace cmdp
