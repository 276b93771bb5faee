#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cmdp/kernel.hpp"
#include "cmdp/model.hpp"
#include "cmdp/slice.hpp"

#include "json.hpp"

namespace cmdp {

// ---------------------------------------------------------------------------
// Bubble schedule: nested finite layers K_1 subset L_1 subset K_2 ... around
// the initial states, with per-level goal slices F_i and halving error budgets
// eps_i = eps * 2^-(i+1). Levels are found by searching the smallest radii
// whose visit bounds, evaluated by exact forward DP against a probe kernel,
// fall below eps_i.
// ---------------------------------------------------------------------------

struct ScheduleLevel {
    std::uint64_t k = 0;  // K_i = ball of radius k around I
    std::uint64_t l = 0;  // L_i = ball of radius l; k < l < next k
    Rat eps;
    std::vector<StateKey> K, L, F;  // sorted by canonical key order
    std::unordered_set<StateKey> K_set, L_set, F_set;
    // declared proxy numbers: P(first goal visit beyond L_{i-1} lands in
    // (k, window]) at the chosen k, and the unaccounted tail P(no visit
    // within the window) at the search window
    double bound_at_k = 0;
    double tail_at_window = 0;
};

struct BubbleSchedule {
    std::string model_name;
    std::uint32_t goal_mask = 0;
    Rat eps_total;
    std::vector<StateKey> init;           // K_0 = F_0 = I by convention
    std::vector<ScheduleLevel> levels;    // level i at index i-1
    FiniteSlice window;                   // radius-k_m slice around I
    bool step_indexed = false;            // layer membership via the step field
    std::uint64_t search_window = 0;

    std::size_t size() const { return levels.size(); }
    std::uint64_t horizon() const { return levels.empty() ? 0 : levels.back().k; }

    // Membership with the paper's edge conventions: K_0 = I, K_{-1} empty
    // (level 0 and -1 reached via the two-below lookups in region solving).
    bool in_K(std::int64_t i, const StateKey& s) const;
    bool in_F(std::size_t i, const StateKey& s) const;  // i >= 1
    // Smallest i >= 1 with s in K_i; 0 when s lies beyond every layer.
    std::size_t layer_of(const StateKey& s) const;

    // Invariant sweep: radii interleave (k_i < l_i < k_{i+1}), budgets halve,
    // F_i are pairwise disjoint and nonempty. Throws ModelError on violation.
    void check_invariants() const;

    nlohmann::json summary() const;
};

struct ScheduleCaps {
    std::uint32_t levels = 4;        // number of bubble levels m
    std::uint64_t radius_cap = 512;  // absolute bound on any k_i, l_i; also
                                     // the exact-DP search window
};

// Search the smallest interleaved radii meeting the per-level bounds against
// `probe`, by exact forward DP over the radius-capped window. The level-i
// condition is the computable upper proxy of the visit lemma: P(first visit
// of F beyond L_{i-1} happens after k but within the window) <= eps_i, plus a
// witnessed visit by k (so F_i is nonempty). The unaccounted tail (no visit
// within the whole window) is recorded per level, not assumed zero.
// Requires an acyclic, finitely branching model; return radii l_i come for
// free (zero bound) from the step counter or a structural depth answer.
// Throws ModelError naming the level and achieved bound when a cap is hit.
BubbleSchedule choose_schedule(ModelPtr model, const std::vector<StateKey>& I,
                               std::uint32_t goal_mask, const Rat& eps, KernelPtr probe,
                               const ScheduleCaps& caps);

// ---------------------------------------------------------------------------
// Layered pattern values. Block i is the pattern (K_i \ (F_i u K_{i-2}))* F_i;
// the suffix objective from a level-i handoff state is the concatenation of
// blocks i+1, i+2, ... Truncating at depth j (accept after block j) gives
// values nonincreasing in j that upper-bound the infinite intersection.
// ---------------------------------------------------------------------------

struct ValueTable {
    std::size_t level = 0;         // values of the suffix past block `level`
    std::uint32_t depth = 0;       // deepest block included
    bool converged = false;        // successive depths settled within tol
    bool hit_cap = false;
    double last_gap = 0;           // max pointwise change at the last deepening
    std::unordered_map<StateKey, Rat> at;  // F_level states (upper bounds)
};

// Exact nested backward induction over the schedule window. Deepens the
// truncation one block at a time, up to block min(J, m), stopping early when
// the largest pointwise change drops to `tol` or below. Values are upper
// bounds and nonincreasing in depth.
ValueTable value_R_ge(ModelPtr model, const BubbleSchedule& schedule, std::size_t i,
                      std::uint32_t J, const Rat& tol);

// ---------------------------------------------------------------------------
// Per-level region solving: bounded total reward over K_i \ K_{i-2} plus a
// zero sink. First arrival at s' in F_i pays values.at(s'); exiting K_i or
// touching K_{i-2} first pays 0. Exact backward induction; argmax ties break
// by canonical key order.
// ---------------------------------------------------------------------------

struct RegionSolution {
    std::size_t level = 0;
    std::unordered_map<StateKey, Edge> choice;  // controlled region states
    std::unordered_map<StateKey, Rat> value;    // reward-to-go per region state
};

RegionSolution solve_region(ModelPtr model, const BubbleSchedule& schedule, std::size_t i,
                            const ValueTable& values);

// Exhaustive one-step deviation check: no alternative successor at any
// controlled region state beats the chosen one. Returns a render of the
// first improving deviation, or the empty string when none exists.
std::string find_improving_deviation(ModelPtr model, const BubbleSchedule& schedule,
                                     const RegionSolution& region);

// ---------------------------------------------------------------------------
// 1-bit assembly: one deterministic kernel switching between the per-level
// strategies. At s in K_i \ K_{i-1} with bit b: b = i mod 2 plays toward F_i
// (normal mode) and flips the bit on arrival in F_i; b = (i+1) mod 2 plays
// the next level's strategy. The initial bit is 1. Levels past the last
// solved one defer to the last strategy; the report flags that extension.
// ---------------------------------------------------------------------------

KernelPtr assemble_onebit(std::shared_ptr<const BubbleSchedule> schedule,
                          std::vector<RegionSolution> strategies);

// Trace audit for the flip discipline: the bit must change exactly on
// departure from a normal-mode F_i state, and nowhere else. Returns a render
// of the first offending trace position, or the empty string.
struct TraceRec;
std::string audit_bit_flips(const BubbleSchedule& schedule, const std::vector<TraceRec>& recs);

// ---------------------------------------------------------------------------
// End-to-end pipeline.
// ---------------------------------------------------------------------------

struct SynthCaps {
    ScheduleCaps schedule;
    std::uint32_t value_depth = 24;  // block cap for the nested values
    Rat value_tol = Rat(1, 1000000);
};

struct SynthResult {
    KernelPtr kernel;    // one-bit Markov kernel on `playfield`
    ModelPtr playfield;  // the input model, definitized when needed
    ModelPtr encoded;    // step-counter encoding the schedule lives on
    std::shared_ptr<const BubbleSchedule> schedule;
    std::vector<ValueTable> values;      // per level 1..m
    std::vector<RegionSolution> regions;
    nlohmann::json report;
};

// Pipeline: definitize branching when needed, encode a step counter, choose
// the schedule against the probe, solve values and regions per level, unify
// into the 1-bit kernel, then strip the counter back into the memory. The
// probe descriptor is built against the (possibly definitized) input and
// lifted to the encoding. The returned kernel plays on `playfield`; for
// infinitely branching inputs that is the definitized twin, whose runs map
// one-to-one onto runs of the original with identical labels and weights.
SynthResult synthesize_onebit_markov(ModelPtr model, std::uint32_t goal_mask, const Rat& eps,
                                     const std::string& probe_name,
                                     const nlohmann::json& probe_params, const SynthCaps& caps);

}  // namespace cmdp
