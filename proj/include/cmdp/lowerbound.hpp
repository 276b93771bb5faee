#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cmdp/families.hpp"
#include "cmdp/interval.hpp"
#include "cmdp/rational.hpp"
#include "cmdp/rng.hpp"

#include "json.hpp"

namespace cmdp {

// Survival statistics of one guarded subtree under a randomized memoryless
// assignment: s = P(the traversal exits without a red transition), t = P(at
// least one green leaf is visited and no red transition), d = 1 - s.
struct SurvivalStats {
    Rat s;
    Rat t;
    Rat d;
};

// Exact bottom-up evaluation of the survival recursion over the height-k
// subtree of T^n rooted at `root` (default: the all-left path of length n-k).
// Each yellow state crosses its guard with probability p * grid value; the
// guard edge is red with probability 1/(n^2+1). Height 0 returns s = t = 1.
// Throws when k > n or a per-node grid is missing an addressed node (the
// message lists the missing nodes).
SurvivalStats tree_recursion(std::int64_t n, std::uint32_t k, const MrParamGrid& grid,
                             const Rat& p = Rat(7, 10));
SurvivalStats tree_recursion(std::int64_t n, std::uint32_t k, const MrParamGrid& grid,
                             const Rat& p, const TreePath& root);

// The always-down sequences: u_n = (p u_{n-1} + 1 - p)^2 from u_0 = 0 is the
// probability that a height-n traversal exits without a green under the
// one-bit rule, and v_n = p(1+v_{n-1})(2-p+p u_{n-1}) from v_0 = 0 is the
// expected number of guard crossings. Values are exact; the squaring doubles
// the bit length per index, so N is capped (kGreedySeqCap) and larger indices
// are served by the interval variant below.
struct GreedySeq {
    std::vector<Rat> u;
    std::vector<Rat> v;
    Rat fixed_point;  // ((1-p)/p)^2, the attracting limit of u
};
inline constexpr std::uint32_t kGreedySeqCap = 24;
GreedySeq greedy_sequences(const Rat& p, std::uint32_t N);

// Certified enclosures of u_n, v_n up to index N. The recursion contracts, so
// widths stay near the arithmetic floor; consecutive values are separated by
// far more than the width, which lets callers decide monotonicity and the
// u <= fixed-point / v_n < n comparisons rigorously at any N.
struct GreedySeqIv {
    std::vector<Iv> u;
    std::vector<Iv> v;
};
GreedySeqIv greedy_sequences_iv(const Rat& p, std::uint32_t N);

// Per-tree split of the one-bit traversal of T^n (enter at the root with the
// bit down): f = P(exit with no red and no green), g = P(exit with no red,
// green seen). 1 - f - g is the chance of at least one red crossing. Exact
// variant doubles bits per level (n <= kGreedySeqCap).
struct TreeSplit {
    Rat f;
    Rat g;
};
TreeSplit onebit_tree_split(std::int64_t n, const Rat& p);
struct TreeSplitIv {
    Iv f;
    Iv g;
};
TreeSplitIv onebit_tree_split_iv(std::int64_t n, const Rat& p);

// --------------------------------------------------------------- lemma checks

// One checked instance. s, t, d are exact; the bound side is transcendental,
// so it carries a certified enclosure and `slack_lo` is a certified lower
// bound on (bound - s) resp. (d - c t). A violation is reported only when the
// whole enclosure sits on the wrong side.
struct LemmaRow {
    std::int64_t n = 0;
    std::string grid_id;
    Rat s;
    Rat t;
    Rat d;
    double bound_lo = 0;
    double bound_hi = 0;
    double slack_lo = 0;
    bool violation = false;
};

struct LemmaReport {
    std::string lemma;
    std::vector<LemmaRow> rows;
    double min_slack = 0;
    std::size_t violations = 0;

    // columns: n, grid, s, t, d, bound, slack (rationals as num/den)
    std::string csv() const;
    nlohmann::json summary() const;
};

// s <= a^{q t n^2} with a = n^2/(n^2+1) and q = (1-p)/9, for every grid.
LemmaReport check_key_lemma(std::int64_t n, const std::vector<MrParamGrid>& grids,
                            const Rat& p = Rat(7, 10));

// d >= (q/4) t and d >= 0.008 t on the given grids; both constants are
// rational, so rows are exact and emitted per bound ("|q/4", "|0.008").
// The two constants differ (q/4 = 1/120 vs 1/125); both are checked.
LemmaReport check_death_bound(std::int64_t n, const std::vector<MrParamGrid>& grids,
                              const Rat& p = Rat(7, 10));

// e^{-rx} >= 1 - r + r e^{-x-x^2} for r >= 0, x in [0, 1/2]; rows reuse the
// grid column for the point ("r=..,x=.."), s/t/d are unused (zero).
LemmaReport check_calculus_lemma(const std::vector<std::pair<Rat, Rat>>& points);

// Structured per-level grids: both slots of every level range over
// {0, 1/2, 1} (down-move chance at the yellow; crossing chance 0, p/2, p),
// enumerated in mixed-radix order and capped.
std::vector<MrParamGrid> structured_grids(std::uint32_t k, std::size_t cap);

// Per-node grid with independent uniform rationals j/64 on every yellow slot
// of the height-n tree.
MrParamGrid random_grid(std::int64_t n, Rng& rng);

// ------------------------------------------------------- accumulated signals

// Exact partial sum sum_{n<=N} 1/(n^2+1) (the per-tree expected-red cap 1/n *
// n/(n^2+1) summed), plus a certified comparison against pi^2/6.
struct RedPartialSum {
    Rat sum;
    bool below_pi2_6 = false;
};
RedPartialSum expected_red_partial_sum(std::uint64_t N);

// Expected number of red transitions within trees 1..N when trees 1..skip are
// passed without entering: sum_{skip<n<=N} (1/n) v_n / (n^2+1). Certified.
Iv onebit_expected_red(std::uint32_t N, std::uint32_t skip, const Rat& p = Rat(7, 10));
// Exact variant (N <= kGreedySeqCap).
Rat onebit_expected_red_exact(std::uint32_t N, std::uint32_t skip, const Rat& p = Rat(7, 10));

// P(at least one red within trees 1..N) under the always-down assignment,
// exact: 1 - prod_{n<=N} (1 - (1/n)(1 - s_n)) with s_n = tree_recursion(n,n)
// on the all-ones grid. Bit length doubles per level; N <= kGreedySeqCap.
Rat greedy_cumulative_death(std::uint32_t N, const Rat& p = Rat(7, 10));

// Same probability under the one-bit rule with trees 1..skip skipped,
// certified, returned for every N in `checkpoints` (ascending). The second
// member bounds the remaining tail beyond the last checkpoint: the increment
// past N is below sum_{n>N} 1/(n^2+1) < 1/N, certified via v_n < n.
struct OneBitRedCurve {
    std::vector<Iv> at_checkpoints;
    Iv tail_bound;
};
OneBitRedCurve onebit_cumulative_red(const std::vector<std::uint32_t>& checkpoints,
                                     std::uint32_t skip, const Rat& p = Rat(7, 10));

// Smallest N with sum_{n<=N} (1/n)(1 - u_n) > bound (certified); the sum
// diverges, so the scan terminates for any bound within the cap.
std::uint64_t divergence_index(double bound, std::uint64_t cap, const Rat& p = Rat(7, 10));

// ------------------------------------------------------------------ horizons

// Smallest horizon H such that P(at least m greens within trees 1..H) reaches
// `threshold` under the one-bit rule with trees 1..skip skipped. Greens in
// tree n arrive with probability (1/n)(1 - u_n) independently per tree;
// deterministic double-precision count DP.
std::uint64_t green_horizon(std::uint32_t m, double threshold, std::uint32_t skip,
                            std::uint64_t cap, const Rat& p = Rat(7, 10));

// Certified enclosure of that probability at a fixed horizon.
Iv green_count_probability(std::uint32_t m, std::uint64_t H, std::uint32_t skip,
                           const Rat& p = Rat(7, 10));

// Horizon planning for the parity variant: find the smallest H whose joint
// probability P(no red crossing in trees 1..H and at least m greens) reaches
// `target` (double DP; per-tree split via onebit closed-form tail), and
// report the joint and no-red components at H.
struct JointPlan {
    std::uint64_t horizon = 0;
    double joint = 0;
    double clean = 0;
    bool reached = false;
};
JointPlan parity_joint_plan(std::uint32_t m, double target, std::uint32_t skip,
                            std::uint64_t cap, const Rat& p = Rat(7, 10));

}  // namespace cmdp
