#include "cmdp/lowerbound.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmdp {

namespace {

std::string path_string(const TreePath& path) {
    std::string dirs;
    for (TreePath q = path; !q.empty(); q = q.popped()) dirs.push_back(q.last() ? 'R' : 'L');
    std::reverse(dirs.begin(), dirs.end());
    return dirs.empty() ? "." : dirs;
}

void check_tree_args(std::int64_t n, std::uint32_t k) {
    if (n < 1) throw ModelError("tree recursion: n must be positive");
    if (static_cast<std::int64_t>(k) > n)
        throw ModelError("tree recursion: k = " + std::to_string(k) + " exceeds n = " +
                         std::to_string(n));
}

struct StPair {
    Rat s;
    Rat t;
};

// Bottom-up over the height-k subtree rooted at `path`.
StPair recurse_st(std::int64_t n, std::uint32_t k, const TreePath& path, const MrParamGrid& grid,
                  const Rat& p, const Rat& a) {
    if (k == 0) return {Rat(1), Rat(1)};
    StPair left = recurse_st(n, k - 1, path.pushed(false), grid, p, a);
    StPair right = recurse_st(n, k - 1, path.pushed(true), grid, p, a);
    Rat p0 = p * grid.at(path, 0, k);
    Rat p1 = p * grid.at(path, 1, k);
    Rat hold0 = 1 - p0 + p0 * a * left.s;
    Rat hold1 = 1 - p1 + p1 * a * right.s;
    Rat s = hold0 * hold1;
    Rat t = p0 * a * left.t * hold1 + p1 * a * right.t * hold0 -
            p0 * a * left.t * p1 * a * right.t;
    return {s, t};
}

void collect_missing(std::uint32_t k, const TreePath& path, const MrParamGrid& grid,
                     std::vector<std::string>& missing) {
    if (k == 0) return;
    for (std::uint8_t slot = 0; slot < 2; ++slot) {
        try {
            grid.at(path, slot, k);
        } catch (const ModelError&) {
            missing.push_back(path_string(path) + "/y" + std::to_string(slot));
        }
    }
    collect_missing(k - 1, path.pushed(false), grid, missing);
    collect_missing(k - 1, path.pushed(true), grid, missing);
}

Rat u_fixed_point(const Rat& p) {
    Rat q = (1 - p) / p;
    return q * q;
}

// Interval image of the u-map x -> (p x + 1 - p)^2 and the one-bit per-tree
// maps. All maps are evaluated in plain interval arithmetic; monotonicity
// arguments appear at the call sites that rely on them.
Iv u_map(const Iv& x, const Iv& p) {
    Iv h = p * x + (Iv(1) - p);
    return h * h;
}

struct FgIv {
    Iv f;
    Iv g;
};

// One-bit split of T^n with certified tails: the f-recursion is iterated
// min(n, cap) times; past the cap f is enclosed by [f_cap, fstar_hi] where
// fstar_hi comes from an interval fixed-point enclosure (verified by the
// inclusion phi(F) subset F), and g picks up one power of the multiplier
// hull per remaining level.
FgIv onebit_split_iv(std::int64_t n, const Iv& p, std::uint32_t cap = 160) {
    Rat an(static_cast<long>(n) * n, static_cast<long>(n) * n + 1);
    Iv pa = p * Iv(an);
    Iv one(1);
    Iv two(2);
    Iv f(0);
    Iv g = one;
    std::uint64_t steps = std::min<std::uint64_t>(n, cap);
    for (std::uint64_t k = 0; k < steps; ++k) {
        Iv hold = pa * f + (one - p);
        Iv nf = hold * hold;
        g = pa * g * (two - p + pa * f);
        f = nf;
    }
    if (static_cast<std::uint64_t>(n) > steps) {
        // enclose the f fixed point: iterate the interval map from the hull
        // [f, 1] until the inclusion phi(F) subset F certifies it
        Iv fhull = Iv::bounds(f, one);
        for (int it = 0; it < 200; ++it) {
            Iv nxt = u_map(fhull, pa);
            Iv tight = Iv::bounds(f, nxt);
            if (tight.valid() && nxt.hi_d() <= fhull.hi_d()) fhull = tight;
            if (u_map(fhull, pa).hi_d() <= fhull.hi_d() && it > 8) break;
        }
        Iv mult = pa * (two - p + pa * fhull);
        Iv mpow = pow(mult, Iv(static_cast<long>(n - steps)));
        g = g * mpow;
        f = Iv::bounds(f, fhull);
    }
    return {f, g};
}

double clamp01(double x) { return x < 0 ? 0 : (x > 1 ? 1 : x); }

}  // namespace

SurvivalStats tree_recursion(std::int64_t n, std::uint32_t k, const MrParamGrid& grid,
                             const Rat& p) {
    TreePath root;
    for (std::uint32_t d = 0; d + k < static_cast<std::uint64_t>(n); ++d)
        root = root.pushed(false);
    return tree_recursion(n, k, grid, p, root);
}

SurvivalStats tree_recursion(std::int64_t n, std::uint32_t k, const MrParamGrid& grid,
                             const Rat& p, const TreePath& root) {
    check_tree_args(n, k);
    if (root.size() + k != static_cast<std::uint64_t>(n))
        throw ModelError("tree recursion: root path length " + std::to_string(root.size()) +
                         " does not leave a height-" + std::to_string(k) + " subtree of T^" +
                         std::to_string(n));
    grid.validate();
    std::vector<std::string> missing;
    collect_missing(k, root, grid, missing);
    if (!missing.empty()) {
        std::ostringstream os;
        os << "tree recursion: grid missing " << missing.size() << " entries:";
        for (const auto& m : missing) os << ' ' << m;
        throw ModelError(os.str());
    }
    Rat a(n * n, n * n + 1);
    StPair st = recurse_st(n, k, root, grid, p, a);
    return {st.s, st.t, 1 - st.s};
}

GreedySeq greedy_sequences(const Rat& p, std::uint32_t N) {
    if (p <= 0 || p >= 1) throw ModelError("greedy sequences: p must lie in (0,1)");
    if (N > kGreedySeqCap)
        throw ModelError("greedy sequences: exact values double in size per index; N capped at " +
                         std::to_string(kGreedySeqCap) + " (use the interval variant beyond)");
    GreedySeq out;
    out.fixed_point = u_fixed_point(p);
    out.u.reserve(N + 1);
    out.v.reserve(N + 1);
    out.u.push_back(Rat(0));
    out.v.push_back(Rat(0));
    for (std::uint32_t k = 1; k <= N; ++k) {
        Rat h = p * out.u[k - 1] + 1 - p;
        out.u.push_back(h * h);
        out.v.push_back(p * (1 + out.v[k - 1]) * (2 - p + p * out.u[k - 1]));
    }
    return out;
}

GreedySeqIv greedy_sequences_iv(const Rat& p, std::uint32_t N) {
    Iv pi(p);
    Iv one(1);
    Iv two(2);
    GreedySeqIv out;
    out.u.reserve(N + 1);
    out.v.reserve(N + 1);
    out.u.push_back(Iv(0));
    out.v.push_back(Iv(0));
    for (std::uint32_t k = 1; k <= N; ++k) {
        out.u.push_back(u_map(out.u[k - 1], pi));
        out.v.push_back(pi * (one + out.v[k - 1]) * (two - pi + pi * out.u[k - 1]));
    }
    return out;
}

TreeSplit onebit_tree_split(std::int64_t n, const Rat& p) {
    if (n < 1) throw ModelError("onebit split: n must be positive");
    if (n > static_cast<std::int64_t>(kGreedySeqCap))
        throw ModelError("onebit split: exact values double in size per level; n capped at " +
                         std::to_string(kGreedySeqCap));
    Rat a(n * n, n * n + 1);
    Rat pa = p * a;
    Rat f(0);
    Rat g(1);
    for (std::int64_t k = 0; k < n; ++k) {
        Rat hold = pa * f + 1 - p;
        Rat nf = hold * hold;
        g = pa * g * (2 - p + pa * f);
        f = nf;
    }
    return {f, g};
}

TreeSplitIv onebit_tree_split_iv(std::int64_t n, const Rat& p) {
    if (n < 1) throw ModelError("onebit split: n must be positive");
    FgIv fg = onebit_split_iv(n, Iv(p));
    return {fg.f, fg.g};
}

// --------------------------------------------------------------- lemma checks

std::string LemmaReport::csv() const {
    std::ostringstream os;
    os << "n,grid,s,t,d,bound,slack\n";
    for (const auto& r : rows) {
        os << r.n << ',' << r.grid_id << ',' << rat_string(r.s) << ',' << rat_string(r.t) << ','
           << rat_string(r.d) << ',' << r.bound_lo << ',' << r.slack_lo << '\n';
    }
    return os.str();
}

nlohmann::json LemmaReport::summary() const {
    nlohmann::json j;
    j["lemma"] = lemma;
    j["rows"] = rows.size();
    j["min_slack"] = min_slack;
    j["violations"] = violations;
    return j;
}

namespace {

void finish_report(LemmaReport& rep) {
    rep.min_slack = rep.rows.empty() ? 0.0 : rep.rows.front().slack_lo;
    rep.violations = 0;
    for (const auto& r : rep.rows) {
        rep.min_slack = std::min(rep.min_slack, r.slack_lo);
        if (r.violation) ++rep.violations;
    }
}

std::string grid_label(const MrParamGrid& g, std::size_t idx) {
    switch (g.kind) {
        case MrParamGrid::Kind::Uniform: return "uniform:" + rat_string(g.uniform);
        case MrParamGrid::Kind::PerLevel: return "per-level:#" + std::to_string(idx);
        case MrParamGrid::Kind::PerNode: return "per-node:#" + std::to_string(idx);
    }
    return "grid:#" + std::to_string(idx);
}

}  // namespace

LemmaReport check_key_lemma(std::int64_t n, const std::vector<MrParamGrid>& grids, const Rat& p) {
    if (n < 1) throw ModelError("key lemma: n must be positive");
    LemmaReport rep;
    rep.lemma = "survival-bound";
    Rat a(n * n, n * n + 1);
    Rat q = (1 - p) / 9;
    Iv ia(a);
    for (std::size_t i = 0; i < grids.size(); ++i) {
        SurvivalStats st = tree_recursion(n, static_cast<std::uint32_t>(n), grids[i], p);
        Iv bound = pow(ia, Iv(q * st.t * (n * n)));
        Iv slack = bound - Iv(st.s);
        LemmaRow row;
        row.n = n;
        row.grid_id = grid_label(grids[i], i);
        row.s = st.s;
        row.t = st.t;
        row.d = st.d;
        row.bound_lo = bound.lo_d();
        row.bound_hi = bound.hi_d();
        row.slack_lo = slack.lo_d();
        row.violation = slack.certainly_lt(Iv(0));
        rep.rows.push_back(std::move(row));
    }
    finish_report(rep);
    return rep;
}

LemmaReport check_death_bound(std::int64_t n, const std::vector<MrParamGrid>& grids, const Rat& p) {
    if (n < 1) throw ModelError("death bound: n must be positive");
    LemmaReport rep;
    rep.lemma = "death-bound";
    Rat q = (1 - p) / 9;
    const std::pair<const char*, Rat> bounds[] = {{"|q/4", q / 4}, {"|0.008", rat(8, 1000)}};
    for (std::size_t i = 0; i < grids.size(); ++i) {
        SurvivalStats st = tree_recursion(n, static_cast<std::uint32_t>(n), grids[i], p);
        for (const auto& [suffix, c] : bounds) {
            Rat slack = st.d - c * st.t;
            LemmaRow row;
            row.n = n;
            row.grid_id = grid_label(grids[i], i) + suffix;
            row.s = st.s;
            row.t = st.t;
            row.d = st.d;
            Iv bound(c * st.t);
            row.bound_lo = bound.lo_d();
            row.bound_hi = bound.hi_d();
            row.slack_lo = Iv(slack).lo_d();
            row.violation = slack < 0;
            rep.rows.push_back(std::move(row));
        }
    }
    finish_report(rep);
    return rep;
}

LemmaReport check_calculus_lemma(const std::vector<std::pair<Rat, Rat>>& points) {
    LemmaReport rep;
    rep.lemma = "calculus";
    for (const auto& [r, x] : points) {
        if (r < 0 || x < 0 || x > Rat(1, 2))
            throw ModelError("calculus lemma: point (" + rat_string(r) + ", " + rat_string(x) +
                             ") outside r >= 0, x in [0, 1/2]");
        Iv ir(r);
        Iv ix(x);
        Iv lhs = exp(-(ir * ix));
        Iv rhs = Iv(1) - ir + ir * exp(-(ix + ix * ix));
        Iv slack = lhs - rhs;
        LemmaRow row;
        row.grid_id = "r=" + rat_string(r) + ",x=" + rat_string(x);
        row.bound_lo = rhs.lo_d();
        row.bound_hi = rhs.hi_d();
        row.slack_lo = slack.lo_d();
        row.violation = slack.certainly_lt(Iv(0));
        rep.rows.push_back(std::move(row));
    }
    finish_report(rep);
    return rep;
}

std::vector<MrParamGrid> structured_grids(std::uint32_t k, std::size_t cap) {
    if (k < 1) throw ModelError("structured grids: k must be positive");
    const Rat values[3] = {Rat(0), Rat(1, 2), Rat(1)};
    std::size_t slots = 2 * static_cast<std::size_t>(k);
    std::size_t total = 1;
    for (std::size_t i = 0; i < slots && total < cap; ++i) total *= 3;
    total = std::min(total, cap);
    std::vector<MrParamGrid> out;
    out.reserve(total);
    for (std::size_t code = 0; code < total; ++code) {
        MrParamGrid g;
        g.kind = MrParamGrid::Kind::PerLevel;
        g.per_level.resize(k);
        std::size_t c = code;
        for (std::uint32_t level = 0; level < k; ++level) {
            g.per_level[level][0] = values[c % 3];
            c /= 3;
            g.per_level[level][1] = values[c % 3];
            c /= 3;
        }
        out.push_back(std::move(g));
    }
    return out;
}

MrParamGrid random_grid(std::int64_t n, Rng& rng) {
    if (n < 1 || n > 20) throw ModelError("random grid: n out of range");
    MrParamGrid g;
    g.kind = MrParamGrid::Kind::PerNode;
    // all internal nodes: paths of length 0 .. n-1
    std::vector<TreePath> level{TreePath()};
    for (std::int64_t d = 0; d < n; ++d) {
        std::vector<TreePath> next;
        for (const auto& path : level) {
            for (std::uint8_t slot = 0; slot < 2; ++slot) {
                Rat val = rat(static_cast<long>(rng.next() % 65), 64);
                g.per_node.emplace(
                    MrParamGrid::NodeSlot{path.low_word(),
                                          static_cast<std::uint8_t>(path.size()), slot},
                    val);
            }
            if (d + 1 < n) {
                next.push_back(path.pushed(false));
                next.push_back(path.pushed(true));
            }
        }
        level = std::move(next);
    }
    return g;
}

// ------------------------------------------------------- accumulated signals

RedPartialSum expected_red_partial_sum(std::uint64_t N) {
    if (N < 1) throw ModelError("expected red: N must be positive");
    RedPartialSum out;
    out.sum = Rat(0);
    for (std::uint64_t n = 1; n <= N; ++n)
        out.sum += Rat(1, static_cast<long>(n * n + 1));
    Iv cap = Iv::pi() * Iv::pi() / Iv(6);
    out.below_pi2_6 = Iv(out.sum).certainly_lt(cap);
    return out;
}

Iv onebit_expected_red(std::uint32_t N, std::uint32_t skip, const Rat& p) {
    GreedySeqIv seq = greedy_sequences_iv(p, N);
    Iv total(0);
    for (std::uint32_t n = skip + 1; n <= N; ++n) {
        Rat w(1, static_cast<long>(n) * (static_cast<long>(n) * n + 1));
        total += Iv(w) * seq.v[n];
    }
    return total;
}

Rat onebit_expected_red_exact(std::uint32_t N, std::uint32_t skip, const Rat& p) {
    GreedySeq seq = greedy_sequences(p, N);
    Rat total(0);
    for (std::uint32_t n = skip + 1; n <= N; ++n)
        total += seq.v[n] / (static_cast<long>(n) * (static_cast<long>(n) * n + 1));
    return total;
}

Rat greedy_cumulative_death(std::uint32_t N, const Rat& p) {
    if (N > kGreedySeqCap)
        throw ModelError("greedy death: exact values double in size per level; N capped at " +
                         std::to_string(kGreedySeqCap));
    Rat survive(1);
    MrParamGrid ones = MrParamGrid::uniform_grid(Rat(1));
    for (std::uint32_t n = 1; n <= N; ++n) {
        SurvivalStats st = tree_recursion(n, n, ones, p);
        survive *= 1 - st.d / static_cast<long>(n);
    }
    return 1 - survive;
}

OneBitRedCurve onebit_cumulative_red(const std::vector<std::uint32_t>& checkpoints,
                                     std::uint32_t skip, const Rat& p) {
    if (checkpoints.empty() || !std::is_sorted(checkpoints.begin(), checkpoints.end()))
        throw ModelError("onebit red curve: checkpoints must be ascending and nonempty");
    OneBitRedCurve out;
    Iv p_iv(p);
    Iv survive(1);
    Iv one(1);
    std::size_t next = 0;
    for (std::uint32_t n = 1; n <= checkpoints.back(); ++n) {
        if (n > skip) {
            FgIv fg = onebit_split_iv(n, p_iv);
            Iv x = (one - fg.f - fg.g) / Iv(static_cast<long>(n));
            survive *= one - x;
        }
        while (next < checkpoints.size() && checkpoints[next] == n) {
            out.at_checkpoints.push_back(one - survive);
            ++next;
        }
    }
    // past the last checkpoint N the death can grow by at most
    // sum_{n>N} (1/n) v_n/(n^2+1) < sum_{n>N} 1/(n^2+1) < 1/N,
    // using v_n < n (certified on a prefix; preserved by the recursion since
    // p(1+v)(2-p+pu) < 1+v at u < u*, an exact rational identity at u = u*).
    GreedySeqIv seq = greedy_sequences_iv(p, 64);
    Rat ustar = u_fixed_point(p);
    for (std::uint32_t k = 1; k <= 64; ++k) {
        if (!seq.v[k].certainly_lt(Iv(static_cast<long>(k))))
            throw ModelError("onebit red curve: v bound check failed at " + std::to_string(k));
        if (!seq.u[k].certainly_lt(Iv(ustar)))
            throw ModelError("onebit red curve: u bound check failed at " + std::to_string(k));
    }
    // exact identity p (1 + v)(2 - p + p u*) = 1 + v demands p(2-p+p u*) = 1
    if (p * (2 - p + p * ustar) != 1)
        throw ModelError("onebit red curve: fixed-point identity does not close");
    out.tail_bound = Iv(Rat(1, static_cast<long>(checkpoints.back())));
    return out;
}

std::uint64_t divergence_index(double bound, std::uint64_t cap, const Rat& p) {
    Iv p_iv(p);
    Iv one(1);
    Iv u(0);
    Iv total(0);
    Rat ustar = u_fixed_point(p);
    Iv ustar_iv(ustar);
    for (std::uint64_t n = 1; n <= cap; ++n) {
        // u_{n} for the current index; beyond the contraction floor the value
        // is pinned inside [previous, u*]
        if (n <= 256)
            u = u_map(u, p_iv);
        else
            u = Iv::bounds(u, ustar_iv);
        total += (one - u) / Iv(static_cast<long>(n));
        if (total.certainly_gt(Iv(rat(static_cast<long>(bound * 1000000), 1000000))))
            return n;
    }
    throw ModelError("divergence scan: cap reached before the bound");
}

// ------------------------------------------------------------------ horizons

namespace {

// u_n as doubles: converged after a couple hundred iterations.
std::vector<double> u_table(const Rat& p, std::size_t len) {
    double pd = p.get_d();
    std::vector<double> u(len + 1, 0.0);
    for (std::size_t k = 1; k <= len; ++k) {
        double h = pd * u[k - 1] + 1 - pd;
        u[k] = h * h;
    }
    return u;
}

}  // namespace

std::uint64_t green_horizon(std::uint32_t m, double threshold, std::uint32_t skip,
                            std::uint64_t cap, const Rat& p) {
    if (m == 0 || m > 64) throw ModelError("green horizon: m out of range");
    const std::size_t kConverged = 256;
    std::vector<double> u = u_table(p, kConverged);
    double ustar = u_fixed_point(p).get_d();
    std::vector<double> probs(m + 1, 0.0);
    probs[0] = 1.0;
    for (std::uint64_t n = skip + 1; n <= cap; ++n) {
        double un = n <= kConverged ? u[n] : ustar;
        double gn = clamp01((1 - un) / static_cast<double>(n));
        for (std::uint32_t j = m; j >= 1; --j)
            probs[j] = probs[j] * (1 - gn) + probs[j - 1] * gn;
        probs[0] *= 1 - gn;
        if (probs[m] >= threshold) return n;
    }
    throw ModelError("green horizon: cap reached at P = " + std::to_string(probs[m]));
}

Iv green_count_probability(std::uint32_t m, std::uint64_t H, std::uint32_t skip, const Rat& p) {
    if (m == 0 || m > 64) throw ModelError("green probability: m out of range");
    const std::uint32_t kConverged = 256;
    GreedySeqIv seq = greedy_sequences_iv(p, kConverged);
    Rat ustar = u_fixed_point(p);
    // u nondecreasing and bounded by u*: the map is monotone on [0,1] and u*
    // is an exact fixed point, so past the computed prefix u_n lies inside
    // [u_prefix, u*]
    if (p * (2 - p + p * ustar) != 1)
        throw ModelError("green probability: fixed-point identity does not close");
    for (std::uint32_t k = 1; k <= kConverged; ++k)
        if (!seq.u[k].certainly_le(Iv(ustar)))
            throw ModelError("green probability: u bound check failed at " + std::to_string(k));
    Iv u_hull = Iv::bounds(seq.u[kConverged], Iv(ustar));
    Iv one(1);
    std::vector<Iv> probs(m + 1, Iv(0));
    probs[0] = one;
    for (std::uint64_t n = skip + 1; n <= H; ++n) {
        const Iv& un = n <= kConverged ? seq.u[n] : u_hull;
        Iv gn = (one - un) / Iv(static_cast<long>(n));
        for (std::uint32_t j = m; j >= 1; --j)
            probs[j] = probs[j] * (one - gn) + probs[j - 1] * gn;
        probs[0] *= one - gn;
    }
    return probs[m];
}

JointPlan parity_joint_plan(std::uint32_t m, double target, std::uint32_t skip, std::uint64_t cap,
                            const Rat& p) {
    if (m == 0 || m > 64) throw ModelError("joint plan: m out of range");
    double pd = p.get_d();
    std::vector<double> probs(m + 1, 0.0);
    probs[0] = 1.0;
    JointPlan plan;
    for (std::uint64_t n = skip + 1; n <= cap; ++n) {
        double a = static_cast<double>(n) * n / (static_cast<double>(n) * n + 1);
        double pa = pd * a;
        double f = 0;
        double g = 1;
        std::uint64_t steps = std::min<std::uint64_t>(n, 60);
        for (std::uint64_t k = 0; k < steps; ++k) {
            double hold = pa * f + 1 - pd;
            g = pa * g * (2 - pd + pa * f);
            f = hold * hold;
        }
        if (n > steps) g *= std::pow(pa * (2 - pd + pa * f), static_cast<double>(n - steps));
        double qc3 = clamp01((1 - f - g) / static_cast<double>(n));
        double qc2 = clamp01(g / static_cast<double>(n));
        double stay = 1 - qc3 - qc2;
        for (std::uint32_t j = m; j >= 1; --j)
            probs[j] = probs[j] * stay + probs[j - 1] * qc2;
        probs[0] *= stay;
        if (probs[m] >= target) {
            plan.horizon = n;
            plan.joint = probs[m];
            plan.clean = 0;
            for (const double& x : probs) plan.clean += x;
            plan.reached = true;
            return plan;
        }
    }
    plan.horizon = cap;
    plan.joint = probs[m];
    plan.clean = 0;
    for (const double& x : probs) plan.clean += x;
    plan.reached = false;
    return plan;
}

}  // namespace cmdp
