#include "cmdp/synth.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "cmdp/simulate.hpp"
#include "cmdp/transform.hpp"

namespace cmdp {

namespace {

// Every state must answer the question "at which time index is it visited":
// exactly (step counter) or at latest (structural depth). Layer membership,
// zero return bounds and the backward sweeps all lean on this index.
std::uint64_t visit_index(const Model& m, const StateKey& s) {
    if (auto t = m.fixed_visit_step(s)) return static_cast<std::uint64_t>(*t);
    if (auto d = m.depth_of(s)) return *d;
    throw ModelError("schedule search needs a step counter or a structural depth; state " +
                     m.render(s) + " answers neither");
}

bool edge_before(const Edge& a, const Edge& b) {
    if (a.to < b.to) return true;
    if (b.to < a.to) return false;
    return a.red < b.red;
}

// Flip-on-departure rule shared by the assembled kernel and the trace audit:
// at a level-i goal state while in normal phase (bit == i mod 2) the bit
// flips; everywhere else it is kept.
std::uint8_t effective_bit(const BubbleSchedule& sched, std::uint8_t bit, const StateKey& s) {
    std::size_t i = sched.layer_of(s);
    if (i == 0) return bit;
    if (bit == i % 2 && sched.in_F(i, s)) return static_cast<std::uint8_t>((i + 1) % 2);
    return bit;
}

}  // namespace

// ---------------------------------------------------------------------------
// BubbleSchedule
// ---------------------------------------------------------------------------

bool BubbleSchedule::in_K(std::int64_t i, const StateKey& s) const {
    if (i < 0) return false;
    if (i == 0) return std::find(init.begin(), init.end(), s) != init.end();
    if (static_cast<std::size_t>(i) > levels.size())
        throw ModelError("schedule has no level " + std::to_string(i));
    return levels[static_cast<std::size_t>(i) - 1].K_set.contains(s);
}

bool BubbleSchedule::in_F(std::size_t i, const StateKey& s) const {
    if (i == 0 || i > levels.size())
        throw ModelError("schedule has no level " + std::to_string(i));
    return levels[i - 1].F_set.contains(s);
}

std::size_t BubbleSchedule::layer_of(const StateKey& s) const {
    for (std::size_t i = 1; i <= levels.size(); ++i)
        if (levels[i - 1].K_set.contains(s)) return i;
    return 0;
}

void BubbleSchedule::check_invariants() const {
    auto fail = [](const std::string& what) {
        throw ModelError("schedule invariant violated: " + what);
    };
    if (levels.empty()) fail("no levels");
    if (init.empty()) fail("no initial states");
    for (std::size_t i = 1; i <= levels.size(); ++i) {
        const auto& lv = levels[i - 1];
        if (lv.eps != eps_total * pow2_neg(static_cast<unsigned long>(i + 1)))
            fail("level " + std::to_string(i) + " budget is not eps/2^" + std::to_string(i + 1));
        if (lv.l <= lv.k) fail("level " + std::to_string(i) + " has l <= k");
        if (i >= 2) {
            const auto& below = levels[i - 2];
            if (lv.k <= below.l) fail("level " + std::to_string(i) + " has k <= previous l");
            if (!std::includes(lv.K.begin(), lv.K.end(), below.L.begin(), below.L.end()))
                fail("K_" + std::to_string(i) + " does not contain L_" + std::to_string(i - 1));
        }
        if (lv.F.empty()) fail("F_" + std::to_string(i) + " is empty");
        if (!std::includes(lv.K.begin(), lv.K.end(), lv.F.begin(), lv.F.end()))
            fail("F_" + std::to_string(i) + " is not inside K_" + std::to_string(i));
        if (!std::includes(lv.L.begin(), lv.L.end(), lv.K.begin(), lv.K.end()))
            fail("K_" + std::to_string(i) + " is not inside L_" + std::to_string(i));
        if (i >= 2) {
            const auto& prev = levels[i - 2];
            for (const auto& s : lv.F)
                if (prev.L_set.contains(s))
                    fail("F_" + std::to_string(i) + " meets L_" + std::to_string(i - 1));
        }
        for (std::size_t j = 1; j < i; ++j)
            for (const auto& s : levels[j - 1].F)
                if (lv.F_set.contains(s))
                    fail("F_" + std::to_string(i) + " meets F_" + std::to_string(j));
    }
}

nlohmann::json BubbleSchedule::summary() const {
    nlohmann::json out;
    out["model"] = model_name;
    out["goal_labels"] = label_names(goal_mask);
    out["eps"] = rat_report(eps_total);
    out["step_indexed"] = step_indexed;
    out["search_window"] = search_window;
    out["window_states"] = window.size();
    out["horizon"] = horizon();
    nlohmann::json ls = nlohmann::json::array();
    for (std::size_t i = 1; i <= levels.size(); ++i) {
        const auto& lv = levels[i - 1];
        ls.push_back({{"level", i},
                      {"k", lv.k},
                      {"l", lv.l},
                      {"eps", rat_report(lv.eps)},
                      {"K", lv.K.size()},
                      {"L", lv.L.size()},
                      {"F", lv.F.size()},
                      {"bound_at_k", lv.bound_at_k},
                      {"tail_at_window", lv.tail_at_window}});
    }
    out["levels"] = std::move(ls);
    return out;
}

// ---------------------------------------------------------------------------
// Schedule search
// ---------------------------------------------------------------------------

namespace {

// Mass flow per state: sparse list of (memory mode, probability).
using ModeMass = std::vector<std::pair<Mode, Rat>>;
using Flow = std::unordered_map<StateKey, ModeMass>;

void add_mass(Flow& f, const StateKey& s, const Mode& m, const Rat& w) {
    auto& lst = f[s];
    for (auto& [mode, mass] : lst)
        if (mode == m) {
            mass += w;
            return;
        }
    lst.emplace_back(m, w);
}

// Exact distribution of the first visit time of `target` under the probe,
// from one initial state, cut off at `window` steps. first[t] is the mass
// arriving at a target state at time t; the remainder never arrives.
std::vector<Rat> first_visit_dp(const Model& model, const Kernel& probe, const StateKey& init,
                                std::uint64_t window,
                                const std::function<bool(const StateKey&)>& target) {
    std::vector<Rat> first(window + 1, Rat(0));
    Flow cur;
    add_mass(cur, init, probe.initial_mode(), Rat(1));
    for (std::uint64_t t = 0; t <= window; ++t) {
        Flow nxt;
        for (auto& [s, modes] : cur) {
            if (target(s)) {
                for (auto& [mode, mass] : modes) first[t] += mass;
                continue;
            }
            if (t == window) continue;
            Expansion e = model.expand(s);
            if (!e.finite())
                throw ModelError("schedule search requires finite branching; state " +
                                 model.render(s) + " branches infinitely");
            if (e.kind == StateKind::Controlled) {
                for (auto& [mode, mass] : modes)
                    for (const Choice& c : probe.decide(mode, s, e))
                        add_mass(nxt, c.edge.to, c.next, mass * c.w);
            } else {
                for (auto& [mode, mass] : modes)
                    for (const LawEntry& le : e.law.entries())
                        add_mass(nxt, le.edge.to, probe.observe(mode, s, le.edge), mass * le.w);
            }
        }
        cur = std::move(nxt);
    }
    return first;
}

}  // namespace

BubbleSchedule choose_schedule(ModelPtr model, const std::vector<StateKey>& I,
                               std::uint32_t goal_mask, const Rat& eps, KernelPtr probe,
                               const ScheduleCaps& caps) {
    if (!model) throw ModelError("schedule search needs a model");
    if (!probe) throw ModelError("schedule search needs a probe strategy");
    if (I.empty()) throw ModelError("schedule search needs an initial state");
    if (!model->acyclic_claim()) throw ModelError("schedule search requires an acyclic model");
    if (!model->finitely_branching())
        throw ModelError("schedule search requires finite branching; definitize first");
    if (caps.levels == 0) throw ModelError("schedule search needs at least one level");
    if (eps <= Rat(0) || eps >= Rat(1))
        throw ModelError("schedule error budget must lie strictly between 0 and 1");

    MemoModel mm(model);
    const std::uint64_t W = caps.radius_cap;

    BubbleSchedule sched;
    sched.model_name = model->name();
    sched.goal_mask = goal_mask;
    sched.eps_total = eps;
    sched.init = I;
    sched.search_window = W;

    std::uint64_t prev_l = 0;
    for (std::uint32_t lev = 1; lev <= caps.levels; ++lev) {
        const Rat eps_i = eps * pow2_neg(lev + 1);
        const bool carve = lev > 1;
        const std::uint64_t carve_l = prev_l;
        auto target = [&](const StateKey& s) {
            if ((mm.labels(s) & goal_mask) == 0) return false;
            return !carve || visit_index(mm, s) > carve_l;
        };

        // prefix[t] = P(first target visit at time <= t), per initial state
        std::vector<std::vector<Rat>> prefix;
        for (const StateKey& s0 : I) {
            std::vector<Rat> fv = first_visit_dp(mm, *probe, s0, W, target);
            for (std::uint64_t t = 1; t <= W; ++t) fv[t] += fv[t - 1];
            prefix.push_back(std::move(fv));
        }

        const std::uint64_t k_min = carve ? prev_l + 1 : 0;
        if (k_min > W)
            throw ModelError("schedule level " + std::to_string(lev) + ": radius cap " +
                             std::to_string(W) + " leaves no room past the previous layer (l=" +
                             std::to_string(prev_l) + ")");
        std::optional<std::uint64_t> found;
        for (std::uint64_t k = k_min; k <= W && !found; ++k) {
            bool ok = true;
            for (const auto& pf : prefix) {
                if (pf[k] == 0 || pf[W] - pf[k] > eps_i) {
                    ok = false;
                    break;
                }
            }
            if (ok) found = k;
        }
        if (!found) {
            double witnessed = 1.0;
            for (const auto& pf : prefix) witnessed = std::min(witnessed, pf[W].get_d());
            throw ModelError("schedule level " + std::to_string(lev) +
                             ": no goal visit past the previous layer witnessed within window " +
                             std::to_string(W) + " (visit mass " + std::to_string(witnessed) +
                             ")");
        }

        ScheduleLevel lv;
        lv.k = *found;
        lv.l = lv.k + 1;  // visits to {visit index <= k} happen at times <= k
        lv.eps = eps_i;
        double bound = 0, tail = 0;
        for (const auto& pf : prefix) {
            const Rat late = pf[W] - pf[lv.k];
            const Rat never = Rat(1) - pf[W];
            bound = std::max(bound, late.get_d());
            tail = std::max(tail, never.get_d());
        }
        lv.bound_at_k = bound;
        lv.tail_at_window = tail;
        sched.levels.push_back(std::move(lv));
        prev_l = sched.levels.back().l;
    }

    sched.window = truncate_model(mm, I, sched.horizon());
    sched.step_indexed = true;
    for (const auto& st : sched.window.states) {
        if (!model->fixed_visit_step(st.key).has_value()) {
            sched.step_indexed = false;
            break;
        }
    }

    for (const auto& st : sched.window.states) {
        const std::uint64_t vi = visit_index(mm, st.key);
        const bool goal = (st.labels & goal_mask) != 0;
        for (std::size_t i = 1; i <= sched.levels.size(); ++i) {
            auto& lv = sched.levels[i - 1];
            if (vi <= lv.k) lv.K.push_back(st.key);
            if (vi <= lv.l) lv.L.push_back(st.key);
            if (goal && vi <= lv.k && (i == 1 || vi > sched.levels[i - 2].l))
                lv.F.push_back(st.key);
        }
    }
    for (auto& lv : sched.levels) {
        std::sort(lv.K.begin(), lv.K.end());
        std::sort(lv.L.begin(), lv.L.end());
        std::sort(lv.F.begin(), lv.F.end());
        lv.K_set.insert(lv.K.begin(), lv.K.end());
        lv.L_set.insert(lv.L.begin(), lv.L.end());
        lv.F_set.insert(lv.F.begin(), lv.F.end());
    }
    sched.check_invariants();
    return sched;
}

// ---------------------------------------------------------------------------
// Layered pattern values
// ---------------------------------------------------------------------------

namespace {

// Window geometry shared by the backward sweeps: visit index per slice state
// and slice indices bucketed by it.
struct WindowIndex {
    std::vector<std::uint64_t> vi;
    std::vector<std::vector<std::uint32_t>> by_vi;

    WindowIndex(const Model& m, const FiniteSlice& w) {
        vi.resize(w.size());
        std::uint64_t top = 0;
        for (std::uint32_t idx = 0; idx < w.size(); ++idx) {
            vi[idx] = visit_index(m, w.states[idx].key);
            top = std::max(top, vi[idx]);
        }
        by_vi.resize(top + 1);
        for (std::uint32_t idx = 0; idx < w.size(); ++idx)
            by_vi[vi[idx]].push_back(idx);
    }
};

// Exclusive lower radius of block j's star set K_j \ K_{j-2}: states with
// visit index in (low_k(j), k_j]. K_0 collapses to the initial states, which
// in a step-indexed window are exactly the index-0 states.
std::int64_t low_k(const BubbleSchedule& s, std::size_t j) {
    if (j >= 3) return static_cast<std::int64_t>(s.levels[j - 3].k);
    if (j == 2) return 0;
    return -1;
}

struct BlockSweep {
    const BubbleSchedule& sched;
    const FiniteSlice& w;
    const WindowIndex& wi;

    bool is_goal(std::uint32_t idx) const {
        return (w.states[idx].labels & sched.goal_mask) != 0;
    }
    bool is_F(std::size_t j, std::uint32_t idx) const {
        if (!is_goal(idx) || wi.vi[idx] > sched.levels[j - 1].k) return false;
        return j == 1 || wi.vi[idx] > sched.levels[j - 2].l;
    }
    bool in_star(std::size_t j, std::uint32_t idx) const {
        auto v = static_cast<std::int64_t>(wi.vi[idx]);
        return v > low_k(sched, j) && v <= static_cast<std::int64_t>(sched.levels[j - 1].k);
    }

    // One block-j backward sweep. next[idx] holds the continuation value at
    // F_j states (the accept row when absent); out fills block j's own values
    // over its star set plus entry states. Successor positions outside the
    // star set score zero; the entry state itself is exempt from that test.
    void run(std::size_t j, const std::vector<Rat>& next, const std::vector<char>& next_ok,
             std::vector<Rat>& out, std::vector<char>& out_ok) const {
        out.assign(w.size(), Rat(0));
        out_ok.assign(w.size(), 0);
        const std::uint64_t k_j = sched.levels[j - 1].k;
        const auto lo = low_k(sched, j);
        for (std::int64_t t = static_cast<std::int64_t>(k_j); t > lo; --t) {
            if (static_cast<std::uint64_t>(t) >= wi.by_vi.size()) continue;
            for (std::uint32_t idx : wi.by_vi[static_cast<std::uint64_t>(t)]) {
                if (wi.vi[idx] > k_j) continue;
                eval(j, idx, next, next_ok, out, out_ok);
            }
        }
        // entry states of block j live in F_{j-1}, possibly below the star
        // set's lower radius (level-1 goals meeting the initial states)
        if (j >= 2) {
            for (const StateKey& s : sched.levels[j - 2].F) {
                auto idx = w.index_of(s);
                if (idx && !out_ok[*idx]) eval(j, *idx, next, next_ok, out, out_ok);
            }
        }
    }

    void eval(std::size_t j, std::uint32_t idx, const std::vector<Rat>& next,
              const std::vector<char>& next_ok, std::vector<Rat>& out,
              std::vector<char>& out_ok) const {
        out_ok[idx] = 1;
        if (is_F(j, idx)) {  // block ends here; hand off to the continuation
            if (next_ok.empty()) {
                out[idx] = Rat(1);
            } else {
                if (!next_ok[idx])
                    throw ModelError("block sweep lost the continuation at " +
                                     w.states[idx].key.debug());
                out[idx] = next[idx];
            }
            return;
        }
        const auto& st = w.states[idx];
        auto q = [&](const FiniteSlice::Edge& e) -> Rat {
            if (!in_star(j, e.to) || !out_ok[e.to]) return Rat(0);
            return out[e.to];
        };
        if (st.kind == StateKind::Controlled) {
            Rat best(0);
            for (const auto& e : st.out) best = std::max(best, q(e));
            out[idx] = best;
        } else {
            Rat acc(0);
            for (const auto& e : st.out) acc += e.w * q(e);
            out[idx] = acc;
        }
    }
};

}  // namespace

ValueTable value_R_ge(ModelPtr model, const BubbleSchedule& schedule, std::size_t i,
                      std::uint32_t J, const Rat& tol) {
    const std::size_t m = schedule.size();
    if (i == 0 || i > m) throw ModelError("value level out of range");
    if (J == 0) throw ModelError("value depth cap must be positive");

    ValueTable out;
    out.level = i;
    const auto& Fi = schedule.levels[i - 1].F;
    if (i == m) {  // nothing is scheduled past the last block: accept
        for (const StateKey& s : Fi) out.at[s] = Rat(1);
        out.depth = 0;
        out.converged = false;
        out.hit_cap = false;
        out.last_gap = 1.0;
        return out;
    }

    MemoModel mm(model);
    const WindowIndex wi(mm, schedule.window);
    const BlockSweep sweep{schedule, schedule.window, wi};

    const auto max_d = std::min<std::size_t>(J, m - i);
    std::unordered_map<StateKey, Rat> prev;  // depth d-1 values at F_i; 1 at depth 0
    for (const StateKey& s : Fi) prev[s] = Rat(1);

    std::vector<Rat> cur, nxt;
    std::vector<char> cur_ok, nxt_ok;
    for (std::size_t d = 1; d <= max_d; ++d) {
        nxt.clear();
        nxt_ok.clear();  // empty continuation = accept row
        for (std::size_t j = i + d; j >= i + 1; --j) {
            sweep.run(j, nxt, nxt_ok, cur, cur_ok);
            nxt.swap(cur);
            nxt_ok.swap(cur_ok);
        }
        // after the final swap the block-(i+1) sweep sits in nxt
        std::unordered_map<StateKey, Rat> now;
        Rat gap(0);
        for (const StateKey& s : Fi) {
            auto idx = schedule.window.index_of(s);
            if (!idx || !nxt_ok[*idx])
                throw ModelError("pattern value sweep missed a level-" + std::to_string(i) +
                                 " goal state " + s.debug());
            now[s] = nxt[*idx];
            const Rat drop = prev.at(s) - nxt[*idx];
            if (drop > gap) gap = drop;
        }
        out.at = now;
        out.depth = static_cast<std::uint32_t>(d);
        out.last_gap = gap.get_d();
        if (gap <= tol) {
            out.converged = true;
            break;
        }
        prev = std::move(now);
    }
    out.hit_cap = !out.converged && max_d < m - i;
    return out;
}

// ---------------------------------------------------------------------------
// Region solving
// ---------------------------------------------------------------------------

RegionSolution solve_region(ModelPtr model, const BubbleSchedule& schedule, std::size_t i,
                            const ValueTable& values) {
    const std::size_t m = schedule.size();
    if (i == 0 || i > m) throw ModelError("region level out of range");
    if (values.level != i) throw ModelError("value table level does not match the region level");

    MemoModel mm(model);
    const FiniteSlice& w = schedule.window;
    const WindowIndex wi(mm, w);
    const BlockSweep sweep{schedule, w, wi};

    std::vector<char> in_region(w.size(), 0);
    for (std::uint32_t idx = 0; idx < w.size(); ++idx) {
        if (sweep.in_star(i, idx) || (i >= 2 && sweep.is_F(i - 1, idx))) in_region[idx] = 1;
    }

    std::vector<Rat> B(w.size(), Rat(0));
    std::vector<char> B_ok(w.size(), 0);
    RegionSolution sol;
    sol.level = i;

    const std::uint64_t k_i = schedule.levels[i - 1].k;
    auto q = [&](const FiniteSlice::Edge& e) -> Rat {
        if (!sweep.in_star(i, e.to) || !B_ok[e.to]) return Rat(0);
        return B[e.to];
    };

    for (std::int64_t t = static_cast<std::int64_t>(k_i); t >= 0; --t) {
        if (static_cast<std::uint64_t>(t) >= wi.by_vi.size()) continue;
        for (std::uint32_t idx : wi.by_vi[static_cast<std::uint64_t>(t)]) {
            if (!in_region[idx]) continue;
            const auto& st = w.states[idx];
            Rat hold(0);
            std::optional<FiniteSlice::Edge> pick;
            if (st.kind == StateKind::Controlled) {
                for (const auto& e : st.out) {
                    Rat qe = q(e);
                    if (!pick) {
                        pick = e;
                        hold = qe;
                        continue;
                    }
                    const Edge cand{w.states[e.to].key, e.red};
                    const Edge cur{w.states[pick->to].key, pick->red};
                    if (qe > hold || (qe == hold && edge_before(cand, cur))) {
                        pick = e;
                        hold = qe;
                    }
                }
            } else {
                for (const auto& e : st.out) hold += e.w * q(e);
            }
            B_ok[idx] = 1;
            if (sweep.is_F(i, idx)) {
                auto it = values.at.find(st.key);
                if (it == values.at.end())
                    throw ModelError("value table misses level-" + std::to_string(i) +
                                     " goal state " + st.key.debug());
                B[idx] = it->second;
            } else {
                B[idx] = hold;
            }
            if (pick) sol.choice[st.key] = Edge{w.states[pick->to].key, pick->red};
        }
    }

    for (std::uint32_t idx = 0; idx < w.size(); ++idx)
        if (in_region[idx] && B_ok[idx]) sol.value[w.states[idx].key] = B[idx];
    return sol;
}

std::string find_improving_deviation(ModelPtr model, const BubbleSchedule& schedule,
                                     const RegionSolution& region) {
    MemoModel mm(model);
    const FiniteSlice& w = schedule.window;
    const WindowIndex wi(mm, w);
    const BlockSweep sweep{schedule, w, wi};
    const std::size_t i = region.level;

    auto q_of = [&](std::uint32_t to) -> Rat {
        if (!sweep.in_star(i, to)) return Rat(0);
        auto it = region.value.find(w.states[to].key);
        return it == region.value.end() ? Rat(0) : it->second;
    };

    for (const auto& [key, chosen] : region.choice) {
        auto idx = w.index_of(key);
        if (!idx) return "chosen state outside the window: " + key.debug();
        const auto& st = w.states[*idx];
        std::optional<Rat> chosen_q;
        for (const auto& e : st.out)
            if (w.states[e.to].key == chosen.to && e.red == chosen.red) chosen_q = q_of(e.to);
        if (!chosen_q) return "chosen edge is not a successor of " + key.debug();
        for (const auto& e : st.out) {
            if (q_of(e.to) > *chosen_q)
                return "level " + std::to_string(i) + " at " + key.debug() + ": moving to " +
                       w.states[e.to].key.debug() + " beats the chosen " + chosen.to.debug();
        }
    }
    return "";
}

// ---------------------------------------------------------------------------
// 1-bit assembly
// ---------------------------------------------------------------------------

namespace {

class OneBitAssembly final : public Kernel {
  public:
    OneBitAssembly(std::shared_ptr<const BubbleSchedule> sched,
                   std::vector<RegionSolution> strategies)
        : sched_(std::move(sched)), sig_(std::move(strategies)) {
        if (!sched_ || sched_->size() == 0)
            throw ModelError("1-bit assembly needs a non-empty schedule");
        if (sig_.size() != sched_->size())
            throw ModelError("1-bit assembly needs one strategy per schedule level");
        for (std::size_t i = 1; i <= sig_.size(); ++i)
            if (sig_[i - 1].level != i)
                throw ModelError("1-bit assembly strategies out of order at level " +
                                 std::to_string(i));
    }

    std::string name() const override {
        return "onebit-bubbles:m=" + std::to_string(sched_->size());
    }
    KClass klass() const override { return KClass::OneBit; }
    std::uint32_t memory_size() const override { return 2; }
    Mode initial_mode() const override { return Mode{0, 1, 0}; }

    std::vector<Choice> decide(const Mode& m, const StateKey& s, const Expansion& e) const override {
        const std::size_t i = sched_->layer_of(s);
        if (i == 0)
            throw ModelError("assembled kernel asked to act outside the schedule window at " +
                             s.debug());
        const std::uint8_t eff = effective_bit(*sched_, m.bit, s);
        std::size_t j = (eff == i % 2) ? i : i + 1;
        if (j > sched_->size()) j = sched_->size();  // declared extension
        const auto& tab = sig_[j - 1].choice;
        auto it = tab.find(s);
        if (it == tab.end())
            throw ModelError("assembled kernel has no level-" + std::to_string(j) +
                             " choice at " + s.debug());
        const Edge& pick = it->second;
        for (const Edge& cand : e.succ)
            if (cand == pick) return {Choice{pick, Mode{0, eff, 0}, Rat(1)}};
        throw ModelError("assembled choice at " + s.debug() + " is not offered by the model");
    }

    Mode observe(const Mode& m, const StateKey& at, const Edge&) const override {
        return Mode{0, effective_bit(*sched_, m.bit, at), 0};
    }

    nlohmann::json describe() const override {
        nlohmann::json d;
        d["kind"] = "onebit-bubbles";
        d["levels"] = sched_->size();
        d["horizon"] = sched_->horizon();
        return d;
    }

  private:
    std::shared_ptr<const BubbleSchedule> sched_;
    std::vector<RegionSolution> sig_;
};

}  // namespace

KernelPtr assemble_onebit(std::shared_ptr<const BubbleSchedule> schedule,
                          std::vector<RegionSolution> strategies) {
    return std::make_shared<OneBitAssembly>(std::move(schedule), std::move(strategies));
}

std::string audit_bit_flips(const BubbleSchedule& schedule, const std::vector<TraceRec>& recs) {
    if (recs.empty()) return "";
    if (recs.front().mode.bit != 1) return "run does not start with bit 1";
    for (std::size_t t = 0; t + 1 < recs.size(); ++t) {
        StateKey at = recs[t].state;
        if (at.step < 0) at.step = recs[t].mode.step;  // re-create the counter
        const std::uint8_t want = effective_bit(schedule, recs[t].mode.bit, at);
        if (recs[t + 1].mode.bit != want) {
            std::ostringstream os;
            os << "step " << t << " at " << at.debug() << ": bit "
               << static_cast<int>(recs[t].mode.bit) << " became "
               << static_cast<int>(recs[t + 1].mode.bit) << ", expected "
               << static_cast<int>(want);
            return os.str();
        }
    }
    return "";
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

SynthResult synthesize_onebit_markov(ModelPtr model, std::uint32_t goal_mask, const Rat& eps,
                                     const std::string& probe_name,
                                     const nlohmann::json& probe_params, const SynthCaps& caps) {
    if (!model) throw ModelError("synthesis needs a model");

    SynthResult res;
    res.playfield = model->finitely_branching() ? model : definitize_branching(model);
    const bool definitized = res.playfield != model;
    res.encoded = encode_step_counter(res.playfield);

    KernelPtr probe = build_strategy(probe_name, probe_params, res.playfield);
    KernelPtr lifted = lift_to_step_encoding(probe);

    res.schedule = std::make_shared<BubbleSchedule>(choose_schedule(
        res.encoded, res.encoded->initial(), goal_mask, eps, lifted, caps.schedule));
    const BubbleSchedule& sched = *res.schedule;

    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t i = 1; i <= sched.size(); ++i) {
        res.values.push_back(value_R_ge(res.encoded, sched, i, caps.value_depth, caps.value_tol));
        res.regions.push_back(solve_region(res.encoded, sched, i, res.values.back()));
        const auto& vt = res.values.back();
        const auto& rg = res.regions.back();
        Rat vmin(1), vmax(0);
        for (const auto& [s, v] : vt.at) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        levels.push_back({{"level", i},
                          {"value_depth", vt.depth},
                          {"value_converged", vt.converged},
                          {"value_hit_cap", vt.hit_cap},
                          {"value_gap", vt.last_gap},
                          {"value_min", vmin.get_d()},
                          {"value_max", vmax.get_d()},
                          {"region_states", rg.value.size()},
                          {"region_choices", rg.choice.size()}});
    }

    KernelPtr onebit = assemble_onebit(res.schedule, res.regions);
    res.kernel = back_translate_step(onebit);

    Rat at_init(1);
    for (const StateKey& s : sched.init) {
        auto it = res.regions.front().value.find(s);
        if (it != res.regions.front().value.end()) at_init = std::min(at_init, it->second);
    }

    res.report["model"] = model->name();
    res.report["playfield"] = res.playfield->name();
    res.report["definitized"] = definitized;
    res.report["probe"] = probe->name();
    res.report["eps"] = rat_report(eps);
    res.report["goal_labels"] = label_names(goal_mask);
    res.report["schedule"] = sched.summary();
    res.report["levels"] = std::move(levels);
    res.report["value_at_init"] = at_init.get_d();
    res.report["horizon"] = sched.horizon();
    res.report["kernel"] = res.kernel->name();
    res.report["last_level_extends"] = true;  // sigma_{m+1} defers to sigma_m
    return res;
}

}  // namespace cmdp
