#pragma once

#include <functional>
#include <string>
#include <unordered_set>

#include "cmdp/model.hpp"

namespace cmdp {

// One observed transition, borrowed from the caller for the duration of a
// Monitor::step call (reference members keep hot loops copy-free). The run's
// initial state is fed to monitors as a pseudo-transition whose `from` has
// family None, so arrival-counting rules treat the start like any arrival.
struct Transition {
    const StateKey& from;
    const StateKey& to;
    std::uint32_t to_labels = 0;
    bool red = false;
};

enum class Verdict : std::uint8_t { Undecided, Success, Failure };

const char* verdict_name(Verdict v);

// Finite-state observer over a transition stream. Observer states are small
// integers; `verdict` marks absorbing early decisions, `at_end` resolves the
// rest when the run reaches its horizon or leaves the sliced region. An
// at_end of Undecided means the finite prefix cannot settle the infinitary
// event; estimators count it separately and score it pessimistically.
class Monitor {
  public:
    using StepFn = std::function<std::uint32_t(std::uint32_t, const Transition&)>;
    using VerdictFn = std::function<Verdict(std::uint32_t)>;

    Monitor(std::string name, std::uint32_t states, std::uint32_t obs0, StepFn step,
            VerdictFn verdict, VerdictFn at_end)
        : name_(std::move(name)),
          states_(states),
          obs0_(obs0),
          step_(std::move(step)),
          verdict_(std::move(verdict)),
          at_end_(std::move(at_end)) {}

    const std::string& name() const { return name_; }
    std::uint32_t states() const { return states_; }
    std::uint32_t initial() const { return obs0_; }
    std::uint32_t step(std::uint32_t obs, const Transition& t) const { return step_(obs, t); }
    Verdict verdict(std::uint32_t obs) const { return verdict_(obs); }
    Verdict at_end(std::uint32_t obs) const { return at_end_(obs); }

  private:
    std::string name_;
    std::uint32_t states_;
    std::uint32_t obs0_;
    StepFn step_;
    VerdictFn verdict_;
    VerdictFn at_end_;
};

// Success on the m-th arrival at a state labeled by `count_mask`, failure on
// arriving at `disqualify_mask` first (0 = never); runs ending early stay
// undecided. Covers goal counting and the color-2-before-color-3 events.
Monitor count_monitor(std::uint32_t m, std::uint32_t count_mask, std::uint32_t disqualify_mask,
                      const std::string& name);

// Counts arrivals at `count_mask` states but settles only when the run ends:
// success iff at least m were seen and nothing disqualified the run. Arriving
// at a `bad_mask` state, or taking a red transition when bad_red is set, is
// an absorbing failure. Covers whole-window events like "m greens and never
// a red" where reaching m must not cut the window short.
Monitor count_at_end_monitor(std::uint32_t m, std::uint32_t count_mask, std::uint32_t bad_mask,
                             bool bad_red, const std::string& name);

// Failure on arriving at a `bad_mask` state; success if the run ends clean.
Monitor survive_monitor(std::uint32_t bad_mask, const std::string& name);

// Success on the first red-flagged transition; failure if the run ends clean.
Monitor red_monitor();

// Failure on the first red-flagged transition; success if the run ends clean.
Monitor no_red_monitor();

// Success on the m-th red-flagged transition; failure at a clean end.
Monitor red_count_monitor(std::uint32_t m);

// Success on arriving at any of the given states; failure at the end.
Monitor reach_monitor(std::unordered_set<StateKey, StateKeyHash> targets, const std::string& name);

// Descriptor syntax used by the CLI and tests, for example
// "goal-count:m=8", "survive:bad=losing", "count:m=10,label=color2,bar=color3",
// "count-end:m=10,label=color2,bar=color3", "count-end:m=1,label=green,bar-red=1",
// "red-any", "no-red", "red-count:m=2", "reach:states=a|b" (model-rendered
// names). Throws ModelError on unknown descriptors.
Monitor parse_monitor(const std::string& descriptor, const Model& model);

}  // namespace cmdp
