#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cmdp/model.hpp"
#include "cmdp/rng.hpp"

#include "json.hpp"

namespace cmdp {

// Memory mode of a strategy kernel. Which components may vary is fixed by the
// kernel's class: MD/MR use none, Markov classes advance `step` by one on
// every transition, 1-bit classes use `bit`, finite-memory kernels use `fin`,
// and the general class may use anything.
struct Mode {
    std::int64_t step = 0;
    std::uint8_t bit = 0;
    std::uint32_t fin = 0;

    friend bool operator==(const Mode& a, const Mode& b) {
        return a.step == b.step && a.bit == b.bit && a.fin == b.fin;
    }
    friend bool operator!=(const Mode& a, const Mode& b) { return !(a == b); }
    std::uint64_t pack() const {
        return (static_cast<std::uint64_t>(fin) << 16) ^ (static_cast<std::uint64_t>(bit) << 8) ^
               (static_cast<std::uint64_t>(step) << 24);
    }
    std::string str() const;
};

enum class KClass : std::uint8_t { MD, MR, FR, OneBit, Markov, OneBitMarkov, General };

const char* kclass_name(KClass c);
std::optional<KClass> kclass_from(const std::string& name);

// One weighted alternative of a decision: take `edge` and continue in `next`.
struct Choice {
    Edge edge;
    Mode next;
    Rat w = Rat(1);
};

class Kernel {
  public:
    virtual ~Kernel() = default;
    virtual std::string name() const = 0;
    virtual KClass klass() const = 0;
    virtual std::uint32_t memory_size() const { return 1; }
    virtual Mode initial_mode() const { return {}; }

    // Distribution over (successor, next mode) at a controlled state. Weights
    // sum to 1; single-element vectors are point masses.
    virtual std::vector<Choice> decide(const Mode& m, const StateKey& s,
                                       const Expansion& e) const = 0;

    // Memory update after the realized transition `taken` out of state `at`
    // (used at random states; controlled updates ride along in Choice).
    virtual Mode observe(const Mode& m, const StateKey& at, const Edge& taken) const = 0;

    // Optional allocation-free decision over successors delivered by
    // Model::fast_succ, for hot Monte Carlo loops. Must agree with decide().
    virtual bool fast_pick(const Mode&, const StateKey&, const Edge*, std::size_t, Rng&,
                           std::size_t*, Mode*) const {
        return false;
    }

    virtual nlohmann::json describe() const;
};

using KernelPtr = std::shared_ptr<const Kernel>;

// Throws ModelError unless the mode transition obeys the class discipline.
void check_mode_transition(KClass c, std::uint32_t memory_size, const Mode& before,
                           const Mode& after, const std::string& kernel_name,
                           const std::string& where);

struct StepOut {
    Edge edge;
    Mode mode;
};

// One step of the kernel-vs-nature game: the kernel picks at controlled
// states, the model's law picks at random states (memory updated afterwards).
StepOut step_kernel(const Model& model, const Kernel& kernel, const Mode& mode, const StateKey& s,
                    Rng& rng);

// Named strategies for the shipped families. Parameters:
//   greedy-mr / always-up-mr        (tree chain)
//   grid-mr        grid=...         (tree chain; uniform | per-level | per-node)
//   sigma1-onebit                   (tree chain)
//   sigma-eps      k=<int>          (tree chain; up-moves forced in T^1..T^k)
//   fig1-markov    k=<int>          (fig1a, fig1b, or definitized fig1b)
//   hill-blocks                     (fig3)
KernelPtr build_strategy(const std::string& name, const nlohmann::json& params, ModelPtr model);

// Table-driven kernels: MD {state -> successor}, MR {state -> distribution},
// one-bit {(bit, state) -> successor, flip rules}, Markov {(step, state) ->
// successor} with a default rule. `data` documents itself in tests.
KernelPtr make_kernel(const std::string& class_tag, const nlohmann::json& data, ModelPtr model);

// Adapters between a model and its step-counter encoding: the lifted kernel
// reads the counter from the state; the back-translated kernel re-creates it
// in the mode. Classes map MD->MD, Markov->MR, one-bit-Markov->one-bit, and
// back again per the encoding bijection.
KernelPtr lift_to_step_encoding(KernelPtr inner);
KernelPtr back_translate_step(KernelPtr inner);

// Collapse of branching-gadget sojourns: the inner kernel walks the fresh
// chain z_1 z_2 ...; the collapsed kernel plays the exit choice directly on
// the original state and adopts the memory the walk would have left with.
// Deterministic inner walks only; a never-exiting walk (the "p = 1" case)
// collapses to the first exit with unchanged memory.
KernelPtr back_translate_gadget(KernelPtr inner, ModelPtr definitized, std::uint64_t walk_cap);

}  // namespace cmdp
