#include "cmdp/exact.hpp"

#include <unordered_map>

namespace cmdp {

namespace {

std::uint32_t mode_count(const Kernel& k) {
    switch (k.klass()) {
        case KClass::MD:
        case KClass::MR:
            return 1;
        case KClass::OneBit:
            return 2;
        case KClass::FR:
            return k.memory_size();
        default:
            throw ModelError(std::string("exact_event_probability: kernel class ") +
                             kclass_name(k.klass()) +
                             " has unbounded memory; lift_to_step_encoding onto the "
                             "step-encoded model and truncate instead");
    }
}

std::uint32_t mode_index(KClass c, const Mode& m) {
    switch (c) {
        case KClass::MD:
        case KClass::MR:
            return 0;
        case KClass::OneBit:
            return m.bit;
        default:
            return m.fin;
    }
}

Mode mode_at(KClass c, std::uint32_t idx) {
    Mode m;
    if (c == KClass::OneBit)
        m.bit = static_cast<std::uint8_t>(idx);
    else if (c == KClass::FR)
        m.fin = idx;
    return m;
}

}  // namespace

ExactTriple exact_event_probability(const FiniteSlice& slice, const Kernel& kernel,
                                    const Monitor& monitor) {
    if (slice.generators.size() != 1)
        throw ModelError("exact_event_probability: slice must have exactly one generator");
    if (!slice.acyclic())
        throw ModelError("exact_event_probability: slice has a cycle; no topological order");

    const KClass kc = kernel.klass();
    const std::uint32_t n_modes = mode_count(kernel);
    const std::uint32_t n_obs = monitor.states();
    const auto cell = [n_obs](std::uint32_t mode_idx, std::uint32_t obs) {
        return mode_idx * n_obs + obs;
    };

    // mass[state][mode * n_obs + obs]
    std::vector<std::unordered_map<std::uint32_t, Rat>> mass(slice.size());
    ExactTriple out;
    const auto settle = [&out](Verdict v, const Rat& m) {
        switch (v) {
            case Verdict::Success: out.success += m; break;
            case Verdict::Failure: out.failure += m; break;
            case Verdict::Undecided: out.undecided += m; break;
        }
    };

    const std::uint32_t g = slice.generators[0];
    {
        const Mode m0 = kernel.initial_mode();
        const std::uint32_t mi = mode_index(kc, m0);
        if (mi >= n_modes)
            throw ModelError("exact_event_probability: initial mode outside kernel memory");
        const StateKey origin{};
        const auto& gs = slice.states[g];
        std::uint32_t obs = monitor.step(monitor.initial(), Transition{origin, gs.key, gs.labels, false});
        mass[g][cell(mi, obs)] = Rat(1);
    }

    for (std::uint32_t si : *slice.topo_order()) {
        auto& here = mass[si];
        if (here.empty()) continue;
        const auto& st = slice.states[si];
        const bool terminal = st.boundary || st.out.empty();

        std::vector<Edge> succ;
        if (!terminal && st.kind == StateKind::Controlled) {
            succ.reserve(st.out.size());
            for (const auto& e : st.out) succ.push_back({slice.states[e.to].key, e.red});
        }

        for (auto& [c, m] : here) {
            const std::uint32_t obs = c % n_obs;
            const std::uint32_t mi = c / n_obs;
            const Verdict v = monitor.verdict(obs);
            if (v != Verdict::Undecided) {
                settle(v, m);
                continue;
            }
            if (terminal) {
                settle(monitor.at_end(obs), m);
                continue;
            }
            const Mode mode = mode_at(kc, mi);
            if (st.kind == StateKind::Controlled) {
                Expansion exp;
                exp.kind = StateKind::Controlled;
                exp.succ = succ;
                auto choices = kernel.decide(mode, st.key, exp);
                Rat total = 0;
                for (const auto& ch : choices) {
                    check_mode_transition(kc, kernel.memory_size(), mode, ch.next, kernel.name(),
                                          "exact dp");
                    std::uint32_t ti = ~0u;
                    for (std::size_t j = 0; j < st.out.size(); ++j) {
                        if (st.out[j].red == ch.edge.red &&
                            slice.states[st.out[j].to].key == ch.edge.to) {
                            ti = st.out[j].to;
                            break;
                        }
                    }
                    if (ti == ~0u)
                        throw ModelError("exact_event_probability: kernel chose an edge "
                                         "absent from the slice at " + slice.model_name);
                    const auto& to = slice.states[ti];
                    const std::uint32_t obs2 =
                        monitor.step(obs, Transition{st.key, to.key, to.labels, ch.edge.red});
                    mass[ti][cell(mode_index(kc, ch.next), obs2)] += m * ch.w;
                    total += ch.w;
                }
                if (total != 1)
                    throw ModelError("exact_event_probability: decision weights sum to " +
                                     rat_string(total) + ", expected 1");
            } else {
                for (const auto& e : st.out) {
                    const auto& to = slice.states[e.to];
                    const std::uint32_t obs2 =
                        monitor.step(obs, Transition{st.key, to.key, to.labels, e.red});
                    const Edge taken{to.key, e.red};
                    const Mode next = kernel.observe(mode, st.key, taken);
                    check_mode_transition(kc, kernel.memory_size(), mode, next, kernel.name(),
                                          "exact dp");
                    mass[e.to][cell(mode_index(kc, next), obs2)] += m * e.w;
                }
            }
        }
        here.clear();
    }
    return out;
}

}  // namespace cmdp
