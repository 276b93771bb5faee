#include "cmdp/monitor.hpp"

#include <memory>
#include <sstream>
#include <utility>

#include "cmdp/slice.hpp"

namespace cmdp {

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Undecided: return "undecided";
        case Verdict::Success: return "success";
        case Verdict::Failure: return "failure";
    }
    return "?";
}

Monitor count_monitor(std::uint32_t m, std::uint32_t count_mask, std::uint32_t disqualify_mask,
                      const std::string& name) {
    if (m == 0) throw ModelError("count_monitor: m must be positive");
    // obs 0..m-1: arrivals seen so far; obs m: success; obs m+1: failure.
    const std::uint32_t win = m;
    const std::uint32_t dead = m + 1;
    return Monitor(
        name, m + 2, 0,
        [=](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            if (obs == win || obs == dead) return obs;
            if (disqualify_mask != 0 && (t.to_labels & disqualify_mask) != 0) return dead;
            if ((t.to_labels & count_mask) != 0) return obs + 1;
            return obs;
        },
        [=](std::uint32_t obs) {
            if (obs == win) return Verdict::Success;
            if (obs == dead) return Verdict::Failure;
            return Verdict::Undecided;
        },
        [=](std::uint32_t obs) {
            if (obs == win) return Verdict::Success;
            if (obs == dead) return Verdict::Failure;
            return Verdict::Undecided;
        });
}

Monitor count_at_end_monitor(std::uint32_t m, std::uint32_t count_mask, std::uint32_t bad_mask,
                             bool bad_red, const std::string& name) {
    if (m == 0) throw ModelError("count_at_end_monitor: m must be positive");
    // obs 0..m: arrivals seen so far, capped at m; obs m+1: failure.
    const std::uint32_t dead = m + 1;
    return Monitor(
        name, m + 2, 0,
        [=](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            if (obs == dead) return obs;
            if ((bad_red && t.red) || (bad_mask != 0 && (t.to_labels & bad_mask) != 0))
                return dead;
            if ((t.to_labels & count_mask) != 0 && obs < m) return obs + 1;
            return obs;
        },
        [=](std::uint32_t obs) { return obs == dead ? Verdict::Failure : Verdict::Undecided; },
        [=](std::uint32_t obs) {
            if (obs == dead) return Verdict::Failure;
            return obs >= m ? Verdict::Success : Verdict::Failure;
        });
}

Monitor survive_monitor(std::uint32_t bad_mask, const std::string& name) {
    return Monitor(
        name, 2, 0,
        [=](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            return obs == 1 || (t.to_labels & bad_mask) != 0 ? 1u : 0u;
        },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Failure : Verdict::Undecided; },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Failure : Verdict::Success; });
}

Monitor red_count_monitor(std::uint32_t m) {
    if (m == 0) throw ModelError("red_count_monitor: m must be positive");
    std::ostringstream nm;
    nm << "red-count:m=" << m;
    return Monitor(
        nm.str(), m + 1, 0,
        [=](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            if (obs == m) return obs;
            return t.red ? obs + 1 : obs;
        },
        [=](std::uint32_t obs) { return obs == m ? Verdict::Success : Verdict::Undecided; },
        [=](std::uint32_t obs) { return obs == m ? Verdict::Success : Verdict::Failure; });
}

Monitor red_monitor() {
    return Monitor(
        "red-any", 2, 0,
        [](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            return obs == 1 || t.red ? 1u : 0u;
        },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Success : Verdict::Undecided; },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Success : Verdict::Failure; });
}

Monitor no_red_monitor() {
    return Monitor(
        "no-red", 2, 0,
        [](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            return obs == 1 || t.red ? 1u : 0u;
        },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Failure : Verdict::Undecided; },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Failure : Verdict::Success; });
}

Monitor reach_monitor(std::unordered_set<StateKey, StateKeyHash> targets, const std::string& name) {
    if (targets.empty()) throw ModelError("reach_monitor: empty target set");
    auto set = std::make_shared<std::unordered_set<StateKey, StateKeyHash>>(std::move(targets));
    return Monitor(
        name, 2, 0,
        [set](std::uint32_t obs, const Transition& t) -> std::uint32_t {
            return obs == 1 || set->contains(t.to) ? 1u : 0u;
        },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Success : Verdict::Undecided; },
        [](std::uint32_t obs) { return obs == 1 ? Verdict::Success : Verdict::Failure; });
}

namespace {

// "key=value,key=value" after the descriptor head.
std::unordered_map<std::string, std::string> parse_kv(const std::string& s) {
    std::unordered_map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string item = s.substr(pos, comma - pos);
        std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw ModelError("monitor descriptor: expected key=value, got '" + item + "'");
        out[item.substr(0, eq)] = item.substr(eq + 1);
        pos = comma + 1;
    }
    return out;
}

std::uint32_t need_count(const std::unordered_map<std::string, std::string>& kv,
                         const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ModelError("monitor descriptor: missing '" + key + "'");
    return static_cast<std::uint32_t>(std::stoul(it->second));
}

std::uint32_t mask_of(const std::string& label) { return labels_from_names({label}); }

}  // namespace

Monitor parse_monitor(const std::string& descriptor, const Model& model) {
    std::string head = descriptor;
    std::string rest;
    if (std::size_t colon = descriptor.find(':'); colon != std::string::npos) {
        head = descriptor.substr(0, colon);
        rest = descriptor.substr(colon + 1);
    }
    if (head == "red-any") return red_monitor();
    if (head == "no-red") return no_red_monitor();
    if (head == "red-count") return red_count_monitor(need_count(parse_kv(rest), "m"));
    if (head == "goal-count") {
        auto kv = parse_kv(rest);
        std::uint32_t m = need_count(kv, "m");
        std::ostringstream nm;
        nm << "goal-count:m=" << m;
        return count_monitor(m, label::kGoal, 0, nm.str());
    }
    if (head == "count") {
        auto kv = parse_kv(rest);
        std::uint32_t m = need_count(kv, "m");
        auto it = kv.find("label");
        if (it == kv.end()) throw ModelError("monitor descriptor: count needs label=");
        std::uint32_t bar = 0;
        if (auto b = kv.find("bar"); b != kv.end()) bar = mask_of(b->second);
        return count_monitor(m, mask_of(it->second), bar, descriptor);
    }
    if (head == "count-end") {
        auto kv = parse_kv(rest);
        std::uint32_t m = need_count(kv, "m");
        auto it = kv.find("label");
        if (it == kv.end()) throw ModelError("monitor descriptor: count-end needs label=");
        std::uint32_t bar = 0;
        if (auto b = kv.find("bar"); b != kv.end()) bar = mask_of(b->second);
        bool bar_red = false;
        if (auto b = kv.find("bar-red"); b != kv.end()) bar_red = b->second == "1";
        return count_at_end_monitor(m, mask_of(it->second), bar, bar_red, descriptor);
    }
    if (head == "survive") {
        auto kv = parse_kv(rest);
        auto it = kv.find("bad");
        if (it == kv.end()) throw ModelError("monitor descriptor: survive needs bad=");
        return survive_monitor(mask_of(it->second), descriptor);
    }
    if (head == "reach") {
        auto kv = parse_kv(rest);
        auto it = kv.find("states");
        if (it == kv.end()) throw ModelError("monitor descriptor: reach needs states=");
        std::unordered_set<StateKey, StateKeyHash> targets;
        const std::string& list = it->second;
        std::size_t pos = 0;
        while (pos <= list.size()) {
            std::size_t bar = list.find('|', pos);
            if (bar == std::string::npos) bar = list.size();
            std::string name = list.substr(pos, bar - pos);
            if (!name.empty()) {
                auto key = model.parse(name);
                if (!key) throw ModelError("reach monitor: unknown state '" + name + "'");
                targets.insert(*key);
            }
            pos = bar + 1;
        }
        return reach_monitor(std::move(targets), descriptor);
    }
    throw ModelError("unknown monitor descriptor '" + descriptor + "'");
}

}  // namespace cmdp
