#include "cmdp/slice.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

namespace cmdp {

void FiniteSlice::finalize() {
    index_.clear();
    index_.reserve(states.size());
    for (std::uint32_t i = 0; i < states.size(); ++i) index_.emplace(states[i].key, i);

    // Kahn
    std::vector<std::uint32_t> indeg(states.size(), 0);
    for (const auto& st : states)
        for (const auto& e : st.out) ++indeg[e.to];
    std::vector<std::uint32_t> order;
    order.reserve(states.size());
    std::deque<std::uint32_t> q;
    for (std::uint32_t i = 0; i < states.size(); ++i)
        if (indeg[i] == 0) q.push_back(i);
    while (!q.empty()) {
        std::uint32_t u = q.front();
        q.pop_front();
        order.push_back(u);
        for (const auto& e : states[u].out)
            if (--indeg[e.to] == 0) q.push_back(e.to);
    }
    if (order.size() == states.size())
        topo_ = std::move(order);
    else
        topo_ = std::nullopt;
}

std::vector<std::uint64_t> FiniteSlice::longest_from_generators() const {
    if (!topo_) throw ModelError("longest path undefined on a cyclic slice");
    std::vector<std::int64_t> d(states.size(), -1);
    for (auto g : generators) d[g] = 0;
    for (auto u : *topo_) {
        if (d[u] < 0) continue;
        for (const auto& e : states[u].out) d[e.to] = std::max(d[e.to], d[u] + 1);
    }
    std::vector<std::uint64_t> out(states.size(), 0);
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] < 0 ? 0 : static_cast<std::uint64_t>(d[i]);
    return out;
}

FiniteSlice truncate_model(const Model& m, const std::vector<StateKey>& X, std::uint64_t k,
                           const std::vector<StateKey>& stop) {
    FiniteSlice s;
    s.horizon = k;
    s.model_name = m.name();
    std::unordered_set<StateKey> halt(stop.begin(), stop.end());

    std::unordered_map<StateKey, std::uint32_t> idx;
    auto intern = [&](const StateKey& key) {
        auto it = idx.find(key);
        if (it != idx.end()) return it->second;
        std::uint32_t i = static_cast<std::uint32_t>(s.states.size());
        idx.emplace(key, i);
        s.states.push_back({key, StateKind::Random, m.labels(key), true, {}});
        return i;
    };

    std::deque<std::pair<std::uint32_t, std::uint64_t>> q;
    for (const auto& x : X) {
        std::uint32_t i = intern(x);
        s.generators.push_back(i);
        q.emplace_back(i, 0);
    }
    std::vector<bool> expanded(0);
    auto mark_expanded = [&](std::uint32_t i) {
        if (expanded.size() < s.states.size()) expanded.resize(s.states.size(), false);
        bool was = expanded[i];
        expanded[i] = true;
        return was;
    };

    while (!q.empty()) {
        auto [u, d] = q.front();
        q.pop_front();
        if (d >= k) continue;
        if (halt.contains(s.states[u].key)) continue;
        if (mark_expanded(u)) continue;
        Expansion e = m.expand(s.states[u].key);
        s.states[u].kind = e.kind;
        if (!e.finite())
            throw ModelError("state " + m.render(s.states[u].key) +
                             " branches infinitely; apply the branching gadget "
                             "(definitize_branching) before slicing");
        if (e.kind == StateKind::Controlled) {
            if (e.succ.empty()) throw ModelError("state without successors");
            for (const auto& edge : e.succ) {
                std::uint32_t v = intern(edge.to);
                s.states[u].out.push_back({v, edge.red, rat(1)});
                q.emplace_back(v, d + 1);
            }
        } else {
            for (const auto& le : e.law.entries()) {
                std::uint32_t v = intern(le.edge.to);
                s.states[u].out.push_back({v, le.edge.red, le.w});
                q.emplace_back(v, d + 1);
            }
        }
    }
    expanded.resize(s.states.size(), false);
    for (std::uint32_t i = 0; i < s.states.size(); ++i) {
        s.states[i].boundary = !expanded[i];
        if (s.states[i].boundary) {
            // kind still meaningful for reports
            s.states[i].kind = m.expand(s.states[i].key).kind;
        }
    }
    s.finalize();
    return s;
}

std::vector<StateKey> bubble(const Model& m, const std::vector<StateKey>& X, std::uint64_t k) {
    FiniteSlice s = truncate_model(m, X, k);
    std::vector<StateKey> out;
    out.reserve(s.states.size());
    for (const auto& st : s.states) out.push_back(st.key);
    return out;
}

std::uint64_t depth(const Model& m, const StateKey& s) {
    if (!m.depth_finite_claim()) throw ModelError("depth requested on a model not flagged depth-finite");
    auto d = m.depth_of(s);
    if (!d) throw ModelError("model cannot answer depth structurally for " + m.render(s));
    return *d;
}

namespace {
const std::pair<std::uint32_t, const char*> kLabelNames[] = {
    {label::kGoal, "goal"},     {label::kBlue, "blue"},     {label::kYellow, "yellow"},
    {label::kBrown, "brown"},   {label::kGreen, "green"},   {label::kGuard, "guard"},
    {label::kLosing, "losing"}, {label::kColor1, "color1"}, {label::kColor2, "color2"},
    {label::kColor3, "color3"},
};
}

std::vector<std::string> label_names(std::uint32_t mask) {
    std::vector<std::string> out;
    for (auto [bit, name] : kLabelNames)
        if (mask & bit) out.push_back(name);
    return out;
}

std::uint32_t labels_from_names(const std::vector<std::string>& names) {
    std::uint32_t mask = 0;
    for (const auto& n : names) {
        bool found = false;
        for (auto [bit, name] : kLabelNames)
            if (n == name) {
                mask |= bit;
                found = true;
                break;
            }
        if (!found) throw ModelError("unknown label: " + n);
    }
    return mask;
}

nlohmann::json slice_to_json(const FiniteSlice& s, const Model& m) {
    nlohmann::json j;
    j["model"] = s.model_name;
    j["horizon"] = s.horizon;
    auto states = nlohmann::json::array();
    for (const auto& st : s.states) {
        nlohmann::json js;
        js["key"] = m.render(st.key);
        js["kind"] = st.kind == StateKind::Controlled ? "controlled" : "random";
        js["labels"] = label_names(st.labels);
        states.push_back(std::move(js));
    }
    j["states"] = std::move(states);
    auto edges = nlohmann::json::array();
    for (std::uint32_t u = 0; u < s.states.size(); ++u)
        for (const auto& e : s.states[u].out) {
            nlohmann::json je;
            je["from"] = u;
            je["to"] = e.to;
            je["numerator"] = e.w.get_num().get_str();
            je["denominator"] = e.w.get_den().get_str();
            if (e.red) je["red"] = true;
            edges.push_back(std::move(je));
        }
    j["edges"] = std::move(edges);
    j["initial"] = s.generators;
    auto boundary = nlohmann::json::array();
    for (std::uint32_t i = 0; i < s.states.size(); ++i)
        if (s.states[i].boundary) boundary.push_back(i);
    j["boundary"] = std::move(boundary);
    return j;
}

}  // namespace cmdp
