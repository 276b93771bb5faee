#include <fstream>

#include "cmdp/families.hpp"
#include "cmdp/slice.hpp"

namespace cmdp {

namespace {

Rat edge_weight(const nlohmann::json& e) {
    if (e.contains("numerator")) {
        std::string num = e.at("numerator").is_string() ? e.at("numerator").get<std::string>()
                                                        : e.at("numerator").dump();
        std::string den = e.contains("denominator")
                              ? (e.at("denominator").is_string()
                                     ? e.at("denominator").get<std::string>()
                                     : e.at("denominator").dump())
                              : "1";
        return parse_rat(num + "/" + den);
    }
    if (e.contains("weight")) return parse_rat(e.at("weight").get<std::string>());
    return Rat(1);
}

}  // namespace

StateKey JsonModel::key_of(std::uint32_t idx) const {
    StateKey k;
    k.family = Fam::Json;
    k.i0 = idx;
    return k;
}

std::shared_ptr<JsonModel> JsonModel::from_json(const nlohmann::json& j) {
    auto m = std::make_shared<JsonModel>();
    m->tag_ = j.value("model", "anon");

    const auto& states = j.at("states");
    m->names_.reserve(states.size());
    for (const auto& st : states) {
        std::string name = st.at("key").get<std::string>();
        if (m->by_name_.count(name)) throw ModelError("json model: duplicate state " + name);
        m->by_name_[name] = static_cast<std::uint32_t>(m->names_.size());
        m->names_.push_back(name);
        std::string kind = st.value("kind", "random");
        m->kinds_.push_back(kind == "controlled" ? StateKind::Controlled : StateKind::Random);
        std::uint32_t lb = 0;
        if (st.contains("labels")) {
            std::vector<std::string> names = st.at("labels").get<std::vector<std::string>>();
            lb = labels_from_names(names);
        }
        m->labels_.push_back(lb);
    }
    m->out_.resize(m->names_.size());

    if (j.contains("edges")) {
        for (const auto& e : j.at("edges")) {
            std::uint32_t from = e.at("from").get<std::uint32_t>();
            std::uint32_t to = e.at("to").get<std::uint32_t>();
            if (from >= m->names_.size() || to >= m->names_.size())
                throw ModelError("json model: edge endpoint out of range");
            bool red = e.value("red", false);
            m->out_[from].push_back({Edge{m->key_of(to), red}, edge_weight(e)});
        }
    }

    // Close dangling states with a self-loop so every state has a law.
    for (std::uint32_t i = 0; i < m->out_.size(); ++i)
        if (m->out_[i].empty()) m->out_[i].push_back({Edge{m->key_of(i), false}, Rat(1)});

    for (std::uint32_t i = 0; i < m->out_.size(); ++i) {
        if (m->kinds_[i] == StateKind::Random) {
            Rat sum(0);
            for (const auto& le : m->out_[i]) sum += le.w;
            if (sum != 1)
                throw ModelError("json model: law at " + m->names_[i] + " sums to " +
                                 rat_string(sum));
        }
    }

    if (j.contains("initial"))
        m->initial_ = j.at("initial").get<std::vector<std::uint32_t>>();
    if (m->initial_.empty() && !m->names_.empty()) m->initial_.push_back(0);

    for (std::uint32_t i = 0; i < m->labels_.size(); ++i)
        if (m->labels_[i] & label::kGoal) m->goals_.push_back(m->key_of(i));

    // Topological analysis ignoring self-loops; sinks count as terminals.
    std::size_t n = m->names_.size();
    std::vector<std::uint32_t> indeg(n, 0);
    for (std::uint32_t u = 0; u < n; ++u)
        for (const auto& le : m->out_[u]) {
            auto v = static_cast<std::uint32_t>(le.edge.to.i0);
            if (v != u) ++indeg[v];
        }
    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::uint32_t u = 0; u < n; ++u)
        if (indeg[u] == 0) order.push_back(u);
    for (std::size_t h = 0; h < order.size(); ++h)
        for (const auto& le : m->out_[order[h]]) {
            auto v = static_cast<std::uint32_t>(le.edge.to.i0);
            if (v != order[h] && --indeg[v] == 0) order.push_back(v);
        }
    m->acyclic_ = order.size() == n;

    m->fixed_step_.assign(n, -1);
    m->depth_.assign(n, 0);
    if (m->acyclic_) {
        std::vector<std::int64_t> lo(n, -2);  // -2 = unvisited, -1 = conflicting
        for (std::uint32_t s0 : m->initial_) lo[s0] = 0;
        for (std::uint32_t u : order) {
            for (const auto& le : m->out_[u]) {
                auto v = static_cast<std::uint32_t>(le.edge.to.i0);
                if (v == u) {
                    lo[u] = -1;  // self-loop: revisits at many steps
                    continue;
                }
                std::int64_t cand = (lo[u] < 0) ? -1 : lo[u] + 1;
                if (lo[v] == -2)
                    lo[v] = cand;
                else if (lo[v] != cand)
                    lo[v] = -1;
                if (m->depth_[v] < m->depth_[u] + 1) m->depth_[v] = m->depth_[u] + 1;
            }
        }
        for (std::size_t i = 0; i < n; ++i) m->fixed_step_[i] = lo[i] >= 0 ? lo[i] : -1;
    }
    return m;
}

Expansion JsonModel::expand(const StateKey& s) const {
    if (s.family != Fam::Json || s.i0 < 0 || static_cast<std::size_t>(s.i0) >= names_.size())
        throw ModelError(name() + ": foreign state " + s.debug());
    auto idx = static_cast<std::uint32_t>(s.i0);
    Expansion e;
    e.kind = kinds_[idx];
    if (e.kind == StateKind::Controlled) {
        e.succ.reserve(out_[idx].size());
        for (const auto& le : out_[idx]) e.succ.push_back(le.edge);
    } else {
        e.law = Law(out_[idx]);
    }
    return e;
}

std::uint32_t JsonModel::labels(const StateKey& s) const {
    if (s.family != Fam::Json || s.i0 < 0 || static_cast<std::size_t>(s.i0) >= labels_.size())
        return 0;
    return labels_[static_cast<std::uint32_t>(s.i0)];
}

std::vector<StateKey> JsonModel::initial() const {
    std::vector<StateKey> out;
    for (std::uint32_t i : initial_) out.push_back(key_of(i));
    return out;
}

std::optional<std::int64_t> JsonModel::fixed_visit_step(const StateKey& s) const {
    if (s.family != Fam::Json || static_cast<std::size_t>(s.i0) >= fixed_step_.size())
        return std::nullopt;
    std::int64_t v = fixed_step_[static_cast<std::uint32_t>(s.i0)];
    return v >= 0 ? std::optional(v) : std::nullopt;
}

std::optional<std::uint64_t> JsonModel::depth_of(const StateKey& s) const {
    if (!acyclic_ || s.family != Fam::Json || static_cast<std::size_t>(s.i0) >= depth_.size())
        return std::nullopt;
    return depth_[static_cast<std::uint32_t>(s.i0)];
}

std::string JsonModel::render(const StateKey& s) const {
    if (s.family == Fam::Json && s.i0 >= 0 && static_cast<std::size_t>(s.i0) < names_.size())
        return names_[static_cast<std::uint32_t>(s.i0)];
    return s.debug();
}

std::optional<StateKey> JsonModel::parse(const std::string& t) const {
    auto it = by_name_.find(t);
    if (it == by_name_.end()) return std::nullopt;
    return key_of(it->second);
}

// ------------------------------------------------------------------ factory

ModelPtr build_family(const std::string& name, const nlohmann::json& params) {
    if (name == "fig1a") return std::make_shared<EscalatorModel>(false);
    if (name == "fig1b") return std::make_shared<EscalatorModel>(true);
    if (name == "fig3") return std::make_shared<HillModel>();
    if (name == "tree-chain") {
        Rat p = parse_rat(params.value("p", "7/10"));
        std::string v = params.value("variant", "annotated");
        TreeVariant tv;
        if (v == "annotated")
            tv = TreeVariant::Annotated;
        else if (v == "divert")
            tv = TreeVariant::Divert;
        else if (v == "divert-equal")
            tv = TreeVariant::DivertEqual;
        else if (v == "parity")
            tv = TreeVariant::Parity;
        else
            throw ModelError("unknown tree-chain variant: " + v);
        return std::make_shared<TreeChainModel>(std::move(p), tv);
    }
    if (name == "json") {
        if (params.contains("doc")) return JsonModel::from_json(params.at("doc"));
        if (params.contains("path")) {
            std::ifstream in(params.at("path").get<std::string>());
            if (!in) throw ModelError("cannot open " + params.at("path").get<std::string>());
            nlohmann::json doc;
            in >> doc;
            return JsonModel::from_json(doc);
        }
        throw ModelError("json family needs a doc or a path");
    }
    throw ModelError("unknown family: " + name);
}

}  // namespace cmdp
