#include "cmdp/transform.hpp"

#include <charconv>

namespace cmdp {

namespace {

class EncodedModel final : public Model {
  public:
    explicit EncodedModel(ModelPtr base) : base_(std::move(base)) {}

    std::string name() const override { return base_->name() + ":step"; }

    Expansion expand(const StateKey& s) const override {
        if (s.step < 0)
            throw ModelError(name() + ": state carries no counter: " + s.debug());
        StateKey b = s;
        b.step = -1;
        Expansion e = base_->expand(b);
        std::int64_t next = s.step + 1;
        if (e.finite()) {
            for (auto& edge : e.succ) edge.to.step = next;
            if (e.kind == StateKind::Random) {
                std::vector<LawEntry> entries = e.law.entries();
                for (auto& le : entries) le.edge.to.step = next;
                e.law = Law(std::move(entries));
            }
        } else {
            Branches inner = *e.inf;
            Branches stamped;
            stamped.at = [inner, next](std::uint64_t j) {
                Edge edge = inner.at(j);
                edge.to.step = next;
                return edge;
            };
            stamped.index_of = [inner](const StateKey& t) {
                StateKey b2 = t;
                b2.step = -1;
                return inner.index_of(b2);
            };
            stamped.weight = inner.weight;
            e.inf = std::move(stamped);
        }
        return e;
    }

    std::uint32_t labels(const StateKey& s) const override {
        StateKey b = s;
        b.step = -1;
        return base_->labels(b);
    }

    std::vector<StateKey> initial() const override {
        auto init = base_->initial();
        for (auto& k : init) k.step = 0;
        return init;
    }

    bool finitely_branching() const override { return base_->finitely_branching(); }
    bool acyclic_claim() const override { return true; }
    bool depth_finite_claim() const override { return true; }

    std::optional<std::int64_t> fixed_visit_step(const StateKey& s) const override {
        return s.step >= 0 ? std::optional(s.step) : std::nullopt;
    }

    std::optional<std::uint64_t> depth_of(const StateKey& s) const override {
        return s.step >= 0 ? std::optional(static_cast<std::uint64_t>(s.step)) : std::nullopt;
    }

    std::string render(const StateKey& s) const override {
        StateKey b = s;
        b.step = -1;
        return base_->render(b) + "@" + std::to_string(s.step);
    }

    std::optional<StateKey> parse(const std::string& t) const override {
        auto pos = t.rfind('@');
        if (pos == std::string::npos) return std::nullopt;
        std::int64_t n = 0;
        const char* first = t.data() + pos + 1;
        const char* last = t.data() + t.size();
        auto [p, ec] = std::from_chars(first, last, n);
        if (ec != std::errc() || p != last || n < 0) return std::nullopt;
        auto b = base_->parse(t.substr(0, pos));
        if (!b) return std::nullopt;
        b->step = n;
        return b;
    }

    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const override {
        if (s.step < 0) return false;
        StateKey b = s;
        b.step = -1;
        if (!base_->fast_sample(b, r, out)) return false;
        out.to.step = s.step + 1;
        return true;
    }

    bool fast_succ(const StateKey& s, Edge* out, std::size_t* n) const override {
        if (s.step < 0) return false;
        StateKey b = s;
        b.step = -1;
        if (!base_->fast_succ(b, out, n)) return false;
        for (std::size_t i = 0; i < *n; ++i) out[i].to.step = s.step + 1;
        return true;
    }

    ModelPtr base() const { return base_; }

  private:
    ModelPtr base_;
};

class DefinitizedModel final : public Model {
  public:
    explicit DefinitizedModel(ModelPtr base) : base_(std::move(base)) {}

    std::string name() const override { return base_->name() + ":definitized"; }

    Expansion expand(const StateKey& s) const override {
        if (s.flags & StateKey::kGadgetFlag) {
            StateKey x = host_of(s);
            if (s.i1 < 1) throw ModelError(name() + ": bad gadget position " + s.debug());
            Expansion be = base_->expand(x);
            if (be.finite())
                throw ModelError(name() + ": gadget state over finite host " + s.debug());
            std::uint64_t bi = static_cast<std::uint64_t>(s.i1) - 1;
            Edge exit = be.inf->at(bi);
            Expansion e;
            e.kind = be.kind;
            if (be.kind == StateKind::Controlled) {
                e.succ = {exit, Edge{chain_state(x, s.i1 + 1), false}};
                return e;
            }
            Rat before(0);
            for (std::uint64_t j = 0; j < bi; ++j) before += be.inf->weight(j);
            Rat pi = be.inf->weight(bi) / (Rat(1) - before);
            if (pi == 1) {
                e.law = Law({{exit, Rat(1)}});
            } else {
                e.law = Law({{exit, pi},
                             {Edge{chain_state(x, s.i1 + 1), false}, Rat(1) - pi}});
            }
            return e;
        }
        Expansion be = base_->expand(s);
        if (be.finite()) return be;
        if (s.i1 != 0)
            throw ModelError(name() + ": cannot attach a gadget to " + s.debug());
        Expansion e;
        e.kind = be.kind;
        Edge z1{chain_state(s, 1), false};
        if (be.kind == StateKind::Controlled)
            e.succ = {z1};
        else
            e.law = Law({{z1, Rat(1)}});
        return e;
    }

    std::uint32_t labels(const StateKey& s) const override {
        if (s.flags & StateKey::kGadgetFlag) return 0;
        return base_->labels(s);
    }

    std::vector<StateKey> initial() const override { return base_->initial(); }
    bool finitely_branching() const override { return true; }
    bool acyclic_claim() const override { return base_->acyclic_claim(); }
    bool depth_finite_claim() const override { return false; }

    std::string render(const StateKey& s) const override {
        if (s.flags & StateKey::kGadgetFlag)
            return base_->render(host_of(s)) + ".z." + std::to_string(s.i1);
        return base_->render(s);
    }

    std::optional<StateKey> parse(const std::string& t) const override {
        auto pos = t.rfind(".z.");
        if (pos != std::string::npos) {
            std::int64_t i = 0;
            const char* first = t.data() + pos + 3;
            const char* last = t.data() + t.size();
            auto [p, ec] = std::from_chars(first, last, i);
            if (ec == std::errc() && p == last && i >= 1) {
                auto x = base_->parse(t.substr(0, pos));
                if (x) return chain_state(*x, i);
            }
        }
        return base_->parse(t);
    }

    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const override {
        if (s.flags & StateKey::kGadgetFlag) return false;
        return base_->fast_sample(s, r, out);
    }

    ModelPtr base() const { return base_; }

    static StateKey host_of(StateKey z) {
        z.flags &= static_cast<std::uint8_t>(~StateKey::kGadgetFlag);
        z.i1 = 0;
        return z;
    }

  private:
    static StateKey chain_state(StateKey x, std::int64_t i) {
        x.flags |= StateKey::kGadgetFlag;
        x.i1 = i;
        return x;
    }

    ModelPtr base_;
};

}  // namespace

ModelPtr encode_step_counter(ModelPtr base) {
    if (!base) throw ModelError("encode_step_counter: null model");
    if (is_step_encoded(*base))
        throw ModelError("encode_step_counter: " + base->name() + " already carries a counter");
    return std::make_shared<EncodedModel>(std::move(base));
}

bool is_step_encoded(const Model& m) { return dynamic_cast<const EncodedModel*>(&m) != nullptr; }

ModelPtr step_encoding_base(const Model& m) {
    auto* e = dynamic_cast<const EncodedModel*>(&m);
    if (!e) throw ModelError(m.name() + " is not a step-counter encoding");
    return e->base();
}

ModelPtr definitize_branching(ModelPtr base) {
    if (!base) throw ModelError("definitize_branching: null model");
    if (base->finitely_branching()) return base;
    return std::make_shared<DefinitizedModel>(std::move(base));
}

bool is_definitized(const Model& m) { return dynamic_cast<const DefinitizedModel*>(&m) != nullptr; }

ModelPtr definitized_base(const Model& m) {
    auto* d = dynamic_cast<const DefinitizedModel*>(&m);
    if (!d) throw ModelError(m.name() + " is not a branching-gadget transform");
    return d->base();
}

std::vector<Rat> chain_weights(const std::vector<Rat>& p) {
    std::vector<Rat> out;
    Rat before(0);
    for (const Rat& pi : p) {
        if (pi < 0) throw ModelError("chain_weights: negative weight");
        Rat rest = Rat(1) - before;
        if (rest <= 0) throw ModelError("chain_weights: weights exceed 1");
        Rat w = pi / rest;
        if (w > 1) throw ModelError("chain_weights: weights exceed 1");
        out.push_back(w);
        before += pi;
        if (w == 1) break;
    }
    return out;
}

}  // namespace cmdp
