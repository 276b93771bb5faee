#include "cmdp/kernel.hpp"

#include <algorithm>
#include <bit>

#include "cmdp/families.hpp"
#include "cmdp/slice.hpp"
#include "cmdp/transform.hpp"

namespace cmdp {

std::string Mode::str() const {
    return "(step=" + std::to_string(step) + ",bit=" + std::to_string(bit) +
           ",fin=" + std::to_string(fin) + ")";
}

const char* kclass_name(KClass c) {
    switch (c) {
        case KClass::MD: return "md";
        case KClass::MR: return "mr";
        case KClass::FR: return "fr";
        case KClass::OneBit: return "one-bit";
        case KClass::Markov: return "markov";
        case KClass::OneBitMarkov: return "one-bit-markov";
        case KClass::General: return "general";
    }
    return "?";
}

std::optional<KClass> kclass_from(const std::string& name) {
    if (name == "md") return KClass::MD;
    if (name == "mr") return KClass::MR;
    if (name == "fr") return KClass::FR;
    if (name == "one-bit") return KClass::OneBit;
    if (name == "markov") return KClass::Markov;
    if (name == "one-bit-markov") return KClass::OneBitMarkov;
    if (name == "general") return KClass::General;
    return std::nullopt;
}

nlohmann::json Kernel::describe() const {
    return {{"name", name()}, {"class", kclass_name(klass())}};
}

void check_mode_transition(KClass c, std::uint32_t memory_size, const Mode& before,
                           const Mode& after, const std::string& kernel_name,
                           const std::string& where) {
    auto fail = [&](const std::string& why) {
        throw ModelError("kernel " + kernel_name + " at " + where + ": " + why + " (" +
                         before.str() + " -> " + after.str() + ")");
    };
    switch (c) {
        case KClass::MD:
        case KClass::MR:
            if (after.step || after.bit || after.fin) fail("memoryless kernel changed its mode");
            break;
        case KClass::FR:
            if (after.step || after.bit) fail("finite-memory kernel touched step or bit");
            if (after.fin >= memory_size) fail("memory index out of range");
            break;
        case KClass::OneBit:
            if (after.step || after.fin) fail("1-bit kernel touched step or fin");
            if (after.bit > 1) fail("bit outside {0,1}");
            break;
        case KClass::Markov:
            if (after.step != before.step + 1) fail("step component did not advance by 1");
            if (after.bit || after.fin) fail("Markov kernel touched bit or fin");
            break;
        case KClass::OneBitMarkov:
            if (after.step != before.step + 1) fail("step component did not advance by 1");
            if (after.bit > 1) fail("bit outside {0,1}");
            if (after.fin) fail("1-bit Markov kernel touched fin");
            break;
        case KClass::General:
            break;
    }
}

namespace {

std::uint64_t rat_threshold(const Rat& cum) {
    mpz_class t = (cum.get_num() << 64) / cum.get_den();
    return fits_u64(t) ? to_u64(t) : ~0ull;
}

const Choice& pick_choice(const std::vector<Choice>& cs, Rng& rng) {
    if (cs.size() == 1) return cs.front();
    std::uint64_t r = rng.next();
    Rat cum(0);
    for (std::size_t i = 0; i + 1 < cs.size(); ++i) {
        cum += cs[i].w;
        if (r < rat_threshold(cum)) return cs[i];
    }
    return cs.back();
}

bool edge_allowed(const Expansion& e, const Edge& edge) {
    if (e.finite()) {
        for (const auto& s : e.succ)
            if (s == edge) return true;
        return false;
    }
    return e.inf->index_of(edge.to).has_value();
}

}  // namespace

StepOut step_kernel(const Model& model, const Kernel& kernel, const Mode& mode, const StateKey& s,
                    Rng& rng) {
    Expansion e = model.expand(s);
    if (e.kind == StateKind::Controlled) {
        std::vector<Choice> cs = kernel.decide(mode, s, e);
        if (cs.empty())
            throw ModelError("kernel " + kernel.name() + " offered no choice at " +
                             model.render(s));
        const Choice& c = pick_choice(cs, rng);
        if (!edge_allowed(e, c.edge))
            throw ModelError("kernel " + kernel.name() + " chose a non-successor at " +
                             model.render(s) + ": " + model.render(c.edge.to));
        check_mode_transition(kernel.klass(), kernel.memory_size(), mode, c.next, kernel.name(),
                              model.render(s));
        return {c.edge, c.next};
    }
    if (!e.finite())
        throw ModelError(model.name() + ": random state " + model.render(s) +
                         " branches infinitely; apply the branching gadget "
                         "(definitize_branching) before simulating");
    const LawEntry& le = e.law.sample(rng.next());
    Mode after = kernel.observe(mode, s, le.edge);
    check_mode_transition(kernel.klass(), kernel.memory_size(), mode, after, kernel.name(),
                          model.render(s));
    return {le.edge, after};
}

// ------------------------------------------------------------- tree kernels

namespace {

class GridMrKernel final : public Kernel {
  public:
    GridMrKernel(std::string name, MrParamGrid grid) : name_(std::move(name)), grid_(std::move(grid)) {
        grid_.validate();
        deterministic_ = grid_.kind == MrParamGrid::Kind::Uniform &&
                         (grid_.uniform == 0 || grid_.uniform == 1);
        if (grid_.kind == MrParamGrid::Kind::PerLevel) {
            deterministic_ = true;
            for (const auto& lv : grid_.per_level)
                for (const auto& x : lv)
                    if (x != 0 && x != 1) deterministic_ = false;
        }
        if (grid_.kind == MrParamGrid::Kind::PerNode) {
            deterministic_ = true;
            for (const auto& [n, x] : grid_.per_node)
                if (x != 0 && x != 1) deterministic_ = false;
        }
        if (grid_.kind == MrParamGrid::Kind::Uniform && !deterministic_)
            uniform_threshold_ = rat_threshold(grid_.uniform);
    }

    std::string name() const override { return name_; }
    KClass klass() const override { return deterministic_ ? KClass::MD : KClass::MR; }

    std::vector<Choice> decide(const Mode&, const StateKey& s, const Expansion& e) const override {
        if (s.family != Fam::Tree || (s.role != role::kY0 && s.role != role::kY1) ||
            e.succ.size() != 2)
            throw ModelError("kernel " + name_ + " is defined at yellow tree states only, got " +
                             s.debug());
        std::uint8_t slot = s.role == role::kY1 ? 1 : 0;
        std::int64_t k = s.i0 - static_cast<std::int64_t>(s.path.size());
        if (k < 1) throw ModelError("kernel " + name_ + ": malformed yellow state " + s.debug());
        const Rat& x = grid_.at(s.path, slot, static_cast<std::uint32_t>(k));
        if (x == 1) return {{e.succ[0], Mode{}, Rat(1)}};
        if (x == 0) return {{e.succ[1], Mode{}, Rat(1)}};
        return {{e.succ[0], Mode{}, x}, {e.succ[1], Mode{}, Rat(1) - x}};
    }

    Mode observe(const Mode&, const StateKey&, const Edge&) const override { return {}; }

    bool fast_pick(const Mode&, const StateKey& s, const Edge*, std::size_t n, Rng& rng,
                   std::size_t* idx, Mode* next) const override {
        if (n != 2 || grid_.kind != MrParamGrid::Kind::Uniform ||
            (s.role != role::kY0 && s.role != role::kY1))
            return false;
        *next = Mode{};
        if (grid_.uniform == 1)
            *idx = 0;
        else if (grid_.uniform == 0)
            *idx = 1;
        else
            *idx = rng.next() < uniform_threshold_ ? 0 : 1;
        return true;
    }

    nlohmann::json describe() const override {
        auto j = Kernel::describe();
        if (grid_.kind == MrParamGrid::Kind::Uniform) j["down"] = rat_string(grid_.uniform);
        return j;
    }

    const MrParamGrid& grid() const { return grid_; }

  private:
    std::string name_;
    MrParamGrid grid_;
    bool deterministic_;
    std::uint64_t uniform_threshold_ = 0;
};

// Down while the bit is 0, up while it is 1; the bit is set on reaching a
// green leaf and reset on entering the next tree (forced to 1 in trees with
// index <= skip_k, which skips them entirely).
class Sigma1Kernel final : public Kernel {
  public:
    Sigma1Kernel(ModelPtr model, std::int64_t skip_k)
        : model_(std::move(model)), skip_k_(skip_k) {}

    std::string name() const override {
        return skip_k_ ? "sigma-eps:k=" + std::to_string(skip_k_) : "sigma1-onebit";
    }
    KClass klass() const override { return KClass::OneBit; }
    Mode initial_mode() const override { return Mode{0, skip_k_ >= 1 ? std::uint8_t(1) : std::uint8_t(0), 0}; }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        if (s.family != Fam::Tree || (s.role != role::kY0 && s.role != role::kY1) ||
            e.succ.size() != 2)
            throw ModelError("kernel " + name() + " is defined at yellow tree states only, got " +
                             s.debug());
        const Edge& edge = m.bit ? e.succ[1] : e.succ[0];
        Mode next = m;
        next.bit = next_bit(m.bit, edge.to);
        return {{edge, next, Rat(1)}};
    }

    Mode observe(const Mode& m, const StateKey&, const Edge& taken) const override {
        Mode next = m;
        next.bit = next_bit(m.bit, taken.to);
        return next;
    }

    bool fast_pick(const Mode& m, const StateKey& s, const Edge* succ, std::size_t n, Rng&,
                   std::size_t* idx, Mode* next) const override {
        if (n != 2 || (s.role != role::kY0 && s.role != role::kY1)) return false;
        *idx = m.bit ? 1 : 0;
        *next = m;
        next->bit = next_bit(m.bit, succ[*idx].to);
        return true;
    }

  private:
    std::uint8_t next_bit(std::uint8_t b, const StateKey& to) const {
        std::uint32_t lb = model_->labels(to);
        if (lb & label::kBlue) return to.i0 <= skip_k_ ? 1 : 0;
        if (lb & label::kGreen) return 1;
        return b;
    }

    ModelPtr model_;
    std::int64_t skip_k_;
};

// ------------------------------------------------------------- dive kernels

// The escalator strategy: during its i-th spell at the bottom the kernel
// steers into dive state r_{i+k}. Profiles cover the three presentations
// (spine walk, flat infinite choice, branching-gadget walk); each one has
// deterministic cycle lengths, so the spell index is a function of the step.
class DiveWalkKernel final : public Kernel {
  public:
    enum class Profile { SpineWalk, FlatPick, GadgetWalk };

    DiveWalkKernel(Profile p, std::int64_t k) : profile_(p), k_(k) {}

    std::string name() const override { return "fig1-markov:k=" + std::to_string(k_); }
    KClass klass() const override { return KClass::Markov; }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        Mode next = m;
        next.step = m.step + 1;
        std::int64_t target = k_ + cycle_index(m.step);
        switch (profile_) {
            case Profile::SpineWalk: {
                if (s.role != role::kSpine || e.succ.size() != 2)
                    throw ModelError("kernel " + name() + ": unexpected state " + s.debug());
                return {{s.i0 < target ? e.succ[0] : e.succ[1], next, Rat(1)}};
            }
            case Profile::FlatPick: {
                if (s.role != role::kSpine || e.finite())
                    throw ModelError("kernel " + name() + ": unexpected state " + s.debug());
                return {{e.inf->at(static_cast<std::uint64_t>(target)), next, Rat(1)}};
            }
            case Profile::GadgetWalk: {
                if (!(s.flags & StateKey::kGadgetFlag)) {
                    if (e.succ.size() != 1)
                        throw ModelError("kernel " + name() + ": unexpected state " + s.debug());
                    return {{e.succ[0], next, Rat(1)}};
                }
                if (e.succ.size() != 2)
                    throw ModelError("kernel " + name() + ": unexpected state " + s.debug());
                return {{s.i1 < target + 1 ? e.succ[1] : e.succ[0], next, Rat(1)}};
            }
        }
        throw ModelError("kernel " + name() + ": bad profile");
    }

    Mode observe(const Mode& m, const StateKey&, const Edge&) const override {
        Mode next = m;
        next.step = m.step + 1;
        return next;
    }

    bool fast_pick(const Mode& m, const StateKey& s, const Edge*, std::size_t n, Rng&,
                   std::size_t* idx, Mode* next) const override {
        std::int64_t target = k_ + cycle_index(m.step);
        if (profile_ == Profile::SpineWalk && s.role == role::kSpine && n == 2)
            *idx = s.i0 < target ? 0 : 1;
        else if (profile_ == Profile::GadgetWalk && (s.flags & StateKey::kGadgetFlag) && n == 2)
            *idx = s.i1 < target + 1 ? 1 : 0;
        else if (profile_ == Profile::GadgetWalk && n == 1)
            *idx = 0;
        else
            return false;
        *next = m;
        next->step = m.step + 1;
        return true;
    }

  private:
    // Number of completed bottom-spells before step n, plus one. Cycle i
    // (1-based) dives to r_{i+k}; its length depends on the presentation.
    std::int64_t cycle_index(std::int64_t n) const {
        std::int64_t i = 1;
        std::int64_t start = 0;
        for (;;) {
            std::int64_t len = 0;
            switch (profile_) {
                case Profile::SpineWalk: len = (i + k_) + 2; break;
                case Profile::FlatPick: len = 2; break;
                case Profile::GadgetWalk: len = (i + k_) + 3; break;
            }
            if (n < start + len) return i;
            start += len;
            ++i;
        }
    }

    Profile profile_;
    std::int64_t k_;
};

// The hill strategy: 2^b consecutive picks of r_b for b = 1, 2, ... The pick
// count is per bottom-visit, and visits are not a function of the step (the
// return via a goal state takes one step longer), so the kernel carries a
// visit counter and declares the general class.
class HillBlocksKernel final : public Kernel {
  public:
    std::string name() const override { return "hill-blocks"; }
    KClass klass() const override { return KClass::General; }
    Mode initial_mode() const override { return Mode{0, 0, 1}; }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        if (s.family != Fam::Fig3 || s.role != role::kSpine || e.finite())
            throw ModelError("kernel hill-blocks: unexpected state " + s.debug());
        std::uint32_t v = m.fin ? m.fin : 1;
        std::uint64_t b = std::bit_width(static_cast<std::uint64_t>(v) + 1) - 1;
        return {{e.inf->at(b - 1), m, Rat(1)}};
    }

    Mode observe(const Mode& m, const StateKey&, const Edge& taken) const override {
        Mode next = m;
        if (taken.to.family == Fam::Fig3 && taken.to.role == role::kSpine &&
            next.fin != UINT32_MAX)
            ++next.fin;
        return next;
    }
};

// ------------------------------------------------------------ table kernels

struct BitKey {
    StateKey s;
    std::uint32_t m;
    bool operator==(const BitKey&) const = default;
};
struct BitKeyHash {
    std::size_t operator()(const BitKey& k) const {
        return k.s.hash() * 0x9e3779b97f4a7c15ULL + k.m;
    }
};

class TableKernel final : public Kernel {
  public:
    TableKernel(KClass c, std::string name, ModelPtr model, const nlohmann::json& data)
        : klass_(c), name_(std::move(name)), model_(std::move(model)) {
        if (c == KClass::FR) size_ = data.value("size", 1u);
        for (const auto& row : data.at("entries")) {
            StateKey s = need_state(row.at("state").get<std::string>());
            std::uint32_t m = 0;
            if (c == KClass::OneBit) m = row.value("bit", 0u);
            if (c == KClass::FR) m = row.value("fin", 0u);
            std::int64_t step = row.value("step", std::int64_t(-1));
            std::vector<std::pair<Edge, Rat>> alts;
            if (row.contains("choices")) {
                for (const auto& ch : row.at("choices"))
                    alts.emplace_back(Edge{need_state(ch.at("to").get<std::string>()), false},
                                      parse_rat(ch.at("weight").get<std::string>()));
            } else {
                alts.emplace_back(Edge{need_state(row.at("choice").get<std::string>()), false},
                                  Rat(1));
            }
            std::uint32_t next_m = m;
            if (row.contains("next_bit")) next_m = row.at("next_bit").get<std::uint32_t>();
            if (row.contains("next_fin")) next_m = row.at("next_fin").get<std::uint32_t>();
            validate_row(s, alts);
            Row r{std::move(alts), next_m};
            if (c == KClass::Markov && step >= 0)
                by_step_[BitKey{s, static_cast<std::uint32_t>(step)}] = r;
            else
                rows_[BitKey{s, m}] = std::move(r);
        }
        if (data.contains("observe")) {
            for (const auto& ob : data.at("observe"))
                observe_.emplace_back(labels_from_names({ob.at("label").get<std::string>()}),
                                      ob.at("set").get<std::uint32_t>());
        }
    }

    std::string name() const override { return name_; }
    KClass klass() const override { return klass_; }
    std::uint32_t memory_size() const override { return klass_ == KClass::FR ? size_ : 1; }

    std::vector<Choice> decide(const Mode& m, const StateKey& s, const Expansion&) const override {
        const Row* row = nullptr;
        if (klass_ == KClass::Markov) {
            auto it = by_step_.find(BitKey{s, static_cast<std::uint32_t>(m.step)});
            if (it != by_step_.end()) row = &it->second;
        }
        if (!row) {
            std::uint32_t mm = klass_ == KClass::OneBit ? m.bit
                               : klass_ == KClass::FR   ? m.fin
                                                        : 0;
            auto it = rows_.find(BitKey{s, mm});
            if (it == rows_.end())
                throw ModelError("kernel " + name_ + " has no entry for " + model_->render(s) +
                                 " in mode " + m.str());
            row = &it->second;
        }
        std::vector<Choice> out;
        out.reserve(row->alts.size());
        for (const auto& [edge, w] : row->alts) {
            Mode next = m;
            if (klass_ == KClass::OneBit) next.bit = static_cast<std::uint8_t>(row->next_m);
            if (klass_ == KClass::FR) next.fin = row->next_m;
            if (klass_ == KClass::Markov) next.step = m.step + 1;
            out.push_back({edge, next, w});
        }
        return out;
    }

    Mode observe(const Mode& m, const StateKey&, const Edge& taken) const override {
        Mode next = m;
        if (klass_ == KClass::Markov) next.step = m.step + 1;
        std::uint32_t lb = model_->labels(taken.to);
        for (const auto& [mask, set] : observe_) {
            if (lb & mask) {
                if (klass_ == KClass::OneBit) next.bit = static_cast<std::uint8_t>(set);
                if (klass_ == KClass::FR) next.fin = set;
                break;
            }
        }
        return next;
    }

  private:
    StateKey need_state(const std::string& text) const {
        auto k = model_->parse(text);
        if (!k) throw ModelError("kernel table references unknown state " + text);
        return *k;
    }

    void validate_row(const StateKey& s, const std::vector<std::pair<Edge, Rat>>& alts) const {
        Expansion e = model_->expand(s);
        if (e.kind != StateKind::Controlled)
            throw ModelError("kernel table row at random state " + model_->render(s));
        Rat sum(0);
        for (const auto& [edge, w] : alts) {
            bool ok = e.finite() ? std::find(e.succ.begin(), e.succ.end(), edge) != e.succ.end()
                                 : e.inf->index_of(edge.to).has_value();
            if (!ok)
                throw ModelError("kernel table maps " + model_->render(s) + " to non-successor " +
                                 model_->render(edge.to));
            sum += w;
        }
        if (sum != 1)
            throw ModelError("kernel table weights at " + model_->render(s) + " sum to " +
                             rat_string(sum));
    }

    struct Row {
        std::vector<std::pair<Edge, Rat>> alts;
        std::uint32_t next_m;
    };

    KClass klass_;
    std::string name_;
    ModelPtr model_;
    std::uint32_t size_ = 1;
    std::unordered_map<BitKey, Row, BitKeyHash> rows_;
    std::unordered_map<BitKey, Row, BitKeyHash> by_step_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> observe_;
};

// ---------------------------------------------------------------- adapters

KClass lifted_class(KClass c) {
    switch (c) {
        case KClass::Markov: return KClass::MR;
        case KClass::OneBitMarkov: return KClass::OneBit;
        default: return c;
    }
}

class LiftedKernel final : public Kernel {
  public:
    explicit LiftedKernel(KernelPtr inner) : inner_(std::move(inner)) {}

    std::string name() const override { return inner_->name() + ":lifted"; }
    KClass klass() const override { return lifted_class(inner_->klass()); }
    std::uint32_t memory_size() const override { return inner_->memory_size(); }

    Mode initial_mode() const override {
        Mode m = inner_->initial_mode();
        m.step = 0;
        return m;
    }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        if (s.step < 0)
            throw ModelError("kernel " + name() + " needs step-encoded states, got " + s.debug());
        Mode im{s.step, m.bit, m.fin};
        std::vector<Choice> cs = inner_->decide(im, s, e);
        for (auto& c : cs) c.next.step = 0;
        return cs;
    }

    Mode observe(const Mode& m, const StateKey& at, const Edge& taken) const override {
        Mode im{at.step, m.bit, m.fin};
        Mode next = inner_->observe(im, at, taken);
        next.step = 0;
        return next;
    }

    KernelPtr inner() const { return inner_; }

  private:
    KernelPtr inner_;
};

KClass unlifted_class(KClass c) {
    switch (c) {
        case KClass::MD:
        case KClass::MR:
        case KClass::Markov: return KClass::Markov;
        case KClass::OneBit:
        case KClass::OneBitMarkov: return KClass::OneBitMarkov;
        default: return KClass::General;
    }
}

class BackStepKernel final : public Kernel {
  public:
    explicit BackStepKernel(KernelPtr inner) : inner_(std::move(inner)) {}

    std::string name() const override { return inner_->name() + ":unstepped"; }
    KClass klass() const override { return unlifted_class(inner_->klass()); }
    std::uint32_t memory_size() const override { return inner_->memory_size(); }

    Mode initial_mode() const override {
        Mode m = inner_->initial_mode();
        m.step = 0;
        return m;
    }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        StateKey enc = s;
        enc.step = m.step;
        Mode im{0, m.bit, m.fin};
        std::vector<Choice> cs = inner_->decide(im, enc, e);
        for (auto& c : cs) {
            c.edge.to.step = -1;
            c.next.step = m.step + 1;
        }
        return cs;
    }

    Mode observe(const Mode& m, const StateKey& at, const Edge& taken) const override {
        StateKey enc = at;
        enc.step = m.step;
        Edge te = taken;
        te.to.step = m.step + 1;
        Mode next = inner_->observe(Mode{0, m.bit, m.fin}, enc, te);
        next.step = m.step + 1;
        return next;
    }

  private:
    KernelPtr inner_;
};

class BackGadgetKernel final : public Kernel {
  public:
    BackGadgetKernel(KernelPtr inner, ModelPtr definitized, std::uint64_t cap)
        : inner_(std::move(inner)), def_(std::move(definitized)), cap_(cap) {
        KClass c = inner_->klass();
        if (c == KClass::Markov || c == KClass::OneBitMarkov)
            throw ModelError(
                "gadget collapse is undefined for step-counting kernels: the walk length "
                "would change every later step index");
    }

    std::string name() const override { return inner_->name() + ":ungadgeted"; }
    KClass klass() const override { return inner_->klass(); }
    std::uint32_t memory_size() const override { return inner_->memory_size(); }
    Mode initial_mode() const override { return inner_->initial_mode(); }

    std::vector<Choice> decide(const Mode& m, const StateKey& s,
                               const Expansion& e) const override {
        if (e.finite()) return inner_->decide(m, s, e);
        // Walk the fresh chain the inner kernel would traverse and collapse
        // it into the single exit decision.
        Mode cur = m;
        StateKey host = s;
        Expansion he = def_->expand(host);
        if (he.kind != StateKind::Controlled || he.succ.size() != 1)
            throw ModelError("kernel " + name() + ": unexpected gadget host " + s.debug());
        {
            std::vector<Choice> cs = inner_->decide(cur, host, he);
            if (cs.size() != 1)
                throw ModelError("gadget collapse needs a deterministic walk at " + s.debug());
            cur = cs[0].next;
        }
        StateKey z = host;
        z.flags |= StateKey::kGadgetFlag;
        for (std::uint64_t j = 1; j <= cap_; ++j) {
            z.i1 = static_cast<std::int64_t>(j);
            Expansion ze = def_->expand(z);
            std::vector<Choice> cs = inner_->decide(cur, z, ze);
            if (cs.size() != 1)
                throw ModelError("gadget collapse needs a deterministic walk at " + z.debug());
            const Choice& c = cs[0];
            if (c.edge == ze.succ[0]) {
                // Exit at position j: original branch j-1.
                return {{e.inf->at(j - 1), c.next, Rat(1)}};
            }
            cur = c.next;
        }
        // The walk never leaves the gadget: play the first branch, keep the
        // memory unchanged.
        return {{e.inf->at(0), m, Rat(1)}};
    }

    Mode observe(const Mode& m, const StateKey& at, const Edge& taken) const override {
        Expansion e = def_->expand(at);
        if (e.finite() || e.kind == StateKind::Controlled) return inner_->observe(m, at, taken);
        // Random gadget host: replay the chain of memory updates the walk to
        // the realized branch would have produced.
        auto idx = e.inf->index_of(taken.to);
        if (!idx) return inner_->observe(m, at, taken);
        Mode cur = m;
        StateKey z = at;
        z.flags |= StateKey::kGadgetFlag;
        StateKey prev = at;
        for (std::uint64_t j = 1; j <= *idx + 1; ++j) {
            z.i1 = static_cast<std::int64_t>(j);
            cur = inner_->observe(cur, prev, Edge{z, false});
            prev = z;
        }
        return inner_->observe(cur, prev, taken);
    }

  private:
    KernelPtr inner_;
    ModelPtr def_;
    std::uint64_t cap_;
};

}  // namespace

// ---------------------------------------------------------------- factories

KernelPtr build_strategy(const std::string& name, const nlohmann::json& params, ModelPtr model) {
    if (!model) throw ModelError("build_strategy: null model");
    const std::string mn = model->name();
    bool tree = mn.rfind("tree-chain", 0) == 0;

    auto need_tree = [&] {
        if (!tree) throw ModelError("strategy " + name + " targets the tree chain, not " + mn);
    };

    if (name == "greedy-mr") {
        need_tree();
        return std::make_shared<GridMrKernel>("greedy-mr", MrParamGrid::uniform_grid(Rat(1)));
    }
    if (name == "always-up-mr") {
        need_tree();
        return std::make_shared<GridMrKernel>("always-up-mr", MrParamGrid::uniform_grid(Rat(0)));
    }
    if (name == "grid-mr") {
        need_tree();
        MrParamGrid g;
        std::string kind = params.value("kind", "uniform");
        if (kind == "uniform") {
            g = MrParamGrid::uniform_grid(parse_rat(params.value("down", "1")));
        } else if (kind == "per-level") {
            g.kind = MrParamGrid::Kind::PerLevel;
            for (const auto& lv : params.at("levels"))
                g.per_level.push_back({parse_rat(lv.at(0).get<std::string>()),
                                       parse_rat(lv.at(1).get<std::string>())});
        } else if (kind == "per-node") {
            g.kind = MrParamGrid::Kind::PerNode;
            for (const auto& row : params.at("nodes")) {
                MrParamGrid::NodeSlot ns{row.at("path").get<std::uint64_t>(),
                                         row.at("len").get<std::uint8_t>(),
                                         row.at("slot").get<std::uint8_t>()};
                g.per_node[ns] = parse_rat(row.at("down").get<std::string>());
            }
        } else {
            throw ModelError("grid-mr: unknown grid kind " + kind);
        }
        return std::make_shared<GridMrKernel>("grid-mr", std::move(g));
    }
    if (name == "sigma1-onebit") {
        need_tree();
        return std::make_shared<Sigma1Kernel>(model, 0);
    }
    if (name == "sigma-eps") {
        need_tree();
        std::int64_t k = params.at("k").get<std::int64_t>();
        if (k < 1) throw ModelError("sigma-eps: k must be >= 1");
        return std::make_shared<Sigma1Kernel>(model, k);
    }
    if (name == "fig1-markov") {
        std::int64_t k = params.at("k").get<std::int64_t>();
        if (k < 0) throw ModelError("fig1-markov: k must be >= 0");
        if (mn == "fig1a")
            return std::make_shared<DiveWalkKernel>(DiveWalkKernel::Profile::SpineWalk, k);
        if (mn == "fig1b")
            return std::make_shared<DiveWalkKernel>(DiveWalkKernel::Profile::FlatPick, k);
        if (mn == "fig1b:definitized")
            return std::make_shared<DiveWalkKernel>(DiveWalkKernel::Profile::GadgetWalk, k);
        throw ModelError("strategy fig1-markov targets fig1a/fig1b, not " + mn);
    }
    if (name == "hill-blocks") {
        if (mn != "fig3") throw ModelError("strategy hill-blocks targets fig3, not " + mn);
        return std::make_shared<HillBlocksKernel>();
    }
    throw ModelError("unknown strategy: " + name);
}

KernelPtr make_kernel(const std::string& class_tag, const nlohmann::json& data, ModelPtr model) {
    auto c = kclass_from(class_tag);
    if (!c) throw ModelError("unknown kernel class: " + class_tag);
    switch (*c) {
        case KClass::MD:
        case KClass::MR:
        case KClass::OneBit:
        case KClass::FR:
        case KClass::Markov:
            return std::make_shared<TableKernel>(*c, data.value("name", "table-" + class_tag),
                                                 std::move(model), data);
        default:
            throw ModelError("make_kernel: class " + class_tag + " needs a table form");
    }
}

KernelPtr lift_to_step_encoding(KernelPtr inner) {
    if (!inner) throw ModelError("lift_to_step_encoding: null kernel");
    return std::make_shared<LiftedKernel>(std::move(inner));
}

KernelPtr back_translate_step(KernelPtr inner) {
    if (!inner) throw ModelError("back_translate_step: null kernel");
    if (auto* l = dynamic_cast<const LiftedKernel*>(inner.get())) return l->inner();
    return std::make_shared<BackStepKernel>(std::move(inner));
}

KernelPtr back_translate_gadget(KernelPtr inner, ModelPtr definitized, std::uint64_t walk_cap) {
    if (!inner || !definitized) throw ModelError("back_translate_gadget: null argument");
    if (!is_definitized(*definitized))
        throw ModelError("back_translate_gadget: " + definitized->name() +
                         " is not a branching-gadget transform");
    return std::make_shared<BackGadgetKernel>(std::move(inner), std::move(definitized), walk_cap);
}

}  // namespace cmdp
