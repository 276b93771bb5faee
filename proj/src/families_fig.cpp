#include "cmdp/families.hpp"

#include <charconv>

namespace cmdp {

namespace {

std::uint64_t pow2_threshold(std::int64_t i) {
    // floor(2^-i * 2^64), i >= 1
    if (i >= 64) return 0;
    return 1ull << (64 - i);
}

std::uint64_t pow3_threshold(std::int64_t i) {
    // floor(3^-i * 2^64), i >= 1
    if (i > 40) return 0;  // 3^41 > 2^64
    std::uint64_t p = 1;
    for (std::int64_t k = 0; k < i; ++k) p *= 3;
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(1) << 64) / p);
}

std::optional<std::int64_t> parse_index(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
    return v;
}

}  // namespace

// ---------------------------------------------------------------------- esc

StateKey EscalatorModel::spine(std::int64_t i) {
    StateKey k;
    k.family = Fam::Fig1a;
    k.role = role::kSpine;
    k.i0 = i;
    return k;
}

StateKey EscalatorModel::dive(std::int64_t i) {
    StateKey k;
    k.family = Fam::Fig1a;
    k.role = role::kDive;
    k.i0 = i;
    return k;
}

StateKey EscalatorModel::sink() {
    StateKey k;
    k.family = Fam::Fig1a;
    k.role = role::kSink;
    return k;
}

Expansion EscalatorModel::expand(const StateKey& s) const {
    if (s.family != Fam::Fig1a) throw ModelError(name() + ": foreign state " + s.debug());
    Expansion e;
    if (s.role == role::kSpine) {
        if (flat_ && s.i0 != 0) throw ModelError(name() + " has no state s_" + std::to_string(s.i0));
        e.kind = StateKind::Controlled;
        if (flat_) {
            Branches b;
            b.at = [](std::uint64_t j) { return Edge{dive(static_cast<std::int64_t>(j)), false}; };
            b.index_of = [](const StateKey& t) -> std::optional<std::uint64_t> {
                if (t.family == Fam::Fig1a && t.role == role::kDive)
                    return static_cast<std::uint64_t>(t.i0);
                return std::nullopt;
            };
            e.inf = std::move(b);
        } else {
            e.succ = {Edge{spine(s.i0 + 1), false}, Edge{dive(s.i0), false}};
        }
        return e;
    }
    if (s.role == role::kDive) {
        e.kind = StateKind::Random;
        if (s.i0 == 0) {
            e.law = Law({{Edge{sink(), false}, Rat(1)}});
        } else {
            Rat q = pow2_neg(static_cast<unsigned>(s.i0));
            e.law = Law({{Edge{sink(), false}, q}, {Edge{spine(0), false}, Rat(1) - q}});
        }
        return e;
    }
    if (s.role == role::kSink) {
        e.kind = StateKind::Random;
        e.law = Law({{Edge{sink(), false}, Rat(1)}});
        return e;
    }
    throw ModelError(name() + ": unknown role in " + s.debug());
}

std::uint32_t EscalatorModel::labels(const StateKey& s) const {
    if (s.role == role::kSpine && s.i0 == 0) return label::kGoal;
    if (s.role == role::kSink) return label::kLosing;
    return 0;
}

std::string EscalatorModel::render(const StateKey& s) const {
    if (s.role == role::kSpine) return "esc.s." + std::to_string(s.i0);
    if (s.role == role::kDive) return "esc.r." + std::to_string(s.i0);
    return "esc.bottom";
}

std::optional<StateKey> EscalatorModel::parse(const std::string& t) const {
    if (t == "esc.bottom") return sink();
    if (t.rfind("esc.s.", 0) == 0) {
        if (auto i = parse_index(std::string_view(t).substr(6))) {
            if (flat_ && *i != 0) return std::nullopt;
            return spine(*i);
        }
    }
    if (t.rfind("esc.r.", 0) == 0)
        if (auto i = parse_index(std::string_view(t).substr(6))) return dive(*i);
    return std::nullopt;
}

bool EscalatorModel::fast_succ(const StateKey& s, Edge* out, std::size_t* n) const {
    if (flat_ || s.role != role::kSpine) return false;
    out[0] = Edge{spine(s.i0 + 1), false};
    out[1] = Edge{dive(s.i0), false};
    *n = 2;
    return true;
}

bool EscalatorModel::fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const {
    if (s.role == role::kDive) {
        if (s.i0 == 0) {
            out = Edge{sink(), false};
            return true;
        }
        out = r < pow2_threshold(s.i0) ? Edge{sink(), false} : Edge{spine(0), false};
        return true;
    }
    if (s.role == role::kSink) {
        out = Edge{sink(), false};
        return true;
    }
    return false;
}

// --------------------------------------------------------------------- hill

StateKey HillModel::s0() {
    StateKey k;
    k.family = Fam::Fig3;
    k.role = role::kSpine;
    return k;
}

StateKey HillModel::dive(std::int64_t i) {
    StateKey k;
    k.family = Fam::Fig3;
    k.role = role::kDive;
    k.i0 = i;
    return k;
}

StateKey HillModel::goal(std::int64_t i) {
    StateKey k;
    k.family = Fam::Fig3;
    k.role = role::kGoal;
    k.i0 = i;
    return k;
}

StateKey HillModel::bottom(std::int64_t i) {
    StateKey k;
    k.family = Fam::Fig3;
    k.role = role::kSink;
    k.i0 = i;
    return k;
}

Expansion HillModel::expand(const StateKey& s) const {
    if (s.family != Fam::Fig3) throw ModelError(name() + ": foreign state " + s.debug());
    Expansion e;
    if (s.role == role::kSpine) {
        e.kind = StateKind::Controlled;
        Branches b;
        b.at = [](std::uint64_t j) { return Edge{dive(static_cast<std::int64_t>(j) + 1), false}; };
        b.index_of = [](const StateKey& t) -> std::optional<std::uint64_t> {
            if (t.family == Fam::Fig3 && t.role == role::kDive && t.i0 >= 1)
                return static_cast<std::uint64_t>(t.i0 - 1);
            return std::nullopt;
        };
        e.inf = std::move(b);
        return e;
    }
    if (s.role == role::kDive) {
        if (s.i0 < 1) throw ModelError(name() + " has no dive state r_" + std::to_string(s.i0));
        e.kind = StateKind::Random;
        Rat pg = pow2_neg(static_cast<unsigned>(s.i0));
        Rat pb = pow_neg(3, static_cast<unsigned>(s.i0));
        e.law = Law({{Edge{goal(s.i0), false}, pg},
                     {Edge{bottom(s.i0), false}, pb},
                     {Edge{s0(), false}, Rat(1) - pg - pb}});
        return e;
    }
    if (s.role == role::kGoal) {
        e.kind = StateKind::Random;
        e.law = Law({{Edge{s0(), false}, Rat(1)}});
        return e;
    }
    if (s.role == role::kSink) {
        e.kind = StateKind::Random;
        e.law = Law({{Edge{bottom(s.i0), false}, Rat(1)}});
        return e;
    }
    throw ModelError(name() + ": unknown role in " + s.debug());
}

std::uint32_t HillModel::labels(const StateKey& s) const {
    if (s.role == role::kGoal) return label::kGoal;
    if (s.role == role::kSink) return label::kLosing;
    return 0;
}

std::string HillModel::render(const StateKey& s) const {
    if (s.role == role::kSpine) return "hill.s0";
    if (s.role == role::kDive) return "hill.r." + std::to_string(s.i0);
    if (s.role == role::kGoal) return "hill.g." + std::to_string(s.i0);
    return "hill.bottom." + std::to_string(s.i0);
}

std::optional<StateKey> HillModel::parse(const std::string& t) const {
    if (t == "hill.s0") return s0();
    auto tail = [&t](std::size_t n) { return std::string_view(t).substr(n); };
    if (t.rfind("hill.r.", 0) == 0)
        if (auto i = parse_index(tail(7)); i && *i >= 1) return dive(*i);
    if (t.rfind("hill.g.", 0) == 0)
        if (auto i = parse_index(tail(7)); i && *i >= 1) return goal(*i);
    if (t.rfind("hill.bottom.", 0) == 0)
        if (auto i = parse_index(tail(12)); i && *i >= 1) return bottom(*i);
    return std::nullopt;
}

bool HillModel::fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const {
    if (s.role == role::kDive) {
        std::uint64_t t1 = pow2_threshold(s.i0);
        std::uint64_t t2 = t1 + pow3_threshold(s.i0);
        if (r < t1)
            out = Edge{goal(s.i0), false};
        else if (r < t2)
            out = Edge{bottom(s.i0), false};
        else
            out = Edge{s0(), false};
        return true;
    }
    if (s.role == role::kGoal) {
        out = Edge{s0(), false};
        return true;
    }
    if (s.role == role::kSink) {
        out = Edge{bottom(s.i0), false};
        return true;
    }
    return false;
}

}  // namespace cmdp
