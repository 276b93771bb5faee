#include "cmdp/families.hpp"

#include <charconv>
#include <string_view>

namespace cmdp {

namespace {

// Depth bookkeeping. `detour` is 1 when guard crossings pass through an extra
// state (parity variant), 0 otherwise. Longest traversal of a height-k
// subtree: Lv(0) = 1, Lv(k) = (6 + 2*detour) + 2*Lv(k-1).
std::uint64_t lv(std::uint32_t k, std::uint64_t detour) {
    return (7 + 2 * detour) * (1ull << k) - (6 + 2 * detour);
}

std::uint64_t depth_blue(std::int64_t n, std::uint64_t detour) {
    // sum_{m=1}^{n-1} (1 + Lv(m))
    std::uint64_t two_n = 1ull << n;
    return (7 + 2 * detour) * (two_n - 2) - (5 + 2 * detour) * (n - 1);
}

std::optional<std::int64_t> parse_num(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
    return v;
}

bool internal_role(std::uint8_t r) {
    return r == role::kB0 || r == role::kY0 || r == role::kG0 || r == role::kB1 ||
           r == role::kY1 || r == role::kG1;
}

const char* role_token(std::uint8_t r) {
    switch (r) {
        case role::kB0: return "b0";
        case role::kY0: return "y0";
        case role::kG0: return "g0";
        case role::kB1: return "b1";
        case role::kY1: return "y1";
        case role::kG1: return "g1";
        default: return nullptr;
    }
}

}  // namespace

TreeChainModel::TreeChainModel(Rat p, TreeVariant v) : p_(std::move(p)), variant_(v) {
    if (p_ <= 0 || p_ >= 1) throw ModelError("tree-chain: p must lie strictly between 0 and 1");
    mpz_class t = (p_.get_num() << 64) / p_.get_den();
    p_threshold_ = fits_u64(t) ? to_u64(t) : ~0ull;
}

std::string TreeChainModel::name() const {
    switch (variant_) {
        case TreeVariant::Annotated: return "tree-chain";
        case TreeVariant::Divert: return "tree-chain:divert";
        case TreeVariant::DivertEqual: return "tree-chain:divert-equal";
        case TreeVariant::Parity: return "tree-chain:parity";
    }
    return "tree-chain";
}

StateKey TreeChainModel::blue(std::int64_t n) {
    StateKey k;
    k.family = Fam::Tree;
    k.role = role::kBlue;
    k.i0 = n;
    return k;
}

StateKey TreeChainModel::node(std::int64_t n, const TreePath& path, std::uint8_t role) {
    StateKey k;
    k.family = Fam::Tree;
    k.role = role;
    k.i0 = n;
    k.path = path;
    return k;
}

StateKey TreeChainModel::leaf(std::int64_t n, const TreePath& path) {
    return node(n, path, role::kLeaf);
}

StateKey TreeChainModel::subtree_root(std::int64_t n, const TreePath& path) {
    return static_cast<std::int64_t>(path.size()) == n ? leaf(n, path) : node(n, path, role::kB0);
}

StateKey TreeChainModel::resolve_exit(std::int64_t n, TreePath path) {
    while (!path.empty()) {
        bool went_right = path.last();
        path = path.popped();
        if (!went_right) return node(n, path, role::kB1);
    }
    return blue(n + 1);
}

std::uint64_t TreeChainModel::traversal_len(std::uint32_t k) {
    if (k >= 58) throw ModelError("tree-chain: traversal length overflows at height " +
                                  std::to_string(k));
    return 7ull * (1ull << k) - 6;
}

Rat TreeChainModel::guard_loss(std::int64_t n) const {
    Rat nn = Rat(static_cast<long>(n));
    return Rat(1) / (nn * nn + 1);
}

Expansion TreeChainModel::expand_guard(const StateKey& s, std::uint8_t slot) const {
    StateKey child = subtree_root(s.i0, s.path.pushed(slot != 0));
    Rat r = guard_loss(s.i0);
    Rat a = Rat(1) - r;
    StateKey red_target;
    bool red_flag = false;
    switch (variant_) {
        case TreeVariant::Annotated:
            red_target = child;
            red_flag = true;
            break;
        case TreeVariant::Divert:
        case TreeVariant::DivertEqual: {
            red_target = s;
            red_target.role = role::kLose;
            red_target.aux = slot;
            red_target.i1 = 0;
            break;
        }
        case TreeVariant::Parity: {
            red_target = s;
            red_target.role = role::kC3;
            red_target.aux = slot;
            break;
        }
    }
    Expansion e;
    e.kind = StateKind::Random;
    e.law = Law({{Edge{child, false}, a}, {Edge{red_target, red_flag}, r}});
    return e;
}

StateKey TreeChainModel::pad_target(const StateKey& pad, std::uint64_t* chain_len) const {
    std::uint8_t owner = static_cast<std::uint8_t>(pad.aux);
    if (owner == role::kBlue) {
        if (pad.i0 >= 58) throw ModelError(name() + ": pad chain too deep " + pad.debug());
        *chain_len = traversal_len(static_cast<std::uint32_t>(pad.i0));
        return blue(pad.i0 + 1);
    }
    std::int64_t k = pad.i0 - static_cast<std::int64_t>(pad.path.size());
    if (k < 1 || k > 58) throw ModelError(name() + ": pad chain too deep " + pad.debug());
    std::uint64_t inner = traversal_len(static_cast<std::uint32_t>(k - 1));
    switch (owner) {
        case role::kB0:
            *chain_len = 2 + inner;
            return node(pad.i0, pad.path, role::kB1);
        case role::kY0:
            *chain_len = 1 + inner;
            return node(pad.i0, pad.path, role::kB1);
        case role::kB1:
            *chain_len = 2 + inner;
            return resolve_exit(pad.i0, pad.path);
        case role::kY1:
            *chain_len = 1 + inner;
            return resolve_exit(pad.i0, pad.path);
        default:
            throw ModelError(name() + ": pad state with bad owner " + pad.debug());
    }
}

Expansion TreeChainModel::expand(const StateKey& s) const {
    if (s.family != Fam::Tree || s.i0 < 1)
        throw ModelError(name() + ": foreign state " + s.debug());
    bool divert = variant_ == TreeVariant::Divert || variant_ == TreeVariant::DivertEqual;
    Expansion e;
    e.kind = StateKind::Random;

    if (s.role == role::kBlue) {
        std::int64_t n = s.i0;
        StateKey enter = subtree_root(n, TreePath());
        if (n == 1) {
            e.law = Law({{Edge{enter, false}, Rat(1)}});
            return e;
        }
        StateKey skip;
        if (variant_ == TreeVariant::DivertEqual) {
            skip = blue(n);
            skip.role = role::kStretch;
            skip.aux = role::kBlue;
            skip.i1 = 1;
        } else {
            skip = blue(n + 1);
        }
        Rat q = rat(1, n);
        e.law = Law({{Edge{enter, false}, q}, {Edge{skip, false}, Rat(1) - q}});
        return e;
    }

    if (s.role == role::kLeaf) {
        if (static_cast<std::int64_t>(s.path.size()) != s.i0)
            throw ModelError(name() + ": malformed leaf " + s.debug());
        e.law = Law({{Edge{resolve_exit(s.i0, s.path), false}, Rat(1)}});
        return e;
    }

    if (s.role == role::kLose) {
        if (!divert) throw ModelError(name() + " has no losing chains: " + s.debug());
        StateKey next = s;
        next.i1 = s.i1 + 1;
        e.law = Law({{Edge{next, false}, Rat(1)}});
        return e;
    }

    if (s.role == role::kStretch) {
        if (variant_ != TreeVariant::DivertEqual)
            throw ModelError(name() + " has no pad states: " + s.debug());
        std::uint64_t chain_len = 0;
        StateKey fin = pad_target(s, &chain_len);
        if (s.i1 < 1 || static_cast<std::uint64_t>(s.i1) > chain_len)
            throw ModelError(name() + ": pad position out of range " + s.debug());
        StateKey next;
        if (static_cast<std::uint64_t>(s.i1) < chain_len) {
            next = s;
            next.i1 = s.i1 + 1;
        } else {
            next = fin;
        }
        e.law = Law({{Edge{next, false}, Rat(1)}});
        return e;
    }

    if (s.role == role::kC3) {
        if (variant_ != TreeVariant::Parity)
            throw ModelError(name() + " has no color-3 states: " + s.debug());
        StateKey child = subtree_root(s.i0, s.path.pushed(s.aux != 0));
        e.law = Law({{Edge{child, false}, Rat(1)}});
        return e;
    }

    if (!internal_role(s.role) || static_cast<std::int64_t>(s.path.size()) >= s.i0)
        throw ModelError(name() + ": malformed state " + s.debug());

    auto padded = [&](std::uint8_t owner, const StateKey& direct) -> StateKey {
        if (variant_ != TreeVariant::DivertEqual) return direct;
        StateKey pad = s;
        pad.role = role::kStretch;
        pad.aux = owner;
        pad.i1 = 1;
        return pad;
    };

    switch (s.role) {
        case role::kB0: {
            StateKey y = node(s.i0, s.path, role::kY0);
            StateKey x = padded(role::kB0, node(s.i0, s.path, role::kB1));
            e.law = Law({{Edge{y, false}, p_}, {Edge{x, false}, Rat(1) - p_}});
            return e;
        }
        case role::kY0: {
            e.kind = StateKind::Controlled;
            StateKey g = node(s.i0, s.path, role::kG0);
            StateKey x = padded(role::kY0, node(s.i0, s.path, role::kB1));
            e.succ = {Edge{g, false}, Edge{x, false}};
            return e;
        }
        case role::kG0:
            return expand_guard(s, 0);
        case role::kB1: {
            StateKey y = node(s.i0, s.path, role::kY1);
            StateKey x = padded(role::kB1, resolve_exit(s.i0, s.path));
            e.law = Law({{Edge{y, false}, p_}, {Edge{x, false}, Rat(1) - p_}});
            return e;
        }
        case role::kY1: {
            e.kind = StateKind::Controlled;
            StateKey g = node(s.i0, s.path, role::kG1);
            StateKey x = padded(role::kY1, resolve_exit(s.i0, s.path));
            e.succ = {Edge{g, false}, Edge{x, false}};
            return e;
        }
        case role::kG1:
            return expand_guard(s, 1);
        default:
            throw ModelError(name() + ": unknown role in " + s.debug());
    }
}

std::uint32_t TreeChainModel::labels(const StateKey& s) const {
    std::uint32_t base = 0;
    switch (s.role) {
        case role::kBlue: base = label::kBlue; break;
        case role::kB0:
        case role::kB1: base = label::kBrown; break;
        case role::kY0:
        case role::kY1: base = label::kYellow; break;
        case role::kG0:
        case role::kG1: base = label::kGuard; break;
        case role::kLeaf: base = label::kGreen | label::kGoal; break;
        case role::kLose: base = label::kLosing; break;
        case role::kStretch: base = 0; break;
        case role::kC3: base = label::kColor3; break;
        default: return 0;
    }
    if (variant_ == TreeVariant::Parity) {
        if (s.role == role::kLeaf)
            base |= label::kColor2;
        else if (s.role != role::kC3)
            base |= label::kColor1;
    }
    return base;
}

std::optional<std::uint64_t> TreeChainModel::depth_of(const StateKey& s) const {
    std::uint64_t d = variant_ == TreeVariant::Parity ? 1 : 0;
    std::int64_t n = s.i0;
    if (n < 1 || n > 56) return std::nullopt;  // 7 * 2^57 overflows the chain sum
    if (s.role == role::kBlue) return depth_blue(n, d);
    if (s.role == role::kStretch && s.aux == role::kBlue)
        return depth_blue(n, d) + static_cast<std::uint64_t>(s.i1);
    if (s.path.size() > static_cast<std::uint32_t>(n)) return std::nullopt;
    if (s.path.size() == static_cast<std::uint32_t>(n) && s.role != role::kLeaf)
        return std::nullopt;

    std::uint64_t base = depth_blue(n, d) + 1;
    for (std::uint32_t dep = 0; dep < s.path.size(); ++dep) {
        std::uint32_t k_here = static_cast<std::uint32_t>(n) - dep;
        base += s.path.bit(dep) ? (6 + 2 * d) + lv(k_here - 1, d) : (3 + d);
    }
    if (s.role == role::kLeaf) return base;

    std::uint32_t k = static_cast<std::uint32_t>(n) - s.path.size();
    std::uint64_t inner = lv(k - 1, d);
    std::uint64_t off = 0;
    std::uint8_t anchor;
    if (s.role == role::kStretch)
        anchor = static_cast<std::uint8_t>(s.aux);
    else if (s.role == role::kLose || s.role == role::kC3)
        anchor = s.aux ? role::kG1 : role::kG0;
    else
        anchor = s.role;
    switch (anchor) {
        case role::kB0: off = 0; break;
        case role::kY0: off = 1; break;
        case role::kG0: off = 2; break;
        case role::kB1: off = 3 + d + inner; break;
        case role::kY1: off = 4 + d + inner; break;
        case role::kG1: off = 5 + d + inner; break;
        default: return std::nullopt;
    }
    base += off;
    if (s.role == role::kStretch) return base + static_cast<std::uint64_t>(s.i1);
    if (s.role == role::kLose) return base + 1 + static_cast<std::uint64_t>(s.i1);
    if (s.role == role::kC3) return base + 1;
    return base;
}

std::optional<std::int64_t> TreeChainModel::fixed_visit_step(const StateKey& s) const {
    if (variant_ != TreeVariant::DivertEqual) return std::nullopt;
    auto dep = depth_of(s);
    if (!dep || *dep > static_cast<std::uint64_t>(INT64_MAX)) return std::nullopt;
    return static_cast<std::int64_t>(*dep);
}

std::string TreeChainModel::render(const StateKey& s) const {
    if (s.role == role::kBlue) return "treechain.blue." + std::to_string(s.i0);
    if (s.role == role::kStretch && s.aux == role::kBlue)
        return "treechain.blue." + std::to_string(s.i0) + ".pad." + std::to_string(s.i1);
    std::string out = "treechain.T." + std::to_string(s.i0);
    std::string dirs;
    dirs.reserve(s.path.size());
    for (TreePath q = s.path; !q.empty(); q = q.popped()) dirs.push_back(q.last() ? 'R' : 'L');
    for (auto it = dirs.rbegin(); it != dirs.rend(); ++it) {
        out += '.';
        out += *it;
    }
    if (s.role == role::kLeaf) return out + ".leaf";
    if (s.role == role::kLose)
        return out + (s.aux ? ".g1.lose." : ".g0.lose.") + std::to_string(s.i1);
    if (s.role == role::kC3) return out + (s.aux ? ".g1.c3" : ".g0.c3");
    if (s.role == role::kStretch) {
        const char* owner = role_token(static_cast<std::uint8_t>(s.aux));
        return out + "." + (owner ? owner : "?") + ".pad." + std::to_string(s.i1);
    }
    const char* tok = role_token(s.role);
    return out + "." + (tok ? tok : "?");
}

std::optional<StateKey> TreeChainModel::parse(const std::string& t) const {
    std::vector<std::string_view> parts;
    std::string_view sv(t);
    while (!sv.empty()) {
        auto pos = sv.find('.');
        parts.push_back(sv.substr(0, pos));
        if (pos == std::string_view::npos) break;
        sv.remove_prefix(pos + 1);
    }
    if (parts.size() < 3 || parts[0] != "treechain") return std::nullopt;

    if (parts[1] == "blue") {
        auto n = parse_num(parts[2]);
        if (!n || *n < 1) return std::nullopt;
        if (parts.size() == 3) return blue(*n);
        if (parts.size() == 5 && parts[3] == "pad" && variant_ == TreeVariant::DivertEqual) {
            auto j = parse_num(parts[4]);
            if (!j || *j < 1 || *n >= 58 ||
                static_cast<std::uint64_t>(*j) > traversal_len(static_cast<std::uint32_t>(*n)))
                return std::nullopt;
            StateKey k = blue(*n);
            k.role = role::kStretch;
            k.aux = role::kBlue;
            k.i1 = *j;
            return k;
        }
        return std::nullopt;
    }

    if (parts[1] != "T") return std::nullopt;
    auto n = parse_num(parts[2]);
    if (!n || *n < 1 || *n > 62) return std::nullopt;
    TreePath path;
    std::size_t i = 3;
    while (i < parts.size() && (parts[i] == "L" || parts[i] == "R")) {
        if (static_cast<std::int64_t>(path.size()) >= *n) return std::nullopt;
        path = path.pushed(parts[i] == "R");
        ++i;
    }
    if (i >= parts.size()) return std::nullopt;
    std::string_view tok = parts[i++];

    if (tok == "leaf")
        return (static_cast<std::int64_t>(path.size()) == *n && i == parts.size())
                   ? std::optional(leaf(*n, path))
                   : std::nullopt;
    if (static_cast<std::int64_t>(path.size()) >= *n) return std::nullopt;

    std::uint8_t r = role::kNone;
    if (tok == "b0") r = role::kB0;
    else if (tok == "y0") r = role::kY0;
    else if (tok == "g0") r = role::kG0;
    else if (tok == "b1") r = role::kB1;
    else if (tok == "y1") r = role::kY1;
    else if (tok == "g1") r = role::kG1;
    else return std::nullopt;

    StateKey k = node(*n, path, r);
    if (i == parts.size()) return k;

    bool divert = variant_ == TreeVariant::Divert || variant_ == TreeVariant::DivertEqual;
    if (parts[i] == "lose" && i + 1 == parts.size() - 1 && divert &&
        (r == role::kG0 || r == role::kG1)) {
        auto j = parse_num(parts[i + 1]);
        if (!j) return std::nullopt;
        k.role = role::kLose;
        k.aux = (r == role::kG1) ? 1 : 0;
        k.i1 = *j;
        return k;
    }
    if (parts[i] == "c3" && i == parts.size() - 1 && variant_ == TreeVariant::Parity &&
        (r == role::kG0 || r == role::kG1)) {
        k.role = role::kC3;
        k.aux = (r == role::kG1) ? 1 : 0;
        return k;
    }
    if (parts[i] == "pad" && i + 1 == parts.size() - 1 && variant_ == TreeVariant::DivertEqual &&
        (r == role::kB0 || r == role::kY0 || r == role::kB1 || r == role::kY1)) {
        auto j = parse_num(parts[i + 1]);
        if (!j || *j < 1) return std::nullopt;
        k.role = role::kStretch;
        k.aux = r;
        k.i1 = *j;
        std::uint64_t chain_len = 0;
        try {
            pad_target(k, &chain_len);
        } catch (const ModelError&) {
            return std::nullopt;
        }
        if (static_cast<std::uint64_t>(*j) > chain_len) return std::nullopt;
        return k;
    }
    return std::nullopt;
}

bool TreeChainModel::fast_succ(const StateKey& s, Edge* out, std::size_t* n) const {
    if (s.family != Fam::Tree || (s.role != role::kY0 && s.role != role::kY1) || s.i0 < 1 ||
        static_cast<std::int64_t>(s.path.size()) >= s.i0)
        return false;
    bool first = s.role == role::kY0;
    out[0] = Edge{node(s.i0, s.path, first ? role::kG0 : role::kG1), false};
    StateKey up;
    if (variant_ == TreeVariant::DivertEqual) {
        up = s;
        up.role = role::kStretch;
        up.aux = s.role;
        up.i1 = 1;
    } else {
        up = first ? node(s.i0, s.path, role::kB1) : resolve_exit(s.i0, s.path);
    }
    out[1] = Edge{up, false};
    *n = 2;
    return true;
}

bool TreeChainModel::fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const {
    switch (s.role) {
        case role::kBlue: {
            std::int64_t n = s.i0;
            StateKey enter = subtree_root(n, TreePath());
            if (n == 1) {
                out = Edge{enter, false};
                return true;
            }
            std::uint64_t t =
                static_cast<std::uint64_t>((static_cast<unsigned __int128>(1) << 64) /
                                           static_cast<std::uint64_t>(n));
            if (r < t) {
                out = Edge{enter, false};
            } else if (variant_ == TreeVariant::DivertEqual) {
                StateKey pad = blue(n);
                pad.role = role::kStretch;
                pad.aux = role::kBlue;
                pad.i1 = 1;
                out = Edge{pad, false};
            } else {
                out = Edge{blue(n + 1), false};
            }
            return true;
        }
        case role::kB0:
        case role::kB1: {
            bool down = r < p_threshold_;
            StateKey y = node(s.i0, s.path, s.role == role::kB0 ? role::kY0 : role::kY1);
            if (down) {
                out = Edge{y, false};
                return true;
            }
            StateKey direct = s.role == role::kB0 ? node(s.i0, s.path, role::kB1)
                                                  : resolve_exit(s.i0, s.path);
            if (variant_ == TreeVariant::DivertEqual) {
                StateKey pad = s;
                pad.role = role::kStretch;
                pad.aux = s.role;
                pad.i1 = 1;
                out = Edge{pad, false};
            } else {
                out = Edge{direct, false};
            }
            return true;
        }
        case role::kG0:
        case role::kG1: {
            if (s.i0 >= (1ll << 31)) return false;
            std::uint64_t nn = static_cast<std::uint64_t>(s.i0) * static_cast<std::uint64_t>(s.i0);
            std::uint64_t tb = static_cast<std::uint64_t>(
                (static_cast<unsigned __int128>(nn) << 64) / (nn + 1));
            std::uint8_t slot = s.role == role::kG1 ? 1 : 0;
            StateKey child = subtree_root(s.i0, s.path.pushed(slot != 0));
            if (r < tb) {
                out = Edge{child, false};
                return true;
            }
            switch (variant_) {
                case TreeVariant::Annotated: out = Edge{child, true}; break;
                case TreeVariant::Divert:
                case TreeVariant::DivertEqual: {
                    StateKey l = s;
                    l.role = role::kLose;
                    l.aux = slot;
                    l.i1 = 0;
                    out = Edge{l, false};
                    break;
                }
                case TreeVariant::Parity: {
                    StateKey c = s;
                    c.role = role::kC3;
                    c.aux = slot;
                    out = Edge{c, false};
                    break;
                }
            }
            return true;
        }
        case role::kLeaf:
            out = Edge{resolve_exit(s.i0, s.path), false};
            return true;
        case role::kLose: {
            StateKey next = s;
            next.i1 = s.i1 + 1;
            out = Edge{next, false};
            return true;
        }
        case role::kStretch: {
            std::uint64_t chain_len = 0;
            StateKey fin = pad_target(s, &chain_len);
            if (static_cast<std::uint64_t>(s.i1) < chain_len) {
                StateKey next = s;
                next.i1 = s.i1 + 1;
                out = Edge{next, false};
            } else {
                out = Edge{fin, false};
            }
            return true;
        }
        case role::kC3: {
            out = Edge{subtree_root(s.i0, s.path.pushed(s.aux != 0)), false};
            return true;
        }
        default:
            return false;
    }
}

// ------------------------------------------------------------------ MR grid

const Rat& MrParamGrid::at(const TreePath& path, std::uint8_t slot, std::uint32_t k) const {
    switch (kind) {
        case Kind::Uniform:
            return uniform;
        case Kind::PerLevel: {
            if (k < 1 || static_cast<std::size_t>(k) > per_level.size())
                throw ModelError("mr grid: no entry for height " + std::to_string(k));
            return per_level[k - 1][slot];
        }
        case Kind::PerNode: {
            if (path.size() > 64)
                throw ModelError("mr grid: per-node entries only address the first 64 levels");
            auto it = per_node.find(
                NodeSlot{path.low_word(), static_cast<std::uint8_t>(path.size()), slot});
            if (it == per_node.end())
                throw ModelError("mr grid: no entry for node at path length " +
                                 std::to_string(path.size()));
            return it->second;
        }
    }
    throw ModelError("mr grid: bad kind");
}

void MrParamGrid::validate() const {
    auto check = [](const Rat& x) {
        if (x < 0 || x > 1) throw ModelError("mr grid: value " + rat_string(x) + " outside [0,1]");
    };
    check(uniform);
    for (const auto& lv2 : per_level) {
        check(lv2[0]);
        check(lv2[1]);
    }
    for (const auto& [node, x] : per_node) check(x);
}

}  // namespace cmdp
