#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <tuple>

namespace cmdp {

enum class Fam : std::uint8_t { None = 0, Fig1a, Fig1b, Fig3, Tree, Json };

// Role tags. Families interpret their own subset.
namespace role {
inline constexpr std::uint8_t kNone = 0;
// fig1a / fig1b / fig3
inline constexpr std::uint8_t kSpine = 1;   // s_i (i0 = i); fig1b/fig3 use i0 = 0 only
inline constexpr std::uint8_t kDive = 2;    // r_i
inline constexpr std::uint8_t kSink = 3;    // bottom; fig3: bottom_i
inline constexpr std::uint8_t kGoal = 4;    // fig3: g_i
// tree chain
inline constexpr std::uint8_t kBlue = 10;
inline constexpr std::uint8_t kB0 = 11;
inline constexpr std::uint8_t kY0 = 12;
inline constexpr std::uint8_t kG0 = 13;     // guard before left child
inline constexpr std::uint8_t kB1 = 14;
inline constexpr std::uint8_t kY1 = 15;
inline constexpr std::uint8_t kG1 = 16;     // guard before right child
inline constexpr std::uint8_t kLeaf = 17;
inline constexpr std::uint8_t kLose = 18;    // diverted-red losing chain (aux = guard slot, i1 = pos)
inline constexpr std::uint8_t kStretch = 19; // depth-equalizing chain (aux = owner role, i1 = pos)
inline constexpr std::uint8_t kC3 = 20;      // parity variant pass-through (aux = guard slot)
// json family: i0 = state index, role unused
}  // namespace role

namespace label {
inline constexpr std::uint32_t kGoal = 1u << 0;
inline constexpr std::uint32_t kBlue = 1u << 1;
inline constexpr std::uint32_t kYellow = 1u << 2;
inline constexpr std::uint32_t kBrown = 1u << 3;
inline constexpr std::uint32_t kGreen = 1u << 4;
inline constexpr std::uint32_t kGuard = 1u << 5;     // red state (guard)
inline constexpr std::uint32_t kLosing = 1u << 6;    // losing sink / losing chain
inline constexpr std::uint32_t kColor1 = 1u << 7;    // parity colors
inline constexpr std::uint32_t kColor2 = 1u << 8;
inline constexpr std::uint32_t kColor3 = 1u << 9;
}  // namespace label

// Unbounded binary tree path with value semantics.  Level d stores the
// direction bit chosen at depth d (0 = first branch below the subtree root).
// The deepest up-to-64 levels live inline in a word; older levels are frozen
// into immutable shared 64-level blocks, so copies are O(1), push/pop are
// O(1), and paths never wrap however deep a walk goes.  While size() <= 64
// the whole path is the inline word and no allocation ever happens.
class TreePath {
  public:
    TreePath() = default;

    // Packed-word constructor for paths of at most 64 levels (bit d = level d).
    static TreePath from_word(std::uint64_t bits, std::uint32_t len) {
        TreePath r;
        r.top_ = len < 64 ? bits & ((1ULL << len) - 1) : bits;
        r.len_ = len;
        return r;
    }

    std::uint32_t size() const { return len_; }
    bool empty() const { return len_ == 0; }

    // Direction taken at level d; d < size().
    bool bit(std::uint32_t d) const {
        std::uint32_t base = 64 * full_count();
        if (d >= base) return (top_ >> (d - base)) & 1u;
        const Block* b = full_.get();
        for (std::uint32_t i = full_count() - 1 - d / 64; i > 0; --i) b = b->below.get();
        return (b->bits >> (d % 64)) & 1u;
    }

    // Direction at the deepest level; size() > 0.
    bool last() const { return (top_ >> ((len_ - 1) % 64)) & 1u; }

    TreePath pushed(bool right) const {
        TreePath r = *this;
        if (len_ != 0 && len_ % 64 == 0) {
            r.full_ = std::make_shared<const Block>(Block{top_, r.full_});
            r.top_ = 0;
        }
        if (right) r.top_ |= 1ULL << (len_ % 64);
        ++r.len_;
        return r;
    }

    // Path with the deepest level removed; size() > 0.
    TreePath popped() const {
        TreePath r = *this;
        --r.len_;
        r.top_ &= ~(1ULL << (r.len_ % 64));
        if (r.len_ != 0 && r.len_ % 64 == 0) {
            r.top_ = r.full_->bits;
            r.full_ = r.full_->below;
        }
        return r;
    }

    // The inline word; equals the whole packed path iff size() <= 64.
    std::uint64_t low_word() const { return top_; }

    friend bool operator==(const TreePath& a, const TreePath& b) {
        if (a.len_ != b.len_ || a.top_ != b.top_) return false;
        const Block* x = a.full_.get();
        const Block* y = b.full_.get();
        while (x != y) {
            if (x->bits != y->bits) return false;
            x = x->below.get();
            y = y->below.get();
        }
        return true;
    }
    friend bool operator!=(const TreePath& a, const TreePath& b) { return !(a == b); }

    // Canonical total order (length first, then bits deepest-first); any
    // deterministic order works for tie-breaking.
    friend bool operator<(const TreePath& a, const TreePath& b) {
        if (a.len_ != b.len_) return a.len_ < b.len_;
        if (a.top_ != b.top_) return a.top_ < b.top_;
        const Block* x = a.full_.get();
        const Block* y = b.full_.get();
        while (x != y) {
            if (x->bits != y->bits) return x->bits < y->bits;
            x = x->below.get();
            y = y->below.get();
        }
        return false;
    }

    std::uint64_t hash() const {
        std::uint64_t h = top_ ^ (0x9e3779b97f4a7c15ULL * (len_ + 1));
        for (const Block* b = full_.get(); b; b = b->below.get()) {
            h ^= b->bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0xff51afd7ed558ccdULL;
        }
        return h;
    }

  private:
    struct Block {
        std::uint64_t bits;
        std::shared_ptr<const Block> below;
    };
    std::uint32_t full_count() const { return len_ == 0 ? 0 : (len_ - 1) / 64; }

    std::uint64_t top_ = 0;              // bits of levels [64 * full_count(), size())
    std::uint32_t len_ = 0;
    std::shared_ptr<const Block> full_;  // frozen 64-level blocks, deepest first
};

// One state of a (possibly infinite) MDP: a structured key, never a pointer.
// Cheap to copy, hash, and order; copying only touches an atomic refcount for
// tree paths deeper than 64 levels.  Wrapper models reuse fields: the
// step-counter encoding stores the counter in `step` (-1 = unencoded); the
// branching gadget marks fresh chain states with kGadgetFlag and stores the
// branch position in `i1`.
struct StateKey {
    Fam family = Fam::None;
    std::uint8_t role = role::kNone;
    std::uint8_t flags = 0;
    std::uint32_t aux = 0;
    std::int64_t i0 = 0;
    std::int64_t i1 = 0;
    std::int64_t step = -1;
    TreePath path;

    static constexpr std::uint8_t kGadgetFlag = 1;

    friend bool operator==(const StateKey& a, const StateKey& b) {
        return a.family == b.family && a.role == b.role && a.flags == b.flags &&
               a.aux == b.aux && a.i0 == b.i0 && a.i1 == b.i1 && a.step == b.step &&
               a.path == b.path;
    }
    friend bool operator!=(const StateKey& a, const StateKey& b) { return !(a == b); }

    // Canonical total order; used for deterministic tie-breaking.
    friend bool operator<(const StateKey& a, const StateKey& b) {
        auto head = [](const StateKey& k) {
            return std::tuple(static_cast<int>(k.family), k.role, k.i0, k.aux, k.i1, k.step,
                              k.flags);
        };
        auto ha = head(a);
        auto hb = head(b);
        if (ha != hb) return ha < hb;
        return a.path < b.path;
    }

    // Raw field dump for error messages; models render their own states.
    std::string debug() const {
        std::string s = "key(fam=" + std::to_string(static_cast<int>(family)) +
                        " role=" + std::to_string(role) + " i0=" + std::to_string(i0);
        if (i1) s += " i1=" + std::to_string(i1);
        if (aux) s += " aux=" + std::to_string(aux);
        if (!path.empty()) {
            s += " path=";
            s += path.size() <= 64 ? std::to_string(path.low_word()) : std::string("(deep)");
            s += "/" + std::to_string(path.size());
        }
        if (step >= 0) s += " step=" + std::to_string(step);
        if (flags) s += " flags=" + std::to_string(flags);
        return s + ")";
    }

    std::uint64_t hash() const {
        auto mix = [](std::uint64_t h, std::uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            return h * 0xff51afd7ed558ccdULL;
        };
        std::uint64_t h = (static_cast<std::uint64_t>(family) << 24) ^
                          (static_cast<std::uint64_t>(role) << 16) ^
                          (static_cast<std::uint64_t>(flags) << 8);
        h = mix(h, aux);
        h = mix(h, static_cast<std::uint64_t>(i0));
        h = mix(h, static_cast<std::uint64_t>(i1));
        h = mix(h, static_cast<std::uint64_t>(step));
        h = mix(h, path.hash());
        return h;
    }
};

struct StateKeyHash {
    std::size_t operator()(const StateKey& k) const { return k.hash(); }
};

}  // namespace cmdp

template <>
struct std::hash<cmdp::StateKey> {
    std::size_t operator()(const cmdp::StateKey& k) const { return k.hash(); }
};
