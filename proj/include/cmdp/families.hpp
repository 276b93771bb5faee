#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmdp/model.hpp"

#include "json.hpp"

namespace cmdp {

// ---------------------------------------------------------------------------
// Escalator family (one controlled spine with deadly shortcuts back to the
// goal). Spine states s_i are controlled; dive states r_i return to s_0 with
// probability 1 - 2^-i and fall into the losing sink otherwise.
// `infinite_choice` switches between the spine presentation (s_i -> s_{i+1})
// and the flat one (s_0 with infinitely many dive successors).
// ---------------------------------------------------------------------------
class EscalatorModel final : public Model {
  public:
    explicit EscalatorModel(bool infinite_choice) : flat_(infinite_choice) {}

    std::string name() const override { return flat_ ? "fig1b" : "fig1a"; }
    Expansion expand(const StateKey& s) const override;
    std::uint32_t labels(const StateKey& s) const override;
    std::vector<StateKey> initial() const override { return {spine(0)}; }
    bool finitely_branching() const override { return !flat_; }
    bool acyclic_claim() const override { return false; }
    bool depth_finite_claim() const override { return false; }
    std::string render(const StateKey& s) const override;
    std::optional<StateKey> parse(const std::string& t) const override;
    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const override;
    bool fast_succ(const StateKey& s, Edge* out, std::size_t* n) const override;

    static StateKey spine(std::int64_t i);
    static StateKey dive(std::int64_t i);
    static StateKey sink();

  private:
    bool flat_;
};

// ---------------------------------------------------------------------------
// Hill family: one controlled state s_0 with infinitely many dive states r_i
// (i >= 1); r_i reaches the goal g_i with probability 2^-i, the losing sink
// bottom_i with probability 3^-i, and returns to s_0 otherwise.
// ---------------------------------------------------------------------------
class HillModel final : public Model {
  public:
    std::string name() const override { return "fig3"; }
    Expansion expand(const StateKey& s) const override;
    std::uint32_t labels(const StateKey& s) const override;
    std::vector<StateKey> initial() const override { return {s0()}; }
    bool finitely_branching() const override { return false; }
    bool acyclic_claim() const override { return false; }
    bool depth_finite_claim() const override { return false; }
    std::string render(const StateKey& s) const override;
    std::optional<StateKey> parse(const std::string& t) const override;
    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const override;

    static StateKey s0();
    static StateKey dive(std::int64_t i);
    static StateKey goal(std::int64_t i);
    static StateKey bottom(std::int64_t i);
};

// ---------------------------------------------------------------------------
// Tree chain. An infinite chain of complete binary gadget trees T^1, T^2, ...
// linked by blue entry states; tree T^n is entered with probability 1/n and
// its guard states lose with probability 1/(n^2+1) per crossing. Yellow states
// are the only controlled ones; green leaves are the goal.
//
// Variants:
//   Annotated    - guards have parallel edges to the subtree root, the losing
//                  one carries the red flag (the run continues either way)
//   Divert       - red edges rerouted to fresh infinite losing chains
//   DivertEqual  - Divert plus depth equalization: every shortcut edge is
//                  stretched by a pad chain so that all paths into a state
//                  share one length
//   Parity       - Annotated with colors: leaves color 2, everything else
//                  color 1, and each red edge passes through a fresh color-3
//                  state
// ---------------------------------------------------------------------------
enum class TreeVariant : std::uint8_t { Annotated, Divert, DivertEqual, Parity };

class TreeChainModel final : public Model {
  public:
    explicit TreeChainModel(Rat p, TreeVariant v);

    std::string name() const override;
    Expansion expand(const StateKey& s) const override;
    std::uint32_t labels(const StateKey& s) const override;
    std::vector<StateKey> initial() const override { return {blue(1)}; }
    bool finitely_branching() const override { return true; }
    bool acyclic_claim() const override { return true; }
    bool depth_finite_claim() const override { return true; }
    std::optional<std::int64_t> fixed_visit_step(const StateKey& s) const override;
    std::optional<std::uint64_t> depth_of(const StateKey& s) const override;
    std::string render(const StateKey& s) const override;
    std::optional<StateKey> parse(const std::string& t) const override;
    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& out) const override;
    bool fast_succ(const StateKey& s, Edge* out, std::size_t* n) const override;

    const Rat& p() const { return p_; }
    TreeVariant variant() const { return variant_; }

    static StateKey blue(std::int64_t n);
    static StateKey node(std::int64_t n, const TreePath& path, std::uint8_t role);
    static StateKey leaf(std::int64_t n, const TreePath& path);
    // Root of the subtree addressed by `path` inside T^n.
    static StateKey subtree_root(std::int64_t n, const TreePath& path);
    // Where a finished traversal of the subtree at `path` continues.
    static StateKey resolve_exit(std::int64_t n, TreePath path);
    // Longest traversal length from a height-k subtree root to its exit.
    static std::uint64_t traversal_len(std::uint32_t k);

    Rat guard_loss(std::int64_t n) const;  // 1/(n^2+1)

  private:
    Expansion expand_guard(const StateKey& s, std::uint8_t slot) const;
    StateKey pad_target(const StateKey& pad, std::uint64_t* chain_len) const;

    Rat p_;
    TreeVariant variant_;
    std::uint64_t p_threshold_;  // floor(p * 2^64) for the sampling fast path
};

// ---------------------------------------------------------------------------
// Explicit finite MDP loaded from JSON (same schema as exported slices).
// States without outgoing edges are closed with a self-loop.
// ---------------------------------------------------------------------------
class JsonModel final : public Model {
  public:
    static std::shared_ptr<JsonModel> from_json(const nlohmann::json& j);

    std::string name() const override { return "json:" + tag_; }
    Expansion expand(const StateKey& s) const override;
    std::uint32_t labels(const StateKey& s) const override;
    std::vector<StateKey> initial() const override;
    bool finitely_branching() const override { return true; }
    bool acyclic_claim() const override { return acyclic_; }
    bool depth_finite_claim() const override { return acyclic_; }
    std::optional<std::int64_t> fixed_visit_step(const StateKey& s) const override;
    std::optional<std::uint64_t> depth_of(const StateKey& s) const override;
    std::string render(const StateKey& s) const override;
    std::optional<StateKey> parse(const std::string& t) const override;

    std::size_t state_count() const { return names_.size(); }
    StateKey key_of(std::uint32_t idx) const;
    const std::vector<StateKey>& goal_states() const { return goals_; }

  private:
    std::string tag_;
    std::vector<std::string> names_;
    std::vector<StateKind> kinds_;
    std::vector<std::uint32_t> labels_;
    std::vector<std::vector<LawEntry>> out_;  // weights; controlled rows carry w = 1
    std::vector<std::uint32_t> initial_;
    std::vector<StateKey> goals_;
    std::unordered_map<std::string, std::uint32_t> by_name_;
    bool acyclic_ = false;
    std::vector<std::int64_t> fixed_step_;    // -1 when paths disagree
    std::vector<std::uint64_t> depth_;        // valid when acyclic_
};

// Named family construction used by the CLI: fig1a | fig1b | fig3 |
// tree-chain[:variant=...,p=a/b] | json (params carry the document).
ModelPtr build_family(const std::string& name, const nlohmann::json& params);

// ---------------------------------------------------------------------------
// Randomized-memoryless parameter grid for the tree family: probability of
// moving down (entering the guarded subtree) at each yellow state.
// ---------------------------------------------------------------------------
struct MrParamGrid {
    enum class Kind { Uniform, PerLevel, PerNode } kind = Kind::Uniform;
    Rat uniform = Rat(1);
    // per level: index by subtree height k (1-based), values for slots Y0, Y1
    std::vector<std::array<Rat, 2>> per_level;
    struct NodeSlot {
        std::uint64_t path;
        std::uint8_t len;
        std::uint8_t slot;
        bool operator==(const NodeSlot&) const = default;
    };
    struct NodeSlotHash {
        std::size_t operator()(const NodeSlot& n) const {
            return n.path * 0x9e3779b97f4a7c15ULL ^ (std::uint64_t(n.len) << 8) ^ n.slot;
        }
    };
    std::unordered_map<NodeSlot, Rat, NodeSlotHash> per_node;

    static MrParamGrid uniform_grid(Rat x) { return {Kind::Uniform, std::move(x), {}, {}}; }

    // Down-move probability at the yellow state `slot` of the subtree rooted
    // at `path` whose height is k.  Per-node grids address nodes by packed
    // word and only cover paths of at most 64 levels.
    const Rat& at(const TreePath& path, std::uint8_t slot, std::uint32_t k) const;
    void validate() const;  // all values within [0, 1]
};

}  // namespace cmdp
