#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmdp/key.hpp"
#include "cmdp/rational.hpp"

namespace cmdp {

enum class StateKind : std::uint8_t { Controlled, Random };

struct Edge {
    StateKey to;
    bool red = false;

    friend bool operator==(const Edge& a, const Edge& b) { return a.to == b.to && a.red == b.red; }
};

struct LawEntry {
    Edge edge;
    Rat w;
};

// Finite probability law over edges: strictly positive weights, pairwise
// distinct (target, red) pairs, weights summing to exactly 1.
class Law {
  public:
    Law() = default;
    explicit Law(std::vector<LawEntry> entries, bool validate = true);

    const std::vector<LawEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    const LawEntry& operator[](std::size_t i) const { return entries_[i]; }

    // Inverse-CDF sample from 64 uniform bits. Thresholds are floor(cum * 2^64),
    // so each entry's probability is exact to within 2^-64.
    const LawEntry& sample(std::uint64_t r) const;

  private:
    std::vector<LawEntry> entries_;
};

// Lazily enumerated infinite branching at one state.
struct Branches {
    std::function<Edge(std::uint64_t)> at;                 // branch i = 0, 1, 2, ...
    std::function<Rat(std::uint64_t)> weight;              // random states only
    std::function<std::optional<std::uint64_t>(const StateKey&)> index_of;
};

struct Expansion {
    StateKind kind = StateKind::Random;
    std::vector<Edge> succ;       // finite controlled
    Law law;                      // finite random
    std::optional<Branches> inf;  // set => infinitely branching state

    bool finite() const { return !inf.has_value(); }
    std::size_t out_degree_finite() const {
        return kind == StateKind::Controlled ? succ.size() : law.size();
    }
};

// A countable MDP presented as a pure successor generator over structured
// keys. expand() must be deterministic and side-effect free; repeated calls
// agree. The *_claim accessors are declared structural facts about the whole
// model (they are spot-checked by tests, not enforced per call).
class Model {
  public:
    virtual ~Model() = default;

    virtual std::string name() const = 0;
    virtual Expansion expand(const StateKey& s) const = 0;
    virtual std::uint32_t labels(const StateKey& s) const = 0;
    virtual std::vector<StateKey> initial() const = 0;

    virtual bool finitely_branching() const = 0;
    virtual bool acyclic_claim() const = 0;
    virtual bool depth_finite_claim() const = 0;

    // Set when every path from an initial state to s has the same length
    // (true for every step-counter encoding). Enables exact zero return
    // bounds in schedule selection.
    virtual std::optional<std::int64_t> fixed_visit_step(const StateKey&) const {
        return std::nullopt;
    }
    // Longest path from an initial state to s, for depth-finite models that
    // can answer structurally.
    virtual std::optional<std::uint64_t> depth_of(const StateKey&) const { return std::nullopt; }

    virtual std::string render(const StateKey& s) const = 0;
    virtual std::optional<StateKey> parse(const std::string& text) const = 0;

    // Optional integer-only sampling fast path for hot Monte Carlo loops:
    // given 64 uniform bits, emit the realized edge of a random state.
    // Must agree with expand()'s law up to the documented 2^-64 quantization.
    virtual bool fast_sample(const StateKey&, std::uint64_t, Edge&) const { return false; }

    // Optional allocation-free successor enumeration for controlled states
    // with at most kFastSucc successors. Must agree with expand().
    static constexpr std::size_t kFastSucc = 2;
    virtual bool fast_succ(const StateKey&, Edge*, std::size_t*) const { return false; }
};

using ModelPtr = std::shared_ptr<const Model>;

// Thread-safe expansion memo for callers that repeatedly expand a small set.
class MemoModel final : public Model {
  public:
    explicit MemoModel(ModelPtr inner) : inner_(std::move(inner)) {}

    std::string name() const override { return inner_->name(); }
    Expansion expand(const StateKey& s) const override;
    std::uint32_t labels(const StateKey& s) const override { return inner_->labels(s); }
    std::vector<StateKey> initial() const override { return inner_->initial(); }
    bool finitely_branching() const override { return inner_->finitely_branching(); }
    bool acyclic_claim() const override { return inner_->acyclic_claim(); }
    bool depth_finite_claim() const override { return inner_->depth_finite_claim(); }
    std::optional<std::int64_t> fixed_visit_step(const StateKey& s) const override {
        return inner_->fixed_visit_step(s);
    }
    std::optional<std::uint64_t> depth_of(const StateKey& s) const override {
        return inner_->depth_of(s);
    }
    std::string render(const StateKey& s) const override { return inner_->render(s); }
    std::optional<StateKey> parse(const std::string& t) const override { return inner_->parse(t); }
    bool fast_sample(const StateKey& s, std::uint64_t r, Edge& e) const override {
        return inner_->fast_sample(s, r, e);
    }
    bool fast_succ(const StateKey& s, Edge* out, std::size_t* n) const override {
        return inner_->fast_succ(s, out, n);
    }

  private:
    ModelPtr inner_;
    mutable std::shared_mutex mu_;
    mutable std::unordered_map<StateKey, Expansion> memo_;
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cmdp
