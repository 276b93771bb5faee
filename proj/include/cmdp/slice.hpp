#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmdp/model.hpp"

#include "json.hpp"

namespace cmdp {

// Finite window of a countable MDP: everything reachable from a generating
// set X in at most k transitions. Interior states carry their full expansion;
// boundary states (exactly distance k, or deliberately unexpanded) carry none.
class FiniteSlice {
  public:
    struct Edge {
        std::uint32_t to;
        bool red;
        Rat w;  // 1 for controlled edges
    };
    struct State {
        StateKey key;
        StateKind kind;
        std::uint32_t labels;
        bool boundary;
        std::vector<Edge> out;
    };

    std::vector<State> states;
    std::vector<std::uint32_t> generators;  // indices of X
    std::uint64_t horizon = 0;
    std::string model_name;

    std::optional<std::uint32_t> index_of(const StateKey& k) const {
        auto it = index_.find(k);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    bool contains(const StateKey& k) const { return index_.contains(k); }
    std::size_t size() const { return states.size(); }

    // Topological order over all states (boundary states are sinks).
    // Empty optional when the slice has a cycle.
    const std::optional<std::vector<std::uint32_t>>& topo_order() const { return topo_; }
    bool acyclic() const { return topo_.has_value(); }

    // Longest path from a generator, per state (requires acyclicity).
    std::vector<std::uint64_t> longest_from_generators() const;

    void finalize();  // builds index + topo order; called by builders

  private:
    std::unordered_map<StateKey, std::uint32_t> index_;
    std::optional<std::vector<std::uint32_t>> topo_;
};

// BFS window of radius k around X. Throws ModelError with a definitization
// hint if an infinitely branching state must be expanded. States in `stop`
// are kept as boundary sinks and never expanded, whatever their distance.
FiniteSlice truncate_model(const Model& m, const std::vector<StateKey>& X, std::uint64_t k,
                           const std::vector<StateKey>& stop = {});

// State set of the k-ball around X (truncate without keeping edges).
std::vector<StateKey> bubble(const Model& m, const std::vector<StateKey>& X, std::uint64_t k);

// Longest path from the model's initial states to s; requires a depth-finite
// model that answers structurally.
std::uint64_t depth(const Model& m, const StateKey& s);

nlohmann::json slice_to_json(const FiniteSlice& s, const Model& m);

std::vector<std::string> label_names(std::uint32_t mask);
std::uint32_t labels_from_names(const std::vector<std::string>& names);

}  // namespace cmdp
