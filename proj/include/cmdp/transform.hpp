#pragma once

#include "cmdp/model.hpp"

namespace cmdp {

// Step-counter encoding: states become (s, n) pairs with the counter stored
// in the key's `step` field; every edge goes from (s, n) to (s', n+1).
// The encoding makes fixed_visit_step total.
ModelPtr encode_step_counter(ModelPtr base);

// True when `m` is a step-counter encoding produced here.
bool is_step_encoded(const Model& m);
// The underlying model of an encoding (throws otherwise).
ModelPtr step_encoding_base(const Model& m);

// Branching gadget: each infinitely branching state x keeps a single
// successor z_1; the fresh chain states z_i offer the i-th original branch
// (exit) or the next chain state. For random x the exit weights are
// p'_i = p_i / prod_{j<i} (1 - p'_j), so the induced exit distribution is the
// original law; an exhausted tail truncates the chain with a sure exit.
ModelPtr definitize_branching(ModelPtr base);

bool is_definitized(const Model& m);
ModelPtr definitized_base(const Model& m);

// The gadget's exit weights for a finite prefix of a law (exposed for tests):
// chain_weights({1/2, 1/4, 1/4}) = {1/2, 1/2, 1}.
std::vector<Rat> chain_weights(const std::vector<Rat>& p);

}  // namespace cmdp
