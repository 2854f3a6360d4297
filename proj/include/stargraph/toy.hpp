#pragma once

#include <cstdint>

#include "stargraph/graph.hpp"

namespace stargraph {

/// Built-in synthetic KG: compositional relations over four entity groups
/// arranged in a chain. r0, r1, r3 are unions of random bijections
/// G0->G1->G2->G3, r2 = r1 o r0 and r4 = r3 o r1 are their compositions, r5
/// is the inverse of r0, plus a sprinkle of uniform noise triples (~1500
/// triples at the default size). holdout = 0 gives train = valid = test (the
/// memorization preset); holdout > 0 moves that fraction to test (valid =
/// test), train keeps the rest.
struct ToyOptions {
    std::int64_t num_entities = 200;
    std::int64_t noise_triples = 50;
    std::uint64_t seed = 7;
    double holdout = 0.0;
};

Graph make_toy_graph(const ToyOptions& opt);

}  // namespace stargraph
