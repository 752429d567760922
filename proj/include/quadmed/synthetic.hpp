#pragma once

#include <cstdint>

#include "quadmed/corpus.hpp"
#include "quadmed/ontology.hpp"

namespace quadmed {

// Shape of a generated ontology: disjoint disease/drug clusters joined by a
// sparse related_to chain. Each cluster holds a disease class with
// `diseases_per_cluster` children, a drug class with `drugs_per_class`
// children, one procedure, and one clinical finding, wired so that both
// climb-then-cross (drug is_a class, class treats disease) and
// cross-then-descend (disease may_be_treated_by class, drug is_a class)
// inference paths exist.
struct SynthOntologyConfig {
    int clusters = 24;
    int diseases_per_cluster = 2;
    int drugs_per_class = 4;
    bool chain = true;  // related_to edges between consecutive clusters
    std::uint64_t seed = 0;
};

SemanticGraph build_synthetic_ontology(const SynthOntologyConfig& config);

}  // namespace quadmed
