#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "quadmed/corpus.hpp"
#include "quadmed/ontology.hpp"
#include "quadmed/templates.hpp"

namespace quadmed {

// Statement quadrants: truth crossed with contextual support.
//   Q1 true+supported, Q2 true+unsupported,
//   Q3 false+supported (counterfactual recombination), Q4 false+unsupported.
enum class Quadrant { q1 = 0, q2 = 1, q3 = 2, q4 = 3 };

std::string to_string(Quadrant q);
Quadrant parse_quadrant(const std::string& s);
inline int index_of(Quadrant q) { return static_cast<int>(q); }

enum class Provenance { direct_edge, multi_hop };

struct Fact {
    ConceptId head;
    std::string relation;
    ConceptId tail;
    Provenance provenance = Provenance::direct_edge;
    std::optional<RelationPath> path;  // witness for multi-hop facts

    bool same_triple(const Fact& o) const {
        return head == o.head && relation == o.relation && tail == o.tail;
    }
};

struct Statement {
    std::string text;
    Fact fact;                // the triple the text asserts
    std::string template_id;  // relation label of the rendering template
};

// How a sample was produced from its source fact.
struct GenerationTrace {
    std::string op;       // identity | sibling_swap | recombine | distant_swap
    std::string site;     // head | tail | "" (identity)
    ConceptId original;   // entity replaced at `site`
    ConceptId replacement;
    Fact source;                // the supported fact the quadrant set grew from
    std::optional<Fact> donor;  // second supported fact feeding a recombination
};

struct Sample {
    std::string sample_id;
    std::string admission_id;
    Context context;
    Statement statement;
    Quadrant label;
    GenerationTrace trace;
};

enum class AttestationMode { text, text_or_events };

struct ForgeConfig {
    AttestationMode attestation = AttestationMode::text;
    int max_hops = 3;
    int min_distractor_hops = 4;
    std::array<bool, 4> enabled_quadrants{true, true, true, true};
    int max_facts_per_admission = 12;
    TemplateLibrary templates = TemplateLibrary::defaults();
};

// Entity attestation set for a context under the configured mode.
std::set<ConceptId> attested_concepts(const SemanticGraph& g, const Context& context,
                                      const std::set<ConceptId>& events, const ForgeConfig& config);

// Facts (h, r, t) with both entities attested and r in the bounded closure.
// One fact per distinct triple, sorted by (head, relation, tail); provenance
// and witness path come from the shortest finding.
std::vector<Fact> extract_supported_facts(const SemanticGraph& g, const Context& context,
                                          const std::set<ConceptId>& events,
                                          const ForgeConfig& config);

// Renders the relation template over preferred names.
Statement verbalize_fact(const Fact& fact, const SemanticGraph& g, const TemplateLibrary& templates);

// Everything generate_quadrant_set needs to know about one admission.
struct AdmissionView {
    const Context& context;
    const std::set<ConceptId>& events;          // normalized structured codes
    const std::set<ConceptId>& attested;        // attested_concepts(...) result
    const std::vector<Fact>& supported_facts;   // extract_supported_facts(...) result
};

struct Omission {
    Quadrant quadrant;
    std::string reason;
};

struct QuadrantSet {
    std::vector<Sample> samples;  // at most one per enabled quadrant
    std::vector<Omission> omissions;
};

// Builds up to four labeled statements from one supported fact:
//   Q1 the fact verbatim; Q2 a sibling swap that stays closure-true but is
//   unattested; Q3 a recombination of two supported facts that leaves the
//   closure; Q4 a distant-distractor swap. Quadrants without a valid
//   candidate are omitted with a reason. Deterministic given seed.
QuadrantSet generate_quadrant_set(const SemanticGraph& g, const AdmissionView& view,
                                  const Fact& fact, std::uint64_t seed, const ForgeConfig& config);

struct CheckResult {
    bool pass = false;
    std::string reason;  // empty on pass
};

// Recomputes truth (bounded closure) and support (attestation) and validates
// the label-specific invariants, including semantic-kind compatibility of
// substituted entities for Q3/Q4.
CheckResult plausibility_check(const Sample& sample, const SemanticGraph& g,
                               const std::set<ConceptId>& events, const ForgeConfig& config);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
};

// Admission-level split: all samples of an admission land in one part and
// part sizes follow the ratios to within one admission. Greedy assignment
// plus local swap refinement keeps per-part quadrant counts within one
// sample of exact balance when admissions carry complete quadrant sets (the
// generator's output); skewed material degrades gracefully toward the floor
// its global mix imposes. Requires at least 4 distinct admissions.
DatasetSplit assemble_and_split(const std::vector<Sample>& samples, std::array<double, 3> ratios,
                                std::uint64_t seed);

// Largest |count_q - total/4| over quadrants, per part; the balance measure
// the splitter minimizes.
std::array<double, 3> split_balance_deviation(const std::vector<Sample>& samples,
                                              const DatasetSplit& split);

void write_dataset(const std::filesystem::path& jsonl, const std::vector<Sample>& samples);
// Reload note: per-sample context text round-trips; section title lists do
// not (the dataset stores the rendered text only).
std::vector<Sample> read_dataset(const std::filesystem::path& jsonl);

void write_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& path);

}  // namespace quadmed
