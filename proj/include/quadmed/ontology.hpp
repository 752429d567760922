#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace quadmed {

// Opaque concept identifier (CUI-style token). Compared by exact string
// equality; all deterministic orderings use lexicographic order on it.
using ConceptId = std::string;

enum class SemanticKind { diagnosis, procedure, medication, drug_class, other };

SemanticKind parse_semantic_kind(const std::string& s);
std::string to_string(SemanticKind k);

struct Concept {
    ConceptId id;
    std::string preferred_name;
    std::vector<std::string> synonyms;
    SemanticKind kind = SemanticKind::other;
};

struct SourceCode {
    std::string vocabulary;
    std::string code;
    auto operator<=>(const SourceCode&) const = default;
};

struct RelationEdge {
    ConceptId head;
    std::string relation;
    ConceptId tail;
    auto operator<=>(const RelationEdge&) const = default;
};

// Directed walk between two concepts. edge_labels[i] sits between nodes[i]
// and nodes[i+1]; reversed[i] means the graph edge runs nodes[i+1]->nodes[i]
// (a hierarchy edge descended against its direction).
struct RelationPath {
    std::vector<ConceptId> nodes;
    std::vector<std::string> edge_labels;
    std::vector<bool> reversed;
    std::string inferred_relation;

    std::size_t hops() const { return edge_labels.size(); }
    auto operator<=>(const RelationPath&) const = default;
};

struct StructuredEvents;  // defined in corpus.hpp

class SemanticGraph {
public:
    // Invariants, enforced by loaders/builders:
    //  - every edge endpoint is a known concept; no self-loop edges; no
    //    duplicate (head, relation, tail) triples
    //  - every code_map target is a known concept
    //  - every preferred name and synonym appears in the lexicon
    std::map<ConceptId, Concept> concepts;
    std::set<RelationEdge> edges;
    std::map<SourceCode, ConceptId> code_map;
    // case-folded, whitespace-normalized surface form -> concepts
    std::map<std::string, std::set<ConceptId>> lexicon;
    std::set<std::string> hierarchical_relations{"is_a"};

    bool contains(const ConceptId& id) const { return concepts.count(id) != 0; }
    const Concept& at(const ConceptId& id) const;
    bool is_hierarchical(const std::string& relation) const {
        return hierarchical_relations.count(relation) != 0;
    }
    bool has_edge(const ConceptId& h, const std::string& r, const ConceptId& t) const {
        return edges.count(RelationEdge{h, r, t}) != 0;
    }

    // Sorted relation label vocabulary (feature one-hots, stats).
    std::vector<std::string> relation_labels() const;

    const std::vector<const RelationEdge*>& out_edges(const ConceptId& id) const;
    const std::vector<const RelationEdge*>& in_edges(const ConceptId& id) const;

    // Adds with invariant checks; used by loaders and in-memory fixtures.
    void add_concept(Concept c);
    void add_edge(const ConceptId& head, const std::string& relation, const ConceptId& tail);
    void add_mapping(const SourceCode& code, const ConceptId& target);

private:
    std::map<ConceptId, std::vector<const RelationEdge*>> out_;
    std::map<ConceptId, std::vector<const RelationEdge*>> in_;
    void index_edge(const RelationEdge& e);
    void add_surface(const std::string& surface, const ConceptId& id);
};

// Loads the three-table ontology export. Deterministic and row-order
// independent: identical tables in any order produce an identical graph.
SemanticGraph load_ontology(const std::filesystem::path& concepts_tsv,
                            const std::filesystem::path& relations_tsv,
                            const std::filesystem::path& mappings_tsv);

void write_ontology(const SemanticGraph& g,
                    const std::filesystem::path& concepts_tsv,
                    const std::filesystem::path& relations_tsv,
                    const std::filesystem::path& mappings_tsv);

// Exact lookup in the code map; throws NotFoundError naming the pair.
ConceptId normalize_code(const SemanticGraph& g, const SourceCode& code);

enum class CodePolicy { skip, strict };

// Union of mapped concepts over all three event lists. strict: collects every
// unmapped code and throws one IntegrityError listing all of them. skip:
// drops unmapped codes, recording them in *unmapped when provided.
std::set<ConceptId> normalize_admission(const SemanticGraph& g, const StructuredEvents& events,
                                        CodePolicy policy = CodePolicy::skip,
                                        std::vector<SourceCode>* unmapped = nullptr);

struct RelationFinding {
    std::string relation;
    RelationPath path;
};

// Direct edges head->tail plus relations inferred from admissible paths of
// at most max_hops edges. An admissible path climbs zero or more hierarchy
// edges from the head, crosses exactly one substantive edge, then descends
// zero or more hierarchy edges to the tail; its inferred label is the
// substantive edge's label. Findings are sorted by (hop count, node
// sequence, labels); only simple paths (distinct nodes) are considered.
std::vector<RelationFinding> relations_within_hops(const SemanticGraph& g, const ConceptId& head,
                                                   const ConceptId& tail, int max_hops = 3);

// True closure membership test: some finding carries this relation label.
bool in_closure(const SemanticGraph& g, const ConceptId& head, const std::string& relation,
                const ConceptId& tail, int max_hops = 3);

// Validates a path against the graph and the admissibility rule above.
// Returns the substantive label, or nullopt for inadmissible paths. A bare
// direct edge (single forward hop of any label) yields its own label.
std::optional<std::string> infer_relation(const SemanticGraph& g, const RelationPath& path);

// Concepts sharing at least one hierarchy parent with c, excluding c itself.
std::vector<ConceptId> sibling_concepts(const SemanticGraph& g, const ConceptId& c);

// Concepts at undirected hop distance >= min_hops from the anchor, or
// unreachable from it. min_hops must be >= 4.
std::vector<ConceptId> distant_concepts(const SemanticGraph& g, const ConceptId& anchor,
                                        int min_hops = 4);

// Undirected BFS distance between two concepts, or -1 when it exceeds cap
// (including unreachable).
int undirected_distance(const SemanticGraph& g, const ConceptId& a, const ConceptId& b, int cap);

struct EntityMatch {
    ConceptId concept_id;
    std::size_t begin;  // byte offsets into the matched text, [begin, end)
    std::size_t end;

    auto operator<=>(const EntityMatch&) const = default;
};

// Case-insensitive, word-boundary-respecting scan for lexicon surface forms.
// Longest match wins at each position; matches overlapping an accepted span
// are suppressed, so distinct spans never overlap. A surface form naming
// several concepts yields one EntityMatch per concept on the same span.
std::vector<EntityMatch> match_entities(const SemanticGraph& g, const std::string& text);

std::set<ConceptId> matched_concepts(const SemanticGraph& g, const std::string& text);

}  // namespace quadmed
