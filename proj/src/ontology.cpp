#include "quadmed/ontology.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "quadmed/corpus.hpp"
#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

SemanticKind parse_semantic_kind(const std::string& s) {
    if (s == "diagnosis") return SemanticKind::diagnosis;
    if (s == "procedure") return SemanticKind::procedure;
    if (s == "medication") return SemanticKind::medication;
    if (s == "drug_class") return SemanticKind::drug_class;
    if (s == "other") return SemanticKind::other;
    throw IntegrityError("unknown semantic kind: \"" + s + "\"");
}

std::string to_string(SemanticKind k) {
    switch (k) {
        case SemanticKind::diagnosis: return "diagnosis";
        case SemanticKind::procedure: return "procedure";
        case SemanticKind::medication: return "medication";
        case SemanticKind::drug_class: return "drug_class";
        case SemanticKind::other: return "other";
    }
    return "other";
}

const Concept& SemanticGraph::at(const ConceptId& id) const {
    auto it = concepts.find(id);
    if (it == concepts.end()) throw NotFoundError("unknown concept id: " + id);
    return it->second;
}

std::vector<std::string> SemanticGraph::relation_labels() const {
    std::set<std::string> labels;
    for (const auto& e : edges) labels.insert(e.relation);
    return {labels.begin(), labels.end()};
}

const std::vector<const RelationEdge*>& SemanticGraph::out_edges(const ConceptId& id) const {
    static const std::vector<const RelationEdge*> empty;
    auto it = out_.find(id);
    return it == out_.end() ? empty : it->second;
}

const std::vector<const RelationEdge*>& SemanticGraph::in_edges(const ConceptId& id) const {
    static const std::vector<const RelationEdge*> empty;
    auto it = in_.find(id);
    return it == in_.end() ? empty : it->second;
}

void SemanticGraph::add_surface(const std::string& surface, const ConceptId& id) {
    std::string key = casefold(normalize_ws(surface));
    if (key.empty()) return;
    lexicon[key].insert(id);
}

void SemanticGraph::add_concept(Concept c) {
    if (c.id.empty()) throw IntegrityError("empty concept id");
    if (c.preferred_name.empty()) throw IntegrityError("concept " + c.id + " has empty name");
    if (concepts.count(c.id)) throw IntegrityError("duplicate concept id: " + c.id);
    add_surface(c.preferred_name, c.id);
    for (const auto& s : c.synonyms) add_surface(s, c.id);
    concepts.emplace(c.id, std::move(c));
}

void SemanticGraph::add_edge(const ConceptId& head, const std::string& relation,
                             const ConceptId& tail) {
    if (!contains(head)) throw IntegrityError("edge references unknown concept: " + head);
    if (!contains(tail)) throw IntegrityError("edge references unknown concept: " + tail);
    if (relation.empty()) throw IntegrityError("empty relation label on edge " + head + " -> " + tail);
    if (head == tail) throw IntegrityError("self-loop edge on concept " + head);
    auto [it, inserted] = edges.insert(RelationEdge{head, relation, tail});
    if (inserted) index_edge(*it);  // duplicates dedup silently
}

void SemanticGraph::index_edge(const RelationEdge& e) {
    out_[e.head].push_back(&e);
    in_[e.tail].push_back(&e);
}

void SemanticGraph::add_mapping(const SourceCode& code, const ConceptId& target) {
    if (!contains(target)) {
        throw IntegrityError("mapping " + code.vocabulary + ":" + code.code +
                             " references unknown concept " + target);
    }
    auto it = code_map.find(code);
    if (it != code_map.end()) {
        if (it->second != target) {
            throw IntegrityError("conflicting mapping for " + code.vocabulary + ":" + code.code +
                                 " (" + it->second + " vs " + target + ")");
        }
        return;
    }
    code_map.emplace(code, target);
}

SemanticGraph load_ontology(const std::filesystem::path& concepts_tsv,
                            const std::filesystem::path& relations_tsv,
                            const std::filesystem::path& mappings_tsv) {
    SemanticGraph g;

    auto wrap = [](const std::filesystem::path& p, std::size_t line, const IntegrityError& e) {
        return IntegrityError(p.string() + ":" + std::to_string(line) + ": " + e.what());
    };

    for (const auto& row : read_tsv(concepts_tsv, {"cui", "preferred_name", "semantic_kind", "synonyms"})) {
        Concept c;
        c.id = row.fields[0];
        c.preferred_name = row.fields[1];
        try {
            c.kind = parse_semantic_kind(row.fields[2]);
        } catch (const IntegrityError&) {
            throw ParseError(concepts_tsv.string(), row.line,
                             "unknown semantic kind \"" + row.fields[2] + "\"");
        }
        for (auto& syn : split(row.fields[3], '|')) {
            if (!syn.empty()) c.synonyms.push_back(std::move(syn));
        }
        try {
            g.add_concept(std::move(c));
        } catch (const IntegrityError& e) {
            throw wrap(concepts_tsv, row.line, e);
        }
    }

    for (const auto& row : read_tsv(relations_tsv, {"head_cui", "relation", "tail_cui"})) {
        try {
            g.add_edge(row.fields[0], row.fields[1], row.fields[2]);
        } catch (const IntegrityError& e) {
            throw wrap(relations_tsv, row.line, e);
        }
    }

    for (const auto& row : read_tsv(mappings_tsv, {"vocabulary", "code", "cui"})) {
        try {
            g.add_mapping(SourceCode{row.fields[0], row.fields[1]}, row.fields[2]);
        } catch (const IntegrityError& e) {
            throw wrap(mappings_tsv, row.line, e);
        }
    }

    return g;
}

void write_ontology(const SemanticGraph& g,
                    const std::filesystem::path& concepts_tsv,
                    const std::filesystem::path& relations_tsv,
                    const std::filesystem::path& mappings_tsv) {
    std::ostringstream cs;
    cs << "cui\tpreferred_name\tsemantic_kind\tsynonyms\n";
    for (const auto& [id, c] : g.concepts) {
        cs << id << '\t' << c.preferred_name << '\t' << to_string(c.kind) << '\t';
        for (std::size_t i = 0; i < c.synonyms.size(); ++i) {
            if (i) cs << '|';
            cs << c.synonyms[i];
        }
        cs << '\n';
    }
    write_file(concepts_tsv, cs.str());

    std::ostringstream rs;
    rs << "head_cui\trelation\ttail_cui\n";
    for (const auto& e : g.edges) rs << e.head << '\t' << e.relation << '\t' << e.tail << '\n';
    write_file(relations_tsv, rs.str());

    std::ostringstream ms;
    ms << "vocabulary\tcode\tcui\n";
    for (const auto& [code, cui] : g.code_map) {
        ms << code.vocabulary << '\t' << code.code << '\t' << cui << '\n';
    }
    write_file(mappings_tsv, ms.str());
}

ConceptId normalize_code(const SemanticGraph& g, const SourceCode& code) {
    auto it = g.code_map.find(code);
    if (it == g.code_map.end()) {
        throw NotFoundError("no mapping for code " + code.vocabulary + ":" + code.code);
    }
    return it->second;
}

std::set<ConceptId> normalize_admission(const SemanticGraph& g, const StructuredEvents& events,
                                        CodePolicy policy, std::vector<SourceCode>* unmapped) {
    std::set<ConceptId> out;
    std::vector<SourceCode> missing;
    auto take = [&](const std::vector<SourceCode>& codes) {
        for (const auto& code : codes) {
            auto it = g.code_map.find(code);
            if (it != g.code_map.end()) {
                out.insert(it->second);
            } else {
                missing.push_back(code);
            }
        }
    };
    take(events.diagnoses);
    take(events.procedures);
    take(events.medications);

    if (!missing.empty()) {
        if (policy == CodePolicy::strict) {
            std::string msg = "unmapped codes:";
            for (const auto& c : missing) msg += " " + c.vocabulary + ":" + c.code;
            throw IntegrityError(msg);
        }
        if (unmapped) {
            unmapped->insert(unmapped->end(), missing.begin(), missing.end());
        }
    }
    return out;
}

namespace {

void check_hops_arg(int max_hops) {
    if (max_hops < 1 || max_hops > 3) {
        throw ConfigError("max_hops must be in [1, 3], got " + std::to_string(max_hops));
    }
}

struct PathDfs {
    const SemanticGraph& g;
    const ConceptId& tail;
    int max_hops;
    std::vector<RelationFinding>& out;

    std::vector<ConceptId> nodes;
    std::vector<std::string> labels;
    std::vector<bool> reversed;
    std::set<ConceptId> visited;

    void record(const std::string& substantive) {
        RelationPath p{nodes, labels, reversed, substantive};
        out.push_back(RelationFinding{substantive, std::move(p)});
    }

    // crossed==false: still on the ascending hierarchy segment. crossed==true:
    // the one substantive edge is behind us, only reverse hierarchy descents
    // remain.
    void step(const ConceptId& cur, bool crossed, const std::string& substantive) {
        if (crossed && cur == tail) {
            record(substantive);
            return;  // simple paths cannot revisit the tail
        }
        if (static_cast<int>(labels.size()) >= max_hops) return;

        if (!crossed) {
            for (const RelationEdge* e : g.out_edges(cur)) {
                if (visited.count(e->tail)) continue;
                bool hier = g.is_hierarchical(e->relation);
                push(e->tail, e->relation, false);
                step(e->tail, !hier, hier ? substantive : e->relation);
                pop(e->tail);
            }
        } else {
            for (const RelationEdge* e : g.in_edges(cur)) {
                if (!g.is_hierarchical(e->relation)) continue;
                if (visited.count(e->head)) continue;
                push(e->head, e->relation, true);
                step(e->head, true, substantive);
                pop(e->head);
            }
        }
    }

    void push(const ConceptId& n, const std::string& label, bool rev) {
        nodes.push_back(n);
        labels.push_back(label);
        reversed.push_back(rev);
        visited.insert(n);
    }

    void pop(const ConceptId& n) {
        nodes.pop_back();
        labels.pop_back();
        reversed.pop_back();
        visited.erase(n);
    }
};

}  // namespace

std::vector<RelationFinding> relations_within_hops(const SemanticGraph& g, const ConceptId& head,
                                                   const ConceptId& tail, int max_hops) {
    check_hops_arg(max_hops);
    g.at(head);
    g.at(tail);

    std::vector<RelationFinding> out;

    PathDfs dfs{g, tail, max_hops, out, {head}, {}, {}, {head}};
    dfs.step(head, false, "");

    // Direct hierarchy edges head->tail are graph facts, not inferences; the
    // DFS above only records paths with a substantive crossing.
    for (const RelationEdge* e : g.out_edges(head)) {
        if (e->tail == tail && g.is_hierarchical(e->relation)) {
            RelationPath p{{head, tail}, {e->relation}, {false}, e->relation};
            out.push_back(RelationFinding{e->relation, std::move(p)});
        }
    }

    std::sort(out.begin(), out.end(), [](const RelationFinding& a, const RelationFinding& b) {
        auto ka = std::tie(a.path.edge_labels, a.path.reversed);
        auto kb = std::tie(b.path.edge_labels, b.path.reversed);
        if (a.path.hops() != b.path.hops()) return a.path.hops() < b.path.hops();
        if (a.path.nodes != b.path.nodes) return a.path.nodes < b.path.nodes;
        return ka < kb;
    });
    return out;
}

bool in_closure(const SemanticGraph& g, const ConceptId& head, const std::string& relation,
                const ConceptId& tail, int max_hops) {
    if (!g.contains(head) || !g.contains(tail)) return false;
    for (const auto& f : relations_within_hops(g, head, tail, max_hops)) {
        if (f.relation == relation) return true;
    }
    return false;
}

std::optional<std::string> infer_relation(const SemanticGraph& g, const RelationPath& path) {
    const auto& nodes = path.nodes;
    const auto& labels = path.edge_labels;
    if (nodes.size() < 2 || nodes.size() > 4) return std::nullopt;
    if (labels.size() != nodes.size() - 1) return std::nullopt;
    if (path.reversed.size() != labels.size()) return std::nullopt;
    std::set<ConceptId> distinct(nodes.begin(), nodes.end());
    if (distinct.size() != nodes.size()) return std::nullopt;

    auto forward_edge = [&](std::size_t i) { return g.has_edge(nodes[i], labels[i], nodes[i + 1]); };
    auto reverse_edge = [&](std::size_t i) { return g.has_edge(nodes[i + 1], labels[i], nodes[i]); };

    // A single forward hop is a direct edge: a graph fact of its own label.
    if (labels.size() == 1) {
        if (!path.reversed[0] && forward_edge(0)) return labels[0];
        return std::nullopt;
    }

    std::size_t substantive = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!g.is_hierarchical(labels[i])) {
            if (substantive != labels.size()) return std::nullopt;  // two substantive edges
            substantive = i;
        }
    }
    if (substantive == labels.size()) return std::nullopt;  // hierarchy-only chain

    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i < substantive) {
            if (path.reversed[i] || !forward_edge(i)) return std::nullopt;
        } else if (i == substantive) {
            if (path.reversed[i] || !forward_edge(i)) return std::nullopt;
        } else {
            if (!path.reversed[i] || !reverse_edge(i)) return std::nullopt;
        }
    }
    return labels[substantive];
}

std::vector<ConceptId> sibling_concepts(const SemanticGraph& g, const ConceptId& c) {
    g.at(c);
    std::set<ConceptId> parents;
    for (const RelationEdge* e : g.out_edges(c)) {
        if (g.is_hierarchical(e->relation)) parents.insert(e->tail);
    }
    std::set<ConceptId> siblings;
    for (const auto& p : parents) {
        for (const RelationEdge* e : g.in_edges(p)) {
            if (g.is_hierarchical(e->relation) && e->head != c) siblings.insert(e->head);
        }
    }
    return {siblings.begin(), siblings.end()};
}

std::vector<ConceptId> distant_concepts(const SemanticGraph& g, const ConceptId& anchor,
                                        int min_hops) {
    if (min_hops < 4) {
        throw ConfigError("min_hops must be >= 4, got " + std::to_string(min_hops));
    }
    g.at(anchor);

    std::map<ConceptId, int> dist;
    dist[anchor] = 0;
    std::deque<ConceptId> queue{anchor};
    while (!queue.empty()) {
        ConceptId cur = queue.front();
        queue.pop_front();
        int d = dist[cur];
        auto visit = [&](const ConceptId& n) {
            if (!dist.count(n)) {
                dist[n] = d + 1;
                queue.push_back(n);
            }
        };
        for (const RelationEdge* e : g.out_edges(cur)) visit(e->tail);
        for (const RelationEdge* e : g.in_edges(cur)) visit(e->head);
    }

    std::vector<ConceptId> out;
    for (const auto& kv : g.concepts) {
        auto it = dist.find(kv.first);
        if (it == dist.end() || it->second >= min_hops) out.push_back(kv.first);
    }
    return out;
}

int undirected_distance(const SemanticGraph& g, const ConceptId& a, const ConceptId& b, int cap) {
    g.at(a);
    g.at(b);
    if (a == b) return 0;
    std::map<ConceptId, int> dist;
    dist[a] = 0;
    std::deque<ConceptId> queue{a};
    while (!queue.empty()) {
        ConceptId cur = queue.front();
        queue.pop_front();
        int d = dist[cur];
        if (d >= cap) continue;
        auto visit = [&](const ConceptId& n) {
            if (!dist.count(n)) {
                dist[n] = d + 1;
                queue.push_back(n);
            }
        };
        for (const RelationEdge* e : g.out_edges(cur)) visit(e->tail);
        for (const RelationEdge* e : g.in_edges(cur)) visit(e->head);
        if (dist.count(b)) break;
    }
    auto it = dist.find(b);
    return (it != dist.end() && it->second <= cap) ? it->second : -1;
}

namespace {

// First-token index over lexicon keys, built lazily per graph instance.
struct MatcherIndex {
    // first word token -> keys sharing it, longest first then lexicographic
    std::map<std::string, std::vector<const std::string*>> by_first_token;
};

MatcherIndex build_matcher_index(const SemanticGraph& g) {
    MatcherIndex idx;
    for (const auto& [key, ids] : g.lexicon) {
        std::string first;
        for (char ch : key) {
            if (is_word_char(ch)) {
                first.push_back(ch);
            } else if (!first.empty()) {
                break;
            }
        }
        if (first.empty()) continue;
        idx.by_first_token[first].push_back(&key);
    }
    for (auto& [tok, keys] : idx.by_first_token) {
        std::sort(keys.begin(), keys.end(), [](const std::string* a, const std::string* b) {
            if (a->size() != b->size()) return a->size() > b->size();
            return *a < *b;
        });
    }
    return idx;
}

}  // namespace

std::vector<EntityMatch> match_entities(const SemanticGraph& g, const std::string& text) {
    MatcherIndex idx = build_matcher_index(g);

    std::string low = casefold(text);
    std::vector<EntityMatch> out;

    std::size_t i = 0;
    const std::size_t n = low.size();
    while (i < n) {
        if (!is_word_char(low[i]) || (i > 0 && is_word_char(low[i - 1]))) {
            ++i;
            continue;
        }
        std::size_t tok_end = i;
        while (tok_end < n && is_word_char(low[tok_end])) ++tok_end;
        std::string first = low.substr(i, tok_end - i);

        std::size_t advance = tok_end;
        auto it = idx.by_first_token.find(first);
        if (it != idx.by_first_token.end()) {
            for (const std::string* key : it->second) {
                std::size_t len = key->size();
                if (i + len > n) continue;
                if (low.compare(i, len, *key) != 0) continue;
                if (i + len < n && is_word_char(low[i + len]) && is_word_char((*key)[len - 1])) {
                    continue;  // match must end on a word boundary
                }
                for (const ConceptId& id : g.lexicon.at(*key)) {
                    out.push_back(EntityMatch{id, i, i + len});
                }
                advance = i + len;
                break;  // keys are longest-first: first hit wins
            }
        }
        i = advance;
    }
    return out;
}

std::set<ConceptId> matched_concepts(const SemanticGraph& g, const std::string& text) {
    std::set<ConceptId> out;
    for (const auto& m : match_entities(g, text)) out.insert(m.concept_id);
    return out;
}

}  // namespace quadmed
