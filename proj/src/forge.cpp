#include "quadmed/forge.hpp"

#include <algorithm>
#include <map>

#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

std::string to_string(Quadrant q) {
    switch (q) {
        case Quadrant::q1: return "Q1";
        case Quadrant::q2: return "Q2";
        case Quadrant::q3: return "Q3";
        case Quadrant::q4: return "Q4";
    }
    return "Q1";
}

Quadrant parse_quadrant(const std::string& s) {
    if (s == "Q1") return Quadrant::q1;
    if (s == "Q2") return Quadrant::q2;
    if (s == "Q3") return Quadrant::q3;
    if (s == "Q4") return Quadrant::q4;
    throw IntegrityError("unknown quadrant label: \"" + s + "\"");
}

std::set<ConceptId> attested_concepts(const SemanticGraph& g, const Context& context,
                                      const std::set<ConceptId>& events,
                                      const ForgeConfig& config) {
    std::set<ConceptId> attested = matched_concepts(g, context.text);
    if (config.attestation == AttestationMode::text_or_events) {
        attested.insert(events.begin(), events.end());
    }
    return attested;
}

std::vector<Fact> extract_supported_facts(const SemanticGraph& g, const Context& context,
                                          const std::set<ConceptId>& events,
                                          const ForgeConfig& config) {
    std::set<ConceptId> attested = attested_concepts(g, context, events, config);

    std::vector<Fact> facts;
    for (const auto& h : attested) {
        for (const auto& t : attested) {
            if (h == t) continue;
            std::string last_relation;
            for (const auto& finding : relations_within_hops(g, h, t, config.max_hops)) {
                if (finding.relation == last_relation) continue;  // findings sorted: keep shortest
                if (std::any_of(facts.begin(), facts.end(), [&](const Fact& f) {
                        return f.head == h && f.relation == finding.relation && f.tail == t;
                    })) {
                    continue;
                }
                last_relation = finding.relation;
                Fact f;
                f.head = h;
                f.relation = finding.relation;
                f.tail = t;
                f.provenance =
                    finding.path.hops() == 1 ? Provenance::direct_edge : Provenance::multi_hop;
                f.path = finding.path;
                facts.push_back(std::move(f));
            }
        }
    }
    std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
        return std::tie(a.head, a.relation, a.tail) < std::tie(b.head, b.relation, b.tail);
    });
    return facts;
}

Statement verbalize_fact(const Fact& fact, const SemanticGraph& g,
                         const TemplateLibrary& templates) {
    const Concept& head = g.at(fact.head);
    const Concept& tail = g.at(fact.tail);
    Statement s;
    s.text = templates.render(fact.relation, head.preferred_name, tail.preferred_name);
    s.fact = fact;
    s.template_id = fact.relation;
    return s;
}

namespace {

std::string make_sample_id(std::uint64_t seed, const std::string& admission_id, const Fact& fact,
                           Quadrant q) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ fnv1a64(admission_id));
    h = mix64(h ^ fnv1a64(fact.head));
    h = mix64(h ^ fnv1a64(fact.relation));
    h = mix64(h ^ fnv1a64(fact.tail));
    h = mix64(h ^ static_cast<std::uint64_t>(index_of(q) + 1));
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

Fact substituted(const Fact& base, const std::string& site, const ConceptId& replacement) {
    Fact f;
    f.head = site == "head" ? replacement : base.head;
    f.relation = base.relation;
    f.tail = site == "tail" ? replacement : base.tail;
    f.provenance = base.provenance;
    return f;
}

}  // namespace

QuadrantSet generate_quadrant_set(const SemanticGraph& g, const AdmissionView& view,
                                  const Fact& fact, std::uint64_t seed,
                                  const ForgeConfig& config) {
    QuadrantSet out;
    const std::string& admission_id = view.context.admission_id;

    std::uint64_t fact_seed = mix64(seed ^ fnv1a64(admission_id));
    fact_seed = mix64(fact_seed ^ fnv1a64(fact.head + "|" + fact.relation + "|" + fact.tail));
    Rng rng(fact_seed);

    auto emit = [&](Quadrant q, const Fact& stmt_fact, GenerationTrace trace) {
        Sample s;
        s.sample_id = make_sample_id(seed, admission_id, fact, q);
        s.admission_id = admission_id;
        s.context = view.context;
        s.statement = verbalize_fact(stmt_fact, g, config.templates);
        s.label = q;
        s.trace = std::move(trace);
        CheckResult check = plausibility_check(s, g, view.events, config);
        if (check.pass) {
            out.samples.push_back(std::move(s));
        } else {
            out.omissions.push_back(Omission{q, check.reason});
        }
    };

    auto enabled = [&](Quadrant q) { return config.enabled_quadrants[index_of(q)]; };

    if (enabled(Quadrant::q1)) {
        GenerationTrace tr;
        tr.op = "identity";
        tr.source = fact;
        emit(Quadrant::q1, fact, std::move(tr));
    }

    // Q2: swap one entity for a sibling so the triple stays in the closure
    // but the new entity has no contextual or coded evidence.
    if (enabled(Quadrant::q2)) {
        bool emitted = false;
        for (const std::string site : {"tail", "head"}) {
            const ConceptId& original = site == "tail" ? fact.tail : fact.head;
            const ConceptId& kept = site == "tail" ? fact.head : fact.tail;
            SemanticKind kind = g.at(original).kind;
            std::vector<ConceptId> candidates;
            for (const auto& sib : sibling_concepts(g, original)) {
                if (sib == kept) continue;
                if (g.at(sib).kind != kind) continue;
                if (view.attested.count(sib) || view.events.count(sib)) continue;
                Fact swapped = substituted(fact, site, sib);
                if (!in_closure(g, swapped.head, swapped.relation, swapped.tail, config.max_hops)) {
                    continue;
                }
                candidates.push_back(sib);
            }
            if (candidates.empty()) continue;
            const ConceptId& pick = candidates[rng.below(candidates.size())];
            GenerationTrace tr;
            tr.op = "sibling_swap";
            tr.site = site;
            tr.original = original;
            tr.replacement = pick;
            tr.source = fact;
            emit(Quadrant::q2, substituted(fact, site, pick), std::move(tr));
            emitted = true;
            break;
        }
        if (!emitted) {
            out.omissions.push_back(
                Omission{Quadrant::q2, "no sibling stays closure-true and unattested"});
        }
    }

    // Q3: recombine with an attested entity from a different supported fact
    // so the triple leaves the closure while both entities stay supported.
    if (enabled(Quadrant::q3)) {
        bool emitted = false;
        for (const std::string site : {"tail", "head"}) {
            const ConceptId& original = site == "tail" ? fact.tail : fact.head;
            SemanticKind kind = g.at(original).kind;
            std::vector<std::pair<ConceptId, const Fact*>> candidates;
            for (const auto& donor : view.supported_facts) {
                if (donor.same_triple(fact)) continue;
                for (const ConceptId* e : {&donor.head, &donor.tail}) {
                    if (*e == fact.head || *e == fact.tail) continue;
                    if (g.at(*e).kind != kind) continue;
                    if (!view.attested.count(*e)) continue;
                    Fact swapped = substituted(fact, site, *e);
                    if (in_closure(g, swapped.head, swapped.relation, swapped.tail,
                                   config.max_hops)) {
                        continue;
                    }
                    if (std::none_of(candidates.begin(), candidates.end(),
                                     [&](const auto& c) { return c.first == *e; })) {
                        candidates.emplace_back(*e, &donor);
                    }
                }
            }
            if (candidates.empty()) continue;
            std::sort(candidates.begin(), candidates.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            const auto& pick = candidates[rng.below(candidates.size())];
            GenerationTrace tr;
            tr.op = "recombine";
            tr.site = site;
            tr.original = original;
            tr.replacement = pick.first;
            tr.source = fact;
            tr.donor = *pick.second;
            emit(Quadrant::q3, substituted(fact, site, pick.first), std::move(tr));
            emitted = true;
            break;
        }
        if (!emitted) {
            out.omissions.push_back(
                Omission{Quadrant::q3, "no attested donor entity leaves the closure"});
        }
    }

    // Q4: swap one entity for a kind-compatible concept far from it in the
    // undirected graph and absent from the context.
    if (enabled(Quadrant::q4)) {
        bool emitted = false;
        for (const std::string site : {"tail", "head"}) {
            const ConceptId& original = site == "tail" ? fact.tail : fact.head;
            SemanticKind kind = g.at(original).kind;
            std::vector<ConceptId> candidates;
            for (const auto& far : distant_concepts(g, original, config.min_distractor_hops)) {
                if (g.at(far).kind != kind) continue;
                if (view.attested.count(far)) continue;
                Fact swapped = substituted(fact, site, far);
                if (in_closure(g, swapped.head, swapped.relation, swapped.tail, config.max_hops)) {
                    continue;  // unreachable by construction; kept as a guard
                }
                candidates.push_back(far);
            }
            if (candidates.empty()) continue;
            const ConceptId& pick = candidates[rng.below(candidates.size())];
            GenerationTrace tr;
            tr.op = "distant_swap";
            tr.site = site;
            tr.original = original;
            tr.replacement = pick;
            tr.source = fact;
            emit(Quadrant::q4, substituted(fact, site, pick), std::move(tr));
            emitted = true;
            break;
        }
        if (!emitted) {
            out.omissions.push_back(
                Omission{Quadrant::q4, "no distant kind-compatible distractor"});
        }
    }

    return out;
}

CheckResult plausibility_check(const Sample& sample, const SemanticGraph& g,
                               const std::set<ConceptId>& events, const ForgeConfig& config) {
    const Fact& f = sample.statement.fact;
    if (!g.contains(f.head)) return {false, "unknown head " + f.head};
    if (!g.contains(f.tail)) return {false, "unknown tail " + f.tail};

    std::set<ConceptId> attested = attested_concepts(g, sample.context, events, config);
    bool truth = in_closure(g, f.head, f.relation, f.tail, config.max_hops);

    auto kind_matches = [&]() {
        return !sample.trace.replacement.empty() && !sample.trace.original.empty() &&
               g.at(sample.trace.replacement).kind == g.at(sample.trace.original).kind;
    };

    switch (sample.label) {
        case Quadrant::q1: {
            if (!truth) return {false, "Q1 triple not in closure"};
            if (!attested.count(f.head)) return {false, "Q1 head not attested"};
            if (!attested.count(f.tail)) return {false, "Q1 tail not attested"};
            return {true, ""};
        }
        case Quadrant::q2: {
            if (!truth) return {false, "Q2 triple not in closure"};
            const ConceptId& sub = sample.trace.replacement;
            if (sub.empty()) return {false, "Q2 trace lacks substituted entity"};
            if (attested.count(sub)) return {false, "Q2 substituted entity attested"};
            if (events.count(sub)) return {false, "Q2 substituted entity in coded events"};
            return {true, ""};
        }
        case Quadrant::q3: {
            if (truth) return {false, "Q3 triple in closure"};
            if (!attested.count(f.head)) return {false, "Q3 head not attested"};
            if (!attested.count(f.tail)) return {false, "Q3 tail not attested"};
            if (!kind_matches()) return {false, "Q3 replacement kind mismatch"};
            return {true, ""};
        }
        case Quadrant::q4: {
            if (truth) return {false, "Q4 triple in closure"};
            const ConceptId& sub = sample.trace.replacement;
            if (sub.empty()) return {false, "Q4 trace lacks distractor entity"};
            if (attested.count(sub)) return {false, "Q4 distractor attested"};
            if (!kind_matches()) return {false, "Q4 replacement kind mismatch"};
            int d = undirected_distance(g, sample.trace.original, sub,
                                        config.min_distractor_hops - 1);
            if (d >= 0) return {false, "Q4 distractor within " + std::to_string(d) + " hops"};
            return {true, ""};
        }
    }
    return {false, "unknown label"};
}

// ---------------------------------------------------------------------------
// Split assembly
// ---------------------------------------------------------------------------

namespace {

struct AdmissionCounts {
    std::string admission_id;
    std::array<int, 4> quadrants{0, 0, 0, 0};
    std::vector<const Sample*> samples;
};

double balance_dev(const std::array<long long, 4>& counts) {
    long long total = counts[0] + counts[1] + counts[2] + counts[3];
    double ideal = static_cast<double>(total) / 4.0;
    double dev = 0.0;
    for (long long c : counts) dev = std::max(dev, std::abs(static_cast<double>(c) - ideal));
    return dev;
}

}  // namespace

DatasetSplit assemble_and_split(const std::vector<Sample>& samples, std::array<double, 3> ratios,
                                std::uint64_t seed) {
    for (double r : ratios) {
        if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    }
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    std::map<std::string, AdmissionCounts> by_admission;
    for (const auto& s : samples) {
        auto& entry = by_admission[s.admission_id];
        entry.admission_id = s.admission_id;
        entry.quadrants[index_of(s.label)] += 1;
        entry.samples.push_back(&s);
    }
    if (by_admission.size() < 4) {
        throw IntegrityError("split requires at least 4 admissions, got " +
                             std::to_string(by_admission.size()));
    }

    std::vector<AdmissionCounts> admissions;
    admissions.reserve(by_admission.size());
    for (auto& [id, entry] : by_admission) admissions.push_back(std::move(entry));

    const long long n = static_cast<long long>(admissions.size());
    long long n_val = std::max<long long>(1, std::llround(ratios[1] * static_cast<double>(n)));
    long long n_test = std::max<long long>(1, std::llround(ratios[2] * static_cast<double>(n)));
    long long n_train = n - n_val - n_test;
    if (n_train < 1) throw IntegrityError("split ratios leave no training admissions");

    std::array<long long, 3> capacity{n_train, n_val, n_test};
    std::array<std::array<long long, 4>, 3> counts{};
    std::array<long long, 3> assigned_count{0, 0, 0};
    std::vector<int> assignment(admissions.size(), -1);

    std::vector<std::size_t> order(admissions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::derive(seed, "split"));
    rng.shuffle(order);

    // Greedy: place each admission where it hurts quadrant balance least.
    for (std::size_t idx : order) {
        int best = -1;
        double best_dev = 0.0;
        for (int part = 0; part < 3; ++part) {
            if (assigned_count[part] >= capacity[part]) continue;
            std::array<long long, 4> next = counts[part];
            for (int q = 0; q < 4; ++q) next[q] += admissions[idx].quadrants[q];
            double dev = balance_dev(next);
            if (best < 0 || dev < best_dev) {
                best = part;
                best_dev = dev;
            }
        }
        assignment[idx] = best;
        assigned_count[best] += 1;
        for (int q = 0; q < 4; ++q) counts[best][q] += admissions[idx].quadrants[q];
    }

    // Local refinement: swap pairs across parts while the worst per-part
    // deviation improves. Deterministic sweep order.
    auto total_dev = [&]() {
        double worst = 0.0;
        for (int part = 0; part < 3; ++part) worst = std::max(worst, balance_dev(counts[part]));
        return worst;
    };
    bool improved = true;
    int rounds = 0;
    while (improved && rounds < 20) {
        improved = false;
        ++rounds;
        for (std::size_t i = 0; i < admissions.size(); ++i) {
            for (std::size_t j = i + 1; j < admissions.size(); ++j) {
                int pi = assignment[i], pj = assignment[j];
                if (pi == pj) continue;
                double before = total_dev();
                for (int q = 0; q < 4; ++q) {
                    counts[pi][q] += admissions[j].quadrants[q] - admissions[i].quadrants[q];
                    counts[pj][q] += admissions[i].quadrants[q] - admissions[j].quadrants[q];
                }
                double after = total_dev();
                if (after + 1e-12 < before) {
                    std::swap(assignment[i], assignment[j]);
                    improved = true;
                } else {
                    for (int q = 0; q < 4; ++q) {
                        counts[pi][q] -= admissions[j].quadrants[q] - admissions[i].quadrants[q];
                        counts[pj][q] -= admissions[i].quadrants[q] - admissions[j].quadrants[q];
                    }
                }
            }
        }
    }

    DatasetSplit split;
    split.ratios = ratios;
    split.seed = seed;
    for (std::size_t i = 0; i < admissions.size(); ++i) {
        auto* bucket = assignment[i] == 0   ? &split.train
                       : assignment[i] == 1 ? &split.validation
                                            : &split.test;
        for (const Sample* s : admissions[i].samples) bucket->push_back(s->sample_id);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::array<double, 3> split_balance_deviation(const std::vector<Sample>& samples,
                                              const DatasetSplit& split) {
    std::map<std::string, Quadrant> label_by_id;
    for (const auto& s : samples) label_by_id[s.sample_id] = s.label;
    std::array<double, 3> out{};
    const std::vector<std::string>* parts[3] = {&split.train, &split.validation, &split.test};
    for (int p = 0; p < 3; ++p) {
        std::array<long long, 4> counts{};
        for (const auto& id : *parts[p]) {
            auto it = label_by_id.find(id);
            if (it == label_by_id.end()) throw IntegrityError("split references unknown sample " + id);
            counts[index_of(it->second)] += 1;
        }
        out[p] = balance_dev(counts);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset serialization
// ---------------------------------------------------------------------------

namespace {

json fact_to_json(const Fact& f) {
    return json{{"head", f.head}, {"relation", f.relation}, {"tail", f.tail}};
}

Fact fact_from_json(const json& j, const std::string& file, std::size_t line) {
    if (!j.is_object() || !j.contains("head") || !j.contains("relation") || !j.contains("tail")) {
        throw ParseError(file, line, "fact needs head, relation, tail");
    }
    Fact f;
    f.head = j["head"].get<std::string>();
    f.relation = j["relation"].get<std::string>();
    f.tail = j["tail"].get<std::string>();
    return f;
}

}  // namespace

void write_dataset(const std::filesystem::path& jsonl, const std::vector<Sample>& samples) {
    std::string buf;
    for (const auto& s : samples) {
        json trace;
        trace["op"] = s.trace.op;
        trace["site"] = s.trace.site;
        trace["original"] = s.trace.original;
        trace["replacement"] = s.trace.replacement;
        trace["source"] = fact_to_json(s.trace.source);
        if (s.trace.donor) trace["donor"] = fact_to_json(*s.trace.donor);

        json j;
        j["sample_id"] = s.sample_id;
        j["admission_id"] = s.admission_id;
        j["context"] = s.context.text;
        j["statement"] = s.statement.text;
        j["label"] = to_string(s.label);
        j["fact"] = fact_to_json(s.statement.fact);
        j["trace"] = trace;
        buf += j.dump();
        buf += '\n';
    }
    write_file(jsonl, buf);
}

std::vector<Sample> read_dataset(const std::filesystem::path& jsonl) {
    std::vector<Sample> out;
    std::set<std::string> seen;
    const std::string file = jsonl.string();
    for_each_jsonl(jsonl, [&](std::size_t line, const json& j) {
        for (const char* key :
             {"sample_id", "admission_id", "context", "statement", "label", "fact", "trace"}) {
            if (!j.contains(key)) throw ParseError(file, line, std::string("missing key ") + key);
        }
        Sample s;
        s.sample_id = j["sample_id"].get<std::string>();
        s.admission_id = j["admission_id"].get<std::string>();
        s.context.admission_id = s.admission_id;
        s.context.text = j["context"].get<std::string>();
        s.context.token_count = count_tokens(s.context.text);
        s.statement.text = j["statement"].get<std::string>();
        s.label = parse_quadrant(j["label"].get<std::string>());
        s.statement.fact = fact_from_json(j["fact"], file, line);
        s.statement.template_id = s.statement.fact.relation;
        const json& trace = j["trace"];
        if (!trace.is_object()) throw ParseError(file, line, "trace is not an object");
        s.trace.op = trace.value("op", "");
        s.trace.site = trace.value("site", "");
        s.trace.original = trace.value("original", "");
        s.trace.replacement = trace.value("replacement", "");
        if (trace.contains("source")) s.trace.source = fact_from_json(trace["source"], file, line);
        if (trace.contains("donor")) s.trace.donor = fact_from_json(trace["donor"], file, line);
        if (!seen.insert(s.sample_id).second) {
            throw IntegrityError(file + ":" + std::to_string(line) + ": duplicate sample_id " +
                                 s.sample_id);
        }
        out.push_back(std::move(s));
    });
    return out;
}

void write_split(const std::filesystem::path& path, const DatasetSplit& split) {
    json j;
    j["train"] = split.train;
    j["validation"] = split.validation;
    j["test"] = split.test;
    j["ratios"] = split.ratios;
    j["seed"] = split.seed;
    write_file(path, j.dump(2) + "\n");
}

DatasetSplit read_split(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ParseError(path.string(), 1, "invalid JSON");
    DatasetSplit split;
    for (const char* key : {"train", "validation", "test", "ratios", "seed"}) {
        if (!j.contains(key)) throw ParseError(path.string(), 1, std::string("missing key ") + key);
    }
    split.train = j["train"].get<std::vector<std::string>>();
    split.validation = j["validation"].get<std::vector<std::string>>();
    split.test = j["test"].get<std::vector<std::string>>();
    auto ratios = j["ratios"].get<std::vector<double>>();
    if (ratios.size() != 3) throw ParseError(path.string(), 1, "ratios must have 3 entries");
    split.ratios = {ratios[0], ratios[1], ratios[2]};
    split.seed = j["seed"].get<std::uint64_t>();
    return split;
}

}  // namespace quadmed
