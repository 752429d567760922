#include "quadmed/synthetic.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "quadmed/errors.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

namespace {

const std::vector<std::string> kSyllables = {
    "ba", "ce", "dal", "fe",  "gor", "hu",  "jin", "kam", "lo",  "mer",
    "nis", "pol", "qua", "rin", "sev", "tam", "ul",  "vex", "wor", "xan",
    "yel", "zor", "bri", "cla", "dru", "fol", "gre", "pla", "sto", "tri"};

std::string make_stem(Rng& rng, int syllables) {
    std::string s;
    for (int i = 0; i < syllables; ++i) s += kSyllables[rng.below(kSyllables.size())];
    return s;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

// Pseudo-word name factory with a global uniqueness pool, so no two
// lexicon surface forms collide across the generated ontology.
class NamePool {
public:
    explicit NamePool(std::uint64_t seed) : rng_(seed) {}

    std::string fresh(const std::string& suffix, bool capitalized, int syllables) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            std::string stem = make_stem(rng_, syllables);
            std::string name = suffix.empty() ? stem : stem + suffix;
            if (capitalized) name = capitalize(name);
            if (used_.insert(casefold(name)).second) return name;
        }
        throw CapacityError("name pool exhausted");
    }

    std::string fresh_phrase(const std::string& tail_word, int syllables) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            std::string name = capitalize(make_stem(rng_, syllables)) + " " + tail_word;
            if (used_.insert(casefold(name)).second) return name;
        }
        throw CapacityError("name pool exhausted");
    }

    // Derived surface ("<base> <suffix>"), registered in the uniqueness pool.
    std::string variant(const std::string& base, const std::string& suffix) {
        std::string name = base + " " + suffix;
        if (!used_.insert(casefold(name)).second) {
            throw CapacityError("name variant collision: " + name);
        }
        return name;
    }

    Rng& rng() { return rng_; }

private:
    Rng rng_;
    std::set<std::string> used_;
};

const std::vector<std::string> kDiseaseTails = {"syndrome", "disease", "disorder", "fever"};
const std::vector<std::string> kDrugSuffixes = {"pril", "olol", "azole", "micin", "patin", "oxin"};
const std::vector<std::string> kClassTails = {"inhibitors", "blockers", "agonists", "statins"};
const std::vector<std::string> kProcedureTails = {"repair", "bypass", "ablation", "resection"};
const std::vector<std::string> kFindingTails = {"edema", "rash", "murmur", "effusion"};

}  // namespace

SemanticGraph build_synthetic_ontology(const SynthOntologyConfig& config) {
    if (config.clusters < 1 || config.diseases_per_cluster < 1 || config.drugs_per_class < 1) {
        throw ConfigError("synthetic ontology needs at least one cluster, disease, and drug");
    }

    SemanticGraph g;
    NamePool pool(Rng::derive(config.seed, "synth-ontology"));
    Rng& rng = pool.rng();

    int next_cui = 1;
    int next_code = 1;
    auto new_cui = [&] {
        std::string n = std::to_string(next_cui++);
        return ConceptId("C9" + std::string(6 - n.size(), '0') + n);
    };

    auto add = [&](const std::string& name, SemanticKind kind, bool synonym) {
        Concept c;
        c.id = new_cui();
        c.preferred_name = name;
        c.kind = kind;
        if (synonym) {
            switch (kind) {
                case SemanticKind::diagnosis:
                    c.synonyms.push_back(pool.fresh_phrase("illness", 2));
                    break;
                case SemanticKind::medication:
                    c.synonyms.push_back(pool.fresh("", true, 2));
                    break;
                default:
                    c.synonyms.push_back(pool.fresh_phrase("variant", 2));
                    break;
            }
        }
        ConceptId id = c.id;
        g.add_concept(std::move(c));
        g.add_mapping(SourceCode{"SYNVOC", "K" + std::to_string(next_code++)}, id);
        if (rng.chance(0.3)) {
            g.add_mapping(SourceCode{"ALTVOC", "Z" + std::to_string(next_code++)}, id);
        }
        return id;
    };

    std::vector<ConceptId> first_diseases;
    for (int cl = 0; cl < config.clusters; ++cl) {
        ConceptId disease_class =
            add(pool.fresh_phrase("disorders", 2), SemanticKind::other, false);
        ConceptId drug_class =
            add(pool.fresh_phrase(kClassTails[rng.below(kClassTails.size())], 2),
                SemanticKind::drug_class, false);

        // Sibling diseases share a stem and differ only in the type numeral
        // ("X syndrome type 1" / "type 2"), so a sibling swap changes just
        // one common token instead of introducing a fresh stem.
        std::vector<ConceptId> diseases;
        std::string disease_base =
            pool.fresh_phrase(kDiseaseTails[rng.below(kDiseaseTails.size())], 2);
        for (int d = 0; d < config.diseases_per_cluster; ++d) {
            std::string name = config.diseases_per_cluster == 1
                                   ? disease_base
                                   : pool.variant(disease_base, "type " + std::to_string(d + 1));
            diseases.push_back(add(name, SemanticKind::diagnosis, rng.chance(0.5)));
        }
        std::vector<ConceptId> drugs;
        for (int d = 0; d < config.drugs_per_class; ++d) {
            drugs.push_back(add(pool.fresh(kDrugSuffixes[rng.below(kDrugSuffixes.size())], false, 2),
                                SemanticKind::medication, rng.chance(0.4)));
        }
        ConceptId procedure =
            add(pool.fresh_phrase(kProcedureTails[rng.below(kProcedureTails.size())], 2),
                SemanticKind::procedure, false);
        ConceptId finding = add(pool.fresh_phrase(kFindingTails[rng.below(kFindingTails.size())], 2),
                                SemanticKind::other, false);

        for (const auto& d : diseases) g.add_edge(d, "is_a", disease_class);
        for (const auto& dr : drugs) g.add_edge(dr, "is_a", drug_class);
        for (const auto& d : diseases) {
            g.add_edge(drug_class, "treats", d);
            g.add_edge(d, "may_be_treated_by", drug_class);
            g.add_edge(procedure, "has_associated_procedure", d);
            g.add_edge(d, "associated_with", finding);
        }
        // One direct disease-drug edge per disease, so sibling swaps on the
        // drug slot stay inside the closure via the class-level edge.
        for (std::size_t d = 0; d < diseases.size(); ++d) {
            g.add_edge(diseases[d], "may_be_treated_by", drugs[d % drugs.size()]);
        }

        first_diseases.push_back(diseases[0]);
    }

    if (config.chain) {
        for (std::size_t i = 0; i + 1 < first_diseases.size(); ++i) {
            g.add_edge(first_diseases[i], "related_to", first_diseases[i + 1]);
        }
    }

    return g;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

// Narrative phrasings deliberately differ from the statement templates in
// templates.cpp: a statement is never a verbatim substring of the context.
const std::map<std::string, std::vector<std::string>>& narrative_phrasebook() {
    static const std::map<std::string, std::vector<std::string>> book = {
        {"treats",
         {"{head} was started for {tail}.",
          "The patient's {tail} improved after initiation of {head}.",
          "{head} continues to control the {tail}."}},
        {"may_be_treated_by",
         {"{head} was managed with {tail} during the stay.",
          "The patient received {tail} for {head}.",
          "For {head}, the team continued {tail}."}},
        {"has_associated_procedure",
         {"The patient underwent {head} for management of {tail}.",
          "{head} was performed given the history of {tail}.",
          "Status post {head} for {tail}."}},
        {"associated_with",
         {"{head} was accompanied by {tail} on examination.",
          "Examination revealed {tail} in the setting of {head}."}},
        {"related_to",
         {"{head} was felt to be related to {tail}.",
          "{head} was monitored alongside {tail}."}},
    };
    return book;
}

const std::vector<std::string>& filler_phrasebook() {
    static const std::vector<std::string> fillers = {
        "The patient remained afebrile overnight.",
        "Vital signs were stable throughout the admission.",
        "Laboratory values were within normal limits.",
        "The patient tolerated a regular diet without difficulty.",
        "Physical therapy evaluated the patient prior to discharge.",
        "Follow-up was arranged with the primary care provider.",
        "The patient ambulated independently on the unit.",
        "Pain was controlled with the standing regimen.",
        "No acute events occurred overnight.",
        "The family was updated at the bedside.",
        "Repeat imaging showed no interval change.",
        "The patient remained in normal sinus rhythm on telemetry.",
        "Electrolytes were repleted as needed.",
        "Blood cultures showed no growth to date.",
        "The patient was counseled on medication adherence.",
        "Home services were arranged before discharge.",
        "The patient voided without difficulty after catheter removal.",
        "Incentive spirometry was encouraged every hour while awake.",
        "The nutrition service provided dietary teaching.",
        "Serial examinations remained reassuring.",
        "The patient denied chest pain or shortness of breath.",
        "Wound checks showed no erythema or drainage.",
        "Oxygen was weaned to room air.",
        "Discharge criteria were met on the day of departure.",
    };
    return fillers;
}

const std::vector<std::string>& distractor_phrasebook() {
    static const std::vector<std::string> lines = {
        "There was a remote history of {name}.",
        "Outside records mention {name}.",
        "A family history of {name} was reported.",
        "Prior documentation notes {name}, not active this admission.",
    };
    return lines;
}

std::string fill_slots(std::string tpl, const std::string& head, const std::string& tail) {
    auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
        std::size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
    };
    replace_all(tpl, "{head}", head);
    replace_all(tpl, "{tail}", tail);
    return tpl;
}

struct PlantableFact {
    ConceptId head;
    std::string relation;
    ConceptId tail;
};

bool plantable_kind(SemanticKind k) {
    return k == SemanticKind::diagnosis || k == SemanticKind::procedure ||
           k == SemanticKind::medication;
}

// Closure facts whose endpoints are narratable clinical entities and whose
// relation has a narrative phrasing. One DFS per head concept.
std::vector<PlantableFact> enumerate_plantable(const SemanticGraph& g) {
    const auto& book = narrative_phrasebook();
    std::vector<PlantableFact> pool;
    for (const auto& [head, hc] : g.concepts) {
        if (!plantable_kind(hc.kind)) continue;
        for (const auto& [tail, tc] : g.concepts) {
            if (head == tail || !plantable_kind(tc.kind)) continue;
            for (const auto& finding : relations_within_hops(g, head, tail, 3)) {
                if (book.count(finding.relation)) {
                    pool.push_back(PlantableFact{head, finding.relation, tail});
                    break;
                }
            }
        }
    }
    return pool;
}

std::string pad_id(char prefix, int n) {
    std::string digits = std::to_string(n);
    return prefix + std::string(digits.size() >= 5 ? 0 : 5 - digits.size(), '0') + digits;
}

// Preferred name or a synonym, seeded.
const std::string& surface_for(const SemanticGraph& g, const ConceptId& id, Rng& rng) {
    const Concept& c = g.at(id);
    if (!c.synonyms.empty() && rng.chance(0.3)) {
        return c.synonyms[rng.below(c.synonyms.size())];
    }
    return c.preferred_name;
}

std::map<ConceptId, SourceCode> first_code_by_concept(const SemanticGraph& g) {
    std::map<ConceptId, SourceCode> out;
    for (const auto& [code, cui] : g.code_map) {
        out.emplace(cui, code);  // keeps the lexicographically first code
    }
    return out;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SemanticGraph& g, const SynthCorpusConfig& config) {
    if (config.n_admissions < 1) throw ConfigError("n_admissions must be positive");
    if (config.min_facts < 1 || config.max_facts < config.min_facts) {
        throw ConfigError("invalid planted-fact range");
    }
    if (config.min_filler < 0 || config.max_filler < config.min_filler) {
        throw ConfigError("invalid filler range");
    }

    std::vector<PlantableFact> pool = enumerate_plantable(g);
    if (static_cast<int>(pool.size()) < config.min_facts) {
        throw CapacityError("graph yields only " + std::to_string(pool.size()) +
                            " plantable facts, need at least " + std::to_string(config.min_facts));
    }

    // Entities eligible as distractor mentions / noise codes.
    std::vector<ConceptId> clinical_entities;
    for (const auto& [id, c] : g.concepts) {
        if (plantable_kind(c.kind)) clinical_entities.push_back(id);
    }
    const std::map<ConceptId, SourceCode> concept_codes = first_code_by_concept(g);

    const auto& narrative = narrative_phrasebook();
    const auto& fillers = filler_phrasebook();
    const auto& distractors = distractor_phrasebook();

    // Whitelisted targets for narrative placement, with filler weights.
    const std::vector<std::pair<std::string, int>> section_plan = {
        {"History of Present Illness", 3},        // whitelisted
        {"Past Medical History", 1},              // whitelisted
        {"Brief Hospital Course", 6},             // whitelisted
        {"Discharge Medications", 1},             // whitelisted
        {"Social History", 1},                    // excluded by default whitelist
        {"Physical Exam", 2},                     // excluded by default whitelist
    };
    const std::vector<std::size_t> narrative_targets = {0, 1, 2, 3};

    SyntheticCorpus corpus;

    for (int a = 0; a < config.n_admissions; ++a) {
        Rng rng(Rng::derive(config.seed, "admission-" + std::to_string(a)));
        Admission adm;
        adm.admission_id = pad_id('A', a + 1);
        adm.patient_id = pad_id('P', a + 1);

        // Planted facts: entity-disjoint so counterfactual recombination has
        // independent donors to draw on.
        int want = static_cast<int>(rng.range(config.min_facts, config.max_facts));
        std::vector<PlantableFact> planted;
        std::set<ConceptId> used_entities;
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t idx : order) {
            if (static_cast<int>(planted.size()) == want) break;
            const PlantableFact& f = pool[idx];
            if (used_entities.count(f.head) || used_entities.count(f.tail)) continue;
            planted.push_back(f);
            used_entities.insert(f.head);
            used_entities.insert(f.tail);
        }
        if (static_cast<int>(planted.size()) < config.min_facts) {
            throw CapacityError("graph too small to plant " + std::to_string(config.min_facts) +
                                " entity-disjoint facts for admission " + adm.admission_id);
        }

        // Sentences per section.
        std::vector<std::vector<std::string>> section_lines(section_plan.size());

        for (const auto& f : planted) {
            const auto& phrasings = narrative.at(f.relation);
            std::string line = fill_slots(phrasings[rng.below(phrasings.size())],
                                          surface_for(g, f.head, rng), surface_for(g, f.tail, rng));
            std::size_t target = narrative_targets[rng.below(narrative_targets.size())];
            section_lines[target].push_back(line);
            corpus.planted.push_back(PlantedFact{adm.admission_id, f.head, f.relation, f.tail});
        }

        // Distractor mentions: attested entities with no planted fact. Some
        // land in excluded sections and stay invisible to the context.
        std::set<ConceptId> mentioned = used_entities;
        if (rng.chance(config.distractor_rate)) {
            int n_distract = static_cast<int>(rng.range(1, 3));
            for (int d = 0; d < n_distract; ++d) {
                const ConceptId& id = clinical_entities[rng.below(clinical_entities.size())];
                if (mentioned.count(id)) continue;
                mentioned.insert(id);
                std::string line = distractors[rng.below(distractors.size())];
                std::size_t pos = line.find("{name}");
                if (pos != std::string::npos) line.replace(pos, 6, surface_for(g, id, rng));
                std::size_t target = rng.chance(0.7)
                                         ? narrative_targets[rng.below(narrative_targets.size())]
                                         : section_plan.size() - 1;
                section_lines[target].push_back(line);
            }
        }

        // Filler.
        int total_weight = 0;
        for (const auto& entry : section_plan) total_weight += entry.second;
        int n_filler = static_cast<int>(rng.range(config.min_filler, config.max_filler));
        for (int f = 0; f < n_filler; ++f) {
            int roll = static_cast<int>(rng.below(total_weight));
            std::size_t target = 0;
            for (std::size_t s = 0; s < section_plan.size(); ++s) {
                roll -= section_plan[s].second;
                if (roll < 0) {
                    target = s;
                    break;
                }
            }
            section_lines[target].push_back(fillers[rng.below(fillers.size())]);
        }

        for (std::size_t s = 0; s < section_plan.size(); ++s) {
            if (section_lines[s].empty()) {
                section_lines[s].push_back(fillers[rng.below(fillers.size())]);
            }
            rng.shuffle(section_lines[s]);
            std::string body;
            for (const auto& line : section_lines[s]) {
                if (!body.empty()) body += ' ';
                body += line;
            }
            adm.sections.push_back(Section{section_plan[s].first, body});
        }

        // Structured codes for every mentioned entity, plus optional noise
        // codes (coded, unmentioned) and junk codes (absent from the map).
        std::set<ConceptId> coded = mentioned;
        if (rng.chance(config.noise_code_rate)) {
            int n_noise = static_cast<int>(rng.range(1, 2));
            for (int i = 0; i < n_noise; ++i) {
                coded.insert(clinical_entities[rng.below(clinical_entities.size())]);
            }
        }
        for (const auto& id : coded) {
            auto it = concept_codes.find(id);
            if (it == concept_codes.end()) continue;
            switch (g.at(id).kind) {
                case SemanticKind::diagnosis: adm.events.diagnoses.push_back(it->second); break;
                case SemanticKind::procedure: adm.events.procedures.push_back(it->second); break;
                case SemanticKind::medication: adm.events.medications.push_back(it->second); break;
                default: break;
            }
        }
        if (rng.chance(config.junk_code_rate)) {
            adm.events.diagnoses.push_back(SourceCode{"JUNKVOC", "X" + std::to_string(a)});
        }

        corpus.admissions.push_back(std::move(adm));
    }

    return corpus;
}

}  // namespace quadmed
