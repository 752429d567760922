#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "quadmed/ontology.hpp"

namespace quadmed {

// Coded clinical events of one admission; list order is preserved as given.
struct StructuredEvents {
    std::vector<SourceCode> diagnoses;
    std::vector<SourceCode> procedures;
    std::vector<SourceCode> medications;

    bool operator==(const StructuredEvents&) const = default;
};

struct Section {
    std::string title;  // non-empty; matched case-insensitively after ws-normalization
    std::string body;

    bool operator==(const Section&) const = default;
};

struct Admission {
    std::string admission_id;
    std::string patient_id;
    StructuredEvents events;
    std::vector<Section> sections;

    bool operator==(const Admission&) const = default;
};

// Whitelisted narrative of one admission. text holds the selected section
// bodies, each prefixed by a "== <title> ==" separator line, joined by
// newlines; token_count counts its whitespace-delimited tokens.
struct Context {
    std::string admission_id;
    std::string text;
    std::vector<std::string> included_titles;
    std::size_t token_count = 0;
};

// Section-title patterns ('*' wildcard) selecting discharge-summary narrative.
const std::vector<std::string>& default_section_whitelist();

// One admission object per line; duplicate admission_id is an integrity
// error, malformed JSON a parse error naming the line. Empty file -> empty.
std::vector<Admission> parse_admissions(const std::filesystem::path& jsonl);
void write_admissions(const std::filesystem::path& jsonl, const std::vector<Admission>& admissions);

// Sections whose titles match any whitelist pattern, in admission order.
// Throws IntegrityError when nothing matches.
Context extract_context(const Admission& admission, const std::vector<std::string>& whitelist);

// Stable keep-first filter on patient_id.
std::vector<Admission> dedup_patients(const std::vector<Admission>& admissions);

struct SynthCorpusConfig {
    int n_admissions = 500;
    int min_facts = 2;  // planted facts per admission, entity-disjoint
    int max_facts = 4;
    int min_filler = 30;  // filler sentences per admission
    int max_filler = 300;
    double distractor_rate = 0.6;    // chance of unplanted entity mentions
    double noise_code_rate = 0.5;    // chance of coded-but-unmentioned events
    double junk_code_rate = 0.0;     // chance of codes absent from the code map
    std::uint64_t seed = 0;
};

struct PlantedFact {
    std::string admission_id;
    ConceptId head;
    std::string relation;
    ConceptId tail;
};

struct SyntheticCorpus {
    std::vector<Admission> admissions;
    std::vector<PlantedFact> planted;  // generation record, used as test oracle
};

// Deterministic synthetic discharge summaries over the given graph. Every
// planted fact is a closure-true triple whose head and tail are mentioned in
// whitelisted narrative and carried as structured codes. Throws
// CapacityError when the graph cannot supply the requested facts.
SyntheticCorpus generate_synthetic_corpus(const SemanticGraph& g, const SynthCorpusConfig& config);

}  // namespace quadmed
