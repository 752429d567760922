#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "quadmed/corpus.hpp"
#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"
#include "quadmed/synthetic.hpp"
#include "quadmed/templates.hpp"
#include "quadmed/util.hpp"
#include "testutil.hpp"

using namespace quadmed;
using namespace quadmed::testing;

namespace {

Admission small_admission(const std::string& adm_id, const std::string& pat_id) {
    Admission a;
    a.admission_id = adm_id;
    a.patient_id = pat_id;
    a.events.diagnoses = {SourceCode{"ICD10", "I10"}};
    a.events.medications = {SourceCode{"RXNORM", "29046"}, SourceCode{"RXNORM", "7052"}};
    a.sections = {
        Section{"History of Present Illness", "Presented with elevated blood pressure."},
        Section{"Physical Exam", "Unremarkable."},
        Section{"Brief Hospital Course", "Lisinopril was started. Improved steadily."},
    };
    return a;
}

}  // namespace

TEST_CASE("admissions round-trip through JSONL exactly") {
    TempDir dir;
    std::vector<Admission> original = {small_admission("A1", "P1"), small_admission("A2", "P2")};
    original[1].events.procedures = {SourceCode{"CPT", "93000"}};

    auto path = dir / "ADMISSIONS.jsonl";
    write_admissions(path, original);
    CHECK(parse_admissions(path) == original);

    write_admissions(path, {});
    CHECK(parse_admissions(path).empty());
}

TEST_CASE("admission parser names the offending line") {
    TempDir dir;
    auto path = dir / "bad.jsonl";

    write_file(path, "{\"patient_id\":\"P1\"}\n");
    CHECK(throws_with<ParseError>([&] { parse_admissions(path); }, "missing key admission_id"));

    write_file(path, "not json\n");
    CHECK_THROWS_AS((void)parse_admissions(path), ParseError);

    write_file(path, R"({"admission_id":"A1","patient_id":"P1","diagnoses":[],"procedures":[],)"
                     R"("medications":[],"sections":[]})"
                     "\n\n");
    CHECK(throws_with<ParseError>([&] { parse_admissions(path); }, "blank line"));

    // Duplicate ids are an integrity problem, not a parse problem.
    std::string row = R"({"admission_id":"A1","patient_id":"P1","diagnoses":[],"procedures":[],)"
                      R"("medications":[],"sections":[{"title":"Brief Hospital Course","body":"ok"}]})";
    write_file(path, row + "\n" + row + "\n");
    CHECK(throws_with<IntegrityError>([&] { parse_admissions(path); }, "duplicate admission_id A1"));

    write_file(path, R"({"admission_id":"A1","patient_id":"P1","diagnoses":[{"vocabulary":"X"}],)"
                     R"("procedures":[],"medications":[],"sections":[]})"
                     "\n");
    CHECK(throws_with<ParseError>([&] { parse_admissions(path); }, "vocabulary and code"));

    write_file(path, R"({"admission_id":"A1","patient_id":"P1","diagnoses":[],"procedures":[],)"
                     R"("medications":[],"sections":[{"title":"  ","body":"x"}]})"
                     "\n");
    CHECK(throws_with<ParseError>([&] { parse_admissions(path); }, "empty section title"));

    try {
        write_file(path, "{\"patient_id\":\"P1\"}\n");
        parse_admissions(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
        CHECK(e.file() == path.string());
    }
}

TEST_CASE("context extraction follows the whitelist in section order") {
    Admission a = small_admission("A1", "P1");
    Context ctx = extract_context(a, default_section_whitelist());

    CHECK(ctx.admission_id == "A1");
    CHECK(ctx.included_titles ==
          std::vector<std::string>{"History of Present Illness", "Brief Hospital Course"});
    CHECK(ctx.text ==
          "== History of Present Illness ==\nPresented with elevated blood pressure.\n"
          "== Brief Hospital Course ==\nLisinopril was started. Improved steadily.");
    CHECK(ctx.token_count == count_tokens(ctx.text));

    // Wildcards and case-insensitive matching.
    Admission b = small_admission("A2", "P2");
    b.sections = {Section{"DISCHARGE DIAGNOSES", "Hypertension."},
                  Section{"discharge diagnosis", "Hypertension."}};
    Context bc = extract_context(b, {"Discharge Diagnos*"});
    CHECK(bc.included_titles.size() == 2);

    Admission c = small_admission("A3", "P3");
    c.sections = {Section{"Allergies", "None."}};
    CHECK(throws_with<IntegrityError>(
        [&] { extract_context(c, default_section_whitelist()); }, "A3"));
}

TEST_CASE("patient dedup keeps the first admission per patient") {
    std::vector<Admission> all = {small_admission("A1", "P1"), small_admission("A2", "P1"),
                                  small_admission("A3", "P2")};
    auto kept = dedup_patients(all);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].admission_id == "A1");
    CHECK(kept[1].admission_id == "A3");
}

TEST_CASE("synthetic ontology wires both inference shapes") {
    SynthOntologyConfig cfg;
    cfg.clusters = 3;
    cfg.diseases_per_cluster = 2;
    cfg.drugs_per_class = 2;
    cfg.seed = 5;
    SemanticGraph g = build_synthetic_ontology(cfg);

    CHECK(g.concepts.size() == 3 * (2 + 2 + 4));  // classes, diseases, drugs, proc, finding
    // Every concept carries at least one source code.
    std::set<ConceptId> coded;
    for (const auto& [code, cui] : g.code_map) coded.insert(cui);
    CHECK(coded.size() == g.concepts.size());

    // Each drug infers treats over its class edge; each disease reaches a
    // concrete drug through may_be_treated_by.
    std::size_t climb_cross = 0, cross_descend = 0;
    for (const auto& [id, c] : g.concepts) {
        for (const auto& [tid, tc] : g.concepts) {
            if (id == tid) continue;
            if (c.kind == SemanticKind::medication && tc.kind == SemanticKind::diagnosis &&
                in_closure(g, id, "treats", tid, 3)) {
                ++climb_cross;
            }
            if (c.kind == SemanticKind::diagnosis && tc.kind == SemanticKind::medication &&
                in_closure(g, id, "may_be_treated_by", tid, 3)) {
                ++cross_descend;
            }
        }
    }
    CHECK(climb_cross == 3 * 2 * 2);   // every drug x every same-cluster disease
    CHECK(cross_descend == 3 * 2 * 2);

    CHECK_THROWS_AS((void)build_synthetic_ontology(SynthOntologyConfig{0, 1, 1, true, 0}),
                    ConfigError);
}

TEST_CASE("planted facts are closure-true, attested, and coded") {
    SynthOntologyConfig ocfg;
    ocfg.clusters = 4;
    ocfg.seed = 9;
    SemanticGraph g = build_synthetic_ontology(ocfg);

    SynthCorpusConfig ccfg;
    ccfg.n_admissions = 24;
    ccfg.min_facts = 2;
    ccfg.max_facts = 4;
    ccfg.min_filler = 5;
    ccfg.max_filler = 20;
    ccfg.seed = 10;
    SyntheticCorpus corpus = generate_synthetic_corpus(g, ccfg);

    REQUIRE(corpus.admissions.size() == 24);
    std::map<std::string, std::vector<PlantedFact>> by_admission;
    for (const auto& f : corpus.planted) by_admission[f.admission_id].push_back(f);

    for (const auto& adm : corpus.admissions) {
        const auto& facts = by_admission[adm.admission_id];
        CHECK(facts.size() >= 2);
        CHECK(facts.size() <= 4);

        Context ctx = extract_context(adm, default_section_whitelist());
        std::set<ConceptId> attested = matched_concepts(g, ctx.text);
        std::set<ConceptId> coded = normalize_admission(g, adm.events);

        std::set<ConceptId> fact_entities;
        for (const auto& f : facts) {
            CHECK(in_closure(g, f.head, f.relation, f.tail, 3));
            CHECK(attested.count(f.head) == 1);
            CHECK(attested.count(f.tail) == 1);
            CHECK(coded.count(f.head) == 1);
            CHECK(coded.count(f.tail) == 1);
            // Entity-disjointness within the admission.
            CHECK(fact_entities.insert(f.head).second);
            CHECK(fact_entities.insert(f.tail).second);
        }

        // The statement templates never leak into the narrative verbatim.
        for (const auto& f : facts) {
            std::string rendered = TemplateLibrary::defaults().render(
                f.relation, g.at(f.head).preferred_name, g.at(f.tail).preferred_name);
            CHECK(ctx.text.find(rendered) == std::string::npos);
        }
    }
}

TEST_CASE("synthetic corpus is seed-deterministic") {
    SynthOntologyConfig ocfg;
    ocfg.clusters = 3;
    ocfg.seed = 2;
    SemanticGraph g = build_synthetic_ontology(ocfg);

    SynthCorpusConfig ccfg;
    ccfg.n_admissions = 6;
    ccfg.min_filler = 5;
    ccfg.max_filler = 15;
    ccfg.seed = 77;

    SyntheticCorpus a = generate_synthetic_corpus(g, ccfg);
    SyntheticCorpus b = generate_synthetic_corpus(g, ccfg);
    CHECK(a.admissions == b.admissions);
    REQUIRE(a.planted.size() == b.planted.size());
    for (std::size_t i = 0; i < a.planted.size(); ++i) {
        CHECK(a.planted[i].head == b.planted[i].head);
        CHECK(a.planted[i].relation == b.planted[i].relation);
        CHECK(a.planted[i].tail == b.planted[i].tail);
    }

    ccfg.seed = 78;
    SyntheticCorpus c = generate_synthetic_corpus(g, ccfg);
    CHECK(a.admissions != c.admissions);
}

TEST_CASE("junk codes surface exactly as configured") {
    SynthOntologyConfig ocfg;
    ocfg.clusters = 3;
    ocfg.seed = 3;
    SemanticGraph g = build_synthetic_ontology(ocfg);

    SynthCorpusConfig ccfg;
    ccfg.n_admissions = 8;
    ccfg.min_filler = 2;
    ccfg.max_filler = 6;
    ccfg.junk_code_rate = 1.0;
    ccfg.seed = 4;
    SyntheticCorpus corpus = generate_synthetic_corpus(g, ccfg);

    for (const auto& adm : corpus.admissions) {
        std::vector<SourceCode> unmapped;
        normalize_admission(g, adm.events, CodePolicy::skip, &unmapped);
        CHECK(unmapped.size() == 1);
        CHECK(unmapped[0].vocabulary == "JUNKVOC");
        CHECK(throws_with<IntegrityError>(
            [&] { normalize_admission(g, adm.events, CodePolicy::strict); }, "JUNKVOC"));
    }
}

TEST_CASE("corpus generation rejects impossible requests") {
    SemanticGraph empty;
    empty.add_concept(Concept{"A", "alpha", {}, SemanticKind::diagnosis});
    SynthCorpusConfig cfg;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(empty, cfg), CapacityError);

    SynthOntologyConfig ocfg;
    ocfg.clusters = 2;
    ocfg.seed = 1;
    SemanticGraph g = build_synthetic_ontology(ocfg);
    SynthCorpusConfig bad;
    bad.min_facts = 0;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(g, bad), ConfigError);
    bad = SynthCorpusConfig{};
    bad.n_admissions = 0;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(g, bad), ConfigError);
    bad = SynthCorpusConfig{};
    bad.max_filler = 1;
    bad.min_filler = 2;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(g, bad), ConfigError);
}
