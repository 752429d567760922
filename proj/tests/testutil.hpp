#pragma once

// Shared scaffolding for the unit-test binaries: scratch directories,
// exception message probes, and the hand-built graph fixtures the module
// tests exercise.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <string_view>

#include "quadmed/ontology.hpp"

namespace quadmed::testing {

// Self-cleaning scratch directory under the system temp root.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("quadmed-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

// True when fn() throws E and the message contains `needle`.
template <typename E, typename Fn>
bool throws_with(Fn&& fn, std::string_view needle) {
    try {
        fn();
    } catch (const E& e) {
        return std::string_view(e.what()).find(needle) != std::string_view::npos;
    } catch (...) {
        return false;
    }
    return false;
}

// The published two-hop example: a drug climbs into its class, the class
// treats a disease.
inline SemanticGraph lisinopril_graph() {
    SemanticGraph g;
    g.add_concept(Concept{"C0023861", "Lisinopril", {"Prinivil", "Zestril"},
                          SemanticKind::medication});
    g.add_concept(Concept{"C0003028", "Angiotensin-Converting Enzyme Inhibitors",
                          {"ACE inhibitors"}, SemanticKind::drug_class});
    g.add_concept(Concept{"C0020538", "Hypertensive disease", {"Hypertension"},
                          SemanticKind::diagnosis});
    g.add_edge("C0023861", "is_a", "C0003028");
    g.add_edge("C0003028", "treats", "C0020538");
    return g;
}

// One disease/drug cluster with both inference shapes: drug is_a class with
// class treats disease (climb-cross), and disease may_be_treated_by class
// with drugs below it (cross-descend). Two sibling diseases and two sibling
// drugs give the statement forge swap material.
inline SemanticGraph cluster_graph() {
    SemanticGraph g;
    g.add_concept(Concept{"D1", "cardiac amyloidosis type 1", {}, SemanticKind::diagnosis});
    g.add_concept(Concept{"D2", "cardiac amyloidosis type 2", {}, SemanticKind::diagnosis});
    g.add_concept(Concept{"DC", "infiltrative cardiomyopathy", {}, SemanticKind::diagnosis});
    g.add_concept(Concept{"M1", "tafamidis", {}, SemanticKind::medication});
    g.add_concept(Concept{"M2", "diflunisal", {}, SemanticKind::medication});
    g.add_concept(Concept{"MC", "transthyretin stabilizers", {}, SemanticKind::drug_class});
    g.add_concept(Concept{"P1", "endomyocardial biopsy", {}, SemanticKind::procedure});
    g.add_edge("D1", "is_a", "DC");
    g.add_edge("D2", "is_a", "DC");
    g.add_edge("M1", "is_a", "MC");
    g.add_edge("M2", "is_a", "MC");
    g.add_edge("MC", "treats", "DC");
    g.add_edge("DC", "may_be_treated_by", "MC");
    g.add_edge("DC", "has_associated_procedure", "P1");
    return g;
}

}  // namespace quadmed::testing
