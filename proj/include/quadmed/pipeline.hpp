#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadmed/corpus.hpp"
#include "quadmed/forge.hpp"
#include "quadmed/io.hpp"
#include "quadmed/ontology.hpp"
#include "quadmed/synthetic.hpp"
#include "quadmed/trainer.hpp"

namespace quadmed {

struct PipelineConfig {
    // Ontology TSV paths, relative to the output root unless absolute.
    std::filesystem::path concepts_path = "CONCEPTS.tsv";
    std::filesystem::path relations_path = "RELATIONS.tsv";
    std::filesystem::path mappings_path = "MAPPINGS.tsv";
    // When set, build-graph synthesizes the TSVs if they are missing.
    std::optional<SynthOntologyConfig> synthetic_ontology;

    std::filesystem::path corpus_path = "ADMISSIONS.jsonl";
    SynthCorpusConfig corpus;

    ForgeConfig forge;
    std::vector<std::string> section_whitelist = default_section_whitelist();

    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};

    FeatureMode feature_mode = FeatureMode::lexical;
    TrainConfig trainer;

    std::vector<double> lambdas{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};

    std::uint64_t seed = 42;
    std::filesystem::path output_root = "out";
};

// Parses and validates a config file. Ratios must sum to 1 within 1e-9 and
// the seed must be present. Unknown keys are rejected to catch typos.
PipelineConfig load_config(const std::filesystem::path& path);

// Effective output root: QUADMED_OUTPUT_ROOT env var wins over the config.
std::filesystem::path resolve_output_root(const PipelineConfig& config);

struct RunContext {
    PipelineConfig config;
    std::filesystem::path root;        // effective output root
    std::uint64_t master_seed = 0;     // config seed unless --seed overrides
    bool strict_codes = false;
    std::string config_digest;

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : root / p;
    }
};

RunContext make_run_context(const PipelineConfig& config, std::optional<std::uint64_t> seed,
                            bool strict);

// MANIFEST.json bookkeeping: artifact digests (sorted by path) plus step
// timings. Reruns with identical config and inputs reproduce the digest
// list; timings are informational and excluded from that guarantee.
inline constexpr const char* kManifestVersion = "0.1.0";

void manifest_record(const RunContext& run, const std::string& step, double seconds,
                     const std::vector<std::filesystem::path>& artifacts);

struct GraphStats {
    std::size_t concepts = 0;
    std::size_t edges = 0;
    std::map<std::string, std::size_t> relation_histogram;
};

GraphStats cmd_build_graph(const RunContext& run);
void cmd_synth_corpus(const RunContext& run);

struct GenerationReport {
    std::size_t admissions_total = 0;
    std::size_t admissions_used = 0;
    std::vector<std::pair<std::string, std::string>> unusable;  // id, reason
    std::size_t samples = 0;
    std::array<std::size_t, 4> quadrant_counts{};
    std::map<std::string, std::size_t> relation_counts;
    std::map<std::string, std::map<std::string, std::size_t>> omissions;  // quadrant -> reason -> n
    std::size_t dropped_partial_sets = 0;
};

GenerationReport cmd_generate(const RunContext& run);

struct VariantSummary {
    std::string variant;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> hsr;
    std::optional<double> tir;
};

// Trains SFT, vanilla DPO (CoRFu at lambda = 0), and CoRFu at the config
// lambda; writes MODEL/TRAINLOG/REPORT artifacts and returns test-split
// summaries in that order.
std::vector<VariantSummary> cmd_train_eval(const RunContext& run);

std::vector<AblationRow> cmd_ablate(const RunContext& run);

// Renders a stored report as Table-style percentages to the returned string.
std::string cmd_report(const RunContext& run, const std::filesystem::path& report_path);

// Full chain for one master seed: graph -> corpus -> generate -> train-eval.
std::vector<VariantSummary> run_all(const RunContext& run);

// Multi-seed drivers: rerun the full chain per seed under seed-<v>/ and
// aggregate (mean reports for train-eval, per-lambda medians for ablate).
RunContext seed_sub_run(const RunContext& run, std::uint64_t seed);
std::vector<VariantSummary> cmd_train_eval_seeds(const RunContext& run,
                                                 const std::vector<std::uint64_t>& seeds);
std::vector<AblationRow> cmd_ablate_seeds(const RunContext& run,
                                          const std::vector<std::uint64_t>& seeds);

}  // namespace quadmed
