// quadmed: ontology-grounded four-quadrant statement benchmark and
// risk-aware preference trainer over synthetic patient records.
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quadmed/errors.hpp"
#include "quadmed/pipeline.hpp"

namespace {

using namespace quadmed;

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    bool strict = false;
};

RunContext context_from(const GlobalArgs& args) {
    return make_run_context(load_config(args.config_path), args.seed, args.strict);
}

void print_summaries(const std::vector<VariantSummary>& summaries, const char* heading) {
    std::printf("%s\n", heading);
    for (const auto& s : summaries) {
        std::printf("  %-6s accuracy %.4f  macro-F1 %.4f  HSR %s  TIR %s\n", s.variant.c_str(),
                    s.accuracy, s.macro_f1, s.hsr ? std::to_string(*s.hsr).c_str() : "-",
                    s.tir ? std::to_string(*s.tir).c_str() : "-");
    }
}

void print_ablation(const std::vector<AblationRow>& rows, const char* heading) {
    std::printf("%s\n  %-8s %-10s %-10s %-10s\n", heading, "lambda", "macro_f1", "hsr", "tir");
    for (const auto& r : rows) {
        std::printf("  %-8g %-10.4f %-10s %-10s\n", r.lambda, r.macro_f1,
                    r.hsr ? std::to_string(*r.hsr).c_str() : "-",
                    r.tir ? std::to_string(*r.tir).c_str() : "-");
    }
}

int dispatch(const std::string& command, const GlobalArgs& args, const std::string& report_input) {
    if (command == "build-graph") {
        GraphStats stats = cmd_build_graph(context_from(args));
        std::printf("graph: %zu concepts, %zu edges, %zu relation labels\n", stats.concepts,
                    stats.edges, stats.relation_histogram.size());
    } else if (command == "synth-corpus") {
        cmd_synth_corpus(context_from(args));
        std::printf("corpus written\n");
    } else if (command == "generate") {
        GenerationReport rep = cmd_generate(context_from(args));
        std::printf("dataset: %zu samples over %zu/%zu admissions (Q1 %zu, Q2 %zu, Q3 %zu, Q4 "
                    "%zu; %zu partial sets dropped)\n",
                    rep.samples, rep.admissions_used, rep.admissions_total, rep.quadrant_counts[0],
                    rep.quadrant_counts[1], rep.quadrant_counts[2], rep.quadrant_counts[3],
                    rep.dropped_partial_sets);
    } else if (command == "train-eval") {
        if (!args.seeds.empty()) {
            print_summaries(cmd_train_eval_seeds(context_from(args), args.seeds),
                            "mean over seeds (test split):");
        } else {
            print_summaries(cmd_train_eval(context_from(args)), "test split:");
        }
    } else if (command == "ablate") {
        if (!args.seeds.empty()) {
            print_ablation(cmd_ablate_seeds(context_from(args), args.seeds),
                           "median over seeds (validation split):");
        } else {
            print_ablation(cmd_ablate(context_from(args)), "validation split:");
        }
    } else if (command == "report") {
        std::cout << cmd_report(context_from(args), report_input);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ontology-grounded four-quadrant benchmark and CoRFu trainer"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "pipeline config file (JSON)")
        ->required()
        ->envname("QUADMED_CONFIG");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "override the config master seed");
    app.add_option("--seeds", args.seeds,
                   "comma-separated seed list for multi-seed train-eval/ablate")
        ->delimiter(',');
    app.add_flag("--strict", args.strict, "treat unmapped source codes as errors");

    app.add_subcommand("build-graph", "load or synthesize the ontology and write stats");
    app.add_subcommand("synth-corpus", "generate the synthetic admission corpus");
    app.add_subcommand("generate", "build the four-quadrant dataset and split");
    app.add_subcommand("train-eval", "train SFT, DPO and CoRFu; evaluate on the test split");
    app.add_subcommand("ablate", "sweep lambda and tabulate macro-F1/HSR/TIR");
    auto* report_cmd = app.add_subcommand("report", "render a stored report as percentages");
    std::string report_input = "reports/corfu.json";
    report_cmd->add_option("--input", report_input, "report file, relative to the output root");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) args.seed = seed_value;

    try {
        return dispatch(app.get_subcommands().front()->get_name(), args, report_input);
    } catch (const quadmed::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
