#include "quadmed/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "quadmed/errors.hpp"
#include "quadmed/metrics.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

namespace {

// Rejects unknown keys so config typos fail loudly instead of silently
// falling back to defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(keys.begin(), keys.end(),
                         [&](const char* k) { return key == k; })) {
            throw ConfigError("unknown config key \"" + key + "\" in " + where);
        }
    }
}

double require_number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number()) {
        throw ConfigError(where + " needs numeric \"" + std::string(key) + "\"");
    }
    return j[key].get<double>();
}

}  // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw NotFoundError("config file not found: " + path.string());
    }
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ParseError(path.string(), 1, "invalid JSON");

    check_keys(j, "config root",
               {"ontology", "corpus", "generation", "split", "trainer", "lambdas", "seed",
                "output_root"});
    PipelineConfig c;

    if (!j.contains("seed") || !j["seed"].is_number_unsigned()) {
        throw ConfigError("config needs a non-negative integer \"seed\"");
    }
    c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output_root")) c.output_root = j["output_root"].get<std::string>();

    if (j.contains("ontology")) {
        const json& o = j["ontology"];
        check_keys(o, "ontology", {"concepts", "relations", "mappings", "synthetic"});
        if (o.contains("concepts")) c.concepts_path = o["concepts"].get<std::string>();
        if (o.contains("relations")) c.relations_path = o["relations"].get<std::string>();
        if (o.contains("mappings")) c.mappings_path = o["mappings"].get<std::string>();
        if (o.contains("synthetic")) {
            const json& s = o["synthetic"];
            check_keys(s, "ontology.synthetic",
                       {"clusters", "diseases_per_cluster", "drugs_per_class", "chain"});
            SynthOntologyConfig sc;
            if (s.contains("clusters")) sc.clusters = s["clusters"].get<int>();
            if (s.contains("diseases_per_cluster")) {
                sc.diseases_per_cluster = s["diseases_per_cluster"].get<int>();
            }
            if (s.contains("drugs_per_class")) sc.drugs_per_class = s["drugs_per_class"].get<int>();
            if (s.contains("chain")) sc.chain = s["chain"].get<bool>();
            if (sc.clusters < 2 || sc.diseases_per_cluster < 1 || sc.drugs_per_class < 2) {
                throw ConfigError("synthetic ontology needs >= 2 clusters, >= 1 disease and >= 2 "
                                  "drugs per cluster");
            }
            c.synthetic_ontology = sc;
        }
    }

    if (j.contains("corpus")) {
        const json& o = j["corpus"];
        check_keys(o, "corpus",
                   {"path", "n_admissions", "min_facts", "max_facts", "min_filler", "max_filler",
                    "distractor_rate", "noise_code_rate", "junk_code_rate"});
        if (o.contains("path")) c.corpus_path = o["path"].get<std::string>();
        if (o.contains("n_admissions")) c.corpus.n_admissions = o["n_admissions"].get<int>();
        if (o.contains("min_facts")) c.corpus.min_facts = o["min_facts"].get<int>();
        if (o.contains("max_facts")) c.corpus.max_facts = o["max_facts"].get<int>();
        if (o.contains("min_filler")) c.corpus.min_filler = o["min_filler"].get<int>();
        if (o.contains("max_filler")) c.corpus.max_filler = o["max_filler"].get<int>();
        if (o.contains("distractor_rate")) {
            c.corpus.distractor_rate = o["distractor_rate"].get<double>();
        }
        if (o.contains("noise_code_rate")) {
            c.corpus.noise_code_rate = o["noise_code_rate"].get<double>();
        }
        if (o.contains("junk_code_rate")) c.corpus.junk_code_rate = o["junk_code_rate"].get<double>();
        if (c.corpus.n_admissions < 4 || c.corpus.min_facts < 1 ||
            c.corpus.max_facts < c.corpus.min_facts) {
            throw ConfigError("corpus needs n_admissions >= 4 and 1 <= min_facts <= max_facts");
        }
    }

    if (j.contains("generation")) {
        const json& o = j["generation"];
        check_keys(o, "generation",
                   {"attestation", "max_hops", "min_distractor_hops", "enabled_quadrants",
                    "max_facts_per_admission", "section_whitelist", "templates"});
        if (o.contains("attestation")) {
            std::string mode = o["attestation"].get<std::string>();
            if (mode == "text") {
                c.forge.attestation = AttestationMode::text;
            } else if (mode == "text_or_events") {
                c.forge.attestation = AttestationMode::text_or_events;
            } else {
                throw ConfigError("attestation must be \"text\" or \"text_or_events\"");
            }
        }
        if (o.contains("max_hops")) c.forge.max_hops = o["max_hops"].get<int>();
        if (o.contains("min_distractor_hops")) {
            c.forge.min_distractor_hops = o["min_distractor_hops"].get<int>();
        }
        if (o.contains("enabled_quadrants")) {
            c.forge.enabled_quadrants = {false, false, false, false};
            for (const auto& q : o["enabled_quadrants"]) {
                c.forge.enabled_quadrants[index_of(parse_quadrant(q.get<std::string>()))] = true;
            }
            if (!c.forge.enabled_quadrants[0]) {
                throw ConfigError("Q1 cannot be disabled: every quadrant set anchors on it");
            }
        }
        if (o.contains("max_facts_per_admission")) {
            c.forge.max_facts_per_admission = o["max_facts_per_admission"].get<int>();
            if (c.forge.max_facts_per_admission < 1) {
                throw ConfigError("max_facts_per_admission must be positive");
            }
        }
        if (o.contains("section_whitelist")) {
            c.section_whitelist = o["section_whitelist"].get<std::vector<std::string>>();
            if (c.section_whitelist.empty()) {
                throw ConfigError("section_whitelist cannot be empty");
            }
        }
        if (o.contains("templates")) {
            c.forge.templates = TemplateLibrary::load(o["templates"].get<std::string>());
        }
    }

    if (j.contains("split")) {
        const json& o = j["split"];
        check_keys(o, "split", {"ratios"});
        if (o.contains("ratios")) {
            auto r = o["ratios"].get<std::vector<double>>();
            if (r.size() != 3) throw ConfigError("split.ratios must have 3 entries");
            c.split_ratios = {r[0], r[1], r[2]};
        }
    }
    double ratio_sum = c.split_ratios[0] + c.split_ratios[1] + c.split_ratios[2];
    if (std::abs(ratio_sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1.0 within 1e-9");
    }

    if (j.contains("trainer")) {
        const json& o = j["trainer"];
        check_keys(o, "trainer",
                   {"feature_mode", "beta", "lambda", "regime", "learning_rate", "epochs"});
        if (o.contains("feature_mode")) {
            c.feature_mode = parse_feature_mode(o["feature_mode"].get<std::string>());
        }
        if (o.contains("beta")) c.trainer.beta = require_number(o, "beta", "trainer");
        if (o.contains("lambda")) c.trainer.lambda = require_number(o, "lambda", "trainer");
        if (o.contains("regime")) c.trainer.regime = parse_regime(o["regime"].get<std::string>());
        if (o.contains("learning_rate")) {
            c.trainer.learning_rate = require_number(o, "learning_rate", "trainer");
        }
        if (o.contains("epochs")) c.trainer.epochs = o["epochs"].get<int>();
        if (c.trainer.beta <= 0.0) throw ConfigError("trainer.beta must be positive");
        if (c.trainer.lambda < 0.0) throw ConfigError("trainer.lambda must be non-negative");
        if (c.trainer.learning_rate <= 0.0 || c.trainer.epochs < 1) {
            throw ConfigError("trainer needs positive learning_rate and epochs");
        }
    }

    if (j.contains("lambdas")) {
        c.lambdas = j["lambdas"].get<std::vector<double>>();
        if (c.lambdas.empty()) throw ConfigError("lambdas cannot be empty");
        for (double l : c.lambdas) {
            if (l < 0.0) throw ConfigError("lambdas must be non-negative");
        }
    }

    return c;
}

std::filesystem::path resolve_output_root(const PipelineConfig& config) {
    if (const char* env = std::getenv("QUADMED_OUTPUT_ROOT"); env && *env) {
        return std::filesystem::path(env);
    }
    return config.output_root;
}

namespace {

// Digest of the canonicalized config (parsed form, master seed applied)
// so formatting changes do not alter run identity.
std::string config_digest_of(const PipelineConfig& config, std::uint64_t master_seed,
                             bool strict) {
    json canon;
    canon["seed"] = master_seed;
    canon["concepts"] = config.concepts_path.string();
    canon["relations"] = config.relations_path.string();
    canon["mappings"] = config.mappings_path.string();
    if (config.synthetic_ontology) {
        const auto& s = *config.synthetic_ontology;
        canon["synthetic"] = json{{"clusters", s.clusters},
                                  {"diseases_per_cluster", s.diseases_per_cluster},
                                  {"drugs_per_class", s.drugs_per_class},
                                  {"chain", s.chain}};
    }
    canon["corpus"] = json{{"path", config.corpus_path.string()},
                           {"n_admissions", config.corpus.n_admissions},
                           {"min_facts", config.corpus.min_facts},
                           {"max_facts", config.corpus.max_facts},
                           {"min_filler", config.corpus.min_filler},
                           {"max_filler", config.corpus.max_filler},
                           {"distractor_rate", config.corpus.distractor_rate},
                           {"noise_code_rate", config.corpus.noise_code_rate},
                           {"junk_code_rate", config.corpus.junk_code_rate}};
    canon["generation"] =
        json{{"attestation", config.forge.attestation == AttestationMode::text ? "text"
                                                                               : "text_or_events"},
             {"max_hops", config.forge.max_hops},
             {"min_distractor_hops", config.forge.min_distractor_hops},
             {"enabled_quadrants", config.forge.enabled_quadrants},
             {"max_facts_per_admission", config.forge.max_facts_per_admission},
             {"section_whitelist", config.section_whitelist}};
    canon["split"] = config.split_ratios;
    canon["trainer"] = json{{"feature_mode", to_string(config.feature_mode)},
                            {"beta", config.trainer.beta},
                            {"lambda", config.trainer.lambda},
                            {"regime", to_string(config.trainer.regime)},
                            {"learning_rate", config.trainer.learning_rate},
                            {"epochs", config.trainer.epochs}};
    canon["lambdas"] = config.lambdas;
    canon["strict"] = strict;
    return sha256_hex(canon.dump());
}

}  // namespace

RunContext make_run_context(const PipelineConfig& config, std::optional<std::uint64_t> seed,
                            bool strict) {
    RunContext run;
    run.config = config;
    run.root = resolve_output_root(config);
    run.master_seed = seed.value_or(config.seed);
    run.strict_codes = strict;
    run.config_digest = config_digest_of(config, run.master_seed, strict);
    return run;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void manifest_record(const RunContext& run, const std::string& step, double seconds,
                     const std::vector<std::filesystem::path>& artifacts) {
    std::filesystem::path manifest_path = run.root / "MANIFEST.json";
    json m;
    if (std::filesystem::exists(manifest_path)) {
        m = json::parse(read_file(manifest_path), nullptr, false);
        if (m.is_discarded() || !m.is_object()) m = json::object();
    } else {
        m = json::object();
    }
    m["version"] = kManifestVersion;
    m["config_sha256"] = run.config_digest;

    std::map<std::string, json> entries;
    if (m.contains("artifacts") && m["artifacts"].is_array()) {
        for (const auto& a : m["artifacts"]) {
            if (a.contains("path")) entries[a["path"].get<std::string>()] = a;
        }
    }
    for (const auto& artifact : artifacts) {
        std::filesystem::path rel = artifact.lexically_relative(run.root);
        std::string key = (rel.empty() || rel.native().rfind("..", 0) == 0)
                              ? artifact.string()
                              : rel.generic_string();
        entries[key] = json{{"path", key},
                            {"sha256", sha256_file(artifact)},
                            {"bytes", std::filesystem::file_size(artifact)}};
    }
    json list = json::array();
    for (const auto& [key, entry] : entries) list.push_back(entry);
    m["artifacts"] = list;

    if (!m.contains("timings") || !m["timings"].is_object()) m["timings"] = json::object();
    m["timings"][step] = seconds;
    write_file(manifest_path, m.dump(2) + "\n");
}

namespace {

class StepTimer {
public:
    StepTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

SemanticGraph load_graph(const RunContext& run) {
    return load_ontology(run.resolve(run.config.concepts_path),
                         run.resolve(run.config.relations_path),
                         run.resolve(run.config.mappings_path));
}

}  // namespace

// ---------------------------------------------------------------------------
// build-graph
// ---------------------------------------------------------------------------

GraphStats cmd_build_graph(const RunContext& run) {
    StepTimer timer;
    std::filesystem::path concepts = run.resolve(run.config.concepts_path);
    std::filesystem::path relations = run.resolve(run.config.relations_path);
    std::filesystem::path mappings = run.resolve(run.config.mappings_path);

    bool missing = !std::filesystem::exists(concepts) || !std::filesystem::exists(relations) ||
                   !std::filesystem::exists(mappings);
    if (missing) {
        if (!run.config.synthetic_ontology) {
            throw NotFoundError("ontology files missing and no synthetic ontology configured");
        }
        SynthOntologyConfig sc = *run.config.synthetic_ontology;
        sc.seed = Rng::derive(run.master_seed, "ontology");
        write_ontology(build_synthetic_ontology(sc), concepts, relations, mappings);
    }

    SemanticGraph g = load_graph(run);
    GraphStats stats;
    stats.concepts = g.concepts.size();
    stats.edges = g.edges.size();
    for (const auto& e : g.edges) stats.relation_histogram[e.relation] += 1;

    json hist = json::object();
    for (const auto& [label, count] : stats.relation_histogram) hist[label] = count;
    json j;
    j["concepts"] = stats.concepts;
    j["edges"] = stats.edges;
    j["relations"] = hist;
    std::filesystem::path stats_path = run.root / "stats.json";
    write_file(stats_path, j.dump(2) + "\n");

    manifest_record(run, "build-graph", timer.seconds(),
                    {concepts, relations, mappings, stats_path});
    return stats;
}

// ---------------------------------------------------------------------------
// synth-corpus
// ---------------------------------------------------------------------------

void cmd_synth_corpus(const RunContext& run) {
    StepTimer timer;
    SemanticGraph g = load_graph(run);
    SynthCorpusConfig cc = run.config.corpus;
    cc.seed = Rng::derive(run.master_seed, "corpus");
    SyntheticCorpus corpus = generate_synthetic_corpus(g, cc);
    std::filesystem::path corpus_path = run.resolve(run.config.corpus_path);
    write_admissions(corpus_path, corpus.admissions);
    manifest_record(run, "synth-corpus", timer.seconds(), {corpus_path});
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

GenerationReport cmd_generate(const RunContext& run) {
    StepTimer timer;
    SemanticGraph g = load_graph(run);
    std::filesystem::path corpus_path = run.resolve(run.config.corpus_path);
    if (!std::filesystem::exists(corpus_path)) {
        throw NotFoundError("corpus not found: " + corpus_path.string());
    }
    std::vector<Admission> admissions = dedup_patients(parse_admissions(corpus_path));
    const ForgeConfig& forge = run.config.forge;
    std::uint64_t gen_seed = Rng::derive(run.master_seed, "generate");
    CodePolicy policy = run.strict_codes ? CodePolicy::strict : CodePolicy::skip;

    GenerationReport report;
    report.admissions_total = admissions.size();

    int n_enabled = 0;
    for (bool e : forge.enabled_quadrants) n_enabled += e ? 1 : 0;

    std::vector<Sample> samples;
    for (const Admission& admission : admissions) {
        Context context;
        try {
            context = extract_context(admission, run.config.section_whitelist);
        } catch (const IntegrityError& e) {
            report.unusable.emplace_back(admission.admission_id, e.what());
            continue;
        }
        std::set<ConceptId> events = normalize_admission(g, admission.events, policy);
        std::set<ConceptId> attested = attested_concepts(g, context, events, forge);
        std::vector<Fact> facts = extract_supported_facts(g, context, events, forge);
        if (facts.empty()) {
            report.unusable.emplace_back(admission.admission_id, "no supported facts");
            continue;
        }
        if (static_cast<int>(facts.size()) > forge.max_facts_per_admission) {
            // Seeded subsample, order restored, so the cap does not bias
            // toward lexicographically early concept ids.
            Rng cap_rng(Rng::derive(gen_seed, "cap-" + admission.admission_id));
            std::vector<std::size_t> order(facts.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            cap_rng.shuffle(order);
            order.resize(static_cast<std::size_t>(forge.max_facts_per_admission));
            std::sort(order.begin(), order.end());
            std::vector<Fact> kept;
            kept.reserve(order.size());
            for (std::size_t idx : order) kept.push_back(facts[idx]);
            facts = std::move(kept);
        }

        AdmissionView view{context, events, attested, facts};
        bool used = false;
        for (const Fact& fact : facts) {
            QuadrantSet qs = generate_quadrant_set(g, view, fact, gen_seed, forge);
            for (const Omission& o : qs.omissions) {
                report.omissions[to_string(o.quadrant)][o.reason] += 1;
            }
            if (static_cast<int>(qs.samples.size()) < n_enabled) {
                // Partial sets would unbalance the quadrants; drop the whole
                // set and account for it.
                report.dropped_partial_sets += 1;
                continue;
            }
            for (Sample& s : qs.samples) {
                report.quadrant_counts[index_of(s.label)] += 1;
                report.relation_counts[s.statement.fact.relation] += 1;
                samples.push_back(std::move(s));
                used = true;
            }
        }
        if (used) {
            report.admissions_used += 1;
        } else {
            report.unusable.emplace_back(admission.admission_id,
                                         "no fact produced a complete quadrant set");
        }
    }
    report.samples = samples.size();

    if (samples.empty()) {
        std::string msg = "generation yielded no samples; first unusable admissions:";
        for (std::size_t i = 0; i < report.unusable.size() && i < 5; ++i) {
            msg += "\n  " + report.unusable[i].first + ": " + report.unusable[i].second;
        }
        throw IntegrityError(msg);
    }

    DatasetSplit split =
        assemble_and_split(samples, run.config.split_ratios, Rng::derive(run.master_seed, "split"));

    std::filesystem::path dataset_path = run.root / "DATASET.jsonl";
    std::filesystem::path split_path = run.root / "SPLIT.json";
    write_dataset(dataset_path, samples);
    write_split(split_path, split);

    // Per-split quadrant tallies for the generation report.
    std::map<std::string, Quadrant> label_by_id;
    for (const auto& s : samples) label_by_id[s.sample_id] = s.label;
    auto tally = [&](const std::vector<std::string>& ids) {
        json t = json::object();
        std::array<std::size_t, 4> counts{};
        for (const auto& id : ids) counts[index_of(label_by_id.at(id))] += 1;
        for (int q = 0; q < 4; ++q) t[to_string(static_cast<Quadrant>(q))] = counts[q];
        return t;
    };

    json j;
    j["admissions_total"] = report.admissions_total;
    j["admissions_used"] = report.admissions_used;
    json unusable = json::array();
    for (std::size_t i = 0; i < report.unusable.size() && i < 20; ++i) {
        unusable.push_back(json{{"admission_id", report.unusable[i].first},
                                {"reason", report.unusable[i].second}});
    }
    j["unusable_admissions"] = unusable;
    j["samples"] = report.samples;
    json qc = json::object();
    for (int q = 0; q < 4; ++q) {
        qc[to_string(static_cast<Quadrant>(q))] = report.quadrant_counts[q];
    }
    j["quadrant_counts"] = qc;
    json rc = json::object();
    for (const auto& [rel, n] : report.relation_counts) rc[rel] = n;
    j["relation_counts"] = rc;
    json om = json::object();
    for (const auto& [quadrant, reasons] : report.omissions) {
        json per = json::object();
        for (const auto& [reason, n] : reasons) per[reason] = n;
        om[quadrant] = per;
    }
    j["omissions"] = om;
    j["dropped_partial_sets"] = report.dropped_partial_sets;
    j["split_sizes"] = json{{"train", split.train.size()},
                            {"validation", split.validation.size()},
                            {"test", split.test.size()}};
    j["split_quadrant_counts"] = json{{"train", tally(split.train)},
                                      {"validation", tally(split.validation)},
                                      {"test", tally(split.test)}};
    auto dev = split_balance_deviation(samples, split);
    j["split_balance_deviation"] = dev;
    std::filesystem::path report_path = run.root / "GENERATION.json";
    write_file(report_path, j.dump(2) + "\n");

    manifest_record(run, "generate", timer.seconds(), {dataset_path, split_path, report_path});
    return report;
}

// ---------------------------------------------------------------------------
// train-eval
// ---------------------------------------------------------------------------

namespace {

struct LoadedSplits {
    FeaturizedSet train;
    FeaturizedSet validation;
    FeaturizedSet test;
};

LoadedSplits load_featurized_splits(const RunContext& run, const SemanticGraph& g) {
    std::filesystem::path dataset_path = run.root / "DATASET.jsonl";
    std::filesystem::path split_path = run.root / "SPLIT.json";
    for (const auto& p : {dataset_path, split_path}) {
        if (!std::filesystem::exists(p)) throw NotFoundError("artifact not found: " + p.string());
    }
    std::vector<Sample> samples = read_dataset(dataset_path);
    DatasetSplit split = read_split(split_path);

    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.sample_id] = &s;
    auto select = [&](const std::vector<std::string>& ids) {
        std::vector<Sample> part;
        part.reserve(ids.size());
        for (const auto& id : ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw IntegrityError("split references unknown sample " + id);
            part.push_back(*it->second);
        }
        return part;
    };

    LoadedSplits out;
    out.train = featurize_samples(g, select(split.train), run.config.feature_mode);
    out.validation = featurize_samples(g, select(split.validation), run.config.feature_mode);
    out.test = featurize_samples(g, select(split.test), run.config.feature_mode);
    return out;
}

VariantSummary summarize(const std::string& variant, const EvalReport& report) {
    VariantSummary s;
    s.variant = variant;
    s.accuracy = report.accuracy;
    s.macro_f1 = report.macro_f1;
    s.hsr = report.hsr;
    s.tir = report.tir;
    return s;
}

EvalReport eval_and_write(const RunContext& run, const std::string& variant,
                          const PolicyParams& params, const FeaturizedSet& test,
                          std::vector<std::filesystem::path>& artifacts) {
    std::vector<Prediction> preds = evaluate(params, test);
    EvalReport report = compute_report(build_confusion(preds));
    std::filesystem::path pred_path = run.root / "predictions" / (variant + ".jsonl");
    std::filesystem::path report_path = run.root / "reports" / (variant + ".json");
    write_predictions(pred_path, preds);
    write_report(report_path, report);
    artifacts.push_back(pred_path);
    artifacts.push_back(report_path);
    return report;
}

}  // namespace

std::vector<VariantSummary> cmd_train_eval(const RunContext& run) {
    StepTimer timer;
    SemanticGraph g = load_graph(run);
    LoadedSplits splits = load_featurized_splits(run, g);

    TrainConfig base = run.config.trainer;
    base.seed = run.master_seed;
    std::vector<std::filesystem::path> artifacts;
    std::vector<VariantSummary> summaries;

    SftResult sft = train_sft(splits.train, base);
    std::filesystem::path sft_model = run.root / "models" / "sft.json";
    write_model(sft_model, sft.params, base);
    artifacts.push_back(sft_model);
    summaries.push_back(summarize("sft", eval_and_write(run, "sft", sft.params, splits.test,
                                                        artifacts)));

    // Vanilla DPO is CoRFu with the penalty off.
    TrainConfig dpo_cfg = base;
    dpo_cfg.lambda = 0.0;
    CorfuResult dpo = train_corfu(sft.params, splits.train, dpo_cfg);
    std::filesystem::path dpo_model = run.root / "models" / "dpo.json";
    std::filesystem::path dpo_log = run.root / "trainlogs" / "dpo.jsonl";
    write_model(dpo_model, dpo.params, dpo_cfg);
    write_train_log(dpo_log, dpo.log);
    artifacts.push_back(dpo_model);
    artifacts.push_back(dpo_log);
    summaries.push_back(summarize("dpo", eval_and_write(run, "dpo", dpo.params, splits.test,
                                                        artifacts)));

    CorfuResult corfu = train_corfu(sft.params, splits.train, base);
    std::filesystem::path corfu_model = run.root / "models" / "corfu.json";
    std::filesystem::path corfu_log = run.root / "trainlogs" / "corfu.jsonl";
    write_model(corfu_model, corfu.params, base);
    write_train_log(corfu_log, corfu.log);
    artifacts.push_back(corfu_model);
    artifacts.push_back(corfu_log);
    summaries.push_back(summarize("corfu", eval_and_write(run, "corfu", corfu.params, splits.test,
                                                          artifacts)));

    manifest_record(run, "train-eval", timer.seconds(), artifacts);
    return summaries;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

std::vector<AblationRow> cmd_ablate(const RunContext& run) {
    StepTimer timer;
    SemanticGraph g = load_graph(run);
    LoadedSplits splits = load_featurized_splits(run, g);

    std::filesystem::path sft_model = run.root / "models" / "sft.json";
    if (!std::filesystem::exists(sft_model)) {
        throw NotFoundError("trained baseline not found (run train-eval first): " +
                            sft_model.string());
    }
    ModelFile init = read_model(sft_model);
    if (init.params.mode != run.config.feature_mode) {
        throw ConfigError("baseline feature mode " + to_string(init.params.mode) +
                          " does not match configured " + to_string(run.config.feature_mode));
    }

    TrainConfig cfg = run.config.trainer;
    cfg.seed = run.master_seed;
    std::vector<AblationRow> rows =
        lambda_sweep(init.params, splits.train, splits.validation, run.config.lambdas, cfg);

    std::filesystem::path tsv = run.root / "ABLATION.tsv";
    write_ablation_table(tsv, rows);

    json plot;
    json lambdas = json::array(), f1 = json::array(), hsr = json::array(), tir = json::array();
    for (const auto& r : rows) {
        lambdas.push_back(r.lambda);
        f1.push_back(r.macro_f1);
        hsr.push_back(r.hsr ? json(*r.hsr) : json(nullptr));
        tir.push_back(r.tir ? json(*r.tir) : json(nullptr));
    }
    plot["lambda"] = lambdas;
    plot["macro_f1"] = f1;
    plot["hsr"] = hsr;
    plot["tir"] = tir;
    std::filesystem::path plot_path = run.root / "ABLATION_PLOT.json";
    write_file(plot_path, plot.dump(2) + "\n");

    manifest_record(run, "ablate", timer.seconds(), {tsv, plot_path});
    return rows;
}

// ---------------------------------------------------------------------------
// report rendering
// ---------------------------------------------------------------------------

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
    return buf;
}

std::string pct(const std::optional<double>& v) { return v ? pct(*v) : "-"; }

}  // namespace

std::string cmd_report(const RunContext& run, const std::filesystem::path& report_path) {
    std::filesystem::path path = run.resolve(report_path);
    if (!std::filesystem::exists(path)) {
        throw NotFoundError("report not found: " + path.string());
    }
    EvalReport r = read_report(path);
    std::ostringstream out;
    out << "report: " << path.string() << "\n";
    out << "samples: " << r.total << "\n";
    out << "accuracy: " << pct(r.accuracy) << "%\n";
    out << "macro precision/recall/F1: " << pct(r.macro_precision) << "% / " << pct(r.macro_recall)
        << "% / " << pct(r.macro_f1) << "%\n";
    for (int q = 0; q < 4; ++q) {
        out << "F1(" << to_string(static_cast<Quadrant>(q)) << "): " << pct(r.per_quadrant[q].f1)
            << "%  (support " << r.per_quadrant[q].support << ")\n";
    }
    out << "HSR: " << pct(r.hsr) << (r.hsr ? "%" : "") << "\n";
    out << "TIR: " << pct(r.tir) << (r.tir ? "%" : "") << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// multi-seed drivers
// ---------------------------------------------------------------------------

std::vector<VariantSummary> run_all(const RunContext& run) {
    cmd_build_graph(run);
    cmd_synth_corpus(run);
    cmd_generate(run);
    return cmd_train_eval(run);
}

RunContext seed_sub_run(const RunContext& run, std::uint64_t seed) {
    RunContext sub = run;
    sub.root = run.root / ("seed-" + std::to_string(seed));
    sub.master_seed = seed;
    sub.config_digest = config_digest_of(sub.config, seed, sub.strict_codes);
    return sub;
}

namespace {

json summary_to_json(const VariantSummary& s) {
    json j;
    j["variant"] = s.variant;
    j["accuracy"] = s.accuracy;
    j["macro_f1"] = s.macro_f1;
    j["hsr"] = s.hsr ? json(*s.hsr) : json(nullptr);
    j["tir"] = s.tir ? json(*s.tir) : json(nullptr);
    return j;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& vals) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : vals) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> median_defined(std::vector<std::optional<double>> vals) {
    std::vector<double> defined;
    for (const auto& v : vals) {
        if (v) defined.push_back(*v);
    }
    if (defined.empty()) return std::nullopt;
    std::sort(defined.begin(), defined.end());
    std::size_t n = defined.size();
    return n % 2 == 1 ? defined[n / 2] : 0.5 * (defined[n / 2 - 1] + defined[n / 2]);
}

}  // namespace

std::vector<VariantSummary> cmd_train_eval_seeds(const RunContext& run,
                                                 const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("--seeds needs at least one value");
    std::map<std::string, std::vector<VariantSummary>> per_variant;
    json per_seed = json::array();
    for (std::uint64_t seed : seeds) {
        RunContext sub = seed_sub_run(run, seed);
        std::vector<VariantSummary> summaries = run_all(sub);
        json entry;
        entry["seed"] = seed;
        json variants = json::array();
        for (const auto& s : summaries) {
            per_variant[s.variant].push_back(s);
            variants.push_back(summary_to_json(s));
        }
        entry["variants"] = variants;
        per_seed.push_back(entry);
    }

    std::vector<VariantSummary> means;
    json mean_json = json::array();
    for (const std::string variant : {"sft", "dpo", "corfu"}) {
        const auto& rows = per_variant[variant];
        VariantSummary m;
        m.variant = variant;
        std::vector<std::optional<double>> hsrs, tirs;
        for (const auto& r : rows) {
            m.accuracy += r.accuracy / static_cast<double>(rows.size());
            m.macro_f1 += r.macro_f1 / static_cast<double>(rows.size());
            hsrs.push_back(r.hsr);
            tirs.push_back(r.tir);
        }
        m.hsr = mean_defined(hsrs);
        m.tir = mean_defined(tirs);
        means.push_back(m);
        mean_json.push_back(summary_to_json(m));
    }

    json j;
    json seed_list = json::array();
    for (auto s : seeds) seed_list.push_back(s);
    j["seeds"] = seed_list;
    j["per_seed"] = per_seed;
    j["mean"] = mean_json;
    std::filesystem::path mean_path = run.root / "MEAN_REPORT.json";
    write_file(mean_path, j.dump(2) + "\n");
    return means;
}

std::vector<AblationRow> cmd_ablate_seeds(const RunContext& run,
                                          const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("--seeds needs at least one value");
    std::vector<std::vector<AblationRow>> per_seed;
    for (std::uint64_t seed : seeds) {
        RunContext sub = seed_sub_run(run, seed);
        run_all(sub);
        per_seed.push_back(cmd_ablate(sub));
    }

    // Per-lambda medians across seeds; a metric missing for a seed just
    // drops out of that median.
    std::vector<AblationRow> medians;
    for (std::size_t i = 0; i < per_seed[0].size(); ++i) {
        AblationRow m;
        m.lambda = per_seed[0][i].lambda;
        std::vector<std::optional<double>> f1s, hsrs, tirs;
        for (const auto& rows : per_seed) {
            if (rows.size() != per_seed[0].size() || rows[i].lambda != m.lambda) {
                throw IntegrityError("ablation rows diverged across seeds");
            }
            f1s.push_back(rows[i].macro_f1);
            hsrs.push_back(rows[i].hsr);
            tirs.push_back(rows[i].tir);
        }
        m.macro_f1 = *median_defined(f1s);
        m.hsr = median_defined(hsrs);
        m.tir = median_defined(tirs);
        medians.push_back(m);
    }
    write_ablation_table(run.root / "ABLATION_MEDIAN.tsv", medians);
    return medians;
}

}  // namespace quadmed
