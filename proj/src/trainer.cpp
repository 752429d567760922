#include "quadmed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

std::string to_string(FeatureMode mode) {
    return mode == FeatureMode::oracle ? "oracle" : "lexical";
}

FeatureMode parse_feature_mode(const std::string& s) {
    if (s == "oracle") return FeatureMode::oracle;
    if (s == "lexical") return FeatureMode::lexical;
    throw ConfigError("unknown feature mode: \"" + s + "\"");
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::pairwise_q2: return "pairwise_q2";
        case Regime::pairwise_q3: return "pairwise_q3";
        case Regime::pairwise_q4: return "pairwise_q4";
        case Regime::mixed: return "mixed";
        case Regime::curriculum: return "curriculum";
    }
    return "mixed";
}

Regime parse_regime(const std::string& s) {
    if (s == "pairwise_q2") return Regime::pairwise_q2;
    if (s == "pairwise_q3") return Regime::pairwise_q3;
    if (s == "pairwise_q4") return Regime::pairwise_q4;
    if (s == "mixed") return Regime::mixed;
    if (s == "curriculum") return Regime::curriculum;
    throw ConfigError("unknown training regime: \"" + s + "\"");
}

int feature_dim(const SemanticGraph& g, FeatureMode mode) {
    if (mode == FeatureMode::lexical) return kLexicalDim;
    return 2 + 1 + 4 + static_cast<int>(g.relation_labels().size());
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

namespace {

// Per-context work shared by every statement over the same admission.
struct ContextInfo {
    std::set<ConceptId> attested;     // oracle mode
    std::set<std::string> tokens;     // lexical mode
};

ContextInfo build_context_info(const SemanticGraph& g, const Context& context, FeatureMode mode) {
    ContextInfo info;
    if (mode == FeatureMode::oracle) {
        info.attested = matched_concepts(g, context.text);
    } else {
        for (auto& tok : word_tokens(context.text)) info.tokens.insert(std::move(tok));
    }
    return info;
}

Vector featurize_oracle(const ContextInfo& info, const Statement& statement,
                        const SemanticGraph& g) {
    const Fact& f = statement.fact;
    const std::vector<std::string> labels = g.relation_labels();
    Vector x = Vector::Zero(2 + 1 + 4 + static_cast<int>(labels.size()));
    x(0) = info.attested.count(f.head) ? 1.0 : 0.0;
    x(1) = info.attested.count(f.tail) ? 1.0 : 0.0;
    x(2) = in_closure(g, f.head, f.relation, f.tail) ? 1.0 : 0.0;
    int d = undirected_distance(g, f.head, f.tail, 3);
    int bucket = d < 0 ? 3 : d - 1;  // 1, 2, 3, >=4-or-unreachable
    x(3 + bucket) = 1.0;
    auto it = std::lower_bound(labels.begin(), labels.end(), f.relation);
    if (it != labels.end() && *it == f.relation) {
        x(7 + static_cast<int>(it - labels.begin())) = 1.0;
    }
    return x;
}

Vector featurize_lexical(const ContextInfo& info, const Statement& statement) {
    Vector x = Vector::Zero(kLexicalDim);
    const std::vector<std::string> toks = word_tokens(statement.text);
    auto bucket = [](std::string_view prefix, const std::string& a, const std::string& b = "") {
        std::uint64_t h = fnv1a64(prefix);
        h = fnv1a64(a, h);
        if (!b.empty()) h = fnv1a64(b, fnv1a64("|", h));
        return h;
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
        x(static_cast<int>(bucket("u:", toks[i]) % kLexicalNgramBuckets)) += 1.0;
        if (i + 1 < toks.size()) {
            x(static_cast<int>(bucket("b:", toks[i], toks[i + 1]) % kLexicalNgramBuckets)) += 1.0;
        }
        if (i + 2 < toks.size()) {
            x(static_cast<int>(bucket("s:", toks[i], toks[i + 2]) % kLexicalNgramBuckets)) += 1.0;
        }
    }
    std::set<std::string> distinct(toks.begin(), toks.end());
    int present = 0;
    for (const auto& t : distinct) {
        bool in_ctx = info.tokens.count(t) > 0;
        if (in_ctx) ++present;
        int slot = kLexicalNgramBuckets + static_cast<int>(bucket("p:", t) % kLexicalPresenceBuckets);
        x(slot) += in_ctx ? 1.0 : -1.0;
    }
    x(kLexicalDim - 2) =
        distinct.empty() ? 0.0 : static_cast<double>(present) / static_cast<double>(distinct.size());
    x(kLexicalDim - 1) = static_cast<double>(toks.size()) / 10.0;
    return x;
}

Vector featurize_with(const ContextInfo& info, const Statement& statement, const SemanticGraph& g,
                      FeatureMode mode) {
    return mode == FeatureMode::oracle ? featurize_oracle(info, statement, g)
                                       : featurize_lexical(info, statement);
}

}  // namespace

Vector featurize(const Context& context, const Statement& statement, const SemanticGraph& g,
                 FeatureMode mode) {
    return featurize_with(build_context_info(g, context, mode), statement, g, mode);
}

FeaturizedSet featurize_samples(const SemanticGraph& g, const std::vector<Sample>& samples,
                                FeatureMode mode) {
    FeaturizedSet out;
    out.mode = mode;
    out.features.resize(static_cast<Eigen::Index>(samples.size()),
                        mode == FeatureMode::lexical ? kLexicalDim : feature_dim(g, mode));
    std::map<std::string, ContextInfo> cache;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        auto it = cache.find(s.admission_id);
        if (it == cache.end()) {
            it = cache.emplace(s.admission_id, build_context_info(g, s.context, mode)).first;
        }
        out.features.row(static_cast<Eigen::Index>(i)) =
            featurize_with(it->second, s.statement, g, mode).transpose();
        out.labels.push_back(index_of(s.label));
        out.sample_ids.push_back(s.sample_id);
        out.admission_ids.push_back(s.admission_id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

PolicyParams zero_params(FeatureMode mode, int dim) {
    PolicyParams p;
    p.mode = mode;
    p.weights = Matrix::Zero(4, dim);
    p.bias = Vector::Zero(4);
    return p;
}

namespace {

void check_dim(const PolicyParams& params, Eigen::Index dim) {
    if (params.weights.cols() != dim) {
        throw ConfigError("feature dimension mismatch: policy expects " +
                          std::to_string(params.weights.cols()) + ", got " + std::to_string(dim));
    }
}

// Row-wise stable log-softmax of an n x 4 logit matrix, in place.
void log_softmax_rows(Matrix& z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double m = z.row(i).maxCoeff();
        double lse = m + std::log((z.row(i).array() - m).exp().sum());
        z.row(i).array() -= lse;
    }
}

}  // namespace

Vector class_log_probabilities(const PolicyParams& params, const Vector& features) {
    check_dim(params, features.size());
    Matrix z = (params.weights * features + params.bias).transpose();
    log_softmax_rows(z);
    return z.row(0).transpose();
}

Matrix class_log_probabilities(const PolicyParams& params, const Matrix& features) {
    check_dim(params, features.cols());
    Matrix z = features * params.weights.transpose();
    z.rowwise() += params.bias.transpose();
    log_softmax_rows(z);
    return z;
}

// ---------------------------------------------------------------------------
// Supervised baseline
// ---------------------------------------------------------------------------

SftResult train_sft(const FeaturizedSet& train, const TrainConfig& config) {
    const Eigen::Index n = static_cast<Eigen::Index>(train.size());
    if (n == 0) throw IntegrityError("cannot train on an empty split");

    // Inverse-frequency class weights, normalized so they sum to n over the
    // batch: w_q = n / (4 * count_q).
    std::array<double, 4> class_weight{0.0, 0.0, 0.0, 0.0};
    std::array<long long, 4> counts{0, 0, 0, 0};
    for (int label : train.labels) counts[label] += 1;
    for (int q = 0; q < 4; ++q) {
        if (counts[q] > 0) {
            class_weight[q] = static_cast<double>(n) / (4.0 * static_cast<double>(counts[q]));
        }
    }
    Vector sample_weight(n);
    for (Eigen::Index i = 0; i < n; ++i) sample_weight(i) = class_weight[train.labels[i]];

    SftResult result;
    result.params = zero_params(train.mode, train.dim());
    result.loss_curve.reserve(static_cast<std::size_t>(config.epochs) + 1);

    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        Matrix logp = class_log_probabilities(result.params, train.features);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            loss -= sample_weight(i) * logp(i, train.labels[i]);
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss)) {
            throw NumericError("sft loss diverged at epoch " + std::to_string(epoch));
        }
        result.loss_curve.push_back(loss);
        if (epoch == config.epochs) break;

        Matrix dz = logp.array().exp();  // softmax probabilities
        for (Eigen::Index i = 0; i < n; ++i) dz(i, train.labels[i]) -= 1.0;
        dz.array().colwise() *= sample_weight.array() / static_cast<double>(n);
        result.params.weights -= config.learning_rate * (dz.transpose() * train.features);
        result.params.bias -= config.learning_rate * dz.colwise().sum().transpose();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Preference pairs
// ---------------------------------------------------------------------------

std::vector<std::vector<PreferencePair>> build_preference_pairs(const FeaturizedSet& data,
                                                                Regime regime) {
    std::vector<std::vector<int>> stage_classes;
    switch (regime) {
        case Regime::pairwise_q2: stage_classes = {{1}}; break;
        case Regime::pairwise_q3: stage_classes = {{2}}; break;
        case Regime::pairwise_q4: stage_classes = {{3}}; break;
        case Regime::mixed: stage_classes = {{1, 2, 3}}; break;
        case Regime::curriculum: stage_classes = {{1}, {2}, {3}}; break;
    }

    // Winner and loser indices per admission, in dataset order.
    std::map<std::string, std::vector<std::size_t>> winners;
    std::map<std::string, std::array<std::vector<std::size_t>, 4>> losers;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] == 0) {
            winners[data.admission_ids[i]].push_back(i);
        } else {
            losers[data.admission_ids[i]][data.labels[i]].push_back(i);
        }
    }

    std::vector<std::vector<PreferencePair>> stages;
    for (const auto& classes : stage_classes) {
        std::vector<PreferencePair> stage;
        std::string tag;
        for (int c : classes) tag += (tag.empty() ? "" : "+") + to_string(static_cast<Quadrant>(c));
        for (const auto& [admission, ws] : winners) {
            auto lit = losers.find(admission);
            if (lit == losers.end()) continue;
            for (std::size_t w : ws) {
                for (int c : classes) {
                    for (std::size_t l : lit->second[c]) {
                        stage.push_back(PreferencePair{admission, w, l, tag});
                    }
                }
            }
        }
        if (stage.empty()) {
            throw IntegrityError("no preference pairs for stage " + tag + " under regime " +
                                 to_string(regime));
        }
        stages.push_back(std::move(stage));
    }
    return stages;
}

// ---------------------------------------------------------------------------
// CoRFu loss and training
// ---------------------------------------------------------------------------

namespace {

double logistic(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// -ln sigma(s), computed as softplus(-s) without overflow.
double neg_log_sigmoid(double s) {
    return s >= 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
}

}  // namespace

double compute_margin(const PolicyParams& params, const PolicyParams& reference,
                      const FeaturizedSet& data, const PreferencePair& pair, double beta) {
    auto q1_logp = [&](const PolicyParams& p, std::size_t idx) {
        return class_log_probabilities(
            p, Vector(data.features.row(static_cast<Eigen::Index>(idx)).transpose()))(0);
    };
    double winner_delta = q1_logp(params, pair.winner) - q1_logp(reference, pair.winner);
    double loser_delta = q1_logp(params, pair.loser) - q1_logp(reference, pair.loser);
    return beta * (winner_delta - loser_delta);
}

double corfu_loss(const Vector& margins, double lambda) {
    if (margins.size() == 0) throw IntegrityError("corfu_loss needs at least one margin");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    double pref = 0.0, penalty = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        double s = margins(i);
        pref += neg_log_sigmoid(s);
        if (s < 0.0) penalty += s * s;
    }
    double n = static_cast<double>(margins.size());
    return pref / n + lambda * penalty / n;
}

CorfuGradient corfu_gradient(const PolicyParams& params, const PolicyParams& reference,
                             const FeaturizedSet& data, const std::vector<PreferencePair>& pairs,
                             double beta, double lambda) {
    if (pairs.empty()) throw IntegrityError("corfu_gradient needs at least one pair");
    const double n = static_cast<double>(pairs.size());

    Matrix logp = class_log_probabilities(params, data.features);
    Matrix ref_logp = class_log_probabilities(reference, data.features);
    Matrix probs = logp.array().exp();

    CorfuGradient g;
    g.weights = Matrix::Zero(4, params.dim());
    g.bias = Vector::Zero(4);
    g.margins.resize(static_cast<Eigen::Index>(pairs.size()));

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto w = static_cast<Eigen::Index>(pairs[p].winner);
        auto l = static_cast<Eigen::Index>(pairs[p].loser);
        double s = beta * ((logp(w, 0) - ref_logp(w, 0)) - (logp(l, 0) - ref_logp(l, 0)));
        g.margins(static_cast<Eigen::Index>(p)) = s;

        // dL/dS = (1/n) * (-sigma(-S) + 2*lambda*S*1(S<0))
        double dls = (-logistic(-s) + (s < 0.0 ? 2.0 * lambda * s : 0.0)) / n;
        double coeff = dls * beta;

        // d log p_Q1(x) / d z_k = delta_{k,Q1} - p_k, z = Wx + b.
        Vector dzw = -probs.row(w).transpose();
        dzw(0) += 1.0;
        Vector dzl = -probs.row(l).transpose();
        dzl(0) += 1.0;
        g.weights += coeff * (dzw * data.features.row(w) - dzl * data.features.row(l));
        g.bias += coeff * (dzw - dzl);
    }
    g.loss = corfu_loss(g.margins, lambda);
    return g;
}

CorfuResult train_corfu(const PolicyParams& init, const FeaturizedSet& train,
                        const TrainConfig& config) {
    if (config.beta <= 0.0) throw ConfigError("beta must be positive");
    if (config.lambda < 0.0) throw ConfigError("lambda must be non-negative");
    auto stages = build_preference_pairs(train, config.regime);

    CorfuResult result;
    result.params = init;
    int global_epoch = 0;
    for (std::size_t stage = 0; stage < stages.size(); ++stage) {
        // The reference freezes the current policy: init for single-stage
        // regimes, the updated model at each curriculum stage start.
        PolicyParams reference = result.params;
        result.reference_snapshots.push_back(reference);
        for (int epoch = 0; epoch < config.epochs; ++epoch, ++global_epoch) {
            CorfuGradient g = corfu_gradient(result.params, reference, train, stages[stage],
                                             config.beta, config.lambda);
            if (!std::isfinite(g.loss)) {
                throw NumericError("corfu loss diverged at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch));
            }
            TrainLogEntry entry;
            entry.stage = static_cast<int>(stage);
            entry.epoch = global_epoch;
            entry.loss = g.loss;
            entry.mean_margin = g.margins.mean();
            entry.frac_negative_margin =
                static_cast<double>((g.margins.array() < 0.0).count()) /
                static_cast<double>(g.margins.size());
            result.log.push_back(entry);

            result.params.weights -= config.learning_rate * g.weights;
            result.params.bias -= config.learning_rate * g.bias;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

Quadrant predict_quadrant(const PolicyParams& params, const Vector& features) {
    check_dim(params, features.size());
    Vector logits = params.weights * features + params.bias;
    int best = 0;
    for (int k = 1; k < 4; ++k) {
        if (logits(k) > logits(best)) best = k;
    }
    return static_cast<Quadrant>(best);
}

Quadrant predict_quadrant(const PolicyParams& params, const Context& context,
                          const Statement& statement, const SemanticGraph& g, FeatureMode mode) {
    return predict_quadrant(params, featurize(context, statement, g, mode));
}

std::vector<Prediction> evaluate(const PolicyParams& params, const FeaturizedSet& data) {
    std::vector<Prediction> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Prediction p;
        p.sample_id = data.sample_ids[i];
        p.gold = static_cast<Quadrant>(data.labels[i]);
        p.predicted = predict_quadrant(
            params, Vector(data.features.row(static_cast<Eigen::Index>(i)).transpose()));
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<AblationRow> lambda_sweep(const PolicyParams& base, const FeaturizedSet& train,
                                      const FeaturizedSet& validation,
                                      const std::vector<double>& lambdas,
                                      const TrainConfig& config) {
    if (lambdas.empty()) throw ConfigError("lambda sweep needs at least one value");
    if (std::none_of(lambdas.begin(), lambdas.end(), [](double l) { return l == 0.0; })) {
        throw ConfigError("lambda sweep must include 0 (the vanilla-DPO anchor)");
    }
    std::vector<AblationRow> rows;
    for (double lambda : lambdas) {
        TrainConfig cfg = config;
        cfg.lambda = lambda;
        CorfuResult trained = train_corfu(base, train, cfg);
        EvalReport report = compute_report(build_confusion(evaluate(trained.params, validation)));
        rows.push_back(AblationRow{lambda, report.macro_f1, report.hsr, report.tir});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_model(const std::filesystem::path& path, const PolicyParams& params,
                 const TrainConfig& config) {
    json weights = json::array();
    for (Eigen::Index i = 0; i < params.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < params.weights.cols(); ++j) {
            weights.push_back(params.weights(i, j));
        }
    }
    json bias = json::array();
    for (Eigen::Index k = 0; k < params.bias.size(); ++k) bias.push_back(params.bias(k));

    json j;
    j["feature_mode"] = to_string(params.mode);
    j["feature_dim"] = params.dim();
    j["weights"] = weights;  // row-major
    j["bias"] = bias;
    j["training_config"] = json{{"beta", config.beta},
                                {"lambda", config.lambda},
                                {"regime", to_string(config.regime)},
                                {"learning_rate", config.learning_rate},
                                {"epochs", config.epochs}};
    j["seed"] = config.seed;
    write_file(path, j.dump(2) + "\n");
}

ModelFile read_model(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ParseError(path.string(), 1, "invalid JSON");
    for (const char* key : {"feature_mode", "feature_dim", "weights", "bias", "training_config",
                            "seed"}) {
        if (!j.contains(key)) throw ParseError(path.string(), 1, std::string("missing key ") + key);
    }
    ModelFile out;
    out.params.mode = parse_feature_mode(j["feature_mode"].get<std::string>());
    int dim = j["feature_dim"].get<int>();
    auto weights = j["weights"].get<std::vector<double>>();
    auto bias = j["bias"].get<std::vector<double>>();
    if (dim <= 0 || weights.size() != static_cast<std::size_t>(4 * dim) || bias.size() != 4) {
        throw ParseError(path.string(), 1, "weights/bias shape does not match feature_dim");
    }
    out.params.weights.resize(4, dim);
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < dim; ++k) {
            out.params.weights(i, k) = weights[static_cast<std::size_t>(i * dim + k)];
        }
    }
    out.params.bias = Eigen::Map<Vector>(bias.data(), 4);
    const json& tc = j["training_config"];
    out.config.beta = tc["beta"].get<double>();
    out.config.lambda = tc["lambda"].get<double>();
    out.config.regime = parse_regime(tc["regime"].get<std::string>());
    out.config.learning_rate = tc["learning_rate"].get<double>();
    out.config.epochs = tc["epochs"].get<int>();
    out.config.seed = j["seed"].get<std::uint64_t>();
    return out;
}

void write_train_log(const std::filesystem::path& jsonl, const std::vector<TrainLogEntry>& log) {
    std::string buf;
    for (const auto& e : log) {
        json j;
        j["epoch"] = e.epoch;
        j["loss"] = e.loss;
        j["mean_margin"] = e.mean_margin;
        j["frac_negative_margin"] = e.frac_negative_margin;
        j["stage"] = e.stage;
        buf += j.dump();
        buf += '\n';
    }
    write_file(jsonl, buf);
}

std::vector<TrainLogEntry> read_train_log(const std::filesystem::path& jsonl) {
    std::vector<TrainLogEntry> out;
    const std::string file = jsonl.string();
    for_each_jsonl(jsonl, [&](std::size_t line, const json& j) {
        for (const char* key : {"epoch", "loss", "mean_margin", "frac_negative_margin", "stage"}) {
            if (!j.contains(key)) throw ParseError(file, line, std::string("missing key ") + key);
        }
        TrainLogEntry e;
        e.epoch = j["epoch"].get<int>();
        e.loss = j["loss"].get<double>();
        e.mean_margin = j["mean_margin"].get<double>();
        e.frac_negative_margin = j["frac_negative_margin"].get<double>();
        e.stage = j["stage"].get<int>();
        out.push_back(e);
    });
    return out;
}

namespace {

std::string format_metric(const std::optional<double>& v) {
    if (!v) return "-";
    json j = *v;
    return j.dump();
}

std::optional<double> parse_metric(const std::string& s, const std::string& file,
                                   std::size_t line) {
    if (s == "-") return std::nullopt;
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(file, line, "bad numeric field \"" + s + "\"");
    }
}

}  // namespace

void write_ablation_table(const std::filesystem::path& tsv, const std::vector<AblationRow>& rows) {
    std::string buf = "lambda\tmacro_f1\thsr\ttir\n";
    for (const auto& r : rows) {
        buf += format_metric(r.lambda);
        buf += '\t';
        buf += format_metric(r.macro_f1);
        buf += '\t';
        buf += format_metric(r.hsr);
        buf += '\t';
        buf += format_metric(r.tir);
        buf += '\n';
    }
    write_file(tsv, buf);
}

std::vector<AblationRow> read_ablation_table(const std::filesystem::path& tsv) {
    std::vector<AblationRow> rows;
    const std::string file = tsv.string();
    for (const auto& row : read_tsv(tsv, {"lambda", "macro_f1", "hsr", "tir"})) {
        AblationRow r;
        auto lambda = parse_metric(row.fields[0], file, row.line);
        auto macro = parse_metric(row.fields[1], file, row.line);
        if (!lambda || !macro) throw ParseError(file, row.line, "lambda and macro_f1 are required");
        r.lambda = *lambda;
        r.macro_f1 = *macro;
        r.hsr = parse_metric(row.fields[2], file, row.line);
        r.tir = parse_metric(row.fields[3], file, row.line);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace quadmed
