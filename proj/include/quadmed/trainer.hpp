#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "quadmed/forge.hpp"
#include "quadmed/metrics.hpp"
#include "quadmed/ontology.hpp"

namespace quadmed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class FeatureMode { oracle, lexical };

std::string to_string(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& s);

// Fixed dimensions of the lexical featurizer.
inline constexpr int kLexicalNgramBuckets = 64;
inline constexpr int kLexicalPresenceBuckets = 16;
inline constexpr int kLexicalDim = kLexicalNgramBuckets + kLexicalPresenceBuckets + 2;

int feature_dim(const SemanticGraph& g, FeatureMode mode);

// Reference featurizer: one (context, statement) pair at a time.
Vector featurize(const Context& context, const Statement& statement, const SemanticGraph& g,
                 FeatureMode mode);

// Batch of featurized samples. Rows of `features` align with the id/label
// vectors. Built by featurize_samples, which caches per-context work but
// must produce bit-identical rows to the reference featurizer.
struct FeaturizedSet {
    FeatureMode mode = FeatureMode::oracle;
    Matrix features;  // n x d
    std::vector<int> labels;
    std::vector<std::string> sample_ids;
    std::vector<std::string> admission_ids;

    std::size_t size() const { return labels.size(); }
    int dim() const { return static_cast<int>(features.cols()); }
};

FeaturizedSet featurize_samples(const SemanticGraph& g, const std::vector<Sample>& samples,
                                FeatureMode mode);

// Log-linear four-way policy: logits = weights * x + bias.
struct PolicyParams {
    FeatureMode mode = FeatureMode::oracle;
    Matrix weights;  // 4 x d
    Vector bias;     // 4

    int dim() const { return static_cast<int>(weights.cols()); }
};

PolicyParams zero_params(FeatureMode mode, int dim);

// Stable log-softmax of the 4 logits; exponentials sum to 1 within 1e-12.
Vector class_log_probabilities(const PolicyParams& params, const Vector& features);
// Row-wise batch variant: returns n x 4.
Matrix class_log_probabilities(const PolicyParams& params, const Matrix& features);

enum class Regime { pairwise_q2, pairwise_q3, pairwise_q4, mixed, curriculum };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& s);

struct TrainConfig {
    double beta = 0.1;
    double lambda = 0.5;
    Regime regime = Regime::mixed;
    double learning_rate = 0.1;
    int epochs = 200;
    std::uint64_t seed = 0;
};

struct SftResult {
    PolicyParams params;
    // loss_curve[e] is evaluated before update e; the last entry is the
    // final loss, so consecutive entries measure one step each.
    std::vector<double> loss_curve;
};

// Class-weighted cross-entropy (weights proportional to inverse class
// frequency), full-batch gradient descent from zero parameters.
SftResult train_sft(const FeaturizedSet& train, const TrainConfig& config);

// Winner (Q1) / loser (Q2-Q4) indices into a FeaturizedSet.
struct PreferencePair {
    std::string context_id;  // shared admission
    std::size_t winner = 0;
    std::size_t loser = 0;
    std::string stage_tag;
};

// pairwise_qk: one stage of (Q1, Qk); mixed: one stage pooling Q2/Q3/Q4;
// curriculum: three ordered stages Q2, Q3, Q4. Within a stage every Q1
// winner pairs with every same-admission loser of the stage's class, in
// dataset order. A stage with no pairs is an error naming the stage.
std::vector<std::vector<PreferencePair>> build_preference_pairs(const FeaturizedSet& data,
                                                                Regime regime);

// S = beta * [(log-prob delta of winner) - (log-prob delta of loser)] where
// each log-prob is the policy's Q1 class log-probability and the delta is
// taken against the frozen reference.
double compute_margin(const PolicyParams& params, const PolicyParams& reference,
                      const FeaturizedSet& data, const PreferencePair& pair, double beta);

// mean(-ln sigma(S)) + lambda * mean(1(S<0) * S^2), both means over all
// pairs; the indicator is strict, so S = 0 adds no penalty.
double corfu_loss(const Vector& margins, double lambda);

struct CorfuGradient {
    Matrix weights;  // dL/dW, 4 x d
    Vector bias;     // dL/db, 4
    Vector margins;  // S per pair, in pair order
    double loss = 0.0;
};

CorfuGradient corfu_gradient(const PolicyParams& params, const PolicyParams& reference,
                             const FeaturizedSet& data, const std::vector<PreferencePair>& pairs,
                             double beta, double lambda);

struct TrainLogEntry {
    int stage = 0;
    int epoch = 0;  // global across stages
    double loss = 0.0;
    double mean_margin = 0.0;
    double frac_negative_margin = 0.0;
};

struct CorfuResult {
    PolicyParams params;
    // One frozen reference per stage, in stage order.
    std::vector<PolicyParams> reference_snapshots;
    std::vector<TrainLogEntry> log;
};

// Full-batch gradient descent on corfu_loss. The reference starts as a
// frozen copy of init; the curriculum regime refreshes both the reference
// and the stage's starting point from the updated model at each stage.
// Non-finite loss aborts with a diagnostic.
CorfuResult train_corfu(const PolicyParams& init, const FeaturizedSet& train,
                        const TrainConfig& config);

// Argmax over class log-probabilities; ties break toward the lowest index
// (Q1 first).
Quadrant predict_quadrant(const PolicyParams& params, const Vector& features);
Quadrant predict_quadrant(const PolicyParams& params, const Context& context,
                          const Statement& statement, const SemanticGraph& g, FeatureMode mode);

std::vector<Prediction> evaluate(const PolicyParams& params, const FeaturizedSet& data);

struct AblationRow {
    double lambda = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> hsr;
    std::optional<double> tir;
};

// Trains one CoRFu model per lambda from the same init and config, scoring
// each on the validation set. The lambda list must be non-empty and
// include 0 (the vanilla-DPO anchor row).
std::vector<AblationRow> lambda_sweep(const PolicyParams& base, const FeaturizedSet& train,
                                      const FeaturizedSet& validation,
                                      const std::vector<double>& lambdas,
                                      const TrainConfig& config);

struct ModelFile {
    PolicyParams params;
    TrainConfig config;
};

void write_model(const std::filesystem::path& path, const PolicyParams& params,
                 const TrainConfig& config);
ModelFile read_model(const std::filesystem::path& path);

void write_train_log(const std::filesystem::path& jsonl, const std::vector<TrainLogEntry>& log);
std::vector<TrainLogEntry> read_train_log(const std::filesystem::path& jsonl);

void write_ablation_table(const std::filesystem::path& tsv, const std::vector<AblationRow>& rows);
std::vector<AblationRow> read_ablation_table(const std::filesystem::path& tsv);

}  // namespace quadmed
