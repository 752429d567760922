#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "quadmed/forge.hpp"

namespace quadmed {

struct Prediction {
    std::string sample_id;
    Quadrant gold;
    Quadrant predicted;

    auto operator<=>(const Prediction&) const = default;
};

// Rows are gold quadrants, columns predicted quadrants, Q1..Q4 order.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, 4, 4>;

ConfusionMatrix build_confusion(const std::vector<Prediction>& predictions);

struct QuadrantScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct EvalReport {
    ConfusionMatrix confusion = ConfusionMatrix::Zero();
    double accuracy = 0.0;
    std::array<QuadrantScores, 4> per_quadrant{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    // Of statements whose claim is true but unsupported by the record (Q2),
    // the fraction asserted as supported truth (Q1).
    std::optional<double> hsr;
    // Of statements whose entities are supported but whose claim is false
    // (Q3), the fraction asserted as supported truth (Q1).
    std::optional<double> tir;
    std::int64_t total = 0;
};

EvalReport compute_report(const ConfusionMatrix& confusion);

// Null when the gold row is empty (rate undefined, not zero).
std::optional<double> compute_hsr(const ConfusionMatrix& confusion);
std::optional<double> compute_tir(const ConfusionMatrix& confusion);

void write_predictions(const std::filesystem::path& jsonl,
                       const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& jsonl);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

}  // namespace quadmed
