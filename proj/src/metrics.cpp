#include "quadmed/metrics.hpp"

#include <set>

#include "quadmed/errors.hpp"
#include "quadmed/io.hpp"

namespace quadmed {

ConfusionMatrix build_confusion(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) throw IntegrityError("no predictions to score");
    ConfusionMatrix m = ConfusionMatrix::Zero();
    std::set<std::string> seen;
    for (const auto& p : predictions) {
        if (!seen.insert(p.sample_id).second) {
            throw IntegrityError("duplicate prediction for sample " + p.sample_id);
        }
        m(index_of(p.gold), index_of(p.predicted)) += 1;
    }
    return m;
}

namespace {

double safe_ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> row_to_q1_rate(const ConfusionMatrix& m, int row) {
    std::int64_t total = m.row(row).sum();
    if (total == 0) return std::nullopt;
    return static_cast<double>(m(row, 0)) / static_cast<double>(total);
}

}  // namespace

std::optional<double> compute_hsr(const ConfusionMatrix& m) {
    return row_to_q1_rate(m, index_of(Quadrant::q2));
}

std::optional<double> compute_tir(const ConfusionMatrix& m) {
    return row_to_q1_rate(m, index_of(Quadrant::q3));
}

EvalReport compute_report(const ConfusionMatrix& m) {
    EvalReport r;
    r.confusion = m;
    r.total = m.sum();
    if (r.total == 0) throw IntegrityError("empty confusion matrix");
    r.accuracy = safe_ratio(m.trace(), r.total);
    for (int q = 0; q < 4; ++q) {
        std::int64_t tp = m(q, q);
        std::int64_t gold = m.row(q).sum();
        std::int64_t pred = m.col(q).sum();
        QuadrantScores& s = r.per_quadrant[q];
        s.precision = safe_ratio(tp, pred);
        s.recall = safe_ratio(tp, gold);
        s.f1 = (s.precision + s.recall) == 0.0
                   ? 0.0
                   : 2.0 * s.precision * s.recall / (s.precision + s.recall);
        s.support = gold;
        r.macro_precision += s.precision / 4.0;
        r.macro_recall += s.recall / 4.0;
        r.macro_f1 += s.f1 / 4.0;
    }
    r.hsr = compute_hsr(m);
    r.tir = compute_tir(m);
    return r;
}

void write_predictions(const std::filesystem::path& jsonl,
                       const std::vector<Prediction>& predictions) {
    std::string buf;
    for (const auto& p : predictions) {
        json j;
        j["sample_id"] = p.sample_id;
        j["gold"] = to_string(p.gold);
        j["predicted"] = to_string(p.predicted);
        buf += j.dump();
        buf += '\n';
    }
    write_file(jsonl, buf);
}

std::vector<Prediction> read_predictions(const std::filesystem::path& jsonl) {
    std::vector<Prediction> out;
    const std::string file = jsonl.string();
    for_each_jsonl(jsonl, [&](std::size_t line, const json& j) {
        for (const char* key : {"sample_id", "gold", "predicted"}) {
            if (!j.contains(key)) throw ParseError(file, line, std::string("missing key ") + key);
        }
        Prediction p;
        p.sample_id = j["sample_id"].get<std::string>();
        p.gold = parse_quadrant(j["gold"].get<std::string>());
        p.predicted = parse_quadrant(j["predicted"].get<std::string>());
        out.push_back(std::move(p));
    });
    return out;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

std::optional<double> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

void write_report(const std::filesystem::path& path, const EvalReport& r) {
    json matrix = json::array();
    for (int i = 0; i < 4; ++i) {
        json row = json::array();
        for (int j = 0; j < 4; ++j) row.push_back(r.confusion(i, j));
        matrix.push_back(row);
    }
    json per = json::object();
    for (int q = 0; q < 4; ++q) {
        const QuadrantScores& s = r.per_quadrant[q];
        per[to_string(static_cast<Quadrant>(q))] = json{{"precision", s.precision},
                                                        {"recall", s.recall},
                                                        {"f1", s.f1},
                                                        {"support", s.support}};
    }
    json j;
    j["total"] = r.total;
    j["accuracy"] = r.accuracy;
    j["confusion"] = matrix;
    j["per_quadrant"] = per;
    j["macro_precision"] = r.macro_precision;
    j["macro_recall"] = r.macro_recall;
    j["macro_f1"] = r.macro_f1;
    j["hsr"] = optional_to_json(r.hsr);
    j["tir"] = optional_to_json(r.tir);
    write_file(path, j.dump(2) + "\n");
}

EvalReport read_report(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ParseError(path.string(), 1, "invalid JSON");
    for (const char* key : {"total", "accuracy", "confusion", "per_quadrant", "macro_precision",
                            "macro_recall", "macro_f1", "hsr", "tir"}) {
        if (!j.contains(key)) throw ParseError(path.string(), 1, std::string("missing key ") + key);
    }
    EvalReport r;
    r.total = j["total"].get<std::int64_t>();
    r.accuracy = j["accuracy"].get<double>();
    const json& matrix = j["confusion"];
    if (!matrix.is_array() || matrix.size() != 4) {
        throw ParseError(path.string(), 1, "confusion must be a 4x4 array");
    }
    for (int i = 0; i < 4; ++i) {
        const json& row = matrix[i];
        if (!row.is_array() || row.size() != 4) {
            throw ParseError(path.string(), 1, "confusion must be a 4x4 array");
        }
        for (int k = 0; k < 4; ++k) r.confusion(i, k) = row[k].get<std::int64_t>();
    }
    for (int q = 0; q < 4; ++q) {
        const json& s = j["per_quadrant"][to_string(static_cast<Quadrant>(q))];
        r.per_quadrant[q].precision = s["precision"].get<double>();
        r.per_quadrant[q].recall = s["recall"].get<double>();
        r.per_quadrant[q].f1 = s["f1"].get<double>();
        r.per_quadrant[q].support = s["support"].get<std::int64_t>();
    }
    r.macro_precision = j["macro_precision"].get<double>();
    r.macro_recall = j["macro_recall"].get<double>();
    r.macro_f1 = j["macro_f1"].get<double>();
    r.hsr = optional_from_json(j["hsr"]);
    r.tir = optional_from_json(j["tir"]);
    return r;
}

}  // namespace quadmed
