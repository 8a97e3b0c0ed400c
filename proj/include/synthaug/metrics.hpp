// Confusion-matrix evaluation: per-class precision/recall/F1, accuracy,
// sensitivity/specificity, macro and support-weighted averages, and report
// rendering (markdown / csv / json).
//
// All math runs at full double precision; rounding happens only at render
// time. Display rounding is round-half-down, which reproduces the published
// table including its 0.975 -> 97 specificity cell.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthaug/tensor.hpp"

namespace synthaug {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::string positive_class;
    std::string negative_class;

    ConfusionMatrix(std::size_t tp_, std::size_t fp_, std::size_t fn_, std::size_t tn_,
                    std::string positive, std::string negative)
        : tp(tp_), fp(fp_), fn(fn_), tn(tn_), positive_class(std::move(positive)),
          negative_class(std::move(negative)) {
        if (positive_class.empty() || negative_class.empty())
            throw MetricsError("class names must not be empty");
        if (positive_class == negative_class)
            throw MetricsError("positive and negative class must differ");
    }

    std::size_t total() const { return tp + fp + fn + tn; }

    ConfusionMatrix swapped() const {
        return ConfusionMatrix(tn, fn, fp, tp, negative_class, positive_class);
    }
};

inline ConfusionMatrix confusion(const std::vector<std::string>& predicted,
                                 const std::vector<std::string>& truth, const std::string& positive,
                                 const std::string& negative) {
    if (predicted.size() != truth.size())
        throw MetricsError("label lists differ in length: " + std::to_string(predicted.size()) + " vs " +
                           std::to_string(truth.size()));
    ConfusionMatrix cm(0, 0, 0, 0, positive, negative);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (const std::string* s : {&predicted[i], &truth[i]})
            if (*s != positive && *s != negative)
                throw MetricsError("unknown label \"" + *s + "\"; expected \"" + positive + "\" or \"" +
                                   negative + "\"");
        const bool actual_pos = truth[i] == positive;
        const bool pred_pos = predicted[i] == positive;
        if (actual_pos && pred_pos)
            cm.tp++;
        else if (actual_pos && !pred_pos)
            cm.fn++;
        else if (!actual_pos && pred_pos)
            cm.fp++;
        else
            cm.tn++;
    }
    return cm;
}

struct ClassScore {
    std::string name;
    double precision = 0, recall = 0, f1 = 0;
    std::size_t support = 0;
};

struct AverageScore {
    double precision = 0, recall = 0, f1 = 0;
};

struct SummaryReport {
    std::vector<ClassScore> per_class;  // positive class first
    AverageScore macro;
    AverageScore weighted;
    double accuracy = 0;
    double sensitivity = 0;
    double specificity = 0;
    std::size_t total_support = 0;
    bool zero_denominator = false;  // some score had an empty denominator

    bool operator==(const SummaryReport&) const = default;
};

inline bool operator==(const ClassScore& a, const ClassScore& b) {
    return a.name == b.name && a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1 &&
           a.support == b.support;
}
inline bool operator==(const AverageScore& a, const AverageScore& b) {
    return a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1;
}

namespace detail_metrics {

inline double ratio(std::size_t num, std::size_t den, bool* flagged) {
    if (den == 0) {
        if (flagged) *flagged = true;
        return 0.0;
    }
    return double(num) / double(den);
}

inline ClassScore score_one(const ConfusionMatrix& cm, bool* flagged) {
    ClassScore s;
    s.name = cm.positive_class;
    s.support = cm.tp + cm.fn;
    s.precision = ratio(cm.tp, cm.tp + cm.fp, flagged);
    s.recall = ratio(cm.tp, cm.tp + cm.fn, flagged);
    const double pr = s.precision + s.recall;
    if (pr == 0.0) {
        if (flagged) *flagged = true;
        s.f1 = 0.0;
    } else {
        s.f1 = 2.0 * s.precision * s.recall / pr;
    }
    return s;
}

}  // namespace detail_metrics

inline AverageScore aggregate_macro(const std::vector<ClassScore>& scores) {
    if (scores.empty()) throw MetricsError("aggregate needs at least one class report");
    AverageScore a;
    for (const auto& s : scores) {
        a.precision += s.precision;
        a.recall += s.recall;
        a.f1 += s.f1;
    }
    a.precision /= double(scores.size());
    a.recall /= double(scores.size());
    a.f1 /= double(scores.size());
    return a;
}

inline AverageScore aggregate_weighted(const std::vector<ClassScore>& scores) {
    if (scores.empty()) throw MetricsError("aggregate needs at least one class report");
    std::size_t total = 0;
    for (const auto& s : scores) total += s.support;
    if (total == 0) throw MetricsError("aggregate: total support is zero");
    AverageScore a;
    for (const auto& s : scores) {
        const double w = double(s.support) / double(total);
        a.precision += w * s.precision;
        a.recall += w * s.recall;
        a.f1 += w * s.f1;
    }
    return a;
}

inline SummaryReport compute_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw MetricsError("confusion matrix is empty");
    SummaryReport r;
    r.per_class.push_back(detail_metrics::score_one(cm, &r.zero_denominator));
    r.per_class.push_back(detail_metrics::score_one(cm.swapped(), &r.zero_denominator));
    r.total_support = cm.total();
    r.accuracy = double(cm.tp + cm.tn) / double(cm.total());
    r.sensitivity = r.per_class[0].recall;
    r.specificity = detail_metrics::ratio(cm.tn, cm.tn + cm.fp, &r.zero_denominator);
    r.macro = aggregate_macro(r.per_class);
    r.weighted = aggregate_weighted(r.per_class);
    return r;
}

// -- display rounding -------------------------------------------------------

// round half DOWN at the given scale: 0.975 -> 0.97 at two decimals
inline long display_round(double value, double scale) {
    return long(std::ceil(value * scale - 0.5));
}

inline std::string fmt_score(double v) {
    const long hundredths = display_round(v, 100.0);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%ld.%02ld", hundredths / 100, hundredths % 100);
    return buf;
}

inline std::string fmt_percent(double v) {
    return std::to_string(display_round(v, 100.0));
}

inline std::string fmt_raw(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
    return buf;
}

// -- rendering ----------------------------------------------------------------

enum class ReportFormat { Markdown, Csv, Json };

inline const char* kReportColumns[] = {"Class",   "Precision",    "Recall",
                                       "F1-score", "Support",      "Accuracy (%)",
                                       "Sensitivity (%)", "Specificity (%)"};

inline nlohmann::json report_to_json(const SummaryReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& s : r.per_class)
        classes.push_back({{"name", s.name},
                           {"precision", s.precision},
                           {"recall", s.recall},
                           {"f1", s.f1},
                           {"support", s.support}});
    return {{"classes", classes},
            {"macro", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}},
            {"weighted",
             {{"precision", r.weighted.precision},
              {"recall", r.weighted.recall},
              {"f1", r.weighted.f1}}},
            {"accuracy", r.accuracy},
            {"sensitivity", r.sensitivity},
            {"specificity", r.specificity},
            {"total_support", r.total_support},
            {"zero_denominator", r.zero_denominator}};
}

inline SummaryReport report_from_json(const nlohmann::json& j) {
    SummaryReport r;
    for (const auto& c : j.at("classes"))
        r.per_class.push_back({c.at("name").get<std::string>(), c.at("precision").get<double>(),
                               c.at("recall").get<double>(), c.at("f1").get<double>(),
                               c.at("support").get<std::size_t>()});
    r.macro = {j.at("macro").at("precision"), j.at("macro").at("recall"), j.at("macro").at("f1")};
    r.weighted = {j.at("weighted").at("precision"), j.at("weighted").at("recall"),
                  j.at("weighted").at("f1")};
    r.accuracy = j.at("accuracy");
    r.sensitivity = j.at("sensitivity");
    r.specificity = j.at("specificity");
    r.total_support = j.at("total_support");
    r.zero_denominator = j.at("zero_denominator");
    return r;
}

inline std::string render_report(const SummaryReport& r, ReportFormat format) {
    if (format == ReportFormat::Json) return report_to_json(r).dump(2) + "\n";

    // rows: per class, then macro and weighted averages; the dataset-level
    // percentages ride on the first row as in the published table
    struct Row {
        std::string cells[8];
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        const auto& s = r.per_class[i];
        Row row{{s.name, fmt_score(s.precision), fmt_score(s.recall), fmt_score(s.f1),
                 std::to_string(s.support), "", "", ""}};
        if (i == 0) {
            row.cells[5] = fmt_percent(r.accuracy);
            row.cells[6] = fmt_percent(r.sensitivity);
            row.cells[7] = fmt_percent(r.specificity);
        }
        rows.push_back(row);
    }
    rows.push_back({{"Macro-average", fmt_score(r.macro.precision), fmt_score(r.macro.recall),
                     fmt_score(r.macro.f1), std::to_string(r.total_support), "", "", ""}});
    rows.push_back({{"weighted-average", fmt_score(r.weighted.precision), fmt_score(r.weighted.recall),
                     fmt_score(r.weighted.f1), std::to_string(r.total_support), "", "", ""}});

    std::ostringstream os;
    if (format == ReportFormat::Csv) {
        for (std::size_t c = 0; c < 8; ++c) os << (c ? "," : "") << kReportColumns[c];
        os << "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < 8; ++c) os << (c ? "," : "") << row.cells[c];
            os << "\n";
        }
    } else {
        os << "|";
        for (const auto* col : kReportColumns) os << " " << col << " |";
        os << "\n|";
        for (std::size_t c = 0; c < 8; ++c) os << " --- |";
        os << "\n";
        for (const auto& row : rows) {
            os << "|";
            for (std::size_t c = 0; c < 8; ++c) {
                os << " " << row.cells[c];
                os << " |";
            }
            os << "\n";
        }
        os << "\nraw percentages: accuracy " << fmt_raw(r.accuracy) << ", sensitivity "
           << fmt_raw(r.sensitivity) << ", specificity " << fmt_raw(r.specificity) << "\n";
    }
    return os.str();
}

// prediction-dump CSV: header optional, rows of id,true_label,predicted_label
inline void load_prediction_csv(const std::string& path, std::vector<std::string>& ids,
                                std::vector<std::string>& truth, std::vector<std::string>& predicted) {
    std::ifstream is(path);
    if (!is) throw MetricsError("cannot open prediction file: " + path);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, t, p;
        if (!std::getline(ls, id, ',') || !std::getline(ls, t, ',') || !std::getline(ls, p, ','))
            throw MetricsError("malformed prediction row: " + line);
        if (id == "id" && t == "true_label") continue;  // header
        ids.push_back(id);
        truth.push_back(t);
        predicted.push_back(p);
    }
    if (ids.empty()) throw MetricsError("prediction file has no rows: " + path);
}

}  // namespace synthaug
