#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prosumm/metrics.hpp"

namespace prosumm {

enum class MetricKind { severity, recall, kappa, judge };

inline const std::vector<MetricKind>& all_metric_kinds() {
    static const std::vector<MetricKind> kinds = {MetricKind::severity, MetricKind::recall,
                                                  MetricKind::kappa, MetricKind::judge};
    return kinds;
}

inline const char* metric_key(MetricKind m) {
    switch (m) {
        case MetricKind::severity: return "severity";
        case MetricKind::recall: return "recall";
        case MetricKind::kappa: return "kappa";
        case MetricKind::judge: return "judge";
    }
    return "?";
}

inline const char* metric_title(MetricKind m) {
    switch (m) {
        case MetricKind::severity: return "Models Evaluation - Severity Score";
        case MetricKind::recall: return "Models Evaluation - Recall";
        case MetricKind::kappa: return "Models Evaluation - Kappa Cohen Index";
        case MetricKind::judge: return "Models Evaluation - LLM Based Score";
    }
    return "?";
}

/// Which records an aggregate sets aside. Vacuous records (no severe symptoms
/// at all) carry no keyword-metric signal, so severity and recall skip them by
/// default; kappa always keeps every record, degenerate ones at their +/-1
/// value; the judge metric skips records without a grade.
struct ExclusionPolicy {
    bool exclude_vacuous = true;
    bool exclude_missing_judge = true;
};

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation (divide by n)
    double max = 0.0;
    double min = 0.0;
    int n = 0;
    int n_excluded = 0;
};

namespace detail {

/// The metric value of one record, or nullopt when the policy excludes it.
inline std::optional<double> metric_value(const MetricRecord& r, MetricKind metric,
                                          const ExclusionPolicy& policy) {
    switch (metric) {
        case MetricKind::severity:
            if (policy.exclude_vacuous && r.severity_vacuous) return std::nullopt;
            return r.severity;
        case MetricKind::recall:
            if (policy.exclude_vacuous && r.severity_vacuous) return std::nullopt;
            return r.recall;
        case MetricKind::kappa:
            return r.kappa;
        case MetricKind::judge:
            if (!r.judge_grade) return policy.exclude_missing_judge
                                            ? std::nullopt
                                            : std::optional<double>(0.0);
            return *r.judge_grade;
    }
    return std::nullopt;
}

}  // namespace detail

/// Full-precision summary statistics over the non-excluded records.
inline std::optional<MetricStats> aggregate(const std::vector<MetricRecord>& records, MetricKind metric,
                                            const ExclusionPolicy& policy = {}) {
    std::vector<double> values;
    int excluded = 0;
    for (const auto& r : records) {
        if (auto v = detail::metric_value(r, metric, policy)) values.push_back(*v);
        else ++excluded;
    }
    if (values.empty()) return std::nullopt;

    MetricStats stats;
    stats.n = static_cast<int>(values.size());
    stats.n_excluded = excluded;
    double sum = 0.0;
    stats.max = values.front();
    stats.min = values.front();
    for (double v : values) {
        sum += v;
        stats.max = std::max(stats.max, v);
        stats.min = std::min(stats.min, v);
    }
    stats.mean = sum / stats.n;
    double sq = 0.0;
    for (double v : values) sq += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(sq / stats.n);
    return stats;
}

struct ModelStats {
    std::string model_id;
    std::optional<MetricStats> severity;
    std::optional<MetricStats> recall;
    std::optional<MetricStats> kappa;
    std::optional<MetricStats> judge;

    const std::optional<MetricStats>& of(MetricKind m) const {
        switch (m) {
            case MetricKind::severity: return severity;
            case MetricKind::recall: return recall;
            case MetricKind::kappa: return kappa;
            case MetricKind::judge: return judge;
        }
        return severity;
    }
};

inline ModelStats build_model_stats(const std::string& model_id, const std::vector<MetricRecord>& records,
                                    const ExclusionPolicy& policy = {}) {
    ModelStats stats;
    stats.model_id = model_id;
    stats.severity = aggregate(records, MetricKind::severity, policy);
    stats.recall = aggregate(records, MetricKind::recall, policy);
    stats.kappa = aggregate(records, MetricKind::kappa, policy);
    stats.judge = aggregate(records, MetricKind::judge, policy);
    return stats;
}

/// Half-up rounding to two decimals, applied only at emission time.
inline double round2(double v) {
    return std::floor(v * 100.0 + 0.5) / 100.0;
}

inline std::string format2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", round2(v));
    return buf;
}

enum class TableFormat { markdown, csv };

inline std::string emit_tables_markdown(const std::vector<ModelStats>& stats) {
    std::string out = "# Models Evaluation\n";
    for (MetricKind metric : all_metric_kinds()) {
        out += "\n## " + std::string(metric_title(metric)) + "\n\n";
        out += "| Model | Mean Score | Std Score | Max Score | Min Score |\n";
        out += "| --- | --- | --- | --- | --- |\n";
        for (const auto& model : stats) {
            const auto& s = model.of(metric);
            if (s) {
                out += "| " + model.model_id + " | " + format2(s->mean) + " | " + format2(s->stddev) +
                       " | " + format2(s->max) + " | " + format2(s->min) + " |\n";
            } else {
                out += "| " + model.model_id + " | - | - | - | - |\n";
            }
        }
    }
    out += "\nStd Score is the population standard deviation (divide by n). "
           "Rows aggregate each model's non-excluded records; exact n and exclusion "
           "counts are in tables.csv. Severity and Recall set aside records of forms "
           "with no severe symptoms; the LLM based score sets aside records without "
           "a judge grade.\n";
    return out;
}

inline std::string emit_tables_csv(const std::vector<ModelStats>& stats) {
    std::string out = "metric,model,mean,std,max,min,n,n_excluded\n";
    for (MetricKind metric : all_metric_kinds()) {
        for (const auto& model : stats) {
            const auto& s = model.of(metric);
            out += std::string(metric_key(metric)) + "," + csv_escape(model.model_id) + ",";
            if (s) {
                out += format2(s->mean) + "," + format2(s->stddev) + "," + format2(s->max) + "," +
                       format2(s->min) + "," + std::to_string(s->n) + "," +
                       std::to_string(s->n_excluded);
            } else {
                out += ",,,,0,";
            }
            out += "\n";
        }
    }
    return out;
}

inline std::string emit_tables(const std::vector<ModelStats>& stats, TableFormat format) {
    return format == TableFormat::markdown ? emit_tables_markdown(stats) : emit_tables_csv(stats);
}

/// Long-format score table for external violin/box plotting: one row per
/// non-excluded score, full precision.
inline std::string emit_distributions_csv(
    const std::vector<std::pair<std::string, std::vector<MetricRecord>>>& records_by_model,
    const ExclusionPolicy& policy = {}) {
    std::string out = "model_id,metric,value\n";
    for (const auto& [model_id, records] : records_by_model) {
        for (const auto& r : records) {
            for (MetricKind metric : all_metric_kinds()) {
                if (auto v = detail::metric_value(r, metric, policy)) {
                    out += csv_escape(model_id) + "," + metric_key(metric) + "," +
                           nlohmann::json(*v).dump() + "\n";
                }
            }
        }
    }
    return out;
}

}  // namespace prosumm
