#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "endoshift/dataset.hpp"

namespace endoshift {

enum class Condition { NoShift, ColorShift };

std::string_view to_string(Condition c);
std::optional<Condition> parse_condition(std::string_view s);

inline constexpr double kDefaultThreshold = 0.5;

struct PredictionRecord {
    std::string image_path;
    double prob_tumor = 0.0;
    std::string model_id;
    std::int64_t run_seed = 0;
    Condition condition = Condition::NoShift;

    bool operator==(const PredictionRecord&) const = default;
};

/// One JSON object per line. Blank lines are skipped; errors name the line.
std::vector<PredictionRecord> parse_predictions(std::istream& in);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);
void write_predictions(std::ostream& os, std::span<const PredictionRecord> preds);

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o)
    {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Positive class is tumor; prob_tumor >= threshold predicts tumor. Each
/// prediction must match exactly one manifest record, by image_path as
/// written or by resolved file path.
ConfusionMatrix confusion(std::span<const PredictionRecord> preds, const DatasetManifest& labels,
                          double threshold = kDefaultThreshold);

/// Undefined entries (no positives or no negatives) stay empty.
struct MetricTriple {
    std::optional<double> accuracy;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
};

MetricTriple metrics_from_cm(const ConfusionMatrix& cm);

struct RunMetrics {
    std::string model_id;
    Condition condition = Condition::NoShift;
    Cohort cohort = Cohort::IdTest;
    std::int64_t run_seed = 0;
    ConfusionMatrix cm;
    MetricTriple metrics;
};

struct MetricSummary {
    std::optional<double> mean;
    std::optional<double> std; // population
    std::size_t runs = 0;      // runs that contributed
    std::size_t undefined = 0; // runs excluded as undefined

    /// "m ± s" to two decimals, or "undefined".
    std::string formatted() const;
};

std::string format_mean_std(double mean, double std);
MetricSummary summarize(std::span<const std::optional<double>> values);

struct AggregateRow {
    std::string model_id;
    Condition condition = Condition::NoShift;
    Cohort cohort = Cohort::IdTest;
    MetricSummary accuracy;
    MetricSummary sensitivity;
    MetricSummary specificity;
    std::vector<RunMetrics> runs;
};

/// Throws when the runs do not share one (model, condition, cohort).
AggregateRow aggregate_runs(std::span<const RunMetrics> runs);

struct MetricsReport {
    std::vector<AggregateRow> rows;
    double threshold = kDefaultThreshold;
    std::map<std::string, std::string> provenance;
    /// Gaps and other remarks carried into every rendered artifact.
    std::vector<std::string> notices;
};

/// Groups runs by (model, condition, cohort), in first-seen order of models
/// and fixed order of conditions and cohorts.
MetricsReport build_report(std::span<const RunMetrics> runs, double threshold = kDefaultThreshold);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(std::string_view text);

/// Writes report.json, one table_<cohort>.txt per non-ID-test cohort and a
/// confusion-matrix image cm_<model>_<condition>.png per model/condition of
/// the ID test cohort. Returns the written paths in order.
std::vector<std::filesystem::path> render_report(const MetricsReport& report, const std::filesystem::path& out);

/// Plain-text table for one cohort, No Color Shift | Color Shift column groups.
std::string render_table(const MetricsReport& report, Cohort cohort);

} // namespace endoshift
