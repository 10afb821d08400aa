#include "endoshift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "endoshift/error.hpp"

namespace endoshift {

using nlohmann::json;

std::string_view to_string(Condition c) { return c == Condition::NoShift ? "no_shift" : "color_shift"; }

std::optional<Condition> parse_condition(std::string_view s)
{
    if (s == "no_shift")
        return Condition::NoShift;
    if (s == "color_shift")
        return Condition::ColorShift;
    return std::nullopt;
}

std::vector<PredictionRecord> parse_predictions(std::istream& in)
{
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto where = " at line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw ValidationError("malformed JSON" + where);
        }
        if (!j.is_object())
            throw ValidationError("expected a JSON object" + where);
        auto field = [&](const char* key) -> const json& {
            const auto it = j.find(key);
            if (it == j.end())
                throw ValidationError(std::string("missing field '") + key + "'" + where);
            return *it;
        };
        PredictionRecord r;
        const json& path = field("image_path");
        const json& prob = field("prob_tumor");
        const json& model = field("model_id");
        const json& seed = field("run_seed");
        const json& cond = field("condition");
        if (!path.is_string() || path.get<std::string>().empty())
            throw ValidationError("invalid image_path" + where);
        if (!prob.is_number())
            throw ValidationError("invalid prob_tumor" + where);
        if (!model.is_string())
            throw ValidationError("invalid model_id" + where);
        if (!seed.is_number_integer())
            throw ValidationError("invalid run_seed" + where);
        if (!cond.is_string())
            throw ValidationError("invalid condition" + where);
        r.image_path = path.get<std::string>();
        r.prob_tumor = prob.get<double>();
        if (!(r.prob_tumor >= 0.0 && r.prob_tumor <= 1.0))
            throw ValidationError("prob_tumor outside [0,1]" + where);
        r.model_id = model.get<std::string>();
        r.run_seed = seed.get<std::int64_t>();
        const auto c = parse_condition(cond.get<std::string>());
        if (!c)
            throw ValidationError("unknown condition" + where);
        r.condition = *c;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open predictions " + path.string());
    try {
        return parse_predictions(in);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_predictions(std::ostream& os, std::span<const PredictionRecord> preds)
{
    for (const auto& p : preds) {
        const json j{{"image_path", p.image_path},
                     {"prob_tumor", p.prob_tumor},
                     {"model_id", p.model_id},
                     {"run_seed", p.run_seed},
                     {"condition", to_string(p.condition)}};
        os << j.dump() << '\n';
    }
}

ConfusionMatrix confusion(std::span<const PredictionRecord> preds, const DatasetManifest& labels, double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("threshold must be in (0,1)");
    std::unordered_map<std::string, std::size_t> by_path, by_file;
    for (std::size_t i = 0; i < labels.records.size(); ++i) {
        by_path.emplace(labels.records[i].image_path, i);
        by_file.emplace(labels.resolve(labels.records[i]).lexically_normal().string(), i);
    }

    ConfusionMatrix cm;
    std::vector<char> seen(labels.records.size(), 0);
    std::vector<std::string> orphans;
    for (const auto& p : preds) {
        std::size_t idx = 0;
        if (const auto it = by_path.find(p.image_path); it != by_path.end()) {
            idx = it->second;
        } else if (const auto f = by_file.find(std::filesystem::path(p.image_path).lexically_normal().string());
                   f != by_file.end()) {
            idx = f->second;
        } else {
            orphans.push_back(p.image_path);
            continue;
        }
        if (seen[idx]++)
            throw ValidationError("duplicate prediction for '" + labels.records[idx].image_path + "'");
        const bool truth = labels.records[idx].label == Label::Tumor;
        const bool predicted = p.prob_tumor >= threshold;
        if (truth && predicted)
            ++cm.tp;
        else if (truth)
            ++cm.fn;
        else if (predicted)
            ++cm.fp;
        else
            ++cm.tn;
    }
    if (!orphans.empty()) {
        std::string msg = std::to_string(orphans.size()) + " prediction(s) without a matching label:";
        for (std::size_t i = 0; i < orphans.size() && i < 20; ++i)
            msg += " " + orphans[i];
        if (orphans.size() > 20)
            msg += " ...";
        throw ValidationError(msg);
    }
    return cm;
}

MetricTriple metrics_from_cm(const ConfusionMatrix& cm)
{
    const std::size_t n = cm.total();
    if (n == 0)
        throw ValidationError("empty confusion matrix");
    MetricTriple m;
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
    if (cm.tp + cm.fn > 0)
        m.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (cm.tn + cm.fp > 0)
        m.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
    return m;
}

std::string format_mean_std(double mean, double std)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, std);
    return buf;
}

std::string MetricSummary::formatted() const
{
    if (!mean)
        return "undefined";
    return format_mean_std(*mean, std.value_or(0.0));
}

MetricSummary summarize(std::span<const std::optional<double>> values)
{
    MetricSummary s;
    double sum = 0;
    for (const auto& v : values) {
        if (!v) {
            ++s.undefined;
            continue;
        }
        sum += *v;
        ++s.runs;
    }
    if (s.runs == 0)
        return s;
    const auto first = std::find_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
    if (std::all_of(values.begin(), values.end(), [&](const auto& v) { return !v || *v == **first; })) {
        s.mean = **first;
        s.std = 0.0;
        return s;
    }
    const double mean = sum / static_cast<double>(s.runs);
    double ss = 0;
    for (const auto& v : values)
        if (v)
            ss += (*v - mean) * (*v - mean);
    s.mean = mean;
    s.std = std::sqrt(ss / static_cast<double>(s.runs));
    return s;
}

AggregateRow aggregate_runs(std::span<const RunMetrics> runs)
{
    if (runs.empty())
        throw ValidationError("aggregate_runs: no runs");
    AggregateRow row;
    row.model_id = runs.front().model_id;
    row.condition = runs.front().condition;
    row.cohort = runs.front().cohort;
    std::vector<std::optional<double>> acc, sens, spec;
    for (const auto& r : runs) {
        if (r.cohort != row.cohort)
            throw ValidationError("cannot aggregate runs from different cohorts (" + std::string(to_string(row.cohort)) +
                                  ", " + std::string(to_string(r.cohort)) + ")");
        if (r.model_id != row.model_id || r.condition != row.condition)
            throw ValidationError("cannot aggregate runs from different models or conditions");
        acc.push_back(r.metrics.accuracy);
        sens.push_back(r.metrics.sensitivity);
        spec.push_back(r.metrics.specificity);
    }
    row.accuracy = summarize(acc);
    row.sensitivity = summarize(sens);
    row.specificity = summarize(spec);
    row.runs.assign(runs.begin(), runs.end());
    return row;
}

MetricsReport build_report(std::span<const RunMetrics> runs, double threshold)
{
    MetricsReport report;
    report.threshold = threshold;
    std::vector<std::string> models;
    for (const auto& r : runs)
        if (std::find(models.begin(), models.end(), r.model_id) == models.end())
            models.push_back(r.model_id);
    for (Cohort cohort : kAllCohorts)
        for (const auto& model : models)
            for (Condition cond : {Condition::NoShift, Condition::ColorShift}) {
                std::vector<RunMetrics> cell;
                for (const auto& r : runs)
                    if (r.cohort == cohort && r.model_id == model && r.condition == cond)
                        cell.push_back(r);
                if (!cell.empty())
                    report.rows.push_back(aggregate_runs(cell));
            }
    return report;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j)
{
    if (j.is_null())
        return std::nullopt;
    return j.get<double>();
}

json summary_json(const MetricSummary& s)
{
    return {{"mean", optional_json(s.mean)},
            {"std", optional_json(s.std)},
            {"runs", s.runs},
            {"undefined", s.undefined},
            {"formatted", s.formatted()}};
}

MetricSummary summary_from(const json& j)
{
    MetricSummary s;
    s.mean = optional_from(j.at("mean"));
    s.std = optional_from(j.at("std"));
    s.runs = j.at("runs").get<std::size_t>();
    s.undefined = j.at("undefined").get<std::size_t>();
    return s;
}

} // namespace

std::string report_to_json(const MetricsReport& report)
{
    json rows = json::array();
    for (const auto& row : report.rows) {
        json runs = json::array();
        for (const auto& r : row.runs)
            runs.push_back({{"run_seed", r.run_seed},
                            {"tp", r.cm.tp},
                            {"fp", r.cm.fp},
                            {"tn", r.cm.tn},
                            {"fn", r.cm.fn},
                            {"accuracy", optional_json(r.metrics.accuracy)},
                            {"sensitivity", optional_json(r.metrics.sensitivity)},
                            {"specificity", optional_json(r.metrics.specificity)}});
        rows.push_back({{"model_id", row.model_id},
                        {"condition", to_string(row.condition)},
                        {"cohort", to_string(row.cohort)},
                        {"accuracy", summary_json(row.accuracy)},
                        {"sensitivity", summary_json(row.sensitivity)},
                        {"specificity", summary_json(row.specificity)},
                        {"runs", std::move(runs)}});
    }
    const json j{{"provenance", report.provenance},
                 {"threshold", report.threshold},
                 {"std", "population"},
                 {"notices", report.notices},
                 {"rows", std::move(rows)}};
    return j.dump(2) + "\n";
}

MetricsReport report_from_json(std::string_view text)
{
    MetricsReport report;
    try {
        const json j = json::parse(text);
        report.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
        report.threshold = j.at("threshold").get<double>();
        report.notices = j.at("notices").get<std::vector<std::string>>();
        for (const auto& jr : j.at("rows")) {
            AggregateRow row;
            row.model_id = jr.at("model_id").get<std::string>();
            const auto cond = parse_condition(jr.at("condition").get<std::string>());
            const auto cohort = parse_cohort(jr.at("cohort").get<std::string>());
            if (!cond || !cohort)
                throw ValidationError("report row has an unknown condition or cohort");
            row.condition = *cond;
            row.cohort = *cohort;
            row.accuracy = summary_from(jr.at("accuracy"));
            row.sensitivity = summary_from(jr.at("sensitivity"));
            row.specificity = summary_from(jr.at("specificity"));
            for (const auto& jrun : jr.at("runs")) {
                RunMetrics r;
                r.model_id = row.model_id;
                r.condition = row.condition;
                r.cohort = row.cohort;
                r.run_seed = jrun.at("run_seed").get<std::int64_t>();
                r.cm = {jrun.at("tp").get<std::size_t>(), jrun.at("fp").get<std::size_t>(),
                        jrun.at("tn").get<std::size_t>(), jrun.at("fn").get<std::size_t>()};
                r.metrics = {optional_from(jrun.at("accuracy")), optional_from(jrun.at("sensitivity")),
                             optional_from(jrun.at("specificity"))};
                row.runs.push_back(std::move(r));
            }
            report.rows.push_back(std::move(row));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid report JSON: ") + e.what());
    }
    return report;
}

} // namespace endoshift
