#include "endoshift/evaluate.hpp"

#include <fstream>
#include <sstream>

#include "endoshift/error.hpp"
#include "endoshift/parallel.hpp"
#include "endoshift/shift_dataset.hpp"

namespace endoshift {

using nlohmann::json;

namespace {

void replace_all(std::string& s, std::string_view from, const std::string& to)
{
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

std::string cell_name(const std::string& model, std::int64_t seed, Condition condition, Cohort cohort)
{
    return "model=" + model + " seed=" + std::to_string(seed) + " condition=" + std::string(to_string(condition)) +
           " cohort=" + std::string(to_string(cohort));
}

DatasetManifest restrict_to(const DatasetManifest& m, Cohort cohort)
{
    DatasetManifest out;
    out.base_dir = m.base_dir;
    for (const auto& [k, v] : m.provenance)
        if (k.rfind("split.", 0) != 0)
            out.provenance[k] = v;
    for (const auto& r : m.records)
        if (r.cohort == cohort)
            out.records.push_back(r);
    return out;
}

} // namespace

std::filesystem::path RunConfig::prediction_path(const std::string& model, std::int64_t seed, Condition condition,
                                                 Cohort cohort) const
{
    std::string p = predictions;
    replace_all(p, "{model}", model);
    replace_all(p, "{seed}", std::to_string(seed));
    replace_all(p, "{condition}", std::string(to_string(condition)));
    replace_all(p, "{cohort}", std::string(to_string(cohort)));
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object())
        throw ValidationError("run config must be a JSON object");
    RunConfig cfg;
    cfg.base_dir = base_dir;
    cfg.canonical = j.dump();
    auto rel = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "manifests") {
                for (const auto& [cohort, path] : value.items()) {
                    const auto c = parse_cohort(cohort);
                    if (!c)
                        throw ValidationError("unknown cohort '" + cohort + "' in manifests");
                    cfg.manifests[*c] = rel(path.get<std::string>());
                }
            } else if (key == "reference") {
                cfg.reference = rel(value.get<std::string>());
            } else if (key == "transfer") {
                cfg.transfer = transfer_config_from_json(value);
            } else if (key == "threshold") {
                cfg.threshold = value.get<double>();
            } else if (key == "seeds") {
                cfg.seeds = value.get<std::vector<std::int64_t>>();
            } else if (key == "models") {
                cfg.models = value.get<std::vector<std::string>>();
            } else if (key == "predictions") {
                cfg.predictions = value.get<std::string>();
            } else if (key == "output") {
                cfg.output = rel(value.get<std::string>());
            } else if (key == "max_failure_fraction") {
                cfg.max_failure_fraction = value.get<double>();
            } else {
                throw ValidationError("unknown config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid run config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

void validate(const RunConfig& cfg)
{
    std::vector<std::string> problems;
    if (cfg.manifests.empty())
        problems.push_back("no manifests configured");
    for (const auto& [cohort, path] : cfg.manifests)
        if (!std::filesystem::is_regular_file(path))
            problems.push_back("manifest for " + std::string(to_string(cohort)) + " not found: " + path.string());
    if (cfg.reference.empty())
        problems.push_back("no reference image configured");
    else if (!std::filesystem::is_regular_file(cfg.reference))
        problems.push_back("reference image not found: " + cfg.reference.string());
    if (cfg.seeds.empty())
        problems.push_back("seeds must be non-empty");
    if (cfg.models.empty())
        problems.push_back("models must be non-empty");
    if (cfg.output.empty())
        problems.push_back("no output directory configured");
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0))
        problems.push_back("threshold must be in (0,1)");
    if (!(cfg.max_failure_fraction >= 0.0 && cfg.max_failure_fraction <= 1.0))
        problems.push_back("max_failure_fraction must be in [0,1]");
    try {
        cfg.transfer.validate();
    } catch (const ValidationError& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) {
        std::string msg = "invalid run config:";
        for (const auto& p : problems)
            msg += "\n  " + p;
        throw ValidationError(msg);
    }
}

EvaluateResult evaluate(const RunConfig& cfg)
{
    validate(cfg);
    EvaluateResult result;
    result.provenance = version_stamp(cfg.canonical, cfg.reference);
    const auto stamp = result.provenance.fields();

    struct CohortData {
        Cohort cohort;
        DatasetManifest original;
        DatasetManifest shifted;
    };
    std::vector<CohortData> cohorts;
    for (const auto& [cohort, path] : cfg.manifests) {
        CohortData d{cohort, restrict_to(load_manifest(path), cohort), {}};
        if (d.original.records.empty())
            result.errors.push_back("manifest " + path.string() + " has no " + std::string(to_string(cohort)) +
                                    " records");
        ShiftOptions opts;
        opts.max_failure_fraction = cfg.max_failure_fraction;
        opts.provenance = stamp;
        ShiftResult shifted = shift_dataset(d.original, cfg.reference, cfg.transfer,
                                            cfg.output / "shifted" / std::string(to_string(cohort)), opts);
        result.artifacts.push_back(shifted.manifest_path);
        result.artifacts.push_back(shifted.report_path);
        if (shifted.summary.run_failed)
            result.errors.push_back("color shift failed for " + std::to_string(shifted.summary.failed) + " of " +
                                    std::to_string(shifted.summary.total) + " " + std::string(to_string(cohort)) +
                                    " images");
        d.shifted = std::move(shifted.manifest);
        cohorts.push_back(std::move(d));
    }

    struct Cell {
        std::string model;
        std::int64_t seed;
        Condition condition;
        const CohortData* data;
        std::optional<RunMetrics> run;
        bool missing = false;
        std::string error;
    };
    std::vector<Cell> cells;
    for (const auto& data : cohorts)
        for (const auto& model : cfg.models)
            for (Condition condition : {Condition::NoShift, Condition::ColorShift})
                for (std::int64_t seed : cfg.seeds)
                    cells.push_back({model, seed, condition, &data, std::nullopt, false, {}});

    parallel_for(cells.size(), [&](std::size_t i) {
        Cell& c = cells[i];
        const auto path = cfg.prediction_path(c.model, c.seed, c.condition, c.data->cohort);
        if (!std::filesystem::is_regular_file(path)) {
            c.missing = true;
            return;
        }
        const std::string name = cell_name(c.model, c.seed, c.condition, c.data->cohort);
        try {
            const auto preds = load_predictions(path);
            for (const auto& p : preds)
                if (p.model_id != c.model || p.run_seed != c.seed || p.condition != c.condition)
                    throw ValidationError("record for '" + p.image_path + "' belongs to a different cell");
            const DatasetManifest& labels = c.condition == Condition::ColorShift ? c.data->shifted : c.data->original;
            RunMetrics run;
            run.model_id = c.model;
            run.run_seed = c.seed;
            run.condition = c.condition;
            run.cohort = c.data->cohort;
            run.cm = confusion(preds, labels, cfg.threshold);
            run.metrics = metrics_from_cm(run.cm);
            c.run = std::move(run);
        } catch (const std::exception& e) {
            c.error = name + ": " + e.what();
        }
    });

    std::vector<RunMetrics> runs;
    for (const auto& c : cells) {
        const std::string name = cell_name(c.model, c.seed, c.condition, c.data->cohort);
        if (c.missing)
            result.missing_cells.push_back(name + " (" +
                                           cfg.prediction_path(c.model, c.seed, c.condition, c.data->cohort).string() +
                                           ")");
        else if (!c.error.empty())
            result.errors.push_back(c.error);
        else
            runs.push_back(*c.run);
    }

    result.report = build_report(runs, cfg.threshold);
    result.report.provenance = stamp;
    for (const auto& m : result.missing_cells)
        result.report.notices.push_back("missing " + m);
    for (const auto& e : result.errors)
        result.report.notices.push_back("error " + e);

    if (!result.report.rows.empty()) {
        const auto written = render_report(result.report, cfg.output / "report");
        result.artifacts.insert(result.artifacts.end(), written.begin(), written.end());
    }

    if (!result.errors.empty() || result.report.rows.empty())
        result.exit_code = kExitValidation;
    else if (!result.missing_cells.empty())
        result.exit_code = kExitPartial;
    return result;
}

} // namespace endoshift
