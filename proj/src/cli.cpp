#include "endoshift/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "endoshift/dataset.hpp"
#include "endoshift/error.hpp"
#include "endoshift/evaluate.hpp"
#include "endoshift/image_io.hpp"
#include "endoshift/metrics.hpp"
#include "endoshift/parallel.hpp"
#include "endoshift/provenance.hpp"
#include "endoshift/shift_dataset.hpp"

namespace endoshift {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Cohort require_cohort(const std::string& name)
{
    const auto c = parse_cohort(name);
    if (!c)
        throw ValidationError("unknown cohort '" + name + "'");
    return *c;
}

DatasetManifest filter_cohort(const DatasetManifest& m, const std::string& cohort)
{
    if (cohort.empty())
        return m;
    const Cohort c = require_cohort(cohort);
    DatasetManifest out = m;
    out.records.clear();
    for (const auto& r : m.records)
        if (r.cohort == c)
            out.records.push_back(r);
    return out;
}

std::string record_stem(std::size_t row, const std::string& image_path)
{
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%05zu_", row);
    return prefix + fs::path(image_path).stem().string();
}

// --- preprocess ------------------------------------------------------------

struct PreprocessArgs {
    std::string manifest;
    std::string out;
    std::string cohort;
};

int cmd_preprocess(const PreprocessArgs& a)
{
    const DatasetManifest m = filter_cohort(load_manifest(a.manifest), a.cohort);
    for (const auto& w : m.warnings)
        std::cerr << "warning: " << w << '\n';
    const PreprocessedTensorSpec spec = kImageNetSpec;
    const json cfg{{"command", "preprocess"},
                   {"manifest_sha256", sha256_file(a.manifest)},
                   {"cohort", a.cohort},
                   {"side", spec.side},
                   {"mean", spec.mean},
                   {"std", spec.std}};
    const Provenance prov = version_stamp(cfg.dump());

    const fs::path out(a.out);
    std::vector<std::string> errors(m.records.size());
    parallel_for(m.records.size(), [&](std::size_t i) {
        try {
            const Tensor3 t = preprocess(read_image(m.resolve(m.records[i])), spec);
            write_npy(out / "tensors" / (record_stem(i, m.records[i].image_path) + ".npy"), t);
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty())
                errors[i] = "unknown error";
        }
    });

    json records = json::array(), failed = json::array();
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (!errors[i].empty()) {
            failed.push_back({{"row", i}, {"image_path", r.image_path}, {"error", errors[i]}});
            continue;
        }
        records.push_back({{"row", i},
                           {"image_path", r.image_path},
                           {"label", to_string(r.label)},
                           {"timepoint", to_string(r.timepoint)},
                           {"patient_id", r.patient_id},
                           {"cohort", to_string(r.cohort)},
                           {"color_shift", r.color_shift},
                           {"tensor", "tensors/" + record_stem(i, r.image_path) + ".npy"}});
    }
    json index{{"provenance", prov.fields()},
               {"tensor", {{"shape", {3, spec.side, spec.side}}, {"dtype", "float32"}, {"layout", "CHW"}}},
               {"resize", "direct bilinear, pixel-centre aligned, aspect ratio not preserved"},
               {"mean", spec.mean},
               {"std", spec.std},
               {"manifest_provenance", m.provenance},
               {"records", records},
               {"failed", failed}};
    write_json(out / "index.json", index);
    std::cout << records.size() << " of " << m.records.size() << " images preprocessed into " << out.string() << '\n';
    if (failed.empty())
        return kExitOk;
    for (const auto& f : failed)
        std::cerr << "error: " << f["image_path"].get<std::string>() << ": " << f["error"].get<std::string>() << '\n';
    return records.empty() ? kExitValidation : kExitPartial;
}

// --- shift -----------------------------------------------------------------

struct ShiftArgs {
    std::string manifest;
    std::string reference;
    std::string out;
    std::string cohort;
    TransferConfig cfg;
    bool no_smooth = false;
    bool no_debias = false;
    ShiftOptions opts;
};

int cmd_shift(ShiftArgs a)
{
    a.cfg.post_smooth = !a.no_smooth;
    a.cfg.debias = !a.no_debias;
    const DatasetManifest m = filter_cohort(load_manifest(a.manifest), a.cohort);
    const ShiftResult r = shift_dataset(m, a.reference, a.cfg, a.out, a.opts);
    const auto& s = r.summary;
    std::cout << s.succeeded << " of " << s.total << " images shifted; manifest " << r.manifest_path.string()
              << "; report " << r.report_path.string() << '\n';
    for (const auto& rec : s.records)
        if (!rec.error.empty())
            std::cerr << "error: " << rec.source_path << ": " << rec.error << '\n';
    if (s.run_failed)
        return kExitValidation;
    return s.failed ? kExitPartial : kExitOk;
}

// --- score -----------------------------------------------------------------

struct ScoreArgs {
    std::string predictions;
    std::string manifest;
    std::string shifted_manifest;
    std::string cohort;
    std::string out;
    double threshold = kDefaultThreshold;
};

int cmd_score(const ScoreArgs& a)
{
    const Cohort cohort = require_cohort(a.cohort);
    const DatasetManifest labels = filter_cohort(load_manifest(a.manifest), a.cohort);
    DatasetManifest shifted_labels = labels;
    if (!a.shifted_manifest.empty())
        shifted_labels = filter_cohort(load_manifest(a.shifted_manifest), a.cohort);
    const auto preds = load_predictions(a.predictions);
    if (preds.empty())
        throw ValidationError("no predictions in " + a.predictions);

    std::map<std::tuple<std::string, Condition, std::int64_t>, std::vector<PredictionRecord>> groups;
    for (const auto& p : preds)
        groups[{p.model_id, p.condition, p.run_seed}].push_back(p);
    std::vector<RunMetrics> runs;
    for (const auto& [key, group] : groups) {
        const auto& [model, condition, seed] = key;
        RunMetrics run;
        run.model_id = model;
        run.condition = condition;
        run.run_seed = seed;
        run.cohort = cohort;
        try {
            run.cm = confusion(group, condition == Condition::ColorShift ? shifted_labels : labels, a.threshold);
        } catch (const ValidationError& e) {
            throw ValidationError("model=" + model + " seed=" + std::to_string(seed) +
                                  " condition=" + std::string(to_string(condition)) + ": " + e.what());
        }
        run.metrics = metrics_from_cm(run.cm);
        runs.push_back(std::move(run));
    }

    json cfg{{"command", "score"},
             {"cohort", a.cohort},
             {"threshold", a.threshold},
             {"predictions_sha256", sha256_file(a.predictions)},
             {"manifest_sha256", sha256_file(a.manifest)}};
    if (!a.shifted_manifest.empty())
        cfg["shifted_manifest_sha256"] = sha256_file(a.shifted_manifest);
    MetricsReport report = build_report(runs, a.threshold);
    report.provenance = version_stamp(cfg.dump()).fields();
    const auto written = render_report(report, a.out);
    for (const auto& row : report.rows)
        std::cout << row.model_id << '\t' << to_string(row.condition) << "\tacc " << row.accuracy.formatted()
                  << "\tsens " << row.sensitivity.formatted() << "\tspec " << row.specificity.formatted() << '\n';
    std::cout << written.size() << " artifacts written to " << a.out << '\n';
    return kExitOk;
}

// --- report ----------------------------------------------------------------

int cmd_report(const std::string& input, const std::string& out)
{
    std::ifstream in(input);
    if (!in)
        throw ValidationError("cannot open " + input);
    std::ostringstream text;
    text << in.rdbuf();
    const auto written = render_report(report_from_json(text.str()), out);
    std::cout << written.size() << " artifacts written to " << out << '\n';
    return kExitOk;
}

// --- evaluate --------------------------------------------------------------

int cmd_evaluate(const std::string& config)
{
    const EvaluateResult r = evaluate(load_run_config(config));
    for (const auto& m : r.missing_cells)
        std::cerr << "missing: " << m << '\n';
    for (const auto& e : r.errors)
        std::cerr << "error: " << e << '\n';
    std::cout << r.provenance.stamp() << '\n' << r.artifacts.size() << " artifacts written\n";
    return r.exit_code;
}

// --- plan / summary --------------------------------------------------------

struct PlanArgs {
    std::string manifest;
    std::string cohort = "id_train";
    std::string out;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
};

int cmd_plan(const PlanArgs& a)
{
    const DatasetManifest m = filter_cohort(load_manifest(a.manifest), a.cohort);
    const BatchPlan plan = balanced_batch_plan(m, a.batch, a.seed);
    json batches = json::array();
    for (const auto& b : plan) {
        json paths = json::array();
        for (std::size_t i : b)
            paths.push_back(m.records[i].image_path);
        batches.push_back(std::move(paths));
    }
    const json cfg{{"command", "plan"},
                   {"manifest_sha256", sha256_file(a.manifest)},
                   {"cohort", a.cohort},
                   {"batch", a.batch},
                   {"seed", a.seed}};
    const json doc{{"provenance", version_stamp(cfg.dump()).fields()},
                   {"cohort", a.cohort},
                   {"batch", a.batch},
                   {"seed", a.seed},
                   {"batches", batches}};
    if (a.out.empty())
        std::cout << doc.dump(2) << '\n';
    else
        write_json(a.out, doc);
    return kExitOk;
}

int cmd_summary(const std::string& manifest)
{
    const DatasetManifest m = load_manifest(manifest);
    for (const auto& w : m.warnings)
        std::cerr << "warning: " << w << '\n';
    const SplitSummary s = split_summary(m);
    write_split_summary(std::cout, s);
    return s.leaked_patients.empty() ? kExitOk : kExitValidation;
}

} // namespace

int run_cli(int argc, char** argv)
{
    CLI::App app{"Optimal-transport colour shifts and robustness reports for endoscopy classifiers", "endoshift"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "Resize to 224x224 and normalise every manifest image to .npy");
    c_pre->add_option("--manifest", pre.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
    c_pre->add_option("--out", pre.out, "Output directory")->required();
    c_pre->add_option("--cohort", pre.cohort, "Only records of this cohort");

    ShiftArgs sh;
    auto* c_shift = app.add_subcommand("shift", "Transfer the colours of one reference image onto a dataset");
    c_shift->add_option("--manifest", sh.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
    c_shift->add_option("--reference", sh.reference, "Reference image")->required()->check(CLI::ExistingFile);
    c_shift->add_option("--out", sh.out, "Output directory")->required();
    c_shift->add_option("--cohort", sh.cohort, "Only records of this cohort");
    c_shift->add_option("--epsilon", sh.cfg.epsilon, "Sinkhorn regularisation relative to the max ground cost")
        ->capture_default_str();
    c_shift->add_option("--tol", sh.cfg.tol, "Sinkhorn marginal tolerance")->capture_default_str();
    c_shift->add_option("--max-iter", sh.cfg.max_iter, "Sinkhorn iteration cap")->capture_default_str();
    c_shift->add_option("--bins-l", sh.cfg.l_bins, "Luminance bins")->capture_default_str();
    c_shift->add_option("--bins-ab", sh.cfg.ab_bins, "Chroma bins per axis")->capture_default_str();
    c_shift->add_option("--floor", sh.cfg.floor, "Histogram mass floor")->capture_default_str();
    c_shift->add_flag("--no-smooth", sh.no_smooth, "Disable displacement smoothing");
    c_shift->add_flag("--no-debias", sh.no_debias, "Use the raw entropic map without self-transport correction");
    c_shift->add_option("--max-failure-fraction", sh.opts.max_failure_fraction,
                        "Fail the run when more than this fraction of images cannot be shifted")
        ->capture_default_str();
    c_shift->add_flag("--side-by-side", sh.opts.write_side_by_side, "Also write source|result comparison images");
    c_shift->add_flag("--dump-histograms", sh.opts.dump_histograms, "Write per-image histogram text dumps");
    c_shift->add_flag("--dump-plans", sh.opts.dump_plans, "Write per-image Sinkhorn coupling and convergence trace");

    ScoreArgs sc;
    auto* c_score = app.add_subcommand("score", "Score a prediction file against manifest labels");
    c_score->add_option("--predictions", sc.predictions, "PredictionRecord JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    c_score->add_option("--manifest", sc.manifest, "Label manifest")->required()->check(CLI::ExistingFile);
    c_score->add_option("--shifted-manifest", sc.shifted_manifest, "Manifest for color_shift predictions")
        ->check(CLI::ExistingFile);
    c_score->add_option("--cohort", sc.cohort, "Cohort to score")->required();
    c_score->add_option("--out", sc.out, "Output directory")->required();
    c_score->add_option("--threshold", sc.threshold, "prob_tumor >= threshold predicts tumor")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));

    std::string rep_in, rep_out;
    auto* c_report = app.add_subcommand("report", "Re-render tables and confusion matrices from report.json");
    c_report->add_option("--input", rep_in, "report.json")->required()->check(CLI::ExistingFile);
    c_report->add_option("--out", rep_out, "Output directory")->required();

    std::string eval_cfg;
    auto* c_eval = app.add_subcommand("evaluate", "Run the full cohort x condition matrix from a JSON config");
    c_eval->add_option("--config", eval_cfg, "Run config (JSON)")->required()->check(CLI::ExistingFile);

    PlanArgs pl;
    auto* c_plan = app.add_subcommand("plan", "Emit one epoch of class-balanced mini-batches");
    c_plan->add_option("--manifest", pl.manifest, "Input manifest")->required()->check(CLI::ExistingFile);
    c_plan->add_option("--cohort", pl.cohort, "Cohort to sample")->capture_default_str();
    c_plan->add_option("--batch", pl.batch, "Batch size (even)")->capture_default_str();
    c_plan->add_option("--seed", pl.seed, "Shuffle seed")->capture_default_str();
    c_plan->add_option("--out", pl.out, "Output JSON (stdout when omitted)");

    std::string sum_manifest;
    auto* c_sum = app.add_subcommand("summary", "Per-cohort counts and patient leakage check");
    c_sum->add_option("--manifest", sum_manifest, "Input manifest")->required()->check(CLI::ExistingFile);

    app.footer("Environment: ENDOSHIFT_THREADS sets the worker count.\n"
               "Exit codes: 0 success, 2 validation failure, 3 partial results.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*c_pre)
            return cmd_preprocess(pre);
        if (*c_shift)
            return cmd_shift(sh);
        if (*c_score)
            return cmd_score(sc);
        if (*c_report)
            return cmd_report(rep_in, rep_out);
        if (*c_eval)
            return cmd_evaluate(eval_cfg);
        if (*c_plan)
            return cmd_plan(pl);
        if (*c_sum)
            return cmd_summary(sum_manifest);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitValidation;
}

} // namespace endoshift
