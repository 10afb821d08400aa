#include "endoshift/shift_dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "endoshift/error.hpp"
#include "endoshift/image_io.hpp"
#include "endoshift/parallel.hpp"
#include "endoshift/provenance.hpp"

namespace endoshift {

namespace {

std::string output_stem(std::size_t row, const std::string& image_path)
{
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%05zu_", row);
    return prefix + std::filesystem::path(image_path).stem().string();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
}

} // namespace

nlohmann::json transfer_config_to_json(const TransferConfig& cfg)
{
    return {{"l_bins", cfg.l_bins},   {"ab_bins", cfg.ab_bins},   {"epsilon", cfg.epsilon},
            {"tol", cfg.tol},         {"max_iter", cfg.max_iter}, {"floor", cfg.floor},
            {"post_smooth", cfg.post_smooth}, {"debias", cfg.debias}};
}

TransferConfig transfer_config_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("transfer config must be an object");
    TransferConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "l_bins")
                cfg.l_bins = value.get<std::size_t>();
            else if (key == "ab_bins")
                cfg.ab_bins = value.get<std::size_t>();
            else if (key == "epsilon")
                cfg.epsilon = value.get<double>();
            else if (key == "tol")
                cfg.tol = value.get<double>();
            else if (key == "max_iter")
                cfg.max_iter = value.get<std::size_t>();
            else if (key == "floor")
                cfg.floor = value.get<double>();
            else if (key == "post_smooth")
                cfg.post_smooth = value.get<bool>();
            else if (key == "debias")
                cfg.debias = value.get<bool>();
            else
                throw ValidationError("unknown transfer config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid transfer config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json transfer_report_to_json(const TransferReport& r)
{
    return {{"l_w1_pre", r.l_w1_pre},
            {"l_w1_post", r.l_w1_post},
            {"chroma_cost_pre", r.chroma_cost_pre},
            {"chroma_cost_post", r.chroma_cost_post},
            {"clamped_fraction", r.clamped_fraction},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"warnings", r.warnings}};
}

ShiftResult shift_dataset(const DatasetManifest& manifest, const std::filesystem::path& ref_path,
                          const TransferConfig& cfg, const std::filesystem::path& out_dir, const ShiftOptions& opts)
{
    cfg.validate();
    if (!(opts.max_failure_fraction >= 0.0 && opts.max_failure_fraction <= 1.0))
        throw ValidationError("max_failure_fraction must be in [0,1]");
    const RgbImage ref = read_image(ref_path);
    const nlohmann::json cfg_json = transfer_config_to_json(cfg);

    std::map<std::string, std::string> stamp = opts.provenance;
    if (stamp.empty())
        stamp = version_stamp(cfg_json.dump(), ref_path).fields();

    const std::size_t n = manifest.records.size();
    std::vector<ShiftRecordOutcome> outcomes(n);
    parallel_for(n, [&](std::size_t i) {
        const DatasetRecord& rec = manifest.records[i];
        ShiftRecordOutcome& o = outcomes[i];
        o.index = i;
        o.source_path = rec.image_path;
        try {
            const RgbImage src = read_image(manifest.resolve(rec));
            TransferDiagnostics diag;
            const bool want_diag = opts.dump_histograms || opts.dump_plans;
            TransferResult r = transfer_colors(src, ref, cfg, want_diag ? &diag : nullptr);
            const std::string stem = output_stem(i, rec.image_path);
            const std::string rel = "images/" + stem + ".png";
            write_png(out_dir / rel, r.image, stamp);
            if (opts.write_side_by_side)
                write_png(out_dir / "side_by_side" / (stem + ".png"), side_by_side(src, r.image), stamp);
            if (opts.dump_histograms) {
                std::ostringstream l, ab;
                write_histogram_text(l, diag.src_l);
                l << "# reference\n";
                write_histogram_text(l, diag.ref_l);
                write_histogram_text(ab, diag.src_ab);
                ab << "# reference\n";
                write_histogram_text(ab, diag.ref_ab);
                write_text(out_dir / "diagnostics" / (stem + "_hist_L.txt"), l.str());
                write_text(out_dir / "diagnostics" / (stem + "_hist_ab.txt"), ab.str());
            }
            if (opts.dump_plans) {
                std::ostringstream plan;
                write_plan_diagnostics(plan, diag.chroma_solve);
                write_text(out_dir / "diagnostics" / (stem + "_plan.txt"), plan.str());
            }
            o.output_path = rel;
            o.report = std::move(r.report);
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    ShiftResult result;
    ShiftSummary& s = result.summary;
    s.total = n;
    DatasetManifest& out = result.manifest;
    out.base_dir = out_dir;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = outcomes[i];
        if (!o.report) {
            ++s.failed;
            continue;
        }
        ++s.succeeded;
        s.mean_l_w1_pre += o.report->l_w1_pre;
        s.mean_l_w1_post += o.report->l_w1_post;
        s.mean_chroma_cost_pre += o.report->chroma_cost_pre;
        s.mean_chroma_cost_post += o.report->chroma_cost_post;
        s.mean_clamped_fraction += o.report->clamped_fraction;
        DatasetRecord rec = manifest.records[i];
        rec.image_path = o.output_path;
        rec.color_shift = true;
        out.records.push_back(std::move(rec));
    }
    if (s.succeeded) {
        const auto k = static_cast<double>(s.succeeded);
        s.mean_l_w1_pre /= k;
        s.mean_l_w1_post /= k;
        s.mean_chroma_cost_pre /= k;
        s.mean_chroma_cost_post /= k;
        s.mean_clamped_fraction /= k;
    }
    s.run_failed = n > 0 && static_cast<double>(s.failed) > opts.max_failure_fraction * static_cast<double>(n);
    s.records = std::move(outcomes);

    for (const auto& [k, v] : manifest.provenance)
        if (s.failed == 0 || k.rfind("split.", 0) != 0)
            out.provenance[k] = v;
    for (const auto& [k, v] : stamp)
        out.provenance[k] = v;
    out.provenance["color_shift"] = "true";
    out.provenance["reference"] = ref_path.filename().string();
    out.provenance["transfer"] = cfg_json.dump();
    if (n == 0)
        out.warnings.push_back("manifest is empty");

    nlohmann::json report{{"provenance", stamp},
                          {"config", cfg_json},
                          {"reference", ref_path.filename().string()},
                          {"total", s.total},
                          {"succeeded", s.succeeded},
                          {"failed", s.failed},
                          {"max_failure_fraction", opts.max_failure_fraction},
                          {"run_failed", s.run_failed},
                          {"mean",
                           {{"l_w1_pre", s.mean_l_w1_pre},
                            {"l_w1_post", s.mean_l_w1_post},
                            {"chroma_cost_pre", s.mean_chroma_cost_pre},
                            {"chroma_cost_post", s.mean_chroma_cost_post},
                            {"clamped_fraction", s.mean_clamped_fraction}}}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& o : s.records) {
        nlohmann::json row{{"row", o.index}, {"source", o.source_path}};
        if (o.report) {
            row["output"] = o.output_path;
            row["report"] = transfer_report_to_json(*o.report);
        } else {
            row["error"] = o.error;
        }
        rows.push_back(std::move(row));
    }
    report["records"] = std::move(rows);

    result.manifest_path = out_dir / "manifest.tsv";
    result.report_path = out_dir / "shift_report.json";
    save_manifest(result.manifest_path, out);
    write_text(result.report_path, report.dump(2) + "\n");
    return result;
}

} // namespace endoshift
