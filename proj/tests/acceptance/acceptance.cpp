// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "endoshift/color_space.hpp"
#include "endoshift/color_transfer.hpp"
#include "endoshift/dataset.hpp"
#include "endoshift/evaluate.hpp"
#include "endoshift/histogram.hpp"
#include "endoshift/image_io.hpp"
#include "endoshift/metrics.hpp"
#include "endoshift/ot.hpp"
#include "oracles/lp_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic.hpp"

using namespace endoshift;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

void fail(Outcome& o, const std::string& why)
{
    if (o.pass)
        o.detail = why;
    o.pass = false;
}

Histogram1D random_hist_1d(testsupport::Rng& rng, std::size_t n)
{
    Histogram1D h;
    h.edges = uniform_edges(0.0, 100.0, n);
    h.mass.resize(n);
    double s = 0.0;
    for (double& m : h.mass) {
        m = rng.uniform() < 0.25 ? 0.0 : rng.uniform();
        s += m;
    }
    if (s == 0.0) {
        h.mass[rng.index(n)] = 1.0;
        s = 1.0;
    }
    for (double& m : h.mass)
        m /= s;
    return h;
}

Histogram2D random_grid_hist(testsupport::Rng& rng, std::size_t n)
{
    Histogram2D h;
    h.a_edges = uniform_edges(kChromaMin, kChromaMax, n);
    h.b_edges = uniform_edges(kChromaMin, kChromaMax, n);
    h.mass.resize(n * n);
    h.centers.resize(n * n);
    double s = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        h.mass[k] = rng.uniform(0.01, 1.0);
        s += h.mass[k];
        h.centers[k] = h.geometric_center(k);
    }
    for (double& m : h.mass)
        m /= s;
    return h;
}

std::size_t rank_inversions(const LabImage& before, const LabImage& after, std::size_t pairs, std::uint64_t seed)
{
    testsupport::Rng rng(seed);
    std::size_t bad = 0;
    const std::size_t n = before.pixel_count();
    for (std::size_t k = 0; k < pairs; ++k) {
        const std::size_t i = rng.index(n), j = rng.index(n);
        if ((before.L[i] < before.L[j] && after.L[i] > after.L[j]) ||
            (before.L[i] > before.L[j] && after.L[i] < after.L[j]))
            ++bad;
    }
    return bad;
}

Outcome ot_1d_oracle()
{
    Outcome o;
    testsupport::Rng rng(610);
    double worst = 0.0;
    std::size_t monotone = 0;
    const std::size_t n = 16;
    for (int t = 0; t < 200; ++t) {
        const auto a = random_hist_1d(rng, n), b = random_hist_1d(rng, n);
        std::vector<double> cost(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double d = a.center(i) - b.center(j);
                cost[i * n + j] = d * d;
            }
        const auto map = solve_ot_1d(a, b);
        worst = std::max(worst, std::abs(map.transport_cost - oracle::transport_lp(a.mass, b.mass, cost).cost));
        bool mono = std::is_sorted(map.dst_values.begin(), map.dst_values.end());
        double prev = -1.0;
        for (int k = 0; k <= 400 && mono; ++k) {
            const double y = map(k * 0.25);
            mono = y >= prev;
            prev = y;
        }
        monotone += mono;
    }
    o.detail = fmt("max |cost - LP| = %.3g, monotone %.0f/200", worst, static_cast<double>(monotone));
    if (!(worst <= 1e-9))
        fail(o, o.detail);
    if (monotone != 200)
        fail(o, o.detail);
    return o;
}

Outcome sinkhorn_oracle()
{
    Outcome o;
    testsupport::Rng rng(611);
    double worst_violation = 0.0, worst_gap = 0.0, min_gap = 1.0;
    std::size_t converged = 0;
    for (int t = 0; t < 100; ++t) {
        const auto a = random_grid_hist(rng, 3), b = random_grid_hist(rng, 3);
        std::vector<double> cost(9 * 9);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 9; ++j)
                cost[i * 9 + j] = chroma_ground_cost(a.centers[i], b.centers[j]);
        const double lp = oracle::transport_lp(a.mass, b.mass, cost).cost;
        const auto plan = sinkhorn(a, b, 0.01, 1e-9, 100000);
        converged += plan.converged;
        worst_violation = std::max(worst_violation, plan.marginal_violation);
        const double gap = lp > 0.0 ? plan.cost_value / lp - 1.0 : plan.cost_value;
        worst_gap = std::max(worst_gap, gap);
        min_gap = std::min(min_gap, gap);
    }
    o.detail = fmt("max violation %.6g, cost/LP - 1 in [%.3g, %.3g]", worst_violation, min_gap, worst_gap) +
               fmt(", converged %.0f/100", static_cast<double>(converged));
    if (converged != 100 || !(worst_violation < 1e-6) || !(worst_gap <= 0.02) || min_gap < -1e-12)
        fail(o, o.detail);
    return o;
}

Outcome transfer_identity()
{
    Outcome o;
    double worst_de = 0.0;
    std::size_t inversions = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const RgbImage img = testsupport::natural_image(6120 + s);
        const auto r = transfer_colors(img, img);
        worst_de = std::max(worst_de, mean_delta_e76(img, r.image));
        inversions += rank_inversions(rgb_to_lab(img), rgb_to_lab(r.image), 10000, s);
    }
    o.detail = fmt("worst mean dE76 %.4g, luminance rank inversions %.0f", worst_de, static_cast<double>(inversions));
    if (!(worst_de < 2.0) || inversions != 0)
        fail(o, o.detail);
    return o;
}

Outcome transfer_effect()
{
    Outcome o;
    const double tints[][2] = {{40, 8}, {-30, 10}, {10, 45}, {5, -35}, {30, 30}, {-20, -20}, {25, -10}, {-10, 35}};
    std::size_t improved = 0, total = 0;
    double worst_a = 0.0, worst_b = 0.0;
    for (std::size_t k = 0; k < std::size(tints); ++k) {
        const RgbImage src = testsupport::lab_scene(7000 + k, 25, 70, tints[k][0], tints[k][1], 5);
        const RgbImage ref = testsupport::lab_scene(7100 + k, 35, 85, 12, 6, 5);
        const auto r = transfer_colors(src, ref);
        const LabImage out = rgb_to_lab(r.image), rl = rgb_to_lab(ref);
        ++total;
        improved += r.report.l_w1_post <= r.report.l_w1_pre;
        worst_a = std::max(worst_a, std::abs(testsupport::mean_channel(out, 1) - testsupport::mean_channel(rl, 1)));
        worst_b = std::max(worst_b, std::abs(testsupport::mean_channel(out, 2) - testsupport::mean_channel(rl, 2)));
    }
    o.detail = fmt("W1 post <= pre in %.0f/%.0f, worst |mean a - ref| %.3g", static_cast<double>(improved),
                   static_cast<double>(total), worst_a) +
               fmt(", worst |mean b - ref| %.3g", worst_b);
    if (improved != total || !(worst_a < 5.0) || !(worst_b < 5.0))
        fail(o, o.detail);
    return o;
}

Outcome lab_round_trip()
{
    Outcome o;
    testsupport::Rng rng(614);
    RgbImage img(100, 100);
    for (double& c : img.pixels())
        c = rng.uniform();
    const auto back = lab_to_rgb(rgb_to_lab(img));
    double worst = 0.0;
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        worst = std::max(worst, std::abs(img.pixels()[i] - back.image.pixels()[i]));
    o.detail = fmt("10000 triples, max channel error %.3g (limit %.3g)", worst, 1.0 / 255.0);
    if (!(worst <= 1.0 / 255.0))
        fail(o, o.detail);
    return o;
}

Outcome metrics_oracle()
{
    Outcome o;
    testsupport::Rng rng(615);
    std::size_t exact = 0, swapped = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.index(200);
        DatasetManifest m, m_swap;
        std::vector<PredictionRecord> preds, preds_free, preds_swap;
        std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool tumor = rng.uniform() < 0.5;
            const double p = rng.index(10) == 0 ? 0.5 : rng.uniform();
            const double q = p == 0.5 ? 0.25 : p;
            const std::string path = testsupport::numbered("img_", i) + ".png";
            m.records.push_back({path, tumor ? Label::Tumor : Label::NoTumor, Timepoint::Baseline, "P", Cohort::IdTest,
                                 false});
            m_swap.records.push_back({path, tumor ? Label::NoTumor : Label::Tumor, Timepoint::Baseline, "P",
                                      Cohort::IdTest, false});
            preds.push_back({path, p, "m", 0, Condition::NoShift});
            preds_free.push_back({path, q, "m", 0, Condition::NoShift});
            preds_swap.push_back({path, 1.0 - q, "m", 0, Condition::NoShift});
            const bool pos = p >= 0.5;
            tp += tumor && pos;
            fn += tumor && !pos;
            fp += !tumor && pos;
            tn += !tumor && !pos;
        }
        const ConfusionMatrix cm = confusion(preds, m);
        const MetricTriple mt = metrics_from_cm(cm);
        const double acc = static_cast<double>(tp + tn) / static_cast<double>(n);
        bool ok = cm == ConfusionMatrix{tp, fp, tn, fn} && mt.accuracy && *mt.accuracy == acc;
        ok = ok && (tp + fn == 0 ? !mt.sensitivity
                                 : mt.sensitivity && *mt.sensitivity == static_cast<double>(tp) /
                                                                            static_cast<double>(tp + fn));
        ok = ok && (tn + fp == 0 ? !mt.specificity
                                 : mt.specificity && *mt.specificity == static_cast<double>(tn) /
                                                                            static_cast<double>(tn + fp));
        exact += ok;
        const MetricTriple mf = metrics_from_cm(confusion(preds_free, m));
        const MetricTriple ms = metrics_from_cm(confusion(preds_swap, m_swap));
        swapped += ms.sensitivity == mf.specificity && ms.specificity == mf.sensitivity && ms.accuracy == mf.accuracy;
    }
    std::vector<RunMetrics> runs;
    for (double acc : {0.82, 0.84, 0.86}) {
        RunMetrics r;
        r.model_id = "m";
        r.cohort = Cohort::FollowupLr;
        r.metrics.accuracy = acc;
        runs.push_back(r);
    }
    const std::string formatted = aggregate_runs(runs).accuracy.formatted();
    o.detail = fmt("exact %.0f/1000, label swap %.0f/1000", static_cast<double>(exact), static_cast<double>(swapped)) +
               ", (0.82, 0.84, 0.86) -> \"" + formatted + "\"";
    if (exact != 1000 || swapped != 1000 || formatted != "0.84 ± 0.02")
        fail(o, o.detail);
    return o;
}

Outcome dataset_contract()
{
    Outcome o;
    DatasetManifest all = testsupport::study_id_manifest();
    for (const auto& extra : {testsupport::study_followup_manifest(), testsupport::study_ood_manifest()}) {
        all.records.insert(all.records.end(), extra.records.begin(), extra.records.end());
        all.provenance.insert(extra.provenance.begin(), extra.provenance.end());
    }
    std::ostringstream text;
    write_manifest(text, all);
    std::istringstream in(text.str());
    const SplitSummary s = split_summary(parse_manifest(in));
    auto counts = [&](Cohort c) { return s.cohorts.count(c) ? s.cohorts.at(c) : CohortCounts{}; };
    const bool splits = counts(Cohort::IdTrain).total == 1337 && counts(Cohort::IdVal).total == 448 &&
                        counts(Cohort::IdTest).total == 785 && counts(Cohort::FollowupLr).total == 152 &&
                        counts(Cohort::FollowupLr).tumor == 80 && counts(Cohort::FollowupLr).no_tumor == 72 &&
                        counts(Cohort::Ood).total == 50 && counts(Cohort::Ood).tumor == 31 &&
                        counts(Cohort::Ood).no_tumor == 19 && s.leaked_patients.empty();

    DatasetManifest train;
    for (const auto& r : all.records)
        if (r.cohort == Cohort::IdTrain)
            train.records.push_back(r);
    std::size_t unbalanced = 0, batches = 0;
    for (std::size_t batch : {2u, 8u, 32u})
        for (std::uint64_t seed = 0; seed < 5; ++seed)
            for (const auto& b : balanced_batch_plan(train, batch, seed)) {
                ++batches;
                std::size_t tumor = 0;
                for (std::size_t i : b)
                    tumor += train.records[i].label == Label::Tumor;
                unbalanced += b.size() != batch || 2 * tumor != batch;
            }

    const Tensor3 t = preprocess(testsupport::natural_image(616, 568, 424));
    const Tensor3 white = preprocess(RgbImage::filled(9, 7, 1.0, 1.0, 1.0));
    const Tensor3 mean = preprocess(RgbImage::filled(9, 7, 0.485, 0.456, 0.406));
    const std::array<double, 3> expect{(1 - 0.485) / 0.229, (1 - 0.456) / 0.224, (1 - 0.406) / 0.225};
    double worst = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 224; ++y)
            for (std::size_t x = 0; x < 224; ++x) {
                worst = std::max(worst, std::abs(white.at(c, y, x) - expect[c]));
                worst = std::max(worst, std::abs(static_cast<double>(mean.at(c, y, x))));
            }
    const bool tensor = t.channels == 3 && t.height == 224 && t.width == 224 && t.data.size() == 3u * 224 * 224;

    o.detail = std::string(splits ? "splits 1337/448/785, 152 (80/72), 50 (31/19)" : "split counts differ") +
               fmt("; %.0f of %.0f batches unbalanced", static_cast<double>(unbalanced),
                   static_cast<double>(batches)) +
               fmt("; tensor 3x%.0fx%.0f", static_cast<double>(t.height), static_cast<double>(t.width)) +
               fmt(", normalisation error %.3g", worst);
    if (!splits || unbalanced != 0 || batches == 0 || !tensor || !(worst < 1e-5))
        fail(o, o.detail);
    return o;
}

std::map<std::string, std::string> snapshot(const fs::path& report)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(report)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("table_", 0) == 0 || name.rfind("cm_", 0) == 0)
            out[name] = testsupport::read_file(e.path());
    }
    return out;
}

Outcome evaluate_determinism()
{
    Outcome o;
    const fs::path root = testsupport::scratch_dir("determinism");
    const std::array<std::pair<Cohort, std::array<std::size_t, 2>>, 3> cohorts{
        {{Cohort::IdTest, {6, 5}}, {Cohort::FollowupLr, {5, 4}}, {Cohort::Ood, {4, 4}}}};
    json manifests = json::object();
    std::map<Cohort, DatasetManifest> loaded;
    std::uint64_t seed = 617;
    for (const auto& [cohort, n] : cohorts) {
        const std::string name(to_string(cohort));
        const auto path = testsupport::write_synthetic_dataset(root / "data" / name, cohort, n[0], n[1], seed++, 40, 30);
        manifests[name] = "data/" + name + "/manifest.tsv";
        loaded[cohort] = load_manifest(path);
    }
    write_png(root / "reference.png", testsupport::natural_image(6170, 40, 30));
    const std::vector<std::string> models{"resnet50", "swin_base"};
    const std::vector<std::int64_t> seeds{0, 1, 2};
    for (const auto& [cohort, m] : loaded)
        for (const auto& model : models)
            for (std::int64_t s : seeds)
                for (Condition c : {Condition::NoShift, Condition::ColorShift})
                    testsupport::save_predictions(
                        root / "predictions" / model / std::to_string(s) / std::string(to_string(c)) /
                            (std::string(to_string(cohort)) + ".jsonl"),
                        testsupport::synthetic_predictions(c == Condition::ColorShift ? testsupport::shifted_view(m) : m,
                                                           model, s, c, c == Condition::NoShift ? 0.85 : 0.7));
    const json cfg{{"manifests", manifests}, {"reference", "reference.png"}, {"seeds", seeds},
                   {"models", models},       {"output", "out"},              {"threshold", 0.5}};
    std::ofstream(root / "run.json") << cfg.dump(2);

    const fs::path report = root / "out" / "report";
    const EvaluateResult first = evaluate(load_run_config(root / "run.json"));
    const auto files = snapshot(report);
    std::map<std::string, RgbImage> rasters;
    for (const auto& [name, bytes] : files)
        if (name.rfind("cm_", 0) == 0)
            rasters[name] = read_image(report / name);
    const std::string shifted = testsupport::read_file(root / "out" / "shifted" / "id_test" / "manifest.tsv");

    const EvaluateResult second = evaluate(load_run_config(root / "run.json"));
    const auto again = snapshot(report);
    std::size_t differing = 0;
    for (const auto& [name, bytes] : files)
        differing += !again.count(name) || again.at(name) != bytes;
    for (const auto& [name, img] : rasters)
        differing += !(read_image(report / name) == img);
    differing += shifted != testsupport::read_file(root / "out" / "shifted" / "id_test" / "manifest.tsv");

    std::size_t tables = 0, cms = 0;
    for (const auto& [name, bytes] : files)
        (name.rfind("cm_", 0) == 0 ? cms : tables) += 1;
    o.detail = fmt("%.0f tables, %.0f confusion matrices, ", static_cast<double>(tables), static_cast<double>(cms)) +
               fmt("%.0f differing artifacts across two runs, exit codes %.0f/%.0f", static_cast<double>(differing),
                   first.exit_code, second.exit_code);
    if (differing != 0 || tables != 2 || cms != 4 || first.exit_code != kExitOk || second.exit_code != kExitOk ||
        again.size() != files.size())
        fail(o, o.detail);
    return o;
}

} // namespace

int main()
{
    const std::vector<std::tuple<const char*, double, std::function<Outcome()>>> criteria{
        {"1d-ot-oracle", 10.0, ot_1d_oracle},
        {"sinkhorn-correctness", 60.0, sinkhorn_oracle},
        {"transfer-identity", 0.0, transfer_identity},
        {"transfer-effect", 0.0, transfer_effect},
        {"lab-round-trip", 0.0, lab_round_trip},
        {"metrics-oracle", 0.0, metrics_oracle},
        {"dataset-contract", 0.0, dataset_contract},
        {"evaluate-determinism", 0.0, evaluate_determinism},
    };
    int failures = 0;
    for (const auto& [name, budget, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (budget > 0.0 && secs >= budget)
            fail(o, fmt("runtime %.2f s exceeds %.0f s", secs, budget));
        std::printf("%s %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        failures += !o.pass;
    }
    std::fflush(stdout);
    return failures == 0 ? 0 : 1;
}
