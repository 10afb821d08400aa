#pragma once

// Manifests shaped like the study cohorts, small on-disk datasets and
// synthetic prediction files.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "endoshift/dataset.hpp"
#include "endoshift/image_io.hpp"
#include "endoshift/metrics.hpp"
#include "support/synthetic.hpp"

namespace testsupport {

struct CohortShape {
    endoshift::Cohort cohort;
    std::size_t tumor;
    std::size_t no_tumor;
};

inline std::string numbered(const char* prefix, std::size_t i)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
    return buf;
}

inline void append_cohort(endoshift::DatasetManifest& m, const CohortShape& shape, endoshift::Timepoint tp_fixed,
                          bool cycle_timepoints, const std::string& patient_prefix, std::size_t patient_first,
                          std::size_t patient_count)
{
    using namespace endoshift;
    const std::array<Timepoint, 3> cycle{Timepoint::Baseline, Timepoint::During, Timepoint::Restaging};
    const std::size_t n = shape.tumor + shape.no_tumor;
    for (std::size_t i = 0; i < n; ++i) {
        DatasetRecord r;
        r.image_path = "images/" + std::string(to_string(shape.cohort)) + "/" + numbered("img_", i) + ".png";
        r.label = i < shape.tumor ? Label::Tumor : Label::NoTumor;
        r.timepoint = cycle_timepoints ? cycle[i % 3] : tp_fixed;
        r.patient_id = numbered(patient_prefix.c_str(), patient_first + i % patient_count);
        r.cohort = shape.cohort;
        m.records.push_back(std::move(r));
    }
}

/// In-distribution cohort: 2,570 images of 200 patients, split by patient.
inline endoshift::DatasetManifest study_id_manifest()
{
    using namespace endoshift;
    DatasetManifest m;
    append_cohort(m, {Cohort::IdTrain, 691, 646}, Timepoint::Baseline, true, "P", 0, 140);
    append_cohort(m, {Cohort::IdVal, 232, 216}, Timepoint::Baseline, true, "P", 140, 30);
    append_cohort(m, {Cohort::IdTest, 406, 379}, Timepoint::Baseline, true, "P", 170, 30);
    m.provenance["split.id_train"] = "1337";
    m.provenance["split.id_val"] = "448";
    m.provenance["split.id_test"] = "785";
    return m;
}

inline endoshift::DatasetManifest study_followup_manifest()
{
    using namespace endoshift;
    DatasetManifest m;
    append_cohort(m, {Cohort::FollowupLr, 80, 72}, Timepoint::Followup, false, "W", 0, 60);
    m.provenance["split.followup_lr"] = "152";
    return m;
}

inline endoshift::DatasetManifest study_ood_manifest()
{
    using namespace endoshift;
    DatasetManifest m;
    append_cohort(m, {Cohort::Ood, 31, 19}, Timepoint::External, false, "X", 0, 50);
    m.provenance["split.ood"] = "50";
    return m;
}

/// Writes `n_tumor + n_no_tumor` synthetic PNGs plus manifest.tsv under dir.
inline std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, endoshift::Cohort cohort,
                                                     std::size_t n_tumor, std::size_t n_no_tumor,
                                                     std::uint64_t seed, std::size_t w = 48, std::size_t h = 36)
{
    using namespace endoshift;
    DatasetManifest m;
    const std::size_t n = n_tumor + n_no_tumor;
    for (std::size_t i = 0; i < n; ++i) {
        DatasetRecord r;
        r.image_path = "images/" + numbered("frame_", i) + ".png";
        r.label = i < n_tumor ? Label::Tumor : Label::NoTumor;
        r.timepoint = cohort == Cohort::Ood ? Timepoint::External : Timepoint::Baseline;
        r.patient_id = numbered("S", i / 2);
        r.cohort = cohort;
        write_png(dir / r.image_path, natural_image(seed * 1000 + i, w, h));
        m.records.push_back(std::move(r));
    }
    const auto path = dir / "manifest.tsv";
    save_manifest(path, m);
    return path;
}

/// Predictions that are right with probability `skill`, deterministic in seed.
inline std::vector<endoshift::PredictionRecord> synthetic_predictions(const endoshift::DatasetManifest& m,
                                                                      const std::string& model, std::int64_t seed,
                                                                      endoshift::Condition condition, double skill)
{
    using namespace endoshift;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : model)
        h = (h ^ c) * 1099511628211ull;
    Rng rng(h + static_cast<std::uint64_t>(seed) * 7919 + (condition == Condition::ColorShift ? 17 : 0));
    std::vector<PredictionRecord> out;
    for (const auto& r : m.records) {
        const bool correct = rng.uniform() < skill;
        const bool tumor = (r.label == Label::Tumor) == correct;
        const double p = tumor ? rng.uniform(0.55, 0.99) : rng.uniform(0.01, 0.45);
        out.push_back({r.image_path, p, model, seed, condition});
    }
    return out;
}

/// The manifest a shift run produces for `m`, assuming every image succeeds.
inline endoshift::DatasetManifest shifted_view(endoshift::DatasetManifest m)
{
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        char prefix[32];
        std::snprintf(prefix, sizeof prefix, "%05zu_", i);
        m.records[i].image_path =
            "images/" + std::string(prefix) + std::filesystem::path(m.records[i].image_path).stem().string() + ".png";
        m.records[i].color_shift = true;
    }
    return m;
}

inline void save_predictions(const std::filesystem::path& path, const std::vector<endoshift::PredictionRecord>& p)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    endoshift::write_predictions(out, p);
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace testsupport
