#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "endoshift/color_space.hpp"

namespace endoshift {

enum class Label { Tumor, NoTumor };
enum class Timepoint { Baseline, During, Restaging, Followup, External };
enum class Cohort { IdTrain, IdVal, IdTest, FollowupLr, Ood };

inline constexpr std::array kAllCohorts = {Cohort::IdTrain, Cohort::IdVal, Cohort::IdTest, Cohort::FollowupLr,
                                           Cohort::Ood};

std::string_view to_string(Label v);
std::string_view to_string(Timepoint v);
std::string_view to_string(Cohort v);
std::optional<Label> parse_label(std::string_view s);
std::optional<Timepoint> parse_timepoint(std::string_view s);
std::optional<Cohort> parse_cohort(std::string_view s);

struct DatasetRecord {
    std::string image_path; // as written in the manifest
    Label label = Label::NoTumor;
    Timepoint timepoint = Timepoint::Baseline;
    std::string patient_id;
    Cohort cohort = Cohort::IdTrain;
    bool color_shift = false;
};

/// Line-delimited manifest. Record lines are
/// `image_path<TAB>label<TAB>timepoint<TAB>patient_id<TAB>cohort`; lines that
/// start with `#` carry `key: value` provenance. `split.<cohort>: N` keys
/// declare expected cohort sizes and are enforced on load.
struct DatasetManifest {
    std::vector<DatasetRecord> records;
    std::map<std::string, std::string> provenance;
    /// Directory relative image paths are resolved against.
    std::filesystem::path base_dir;
    std::vector<std::string> warnings;

    std::filesystem::path resolve(const DatasetRecord& r) const;
    /// Index of the record whose image_path matches exactly.
    std::optional<std::size_t> find(std::string_view image_path) const;
};

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& os, const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Split accounting

struct CohortCounts {
    std::size_t total = 0;
    std::size_t tumor = 0;
    std::size_t no_tumor = 0;
    std::size_t patients = 0;
};

struct SplitSummary {
    std::map<Cohort, CohortCounts> cohorts;
    CohortCounts overall;
    /// Patients present in id_train and in a held-out cohort.
    std::vector<std::string> leaked_patients;
    std::vector<std::string> warnings;
};

SplitSummary split_summary(const DatasetManifest& manifest);
void write_split_summary(std::ostream& os, const SplitSummary& summary);

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessedTensorSpec {
    std::size_t side = 224;
    std::array<double, 3> mean = {0.485, 0.456, 0.406};
    std::array<double, 3> std = {0.229, 0.224, 0.225};
};

inline constexpr PreprocessedTensorSpec kImageNetSpec{};

/// Channel-major (3 x side x side) normalised raster.
struct Tensor3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
};

/// Direct bilinear resize (pixel-centre aligned, no antialiasing, aspect
/// ratio not preserved).
RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height);

Tensor3 preprocess(const RgbImage& img, const PreprocessedTensorSpec& spec = kImageNetSpec);

/// Inverse of the normalisation step.
RgbImage denormalize(const Tensor3& t, const PreprocessedTensorSpec& spec = kImageNetSpec);

/// NumPy .npy (little-endian float32, C order).
void write_npy(const std::filesystem::path& path, const Tensor3& t);

// ---------------------------------------------------------------------------
// Balanced sampling

using BatchPlan = std::vector<std::vector<std::size_t>>;

/// One epoch of class-balanced mini-batches over manifest indices. The
/// majority class is visited once in shuffled order (topped up with random
/// repeats to fill the last batch); the minority class is drawn from
/// back-to-back shuffled passes, so it repeats as needed. Deterministic for a
/// given seed on every platform.
BatchPlan balanced_batch_plan(const DatasetManifest& manifest, std::size_t batch, std::uint64_t seed);

} // namespace endoshift
