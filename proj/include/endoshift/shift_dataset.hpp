#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "endoshift/color_transfer.hpp"
#include "endoshift/dataset.hpp"

namespace endoshift {

nlohmann::json transfer_config_to_json(const TransferConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TransferConfig transfer_config_from_json(const nlohmann::json& j);
nlohmann::json transfer_report_to_json(const TransferReport& r);

struct ShiftOptions {
    /// The run fails when more than this fraction of records cannot be shifted.
    double max_failure_fraction = 0.1;
    bool write_side_by_side = false;
    bool dump_histograms = false;
    bool dump_plans = false;
    /// Stamped into every written image and the output manifest. When empty a
    /// stamp is derived from the transfer config and the reference image.
    std::map<std::string, std::string> provenance;
};

struct ShiftRecordOutcome {
    std::size_t index = 0;
    std::string source_path;
    std::string output_path; // empty on failure
    std::optional<TransferReport> report;
    std::string error;
};

struct ShiftSummary {
    std::size_t total = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    double mean_l_w1_pre = 0.0;
    double mean_l_w1_post = 0.0;
    double mean_chroma_cost_pre = 0.0;
    double mean_chroma_cost_post = 0.0;
    double mean_clamped_fraction = 0.0;
    std::vector<ShiftRecordOutcome> records; // manifest order
    /// failed / total exceeded the configured threshold.
    bool run_failed = false;
};

struct ShiftResult {
    DatasetManifest manifest;
    ShiftSummary summary;
    std::filesystem::path manifest_path;
    std::filesystem::path report_path;
};

/// Transfers every record of the manifest against one reference image.
/// Writes `images/<row>_<stem>.png`, `manifest.tsv` and `shift_report.json`
/// under out_dir. Records that fail are listed in the summary and left out of
/// the new manifest. Images are processed in parallel; results are reduced
/// in manifest order.
ShiftResult shift_dataset(const DatasetManifest& manifest, const std::filesystem::path& ref_path,
                          const TransferConfig& cfg, const std::filesystem::path& out_dir,
                          const ShiftOptions& opts = {});

} // namespace endoshift
