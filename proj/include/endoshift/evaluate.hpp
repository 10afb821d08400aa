#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "endoshift/color_transfer.hpp"
#include "endoshift/dataset.hpp"
#include "endoshift/metrics.hpp"
#include "endoshift/provenance.hpp"

namespace endoshift {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitPartial = 3;

/// Declarative description of one evaluation run. Relative paths are taken
/// relative to the directory holding the config file.
struct RunConfig {
    std::map<Cohort, std::filesystem::path> manifests;
    std::filesystem::path reference;
    TransferConfig transfer;
    double threshold = kDefaultThreshold;
    std::vector<std::int64_t> seeds;
    std::vector<std::string> models;
    /// Placeholders: {model} {seed} {condition} {cohort}.
    std::string predictions = "predictions/{model}/{seed}/{condition}/{cohort}.jsonl";
    std::filesystem::path output;
    double max_failure_fraction = 0.1;
    std::filesystem::path base_dir;
    /// Canonical (key-sorted, compact) form of the parsed config, hashed into
    /// the provenance stamp.
    std::string canonical;

    std::filesystem::path prediction_path(const std::string& model, std::int64_t seed, Condition condition,
                                          Cohort cohort) const;
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
/// Checks that every referenced input exists and the run is well formed.
void validate(const RunConfig& cfg);

struct EvaluateResult {
    MetricsReport report;
    Provenance provenance;
    /// Cells without a prediction file, "model=.. seed=.. condition=.. cohort=..".
    std::vector<std::string> missing_cells;
    std::vector<std::string> errors;
    std::vector<std::filesystem::path> artifacts;
    int exit_code = kExitOk;
};

/// Shifts every configured cohort against the reference, scores each
/// (model, seed, condition, cohort) cell and renders the report bundle under
/// output/. Cells are scored concurrently; assembly is ordered and
/// single-threaded, so reruns reproduce identical bytes.
EvaluateResult evaluate(const RunConfig& cfg);

} // namespace endoshift
