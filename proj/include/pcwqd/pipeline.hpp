#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pcwqd {

inline constexpr int kReportSchemaVersion = 1;

enum class ExperimentKind { RtScan, PlateauMap, Lifetime, Iv, RcSweep };

std::string_view to_string(ExperimentKind k);
/// Accepts "rt-scan", "plateau-map", "lifetime", "iv", "rc-sweep".
ExperimentKind parse_experiment_kind(std::string_view s);

/// One analysis run. Inputs map a role to a file:
///   rt-scan:     scan (required unless synthesized), geometry (optional)
///   plateau-map: plateau
///   lifetime:    histogram, scan (optional, pairs the decay with an RT dip)
///   iv:          iv
///   rc-sweep:    rc
/// A kind without its primary input is synthesized from the config and seed.
struct Experiment {
    ExperimentKind kind = ExperimentKind::RtScan;
    std::map<std::string, std::filesystem::path> inputs;
    std::uint64_t seed = 1;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    bool keep_going = false;
};

/// Throws ValidationError on unknown sections, unknown keys or wrongly typed values.
void validate_config(const nlohmann::ordered_json& config);

/// Section and key names accepted by validate_config.
const std::map<std::string, std::vector<std::string>>& config_schema();

struct Report {
    /// Numeric leaves are {"value": x, "unit": "..."}; the unit "1" marks dimensionless numbers.
    nlohmann::ordered_json tree = nlohmann::ordered_json::object();
    /// Plot-data column files: file name -> contents.
    std::map<std::string, std::string> plots;
    /// Fit failures recorded instead of thrown (keep_going).
    std::vector<std::string> errors;

    std::string text() const;
    std::string json() const;
};

Report run_experiment(const Experiment& e);

/// Writes <stem>.txt, <stem>.json and plots/<name> under out_dir, each atomically.
void write_report(const Report& r, const std::filesystem::path& out_dir, std::string_view stem = "report");

/// Synthesizes the primary input(s) of an experiment kind into out_dir; returns written paths.
std::vector<std::filesystem::path> simulate_inputs(ExperimentKind kind, const nlohmann::ordered_json& config,
                                                   std::uint64_t seed, const std::filesystem::path& out_dir);

} // namespace pcwqd
