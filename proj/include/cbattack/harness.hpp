// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "cbattack/dataset.hpp"
#include "cbattack/evaluation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace cbattack {

struct DatasetSource {
    /// Feature file; empty when the synthetic generator is used.
    std::filesystem::path path;
    FeatureFormat format = FeatureFormat::csv;
    std::optional<SyntheticSpec> synthetic;
};

/// Everything a run depends on. GA seeds inside \c experiment are ignored;
/// per-target seeds come from master_seed.
struct RunConfig {
    DatasetSource dataset;
    ExperimentConfig experiment;
    std::filesystem::path output_dir = "out";
    bool report_timing = false;
};

/// Parses the JSON config. Unknown keys, wrong types and out-of-range values
/// throw ConfigError naming the offending field.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON with every field spelled out; parse_run_config inverts it.
std::string to_json(const RunConfig& config, int indent = 2);

FeatureSet load_dataset(const RunConfig& config);

// One preimage as persisted in preimages.csv.
struct PreimageRecord {
    std::string subject_id;
    Scheme scheme = Scheme::iom;
    Eigen::Index k = 0;
    Eigen::Index l = 0;
    std::uint64_t seed = 0;
    AttackKind attack = AttackKind::csa;
    bool converged = false;
    double final_loss = 0.0;
    double final_violation = 0.0;
    std::size_t generations = 0;
    std::size_t outer_iterations = 0;
    double time_s = 0.0;
    FeatureVector x;
};

/// Reads preimages.csv. A truncated last line (no newline, as left by an
/// interrupted run) is dropped; any other malformed line throws
/// IngestionError.
std::vector<PreimageRecord> read_preimages(const std::filesystem::path& path);
void write_preimages(const std::vector<PreimageRecord>& records, const std::filesystem::path& path);
std::string preimage_csv_header(Eigen::Index dimension);
std::string preimage_csv_row(const PreimageRecord& record);

/// Phase drivers. Outputs go to config.output_dir; progress and warnings to
/// \p log. Errors propagate as exceptions.
void run_hash(const RunConfig& config, std::ostream& log);
/// Attacks every target whose preimage is not yet in preimages.csv. Returns
/// the number of attacks run.
std::size_t run_attack(const RunConfig& config, std::ostream& log);
/// Returns the report; rows whose preimages are missing carry an error.
ExperimentReport run_evaluate(const RunConfig& config, std::ostream& log);

/// SHA-256 of a file as lowercase hex.
std::string sha256_file(const std::filesystem::path& path);

/// CLI entry: dispatches a phase and maps errors to exit codes (0 success,
/// 1 config error, 2 runtime error).
int run_command(std::string_view command, const std::filesystem::path& config_path,
                std::optional<std::size_t> jobs, std::optional<std::filesystem::path> out_dir, std::ostream& log);

} // namespace cbattack
