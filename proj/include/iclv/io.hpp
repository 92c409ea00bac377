#pragma once

// File formats: JSON documents for specs, parameters, settings, designs,
// priors, cohorts and results; CSV for datasets, designs and scenario curves;
// run manifests with SHA-256 content hashes.
//
// Every JSON document carries "schema_version" and "kind". CSV files start
// with a "# iclv <kind> schema_version=<n>" line. CSV numbers are written with
// 17 significant digits and JSON numbers in shortest round-trip form, so every
// file reads back bit-for-bit.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iclv/estimation.hpp"
#include "iclv/model.hpp"
#include "iclv/policy.hpp"
#include "iclv/synthetic.hpp"

namespace iclv::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kToolVersion = "1.0.0";

/// Parses a JSON file. Syntax errors become InputError with line and column.
Json read_json_file(const std::filesystem::path& path);
Json parse_json(const std::string& text);
void write_json_file(const std::filesystem::path& path, const Json& doc);

/// "kind" of a document after checking "schema_version". Throws InputError.
std::string document_kind(const Json& doc);

/// Unit scaling of every attribute and of age, as written into documents.
Json units_block();

// Categorical names used in files.
std::string_view to_string(Education v);
std::string_view to_string(Employment v);
std::string_view to_string(Household v);
std::string_view to_string(Vehicles v);
std::string_view to_string(Income v);
std::string_view to_string(Dwelling v);
std::string_view to_string(Tenure v);
std::string_view to_string(Choice v);

Json to_json(const ParameterSet& p);
ParameterSet parameters_from_json(const Json& doc);

/// Optional opt-out constant stored under "scenario_calibration".
std::optional<double> opt_out_constant_from_json(const Json& doc);

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& doc);

Json to_json(const DrawSettings& s);
DrawSettings draw_settings_from_json(const Json& j);

Json to_json(const EstimationSettings& s);
EstimationSettings estimation_settings_from_json(const Json& doc);

Json to_json(const DesignSpec& spec);
DesignSpec design_spec_from_json(const Json& doc);

struct Priors {
  std::vector<Coefficient> coefficients;
  DErrorOptions options;
};
Json to_json(const Priors& p);
Priors priors_from_json(const Json& doc);

Json to_json(const std::vector<CohortSpec>& cohorts);
std::vector<CohortSpec> cohorts_from_json(const Json& doc);

/// Result document with the full parameter set, standard errors in the same
/// shape, structural and choice coefficient tables with t statistics, fit
/// statistics, the iteration trace and the spec and settings echo.
Json to_json(const EstimationResult& r);

// ---------------------------------------------------------------------------
// CSV

/// Choice rows: one per (individual, task, alternative). Individual rows: id,
/// covariates and indicator responses (empty when missing).
void write_choices_csv(const ChoiceDataset& data, std::ostream& out);
void write_individuals_csv(const ChoiceDataset& data, std::ostream& out);

/// Parses both files; errors carry the line and column of the offending
/// field. `*_name` label the streams in messages.
ChoiceDataset read_dataset(std::istream& choices, std::istream& individuals,
                           const std::string& choices_name = "choices",
                           const std::string& individuals_name = "individuals");

/// "<stem>_individuals.csv" next to the choices file.
std::filesystem::path individuals_path_for(const std::filesystem::path& choices_path);

void write_dataset_files(const ChoiceDataset& data, const std::filesystem::path& choices_path,
                         const std::filesystem::path& individuals_path);
ChoiceDataset read_dataset_files(const std::filesystem::path& choices_path,
                                 const std::filesystem::path& individuals_path);

/// Level indices and reference-band values of every alternative.
void write_design_csv(const Design& design, std::ostream& out);
Design read_design(std::istream& in, const DesignSpec& spec, const std::string& name = "design");

/// scenario, cohort, gender, x, probability (plus lower, upper in Monte Carlo
/// mode).
void write_curves_csv(const SweepResult& result, std::ostream& out);

// ---------------------------------------------------------------------------
// Manifests

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const std::string& bytes);

struct RunManifest {
  std::string command;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  Json seeds = Json::object();
  Json settings = Json::object();
  Json extra = Json::object();
  double wall_clock_seconds = 0.0;
};

/// Writes manifest.json into `dir` with hashes of every input and output.
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Schema check of any supported file. Returns the detected kind and a list of
/// findings (empty when valid). Throws only for unreadable files.
struct ValidationReport {
  std::string kind;
  std::vector<std::string> findings;
};
ValidationReport validate_file(const std::filesystem::path& path);

}  // namespace iclv::io
