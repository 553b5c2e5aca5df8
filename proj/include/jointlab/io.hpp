#pragma once

// File formats: canonical JSON, content digests, dataset / scenario / fit
// schemas and the CSV converter.

#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jointlab/em.hpp"
#include "jointlab/profile.hpp"
#include "jointlab/sim.hpp"

namespace jointlab::io {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.3.0";

// Sorted keys, two-space indent, doubles as %.17g, NaN and infinities as null.
// Ends with a newline.
std::string canonical_dump(const Json& j);

std::string sha256_hex(const std::string& bytes);

// Malformed or inconsistent input. `pointer` is a JSON pointer into the
// offending document (empty when unknown).
class InputError : public Error {
 public:
  InputError(std::string pointer, const std::string& msg) : Error(msg), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// Maps JSON pointers of a document to the 1-based line where the value starts.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text);
  // Line of the pointer or of its closest recorded ancestor; 0 if unknown.
  int line_of(const std::string& pointer) const;

 private:
  std::map<std::string, int> lines_;
};

// Reads and parses a JSON file. Syntax errors become InputError with the
// parser's line and column in the message.
struct JsonDocument {
  std::string path;
  std::string text;
  Json value;
};
JsonDocument read_json_file(const std::string& path);

// "<file>:<line>: <message>" for an InputError raised on `doc`.
std::string anchored_message(const JsonDocument& doc, const InputError& e);

void write_text_file(const std::string& path, const std::string& text);

Json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const Json& j, const std::string& where = "/spec");

Json to_json(const ThetaParams& theta);
ThetaParams theta_from_json(const Json& j, const ModelSpec& spec, const std::string& where);

Json to_json(const StepCumHazard& lam);
StepCumHazard hazard_from_json(const Json& j, const std::string& where);

// Top-level {spec, subjects}; `truth`, when given, goes to a sibling block.
Json to_json(const Dataset& data, const std::vector<SubjectTruth>* truth = nullptr);
Dataset dataset_from_json(const Json& j);

// Canonical content of the dataset proper (spec and subjects only).
std::string dataset_digest(const Dataset& data);

Json to_json(const SimScenario& sc);
SimScenario scenario_from_json(const Json& j);

Json to_json(const FitConfig& cfg);
// Overrides the fields present in `j`; unknown keys are rejected.
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});

Json to_json(const FitResult& fit, const ModelSpec& spec);
// Parsed fit file: estimates plus the flags needed downstream.
struct FitFile {
  ThetaParams theta_hat;
  StepCumHazard lambda_hat;
  bool converged = false;
  FitConfig config;
  std::string dataset_digest;
};
FitFile fit_from_json(const Json& j, const ModelSpec& spec);

Json to_json(const InfoEstimate& est, const ModelSpec& spec);
Json to_json(const WaldInterval& w);
Json to_json(const StudySummary& s);
Json to_json(const CheckResult& c);

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string dataset_digest;
  std::optional<std::uint64_t> seed;
  std::string tool_version = kToolVersion;
  std::optional<double> wall_time;  // seconds; only written when requested
};
Json to_json(const RunManifest& m);

// Three CSV files with header rows:
//   measurements: id,t,y
//   paths:        id,block,t,values   (block in x|xt|w|wt, values ';'-separated)
//   events:       id,z,delta
// Subjects are ordered as in the events file. Block dimensions are taken
// from the first row of each block; absent blocks have dimension zero.
Dataset import_csv(const std::string& measurements, const std::string& paths, const std::string& events, double tau);

}  // namespace jointlab::io
