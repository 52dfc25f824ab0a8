#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgff/fields.hpp"
#include "hgff/hadamard.hpp"
#include "hgff/workspace.hpp"

namespace hgff {

// Flat-key experiment description (see README for the key reference).
// Parsed from a single JSON object; unknown keys are rejected by name.
struct ExperimentConfig {
  std::string experiment;
  std::string flow = "disk";
  int n = 48;
  int shells = 16;
  std::string mode = "exact";
  std::uint64_t seed = 1;
  int samples = 20000;
  int trials = 10;  // verify-lemma
  int pairs = 10;   // covariance
  double t = 0.75;
  std::vector<double> times;  // empty: experiment default
  // star flow
  double eps = 0.2;
  int modes = 5;
  // annulus flow
  double inner_radius = 0.25;
  double outer_radius = 1.0;
  double skeleton_radius = 0.6;
  // probes
  std::string probe = "point-mass-at";
  double probe_x = 0.0, probe_y = 0.0;
  double probe_width = 0.1, probe_radius = 0.25;
  std::string probe2 = "point-mass-at";
  double probe2_x = 0.0, probe2_y = 0.0;
  double probe2_width = 0.1, probe2_radius = 0.25;
  bool dump_operator = false;
};

// Parse and validate against the documented keys and ranges; throws
// config-parse-error naming the offending key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical JSON echo (sorted keys, every key present) and its FNV-1a hash.
std::string canonical_config(const ExperimentConfig& cfg);
std::string config_digest(const ExperimentConfig& cfg);

struct RunOptions {
  std::string out_dir = ".";
  bool check = false;
  int threads = 0;  // 0: environment default
  bool quiet = false;
};

struct RunResult {
  int exit_code = 0;  // 0 pass, 2 check failure
  std::vector<std::string> outputs;
  std::vector<std::string> check_lines;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

// Re-run the experiment recorded in a manifest with the recorded thread
// count; data rows are byte-identical for the same library version.  A
// version mismatch emits a warning and proceeds.
RunResult reproduce_from_manifest(const std::string& manifest_path, const RunOptions& opts);

// Shared building blocks (also used by tests).
DomainFlow flow_from_config(const ExperimentConfig& cfg);
Eigen::VectorXd probe_vector(const ExperimentConfig& cfg, const FlowWorkspace& ws, int which);

// Cell containing a point under the half-open cell convention (ties go to
// the cell on the upper side).  Throws outside-domain beyond the grid.
int site_at(const Grid& grid, Point p);

// Binary operator dump: one JSON header line (shapes, mode, flow digest),
// then per block the row indices (int32), weights and column-major column
// values (float64), all little-endian.
void dump_operator(const HadamardOperator& op, const std::string& path,
                   const std::string& flow_digest);

}  // namespace hgff
