#pragma once

#include "rislocate/harness/experiment.hpp"
#include "rislocate/harness/trial_runner.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace rislocate::harness {

/// Long-format header shared by metric and bound tables; `mode` is the panel type.
inline constexpr const char* kCsvHeader = "sweep_axis,sweep_value,mode,metric,parameter,stage,value";

/// Shortest round-trip text of a double ("%.17g").
std::string format_double(double x);

void write_metrics_csv(std::ostream& os, const SweepTable& table, const std::string& mode);
void write_bounds_csv(std::ostream& os, SweepAxis axis, const std::vector<BoundRow>& rows);
void write_rank_csv(std::ostream& os, const std::vector<RankCounts>& rows);

/// Per-epoch channel estimates: trial,epoch,stage,d1,d2,r1,r2,phi_az,phi_el,nmse
void write_channel_estimates_csv(std::ostream& os, const std::vector<TrialResult>& results);

/// Reads `epoch,d1,d2,r1,r2,phi_az,phi_el` rows (header optional) into stacked parameters.
VecX read_measurement_csv(const std::string& path);
/// Reads a square matrix, one row per line, comma or whitespace separated.
MatX read_matrix_file(const std::string& path);

/// state,stage,value rows for one solved state.
void write_state_csv(std::ostream& os, const StateEstimatePair& est);

/// JSON run manifest with config hash, seed, tool and library versions, and the canonical config.
void write_manifest(std::ostream& os, const ExperimentConfig& cfg, const std::string& verb,
                    const std::string& csv_path, int threads);

/// Writes `text` to `path` through a temp file and a rename.
void write_file(const std::string& path, const std::string& text);

}  // namespace rislocate::harness
