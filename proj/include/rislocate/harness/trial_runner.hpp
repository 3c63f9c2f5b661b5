#pragma once

#include "rislocate/harness/experiment.hpp"

#include <cstdint>
#include <vector>

namespace rislocate::harness {

/// Trials 0..count-1 in order on the calling thread. Reference for the parallel runner.
std::vector<TrialResult> run_trials_serial(const Scenario& sc, std::uint64_t seed, int count);

/// Same results, distributed over an OpenMP team (threads = 0 uses the runtime default).
/// Each trial owns its random streams, so the output does not depend on the team size.
std::vector<TrialResult> run_trials_parallel(const Scenario& sc, std::uint64_t seed, int count, int threads = 0);

struct RankCounts {
    int N = 0;
    int scenarios = 0;
    int max_rank_direct_only = 0;
    int min_rank_full = 0;
    int max_rank_full = 0;
    int singular_state_fim = 0;  ///< scenarios whose full state FIM is rank deficient
};

/// Random generic geometry for the rank suite: anchors, UE state and a jittered schedule.
struct RankScenario {
    AnchorSet anchors;
    UEState ue;
    std::vector<double> times;
};
RankScenario random_rank_scenario(std::uint64_t seed, int index, int N);

/// Jacobian ranks over `scenarios` random geometries for each N in [1, max_N].
std::vector<RankCounts> rank_suite_serial(std::uint64_t seed, int scenarios, int max_N);
std::vector<RankCounts> rank_suite_parallel(std::uint64_t seed, int scenarios, int max_N, int threads = 0);

}  // namespace rislocate::harness
