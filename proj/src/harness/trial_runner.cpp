#include "rislocate/harness/trial_runner.hpp"

#include <algorithm>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rislocate::harness {

std::vector<TrialResult> run_trials_serial(const Scenario& sc, std::uint64_t seed, int count) {
    std::vector<TrialResult> out;
    out.reserve(count);
    for (int t = 0; t < count; ++t) out.push_back(run_trial(sc, seed, t));
    return out;
}

std::vector<TrialResult> run_trials_parallel(const Scenario& sc, std::uint64_t seed, int count, int threads) {
    std::vector<TrialResult> out(count);
    std::exception_ptr error;
#ifdef _OPENMP
    const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(team)
#endif
    for (int t = 0; t < count; ++t) {
        try {
            out[t] = run_trial(sc, seed, t);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(rislocate_trial_error)
#endif
            if (!error) error = std::current_exception();
        }
    }
    (void)threads;
    if (error) std::rethrow_exception(error);
    return out;
}

RankScenario random_rank_scenario(std::uint64_t seed, int index, int N) {
    std::mt19937_64 rng = trial_rng(seed, index, N);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RankScenario s;
    const Vec3 bs(30 + 10 * u(rng), 30 + 10 * u(rng), 5 * u(rng));
    const Mat3 R = rotation_zyx(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
    s.anchors = AnchorSet::make(bs, Vec3::Zero(), R);
    s.ue.p = Vec3(-25 + 15 * u(rng), 42 + 15 * u(rng), -15 + 8 * u(rng));
    s.ue.v = Vec3(20 * u(rng), 20 * u(rng), 5 * u(rng));
    s.ue.clock_bias_m = clock_bias_from_ns(100.0 * (1.0 + 0.5 * u(rng)));
    s.ue.clock_drift_mps = clock_drift_from_ppm(0.5 * u(rng));
    double t = 0.0;
    for (int n = 0; n < N; ++n) {
        s.times.push_back(t);
        t += 0.2 * (1.0 + 0.25 * u(rng));
    }
    return s;
}

namespace {

struct RankSample {
    int direct_only = 0;
    int full = 0;
};

RankSample rank_sample(std::uint64_t seed, int index, int N) {
    const RankScenario s = random_rank_scenario(seed, index, N);
    const RankReport r = rank_analysis(s.ue, s.anchors, EpochSchedule(s.times));
    return {r.rank_direct_only, r.rank_full};
}

std::vector<RankCounts> reduce(const std::vector<RankSample>& samples, int scenarios, int max_N) {
    std::vector<RankCounts> out;
    for (int N = 1; N <= max_N; ++N) {
        RankCounts c;
        c.N = N;
        c.scenarios = scenarios;
        c.min_rank_full = 8;
        for (int i = 0; i < scenarios; ++i) {
            const RankSample& s = samples[std::size_t(N - 1) * scenarios + i];
            c.max_rank_direct_only = std::max(c.max_rank_direct_only, s.direct_only);
            c.min_rank_full = std::min(c.min_rank_full, s.full);
            c.max_rank_full = std::max(c.max_rank_full, s.full);
            if (s.full < 8) ++c.singular_state_fim;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::vector<RankCounts> rank_suite_serial(std::uint64_t seed, int scenarios, int max_N) {
    std::vector<RankSample> samples;
    for (int N = 1; N <= max_N; ++N)
        for (int i = 0; i < scenarios; ++i) samples.push_back(rank_sample(seed, i, N));
    return reduce(samples, scenarios, max_N);
}

std::vector<RankCounts> rank_suite_parallel(std::uint64_t seed, int scenarios, int max_N, int threads) {
    const int total = scenarios * max_N;
    std::vector<RankSample> samples(total);
    std::exception_ptr error;
#ifdef _OPENMP
    const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(team)
#endif
    for (int k = 0; k < total; ++k) {
        try {
            samples[k] = rank_sample(seed, k % scenarios, 1 + k / scenarios);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(rislocate_rank_error)
#endif
            if (!error) error = std::current_exception();
        }
    }
    (void)threads;
    if (error) std::rethrow_exception(error);
    return reduce(samples, scenarios, max_N);
}

}  // namespace rislocate::harness
