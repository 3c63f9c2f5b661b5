#pragma once

#include "rislocate/signal.hpp"

#include <random>

namespace fixtures {

using namespace rislocate;

inline UEState default_ue() {
    UEState ue;
    ue.p = Vec3(-25, 42, -15);
    ue.v = Vec3(-25, 25, 0);
    ue.clock_bias_m = clock_bias_from_ns(100.0);
    ue.clock_drift_mps = clock_drift_from_ppm(0.5);
    return ue;
}

inline AnchorSet default_anchors() { return AnchorSet::make(Vec3(30, 30, 0), Vec3(0, 0, 0), Mat3::Identity()); }

inline EpochSchedule default_schedule(int N = 3) { return EpochSchedule::uniform(N, 0.2); }

inline OfdmConfig desk_ofdm() { return OfdmConfig::from_bandwidth(240e6, 200, 32, 4, 4, 28e9); }

inline RisConfig desk_ris(double eta = 3000.0) {
    RisConfig r;
    r.Mx = 8;
    r.My = 8;
    r.delta_s = 0.2 * desk_ofdm().lambda();
    r.eta = eta;
    r.active = true;
    return r;
}

inline SystemModel desk_system(double eta = 3000.0) {
    const AnchorSet a = default_anchors();
    const OfdmConfig o = desk_ofdm();
    return SystemModel::make(a, o, desk_ris(eta), free_space_amplitude(o.lambda(), a.d0()));
}

/// Full-size link: 2048-subcarrier grid with 200 pilots, 8x8 symbols, 15x15 panel.
inline SystemModel full_system(double eta = 3000.0) {
    const AnchorSet a = default_anchors();
    const OfdmConfig o = OfdmConfig::from_bandwidth(240e6, 2048, 200, 8, 8, 28e9);
    RisConfig r = desk_ris(eta);
    r.Mx = 15;
    r.My = 15;
    r.delta_s = 0.2 * o.lambda();
    return SystemModel::make(a, o, r, free_space_amplitude(o.lambda(), a.d0()));
}

/// UE below the panel, away from both anchors, with rates inside the unambiguous window.
inline UEState random_ue(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    UEState ue;
    ue.p = Vec3(-25 + 10 * u(rng), 42 + 10 * u(rng), -15 + 5 * u(rng));
    ue.v = Vec3(20 * u(rng), 20 * u(rng), 5 * u(rng));
    ue.clock_bias_m = clock_bias_from_ns(100.0 * (1.0 + 0.5 * u(rng)));
    ue.clock_drift_mps = clock_drift_from_ppm(0.5 * u(rng));
    return ue;
}

}  // namespace fixtures
