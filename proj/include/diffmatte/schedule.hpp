// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace diffmatte {

/// Discrete diffusion timestep machinery. Immutable after construction;
/// safe for concurrent reads.
struct NoiseSchedule {
    int num_train_steps = 0;
    std::vector<double> betas;       // strictly positive, each < 1
    std::vector<double> alpha_bars;  // cumulative products of (1 - beta), strictly decreasing

    double beta(int t) const { return betas.at(t); }
    double alpha_bar(int t) const { return alpha_bars.at(t); }
    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus_alpha_bar(int t) const;
    bool valid_timestep(int t) const { return t >= 0 && t < num_train_steps; }
};

/// Sampling timetable: consecutive (t_now, t_next) pairs chaining the
/// perturbation timestep down to 0. `steps` in set_timepairs is the number of
/// pairs, i.e. the number of denoiser evaluations a sampling run performs.
struct TimePairs {
    std::vector<std::pair<int, int>> pairs;  // t_now > t_next >= 0, consecutive
    int origin = 0;                          // perturbation timestep T

    std::vector<int> timesteps() const;  // [T, ..., 0], strictly decreasing
    size_t size() const { return pairs.size(); }
};

/// Linear beta schedule; alpha_bars[t] = prod_{s<=t} (1 - betas[s]).
NoiseSchedule make_schedule(int num_train_steps, double beta_start, double beta_end);

/// Evenly spaced timetable from T down to 0 (inclusive), `steps` pairs,
/// round-to-nearest with duplicate collapse.
TimePairs set_timepairs(int T, int steps, const NoiseSchedule& schedule);

}  // namespace diffmatte
