// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffmatte {

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bars.at(t)); }
double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const {
    return std::sqrt(1.0 - alpha_bars.at(t));
}

std::vector<int> TimePairs::timesteps() const {
    std::vector<int> ts;
    ts.reserve(pairs.size() + 1);
    for (const auto& p : pairs) ts.push_back(p.first);
    if (!pairs.empty()) ts.push_back(pairs.back().second);
    return ts;
}

NoiseSchedule make_schedule(int num_train_steps, double beta_start, double beta_end) {
    if (num_train_steps < 1) throw std::invalid_argument("make_schedule: num_train_steps < 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.num_train_steps = num_train_steps;
    s.betas.resize(num_train_steps);
    s.alpha_bars.resize(num_train_steps);
    double prod = 1.0;
    for (int t = 0; t < num_train_steps; t++) {
        s.betas[t] = num_train_steps == 1
                         ? beta_start
                         : beta_start + t * (beta_end - beta_start) / (num_train_steps - 1);
        prod *= 1.0 - s.betas[t];
        s.alpha_bars[t] = prod;
    }
    return s;
}

TimePairs set_timepairs(int T, int steps, const NoiseSchedule& schedule) {
    if (!(T > 0 && T < schedule.num_train_steps))
        throw std::invalid_argument("set_timepairs: T out of range (0, num_train_steps)");
    if (steps < 1) throw std::invalid_argument("set_timepairs: steps < 1");
    if (steps > T)
        throw std::invalid_argument("set_timepairs: steps (" + std::to_string(steps) +
                                    ") > T (" + std::to_string(T) +
                                    "): cannot space more steps than timesteps");
    std::vector<int> ts;
    ts.reserve(steps + 1);
    for (int k = steps; k >= 0; k--) {
        const int t = static_cast<int>(std::lround(static_cast<double>(T) * k / steps));
        if (ts.empty() || t != ts.back()) ts.push_back(t);  // collapse rounding duplicates
    }
    TimePairs tp;
    tp.origin = T;
    for (size_t i = 0; i + 1 < ts.size(); i++) tp.pairs.emplace_back(ts[i], ts[i + 1]);
    return tp;
}

}  // namespace diffmatte
