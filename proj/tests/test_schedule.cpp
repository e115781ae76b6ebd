// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diffmatte/schedule.hpp"
#include "diffmatte/tensor.hpp"

using namespace diffmatte;

TEST_CASE("make_schedule linear defaults") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    CHECK(s.betas.size() == 1000);
    CHECK(s.alpha_bars.size() == 1000);
    CHECK(s.betas[0] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.betas[999] == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9999).epsilon(1e-12));
    for (int t = 0; t < 1000; t++) {
        CHECK(s.betas[t] > 0.0);
        CHECK(s.betas[t] < 1.0);
        if (t > 0) {
            CHECK(s.betas[t] >= s.betas[t - 1]);
            CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
        }
    }
}

TEST_CASE("make_schedule single step") {
    NoiseSchedule s = make_schedule(1, 0.5, 0.5);
    CHECK(s.betas == std::vector<double>{0.5});
    CHECK(s.alpha_bars == std::vector<double>{0.5});
}

TEST_CASE("alpha_bars equals an independent running product") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    // independent route: recompute each cumulative product from scratch in
    // long double, no shared running state with the implementation
    for (int t : {0, 1, 17, 250, 500, 999}) {
        long double prod = 1.0L;
        for (int k = 0; k <= t; k++)
            prod *= 1.0L - (1e-4L + k * (0.02L - 1e-4L) / 999.0L);
        const double rel = std::abs(static_cast<double>(prod) - s.alpha_bars[t]) /
                           static_cast<double>(prod);
        CHECK(rel < 1e-12);
    }
}

TEST_CASE("make_schedule rejects bad bounds") {
    CHECK_THROWS(make_schedule(0, 1e-4, 0.02));
    CHECK_THROWS(make_schedule(10, 0.02, 1e-4));   // non-monotone
    CHECK_THROWS(make_schedule(10, 0.0, 0.02));    // start not positive
    CHECK_THROWS(make_schedule(10, 1e-4, 1.0));    // end not < 1
}

TEST_CASE("set_timepairs single jump") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    TimePairs tp = set_timepairs(250, 1, s);
    REQUIRE(tp.pairs.size() == 1);
    CHECK(tp.pairs[0] == std::pair<int, int>{250, 0});
    CHECK(tp.origin == 250);
}

TEST_CASE("set_timepairs unit spacing") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    TimePairs tp = set_timepairs(4, 4, s);
    REQUIRE(tp.pairs.size() == 4);
    CHECK(tp.pairs[0] == std::pair<int, int>{4, 3});
    CHECK(tp.pairs[1] == std::pair<int, int>{3, 2});
    CHECK(tp.pairs[2] == std::pair<int, int>{2, 1});
    CHECK(tp.pairs[3] == std::pair<int, int>{1, 0});
}

TEST_CASE("set_timepairs even spacing matches brute-force enumeration") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    TimePairs tp = set_timepairs(250, 5, s);
    // oracle: enumerate round(T*k/steps) for k = steps..0
    std::vector<int> expect;
    for (int k = 5; k >= 0; k--) expect.push_back((int)std::lround(250.0 * k / 5.0));
    CHECK(tp.timesteps() == expect);
    CHECK(tp.timesteps() == std::vector<int>{250, 200, 150, 100, 50, 0});
    // one denoiser evaluation per sampling step
    CHECK(tp.pairs.size() == 5);
}

TEST_CASE("set_timepairs chains T to 0 with strictly decreasing timesteps") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng rng(99);
    for (int trial = 0; trial < 200; trial++) {
        const int T = 1 + rng.uniform_int(999);
        const int steps = 1 + rng.uniform_int(T);
        TimePairs tp = set_timepairs(T, steps, s);
        REQUIRE(!tp.pairs.empty());
        CHECK(tp.pairs.front().first == T);
        CHECK(tp.pairs.back().second == 0);
        for (size_t i = 0; i < tp.pairs.size(); i++) {
            CHECK(tp.pairs[i].first > tp.pairs[i].second);
            if (i + 1 < tp.pairs.size())
                CHECK(tp.pairs[i].second == tp.pairs[i + 1].first);  // consecutive
        }
    }
}

TEST_CASE("set_timepairs rejects invalid requests") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    CHECK_THROWS(set_timepairs(10, 11, s));   // more steps than timesteps
    CHECK_THROWS(set_timepairs(0, 1, s));     // T not positive
    CHECK_THROWS(set_timepairs(1000, 5, s));  // T outside schedule
    CHECK_THROWS(set_timepairs(250, 0, s));
}
