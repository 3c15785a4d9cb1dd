#pragma once

#include <stdexcept>
#include <string>

namespace cin {

/// Planner hyper-parameters. K == kAutoIterations and max_steps == 0 mean "derive from
/// the map side".
struct HyperParams {
    static constexpr int kAutoIterations = -1;

    double gamma = 0.99;
    int K = kAutoIterations;
    int F = 3;
    double r_p = 10.0;
    double r_n = -0.5;
    int max_steps = 0;

    /// Sweeps per unit of map side when K is left on auto.
    static constexpr int kDefaultIterationsPerSide = 10;

    int iterations(int m) const { return K > 0 ? K : kDefaultIterationsPerSide * m; }
    int step_cap(int m) const { return max_steps > 0 ? max_steps : m * m; }

    void validate() const
    {
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
        if (K == 0 || K < kAutoIterations) throw std::invalid_argument("K must be positive (or -1 for 10 * m)");
        if (F <= 0 || F % 2 == 0) throw std::invalid_argument("F must be odd and positive");
        if (!(r_p > 0.0)) throw std::invalid_argument("r_p must be positive");
        if (!(r_n < 0.0)) throw std::invalid_argument("r_n must be negative");
        if (max_steps < 0) throw std::invalid_argument("max_steps must be positive (or 0 for m*m)");
    }
};

}  // namespace cin
