#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dipoletrap {

/// Binomial standard error sqrt(p(1-p)/n). At p = 0 or 1 the Wilson
/// interval half-width (z = 1) is used so that weights stay finite.
inline double binomial_error(std::size_t survived, std::size_t total)
{
    if (total == 0)
        return 0.0;
    const double n = static_cast<double>(total);
    const double p = static_cast<double>(survived) / n;
    if (survived == 0 || survived == total)
        return 1.0 / (2.0 * (n + 1.0));
    return std::sqrt(p * (1.0 - p) / n);
}

/// Survival counts versus a scanned parameter (U1/U0, detuning, ...).
struct SurvivalCurve
{
    std::vector<double> abscissa;
    std::vector<std::size_t> survived;
    std::vector<std::size_t> total;

    std::size_t size() const { return abscissa.size(); }

    void push(double x, std::size_t s, std::size_t n)
    {
        if (s > n)
            throw std::invalid_argument("SurvivalCurve: survived exceeds total");
        abscissa.push_back(x);
        survived.push_back(s);
        total.push_back(n);
    }

    double probability(std::size_t i) const
    {
        return total[i] == 0 ? 0.0 : static_cast<double>(survived[i]) / static_cast<double>(total[i]);
    }

    double error(std::size_t i) const { return binomial_error(survived[i], total[i]); }

    std::vector<double> probabilities() const
    {
        std::vector<double> p(size());
        for (std::size_t i = 0; i < size(); ++i)
            p[i] = probability(i);
        return p;
    }

    std::vector<double> errors() const
    {
        std::vector<double> e(size());
        for (std::size_t i = 0; i < size(); ++i)
            e[i] = error(i);
        return e;
    }
};

}  // namespace dipoletrap
