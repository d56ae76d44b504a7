#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace isl {

/// A set partition of {0..n-1}, each block a bitmask.
using SetPartition = std::vector<std::uint32_t>;

/// All set partitions of {0..n-1} (Bell(n) of them).
std::vector<SetPartition> set_partitions(int n);

/// Joint cumulant from subset moments: sum over partitions of
/// (-1)^{|pi|-1} (|pi|-1)! prod_B mu(B).
template <class T>
T cumulant_from_moments(int n, const std::function<T(std::uint32_t)>& moment)
{
    static const double fact[] = {1, 1, 2, 6, 24, 120, 720, 5040, 40320, 362880};
    T total{};
    for (const auto& part : set_partitions(n)) {
        int k = static_cast<int>(part.size());
        T prod = T(1);
        for (auto block : part)
            prod *= moment(block);
        double w = ((k - 1) % 2 == 0 ? 1.0 : -1.0) * fact[k - 1];
        total += prod * w;
    }
    return total;
}

/// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t chain, std::uint64_t sweep);

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x);
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0, c_ = 0.0;
};

/// Ordinary least squares y = c0 + c1 x; returns {c0, c1}.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace isl
