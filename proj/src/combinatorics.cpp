#include "isinglab/combinatorics.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace isl {

namespace {

void extend(int i, int n, SetPartition& cur, std::vector<SetPartition>& out)
{
    if (i == n) {
        out.push_back(cur);
        return;
    }
    // index loop: the recursion appends to cur and may reallocate it
    for (std::size_t b = 0; b < cur.size(); ++b) {
        cur[b] |= 1u << i;
        extend(i + 1, n, cur, out);
        cur[b] &= ~(1u << i);
    }
    cur.push_back(1u << i);
    extend(i + 1, n, cur, out);
    cur.pop_back();
}

}  // namespace

std::vector<SetPartition> set_partitions(int n)
{
    if (n < 0 || n > 10)
        throw std::invalid_argument("set_partitions: n outside [0, 10]");
    static std::mutex mu;
    static std::map<int, std::vector<SetPartition>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end())
        return it->second;
    std::vector<SetPartition> out;
    SetPartition cur;
    if (n > 0)
        extend(0, n, cur, out);
    cache[n] = out;
    return out;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t chain, std::uint64_t sweep)
{
    return splitmix64(splitmix64(splitmix64(seed) ^ chain) ^ sweep);
}

void CompensatedSum::add(double x)
{
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
        c_ += (sum_ - t) + x;
    else
        c_ += (x - t) + sum_;
    sum_ = t;
}

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n)
        throw std::invalid_argument("linear_fit: need at least two points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    double slope = sxy / sxx;
    return {my - slope * mx, slope};
}

}  // namespace isl
