#pragma once

// Hand-rolled generators for property tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gen {

class Source {
public:
    explicit Source(std::uint64_t seed) : rng_(seed) {}

    std::size_t below(std::size_t n) { return n == 0 ? 0 : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    template <class T> const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }

    std::vector<double> unit_vector(std::size_t d) {
        std::vector<double> v(d);
        double s = 0;
        do {
            s = 0;
            for (auto& x : v) {
                x = normal();
                s += x * x;
            }
        } while (s == 0);
        for (auto& x : v) x /= std::sqrt(s);
        return v;
    }

    // Unit vector near `center` with angular noise of scale `spread`.
    std::vector<double> near(const std::vector<double>& center, double spread) {
        std::vector<double> v(center);
        double s = 0;
        for (auto& x : v) {
            x += spread * normal();
            s += x * x;
        }
        for (auto& x : v) x /= std::sqrt(s);
        return v;
    }

    // Clustered point cloud on the unit sphere.
    std::vector<std::vector<double>> blobs(std::size_t n, std::size_t d, std::size_t k, double spread) {
        std::vector<std::vector<double>> centers;
        for (std::size_t c = 0; c < k; ++c) centers.push_back(unit_vector(d));
        std::vector<std::vector<double>> pts;
        for (std::size_t i = 0; i < n; ++i) {
            if (coin(0.15)) pts.push_back(unit_vector(d));
            else pts.push_back(near(pick(centers), spread));
        }
        return pts;
    }

    std::string word(std::size_t min_len = 2, std::size_t max_len = 9) {
        static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
        std::string w;
        auto len = min_len + below(max_len - min_len + 1);
        for (std::size_t i = 0; i < len; ++i) w += letters[below(letters.size())];
        return w;
    }

    std::string sentence(std::size_t words) {
        std::string s;
        for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + word();
        return s;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

} // namespace gen
