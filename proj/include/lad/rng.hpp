#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>

namespace lad {

// Deterministic RNG for parameter init, corpus generation, dropout masks and
// batch shuffling. Normal draws use Box-Muller without a cached spare so the
// full state is exactly the mt19937_64 engine state and serializes cleanly.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * kPi * u2);
    }

    // [0, bound), exact via rejection
    uint64_t integer(uint64_t bound) {
        const uint64_t max = std::numeric_limits<uint64_t>::max();
        const uint64_t limit = max - max % bound;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

}  // namespace lad
