#ifndef MRT_COMMON_HPP
#define MRT_COMMON_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mrt {

// Exit codes: 0 ok, 2 config error, 3 input error, 4 numeric abort.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct InputError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// FNV-1a, used wherever a stable cross-platform string hash is needed.
inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// xoshiro256++ with splitmix64 seeding. All integer draws are fully specified,
// so integer-derived values reproduce across platforms. normal() uses libm
// (Box-Muller) and is deterministic per build.
struct Rng {
    std::array<uint64_t, 4> s{};
    bool has_spare = false;
    double spare = 0.0;

    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s) {
            w = splitmix64(sm);
        }
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t next() {
        uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform in [0,1), 53 significant bits
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        uint64_t r;
        do {
            r = next();
        } while (r < threshold);
        return r % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + int(below(uint64_t(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * uniform();
        spare = r * std::sin(theta);
        has_spare = true;
        return r * std::cos(theta);
    }

    std::vector<uint8_t> serialize() const {
        std::vector<uint8_t> out(4 * 8 + 1 + 8);
        size_t off = 0;
        for (uint64_t w : s) {
            std::memcpy(out.data() + off, &w, 8);
            off += 8;
        }
        out[off++] = has_spare ? 1 : 0;
        std::memcpy(out.data() + off, &spare, 8);
        return out;
    }

    static Rng deserialize(const uint8_t* data, size_t len) {
        if (len != 4 * 8 + 1 + 8) {
            throw InputError("rng state: bad length");
        }
        Rng r;
        size_t off = 0;
        for (auto& w : r.s) {
            std::memcpy(&w, data + off, 8);
            off += 8;
        }
        r.has_spare = data[off++] != 0;
        std::memcpy(&r.spare, data + off, 8);
        return r;
    }
};

// Worker cap: MRT_THREADS env var, else hardware concurrency.
int max_threads();

// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
// with >1 workers the execution order is unspecified, so callers needing
// determinism must make fn(i) self-contained (e.g. per-index seeds).
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace mrt

#endif
