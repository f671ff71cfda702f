#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace cardiofuse {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace detail

/// Counter-based generator: the n-th draw is a pure function of (key, n).
/// Streams are derived from a global seed and a purpose tag, so independent
/// consumers (weight init, dropout masks, shuffles) never share state.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t key) : key_(detail::splitmix64(key)) {}
    Rng(std::uint64_t seed, std::string_view tag)
        : key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(tag)))) {}

    /// Child stream, independent of the parent's counter.
    [[nodiscard]] Rng split(std::string_view tag) const {
        Rng r;
        r.key_ = detail::splitmix64(key_ ^ detail::fnv1a(tag));
        return r;
    }
    [[nodiscard]] Rng split(std::uint64_t index) const {
        Rng r;
        r.key_ = detail::splitmix64(key_ ^ detail::splitmix64(index + 0xA5A5A5A5ull));
        return r;
    }

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) {
            v = next_u64();
        }
        return v % n;
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by Rng::below (platform independent, unlike
/// std::shuffle with standard distributions).
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace cardiofuse
