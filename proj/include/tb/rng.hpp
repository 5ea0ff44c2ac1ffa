#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace tb {

inline std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Folds a path of labels into a stream key. Distinct paths give unrelated keys.
inline std::uint64_t derive_key(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t k = mix64(master + kGolden);
    for (std::uint64_t p : path) k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
    return k;
}

// Counter-based stream: value i is a pure function of (key, i).
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t at(std::uint64_t i) const { return mix64(key_ + (i + 1) * kGolden); }
    result_type operator()() { return at(counter_++); }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    int bit(std::uint64_t i) const { return static_cast<int>(at(i) >> 63); }
    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace tb
