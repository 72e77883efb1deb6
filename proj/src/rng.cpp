#include "matchdid/rng.hpp"

#include <stdexcept>

#include "matchdid/core_stats.hpp"

namespace matchdid {

namespace {

// SplitMix64 finalizer; decorrelates structured inputs such as small
// consecutive stream ids.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kPcgMultiplier = 6364136223846793005ULL;

}  // namespace

RngStream RngStream::substream(std::uint64_t extra_salt) const {
    return RngStream{seed, stream_id, mix64(salt ^ mix64(extra_salt + 1))};
}

Pcg32::Pcg32(std::uint64_t initstate, std::uint64_t initseq) {
    // Standard PCG32 seeding: the sequence selector must be odd, which
    // (initseq << 1) | 1 guarantees.
    inc_ = (initseq << 1u) | 1u;
    state_ = 0u;
    next_u32();
    state_ += initstate;
    next_u32();
}

Pcg32::Pcg32(const RngStream &stream)
    : Pcg32(mix64(stream.seed) ^ mix64(stream.salt ^ 0xA02BDBF7BB3C0A7ULL),
            mix64(stream.stream_id ^ mix64(stream.seed + 0x632BE59BD9B4E019ULL))) {}

std::uint32_t Pcg32::next_u32() {
    const std::uint64_t old = state_;
    state_ = old * kPcgMultiplier + inc_;
    const std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

std::uint64_t Pcg32::next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

double Pcg32::uniform01() {
    // Uses the top 53 bits, centered half a step into each cell so the
    // result can never be exactly 0 or 1.
    const std::uint64_t x = next_u64();
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

double Pcg32::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::domain_error("Pcg32::uniform: lo must not exceed hi");
    return lo + (hi - lo) * uniform01();
}

double Pcg32::normal() { return std_normal_quantile(uniform01()); }

bool Pcg32::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("Pcg32::bernoulli: p outside [0, 1]");
    return uniform01() < p;
}

}  // namespace matchdid
