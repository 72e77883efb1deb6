#pragma once

#include <cstdint>

namespace matchdid {

// Descriptor for an independent random stream. Two streams with the same
// (seed, stream_id, salt) always yield the same draw sequence, so work keyed
// by stream id (e.g. one stream per Monte Carlo replication) is reproducible
// regardless of execution order.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t salt = 0;

    // Derives a related but statistically distinct stream, used when a draw
    // has to be retried without disturbing sibling streams.
    RngStream substream(std::uint64_t extra_salt) const;
};

// PCG32 generator (64-bit LCG state, xorshift-rotate output). Small, fast,
// and with a per-instance selectable output sequence, which makes isolated
// per-replication streams cheap.
class Pcg32 {
  public:
    // Seeds from the raw PCG (initial state, sequence selector) pair.
    Pcg32(std::uint64_t initstate, std::uint64_t initseq);

    // Seeds from a stream descriptor; the three fields are mixed into the
    // (state, sequence) pair so that distinct descriptors give uncorrelated
    // output.
    explicit Pcg32(const RngStream &stream);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform draw strictly inside (0, 1) with 53-bit resolution.
    double uniform01();

    // Uniform draw on [lo, hi).
    double uniform(double lo, double hi);

    // Standard normal draw by inverse-CDF transform of uniform01(), so one
    // draw consumes exactly one uniform and sequences stay aligned across
    // platforms.
    double normal();

    // Bernoulli draw; p must lie in [0, 1].
    bool bernoulli(double p);

  private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

}  // namespace matchdid
