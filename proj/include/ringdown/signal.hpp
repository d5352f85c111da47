#pragma once

#include <algorithm>
#include <numbers>

#include "ringdown/rng.hpp"
#include "ringdown/types.hpp"

namespace ringdown {

/// Per-channel synthesis data: one complex residue per mode, plus the standard
/// deviation of additive white measurement noise.
struct ChannelSpec {
    std::vector<Complex> residues;
    double noise_std = 0.0;
};

struct SignalSpec {
    std::vector<Mode> modes;         // n conjugate pairs -> char poly degree 2n
    std::vector<ChannelSpec> channels;
    double sample_period = 0.05;     // T, seconds
    int num_samples = 300;           // M
    std::uint64_t seed = 0;          // noise stream seed

    void validate() const {
        require(!modes.empty(), "SignalSpec: at least one mode required");
        require(sample_period > 0.0, "SignalSpec: sample_period must be > 0");
        require(!channels.empty(), "SignalSpec: at least one channel required");
        const int n = static_cast<int>(modes.size());
        require(num_samples >= 2 * n + 2, "SignalSpec: num_samples must be >= 2n+2");
        double max_omega = 0.0;
        for (const auto& m : modes) {
            require(std::isfinite(m.sigma) && std::isfinite(m.omega),
                    "SignalSpec: non-finite mode parameters");
            require(m.omega >= 0.0, "SignalSpec: omega must be >= 0");
            max_omega = std::max(max_omega, m.omega);
        }
        require(sample_period * max_omega < std::numbers::pi,
                "SignalSpec: T*max(omega) >= pi would alias planted modes");
        for (const auto& ch : channels) {
            require(ch.residues.size() == modes.size(),
                    "SignalSpec: residue count must equal mode count");
            require(ch.noise_std >= 0.0, "SignalSpec: noise_std must be >= 0");
            for (const auto& r : ch.residues)
                require(std::isfinite(r.real()) && std::isfinite(r.imag()),
                        "SignalSpec: non-finite residue");
        }
    }
};

/// Sampled multi-channel ringdown, channels by row.
struct RingdownSignal {
    Mat samples;  // p x M
    double sample_period = 0.0;

    int num_channels() const { return static_cast<int>(samples.rows()); }
    int num_samples() const { return static_cast<int>(samples.cols()); }
};

/// y_i(m) = sum_k 2|r_ik| exp(-sigma_k mT) cos(Omega_k mT + arg r_ik) + noise.
/// Deterministic for a fixed spec.seed; the noise stream is per channel.
inline RingdownSignal synth_ringdown(const SignalSpec& spec) {
    spec.validate();
    const int p = static_cast<int>(spec.channels.size());
    const int M = spec.num_samples;
    const double T = spec.sample_period;
    RingdownSignal out;
    out.sample_period = T;
    out.samples.resize(p, M);
    for (int i = 0; i < p; ++i) {
        const auto& ch = spec.channels[i];
        for (int m = 0; m < M; ++m) {
            const double t = m * T;
            double y = 0.0;
            for (std::size_t k = 0; k < spec.modes.size(); ++k) {
                const auto& mode = spec.modes[k];
                const auto& r = ch.residues[k];
                y += 2.0 * std::abs(r) * std::exp(-mode.sigma * t) *
                     std::cos(mode.omega * t + std::arg(r));
            }
            out.samples(i, m) = y;
        }
        if (ch.noise_std > 0.0) {
            Xoshiro256ss rng(seed_mix({spec.seed, static_cast<std::uint64_t>(i)}));
            for (int m = 0; m < M; ++m) out.samples(i, m) += ch.noise_std * rng.gaussian();
        }
    }
    require(out.samples.allFinite(), "synth_ringdown: non-finite samples produced");
    return out;
}

/// Channels with residue magnitudes uniform in [mag_lo, mag_hi) and phases
/// uniform in [0, 2pi), drawn channel-major from the seeded stream.
inline std::vector<ChannelSpec> random_channels(int p, int num_modes, double mag_lo,
                                                double mag_hi, std::uint64_t residue_seed,
                                                double noise_std = 0.0) {
    require(p > 0 && num_modes > 0, "random_channels: p and num_modes must be positive");
    Xoshiro256ss rng(seed_mix({residue_seed}));
    std::vector<ChannelSpec> channels(p);
    for (auto& ch : channels) {
        ch.noise_std = noise_std;
        ch.residues.reserve(num_modes);
        for (int k = 0; k < num_modes; ++k) {
            const double mag = rng.uniform(mag_lo, mag_hi);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            ch.residues.push_back(std::polar(mag, phase));
        }
    }
    return channels;
}

enum class PartitionPolicy { RoundRobin, Contiguous };

/// Disjoint channel-to-area assignment covering all p channels.
struct AreaPartition {
    std::vector<std::vector<int>> assignment;

    int num_areas() const { return static_cast<int>(assignment.size()); }

    void validate(int p) const {
        std::vector<bool> seen(p, false);
        for (const auto& area : assignment) {
            require(!area.empty(), "AreaPartition: empty area");
            for (int ch : area) {
                require(ch >= 0 && ch < p, "AreaPartition: channel index out of range");
                require(!seen[ch], "AreaPartition: duplicate channel assignment");
                seen[ch] = true;
            }
        }
        require(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }),
                "AreaPartition: not all channels assigned");
    }
};

inline AreaPartition partition_channels(int p, int N, PartitionPolicy policy) {
    require(N >= 1, "partition_channels: need at least one area");
    require(N <= p, "partition_channels: more areas than channels");
    AreaPartition part;
    part.assignment.resize(N);
    if (policy == PartitionPolicy::RoundRobin) {
        for (int ch = 0; ch < p; ++ch) part.assignment[ch % N].push_back(ch);
    } else {
        // first (p % N) areas take the extra channel
        int ch = 0;
        for (int a = 0; a < N; ++a) {
            int size = p / N + (a < p % N ? 1 : 0);
            for (int j = 0; j < size; ++j) part.assignment[a].push_back(ch++);
        }
    }
    part.validate(p);
    return part;
}

}  // namespace ringdown
