#pragma once

#include <cmath>
#include <cstdint>

#include "iosicp/errors.hpp"

namespace iosicp {

/// V2X link parameters. Powers in dBm, bandwidth in Hz, distance in meters,
/// carrier in GHz.
struct RadioLink {
    double bandwidth_hz = 10e6;
    double tx_power_dbm = 23.0;
    double noise_power_dbm = -95.0;
    double distance_m = 1.0;
    double carrier_ghz = 5.9;
};

/// Latency composition tau = t^C + t^N + dt; total always equals the exact
/// component sum.
struct LatencyBreakdown {
    double compute_s = 0.0;
    double transmit_s = 0.0;
    double sensor_offset_s = 0.0;
    double total_s = 0.0;
};

// Link-budget defaults and per-link draw ranges used by the harness.
namespace link_defaults {
inline constexpr double carrier_ghz = 5.9;
inline constexpr double bandwidth_hz = 10e6;
inline constexpr double tx_power_dbm = 23.0;
inline constexpr double noise_dbm_min = -110.0;
inline constexpr double noise_dbm_max = -95.0;
inline constexpr double compute_s_min = 0.020;
inline constexpr double compute_s_max = 0.040;
inline constexpr double sensor_offset_s_min = 0.0;
inline constexpr double sensor_offset_s_max = 0.100;
inline constexpr double cycle_s = 0.1;  // 10 Hz sampling
}  // namespace link_defaults

/// Free-space style path loss: 28.0 + 22 log10(d) + 20 log10(f_c), dB.
inline double path_loss_db(double distance_m, double carrier_ghz) {
    if (!(distance_m > 0.0)) throw DomainError("path_loss_db: distance must be > 0");
    if (!(carrier_ghz > 0.0)) throw DomainError("path_loss_db: carrier must be > 0");
    return 28.0 + 22.0 * std::log10(distance_m) + 20.0 * std::log10(carrier_ghz);
}

/// Dense 32-bit payload size of a C x H x W grid.
inline std::uint64_t payload_bits(int channels, int height, int width) {
    return static_cast<std::uint64_t>(channels) * static_cast<std::uint64_t>(height) *
           static_cast<std::uint64_t>(width) * 32ull;
}

/// Sparse-payload extension (off by default): occupied cells carry their
/// channel values, plus a one-bit-per-cell occupancy bitmap.
inline std::uint64_t payload_bits_sparse(int channels, int height, int width,
                                         int occupied_cells) {
    return static_cast<std::uint64_t>(occupied_cells) * channels * 32ull +
           static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
}

/// Payload over the Shannon rate of the link.
inline double transmission_time_s(double payload_bits, const RadioLink& link) {
    if (payload_bits < 0.0) throw DomainError("transmission_time_s: negative payload");
    if (payload_bits == 0.0) return 0.0;
    const double pl = path_loss_db(link.distance_m, link.carrier_ghz);
    const double snr_db = link.tx_power_dbm - pl - link.noise_power_dbm;
    const double rate = link.bandwidth_hz * std::log2(1.0 + std::pow(10.0, 0.1 * snr_db));
    return payload_bits / rate;
}

inline LatencyBreakdown total_latency_s(double compute_s, double transmit_s,
                                        double sensor_offset_s) {
    if (compute_s < 0.0 || transmit_s < 0.0 || sensor_offset_s < 0.0)
        throw DomainError("total_latency_s: negative component");
    return LatencyBreakdown{compute_s, transmit_s, sensor_offset_s,
                            compute_s + transmit_s + sensor_offset_s};
}

}  // namespace iosicp
