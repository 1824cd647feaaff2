#include <catch2/catch_amalgamated.hpp>

#include "iosicp/channel.hpp"
#include "iosicp/rng.hpp"

using namespace iosicp;

TEST_CASE("path_loss_db vanishing log terms") {
    CHECK(path_loss_db(1.0, 1.0) == 28.0);
}

TEST_CASE("path_loss_db hand evaluations") {
    CHECK(path_loss_db(100.0, 5.9) == Catch::Approx(87.417).margin(0.001));
    CHECK(path_loss_db(10.0, 5.9) == Catch::Approx(65.417).margin(0.001));
}

TEST_CASE("path_loss_db rejects nonpositive inputs") {
    CHECK_THROWS_AS(path_loss_db(0.0, 5.9), DomainError);
    CHECK_THROWS_AS(path_loss_db(10.0, -1.0), DomainError);
}

TEST_CASE("path_loss_db is strictly increasing in distance and carrier") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(0.5, 500.0);
        const double f = rng.uniform(0.5, 10.0);
        const double bump = rng.uniform(0.01, 10.0);
        CHECK(path_loss_db(d + bump, f) > path_loss_db(d, f));
        CHECK(path_loss_db(d, f + 0.1) > path_loss_db(d, f));
    }
}

TEST_CASE("transmission_time_s zero payload") {
    RadioLink link;
    link.distance_m = 100.0;
    CHECK(transmission_time_s(0.0, link) == 0.0);
}

TEST_CASE("transmission_time_s unit SNR gives payload over bandwidth") {
    // P_TX - PL - P_Noise = 0 dB: d = 1 m, f_c = 1 GHz makes PL exactly 28.
    RadioLink link;
    link.bandwidth_hz = 1e7;
    link.tx_power_dbm = 23.0;
    link.noise_power_dbm = -5.0;
    link.distance_m = 1.0;
    link.carrier_ghz = 1.0;
    CHECK(transmission_time_s(1e7, link) == 1.0);
}

TEST_CASE("transmission_time_s table parameters") {
    RadioLink link;
    link.bandwidth_hz = 1e7;
    link.tx_power_dbm = 23.0;
    link.noise_power_dbm = -95.0;
    link.distance_m = 100.0;
    link.carrier_ghz = 5.9;
    CHECK(transmission_time_s(1e6, link) == Catch::Approx(9.84e-3).margin(1e-5));
}

TEST_CASE("transmission_time_s rejects negative payload") {
    RadioLink link;
    CHECK_THROWS_AS(transmission_time_s(-1.0, link), DomainError);
}

TEST_CASE("transmission_time_s strictly increasing in payload and distance") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        RadioLink link;
        link.bandwidth_hz = rng.uniform(1e6, 2e7);
        link.tx_power_dbm = rng.uniform(10.0, 30.0);
        link.noise_power_dbm = rng.uniform(-110.0, -90.0);
        link.distance_m = rng.uniform(1.0, 300.0);
        link.carrier_ghz = rng.uniform(1.0, 6.0);
        const double payload = rng.uniform(1e3, 1e7);
        CHECK(transmission_time_s(payload * 1.5, link) > transmission_time_s(payload, link));
        RadioLink farther = link;
        farther.distance_m += rng.uniform(1.0, 100.0);
        CHECK(transmission_time_s(payload, farther) > transmission_time_s(payload, link));
    }
}

TEST_CASE("payload_bits arithmetic") {
    CHECK(payload_bits(1, 1, 1) == 32ull);
    CHECK(payload_bits(64, 100, 100) == 20'480'000ull);
    CHECK(payload_bits(16, 64, 64) == 2'097'152ull);
}

TEST_CASE("payload_bits_sparse undercuts the dense encoding for sparse grids") {
    // 100 occupied cells of a 16x64x64 grid: values plus the cell bitmap.
    CHECK(payload_bits_sparse(16, 64, 64, 100) == 100ull * 16 * 32 + 64 * 64);
    CHECK(payload_bits_sparse(16, 64, 64, 100) < payload_bits(16, 64, 64));
    // A fully occupied grid costs the dense size plus the bitmap.
    CHECK(payload_bits_sparse(16, 64, 64, 64 * 64) == payload_bits(16, 64, 64) + 64 * 64);
}

TEST_CASE("total_latency_s sums components exactly") {
    const LatencyBreakdown zero = total_latency_s(0.0, 0.0, 0.0);
    CHECK(zero.total_s == 0.0);

    const LatencyBreakdown a = total_latency_s(0.03, 0.00984, 0.05);
    CHECK(a.total_s == 0.03 + 0.00984 + 0.05);
    CHECK(a.total_s == Catch::Approx(0.08984));

    const LatencyBreakdown b = total_latency_s(0.02, 1.0, 0.1);
    CHECK(b.total_s == Catch::Approx(1.12));

    Rng rng(23);
    for (int i = 0; i < 500; ++i) {
        const double c = rng.uniform(0.0, 1.0);
        const double n = rng.uniform(0.0, 1.0);
        const double s = rng.uniform(0.0, 1.0);
        CHECK(total_latency_s(c, n, s).total_s == c + n + s);
    }
}

TEST_CASE("total_latency_s rejects negative components") {
    CHECK_THROWS_AS(total_latency_s(-0.1, 0.0, 0.0), DomainError);
    CHECK_THROWS_AS(total_latency_s(0.0, -0.1, 0.0), DomainError);
    CHECK_THROWS_AS(total_latency_s(0.0, 0.0, -0.1), DomainError);
}
