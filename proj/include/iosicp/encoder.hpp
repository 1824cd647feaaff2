#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "iosicp/channel.hpp"
#include "iosicp/errors.hpp"
#include "iosicp/geometry.hpp"
#include "iosicp/grid.hpp"
#include "iosicp/rng.hpp"
#include "iosicp/scenario.hpp"

namespace iosicp {

/// Bird's-eye grid geometry shared by one run. Grids are agent-centered and
/// axis-aligned in the agent's own frame.
struct GridSpec {
    int channels = 16;
    int height = 64;
    int width = 64;
    double cell_size_m = 1.0;

    static GridSpec from_config(const ScenarioConfig& c) {
        return GridSpec{c.grid_channels, c.grid_h, c.grid_w, c.cell_size_m};
    }
    double origin_x() const { return -0.5 * (width - 1) * cell_size_m; }
    double origin_y() const { return -0.5 * (height - 1) * cell_size_m; }
};

/// A collaborator's shared grid plus the latency it aged by. capture_time_s
/// is the send decision time minus latency.total_s.
struct SharePacket {
    int sender_id = 0;
    FeatureGrid grid;
    Pose sender_pose;
    LatencyBreakdown latency;
    double capture_time_s = 0.0;
};

namespace detail {

inline Vec2 world_to_local(const Pose& pose, Vec2 p) {
    return rotate(p - Vec2{pose.x, pose.y}, -pose.yaw);
}

inline Vec2 local_to_world(const Pose& pose, Vec2 p) {
    return Vec2{pose.x, pose.y} + rotate(p, pose.yaw);
}

}  // namespace detail

/// Deterministic pseudo-encoder. Channel 0 carries occupancy of visible
/// object footprints, channels 1-2 the painted object velocity, remaining
/// channels seeded low-amplitude texture so attention keys are
/// non-degenerate. The texture depends only on (world seed, agent, cell),
/// never on time, so rewound captures of a static scene are identical.
inline FeatureGrid encode(const AgentState& agent, const WorldState& world,
                          const GridSpec& spec) {
    if (spec.channels < 3) throw ConfigError("encode: grid_channels must be >= 3");
    FeatureGrid g(spec.channels, spec.height, spec.width,
                  static_cast<float>(spec.cell_size_m), static_cast<float>(spec.origin_x()),
                  static_cast<float>(spec.origin_y()));

    for (int c = 3; c < spec.channels; ++c)
        for (int h = 0; h < spec.height; ++h)
            for (int w = 0; w < spec.width; ++w) {
                Rng cell_rng = Rng::stream(world.rng_seed, "encoder_noise", agent.id, c, h, w);
                g.at(c, h, w) = static_cast<float>(0.01 * cell_rng.normal());
            }

    const double cell = spec.cell_size_m;
    for (const auto& obj : visible_objects(agent, world)) {
        const Vec2 center_local = detail::world_to_local(agent.pose, obj.center);
        const double yaw_local = obj.yaw - agent.pose.yaw;
        const double reach = 0.5 * std::hypot(obj.length, obj.width);
        const int w0 = std::max(
            0, static_cast<int>(std::floor((center_local.x - reach - spec.origin_x()) / cell)));
        const int w1 = std::min(
            spec.width - 1,
            static_cast<int>(std::ceil((center_local.x + reach - spec.origin_x()) / cell)));
        const int h0 = std::max(
            0, static_cast<int>(std::floor((center_local.y - reach - spec.origin_y()) / cell)));
        const int h1 = std::min(
            spec.height - 1,
            static_cast<int>(std::ceil((center_local.y + reach - spec.origin_y()) / cell)));
        for (int h = h0; h <= h1; ++h)
            for (int w = w0; w <= w1; ++w) {
                const Vec2 p{spec.origin_x() + w * cell, spec.origin_y() + h * cell};
                if (!point_in_rect(p, center_local, obj.length, obj.width, yaw_local)) continue;
                g.at(0, h, w) = 1.0f;
                g.at(1, h, w) = static_cast<float>(obj.velocity.x);
                g.at(2, h, w) = static_cast<float>(obj.velocity.y);
            }
    }
    return g;
}

/// Encode the world as the sender saw it latency.total_s seconds ago.
inline SharePacket capture_stale(const WorldState& world, const AgentState& sender,
                                 const LatencyBreakdown& latency, const GridSpec& spec) {
    const WorldState old_world = rewound(world, latency.total_s);
    SharePacket pkt;
    pkt.sender_id = sender.id;
    pkt.grid = encode(sender, old_world, spec);
    pkt.sender_pose = sender.pose;
    pkt.latency = latency;
    pkt.capture_time_s = world.time_s - latency.total_s;
    return pkt;
}

/// Rigid-transform resample of a sender grid into the ego frame
/// (nearest-neighbor); cells outside the sender's view stay zero. The
/// sender_pose stored in the packet is used, so localization noise applied
/// there enters exactly here.
inline FeatureGrid warp_to_ego(const SharePacket& packet, const Pose& ego_pose,
                               const GridSpec& out_spec) {
    const FeatureGrid& src = packet.grid;
    if (std::abs(static_cast<double>(src.cell_size) - out_spec.cell_size_m) > 1e-12)
        throw ShapeError("warp_to_ego: cell_size mismatch");
    FeatureGrid out(src.channels, out_spec.height, out_spec.width, src.cell_size,
                    static_cast<float>(out_spec.origin_x()),
                    static_cast<float>(out_spec.origin_y()));
    const double cell = out_spec.cell_size_m;
    const double src_ox = src.origin_x, src_oy = src.origin_y;
    for (int h = 0; h < out.height; ++h)
        for (int w = 0; w < out.width; ++w) {
            const Vec2 ego_local{out_spec.origin_x() + w * cell, out_spec.origin_y() + h * cell};
            const Vec2 world = detail::local_to_world(ego_pose, ego_local);
            const Vec2 sender_local = detail::world_to_local(packet.sender_pose, world);
            const int sw = static_cast<int>(std::lround((sender_local.x - src_ox) / cell));
            const int sh = static_cast<int>(std::lround((sender_local.y - src_oy) / cell));
            if (sw < 0 || sw >= src.width || sh < 0 || sh >= src.height) continue;
            for (int c = 0; c < src.channels; ++c) out.at(c, h, w) = src.at(c, sh, sw);
        }
    return out;
}

inline FeatureGrid warp_to_ego(const SharePacket& packet, const Pose& ego_pose) {
    GridSpec spec{packet.grid.channels, packet.grid.height, packet.grid.width,
                  static_cast<double>(packet.grid.cell_size)};
    return warp_to_ego(packet, ego_pose, spec);
}

/// Ego history frames at t - kT, k = 1..K, newest first, warped into the
/// current ego frame (identity while agents are static, kept for shape).
inline std::vector<FeatureGrid> history_frames(const AgentState& ego, const WorldState& world,
                                               const GridSpec& spec, int k_frames) {
    std::vector<FeatureGrid> out;
    out.reserve(k_frames);
    for (int k = 1; k <= k_frames; ++k) {
        const WorldState past = rewound(world, k * world.cycle_s);
        SharePacket pkt;
        pkt.sender_id = ego.id;
        pkt.grid = encode(ego, past, spec);
        pkt.sender_pose = ego.pose;
        out.push_back(warp_to_ego(pkt, ego.pose, spec));
    }
    return out;
}

}  // namespace iosicp
