#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iosicp/channel.hpp"
#include "iosicp/errors.hpp"
#include "iosicp/geometry.hpp"
#include "iosicp/rng.hpp"

namespace iosicp {

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
};

/// Moving ground-truth box. length runs along the heading axis.
struct ObjectBox {
    int id = 0;
    Vec2 center;
    double length = 4.0;
    double width = 2.0;
    double yaw = 0.0;  // [-pi, pi)
    Vec2 velocity;
};

struct AgentState {
    int id = 0;
    Pose pose;
    double sensor_range_m = 32.0;
    double bandwidth_hz = link_defaults::bandwidth_hz;
    double tx_power_dbm = link_defaults::tx_power_dbm;
    bool is_ego = false;
};

/// Immutable world snapshot; stepping returns a new value.
struct WorldState {
    double time_s = 0.0;
    double cycle_s = link_defaults::cycle_s;
    std::uint64_t rng_seed = 0;
    std::vector<AgentState> agents;
    std::vector<ObjectBox> objects;

    const AgentState* find_agent(int id) const {
        for (const auto& a : agents)
            if (a.id == id) return &a;
        return nullptr;
    }
    const AgentState& ego() const {
        for (const auto& a : agents)
            if (a.is_ego) return a;
        throw GenerationError("world has no ego agent");
    }
};

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// Key-value scenario configuration. All experiment defaults live here and
/// can be overridden from a config file (one `key value` pair per line).
struct ScenarioConfig {
    std::string scene = "dense_traffic";
    int agents = 2;
    int objects = 6;
    double area_xmin = -30.0, area_xmax = 30.0;
    double area_ymin = -30.0, area_ymax = 30.0;
    double speed_min = 0.0, speed_max = 10.0;
    double sensor_range_m = 32.0;

    int grid_channels = 16;
    int grid_h = 64, grid_w = 64;
    double cell_size_m = 1.0;

    double carrier_ghz = link_defaults::carrier_ghz;
    double bandwidth_hz = link_defaults::bandwidth_hz;
    double tx_power_dbm = link_defaults::tx_power_dbm;
    double noise_dbm_min = link_defaults::noise_dbm_min;
    double noise_dbm_max = link_defaults::noise_dbm_max;
    double compute_s_min = link_defaults::compute_s_min;
    double compute_s_max = link_defaults::compute_s_max;
    double sensor_offset_s_min = link_defaults::sensor_offset_s_min;
    double sensor_offset_s_max = link_defaults::sensor_offset_s_max;

    double cycle_s = link_defaults::cycle_s;
    int history_frames = 2;
    int num_scales = 3;
    double sparse_threshold = 0.5;
    double decode_threshold = 0.25;
    double loc_noise_pos_m = 0.0;
    double loc_noise_yaw_rad = 0.0;
    bool sparse_payload = false;  // size packets by occupied cells instead of dense grids
    // When >= 0, the highest-id non-ego agent's latency is forced to this.
    double adversarial_latency_s = -1.0;
    std::uint64_t seed = 1;

    /// Scene-tuned defaults; explicit config keys override them.
    static ScenarioConfig for_scene(const std::string& name) {
        ScenarioConfig c;
        c.scene = name;
        if (name == "sparse_highway") {
            c.grid_h = c.grid_w = 128;
            c.speed_min = c.speed_max = 0.0;
        } else if (name == "occlusion") {
            c.speed_min = c.speed_max = 0.0;
            c.sensor_offset_s_max = 0.030;  // keeps drawn collaborator latency under 100 ms
        } else if (name == "latency_probe") {
            c.speed_min = c.speed_max = 10.0;
        } else if (name == "ablation") {
            c.speed_min = c.speed_max = 10.0;
            // Stale enough that the adversary's ghost boxes stay clear of the
            // true footprints and the fresh collaborator's short smear
            // (7.5 m at 10 m/s vs under 1 m), with zero map overlap.
            c.adversarial_latency_s = 0.75;
            c.sensor_offset_s_max = 0.030;
        } else if (name == "dense_traffic") {
            c.agents = 3;
            c.objects = 8;
        }
        return c;
    }

    void validate() const {
        if (agents < 1) throw ConfigError("scenario.agents: must be >= 1");
        if (objects < 0) throw ConfigError("scenario.objects: must be >= 0");
        if (!(area_xmax > area_xmin)) throw ConfigError("scenario.area_x: empty range");
        if (!(area_ymax > area_ymin)) throw ConfigError("scenario.area_y: empty range");
        if (speed_min < 0.0 || speed_max < speed_min)
            throw ConfigError("scenario.speed: invalid range");
        if (!(sensor_range_m > 0.0)) throw ConfigError("scenario.sensor_range: must be > 0");
        if (grid_channels < 3) throw ConfigError("scenario.grid_channels: must be >= 3");
        if (grid_h < 1 || grid_w < 1) throw ConfigError("scenario.grid: dims must be >= 1");
        if (!(cell_size_m > 0.0)) throw ConfigError("scenario.cell_size: must be > 0");
        if (!(cycle_s > 0.0)) throw ConfigError("scenario.cycle_s: must be > 0");
        if (history_frames < 0) throw ConfigError("scenario.history_frames: must be >= 0");
        if (num_scales < 1) throw ConfigError("scenario.num_scales: must be >= 1");
    }
};

inline ScenarioConfig parse_scenario_config(std::istream& is) {
    // Applies keys on top of scene defaults, so `scene` is read first.
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int line_no = 0;
    std::string scene = "dense_traffic";
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        if (!(ls >> value))
            throw ParseError("config line " + std::to_string(line_no) + ": missing value for '" +
                             key + "'");
        if (key == "scene")
            scene = value;
        else
            kv.emplace_back(key, value);
    }

    ScenarioConfig c = ScenarioConfig::for_scene(scene);
    auto num = [](const std::string& k, const std::string& v) -> double {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("scenario." + k + ": not a number: '" + v + "'");
        }
    };
    for (const auto& [k, v] : kv) {
        if (k == "agents") c.agents = static_cast<int>(num(k, v));
        else if (k == "objects") c.objects = static_cast<int>(num(k, v));
        else if (k == "area_xmin") c.area_xmin = num(k, v);
        else if (k == "area_xmax") c.area_xmax = num(k, v);
        else if (k == "area_ymin") c.area_ymin = num(k, v);
        else if (k == "area_ymax") c.area_ymax = num(k, v);
        else if (k == "speed_min") c.speed_min = num(k, v);
        else if (k == "speed_max") c.speed_max = num(k, v);
        else if (k == "sensor_range") c.sensor_range_m = num(k, v);
        else if (k == "grid_channels") c.grid_channels = static_cast<int>(num(k, v));
        else if (k == "grid_h") c.grid_h = static_cast<int>(num(k, v));
        else if (k == "grid_w") c.grid_w = static_cast<int>(num(k, v));
        else if (k == "cell_size") c.cell_size_m = num(k, v);
        else if (k == "carrier_ghz") c.carrier_ghz = num(k, v);
        else if (k == "bandwidth_hz") c.bandwidth_hz = num(k, v);
        else if (k == "tx_power_dbm") c.tx_power_dbm = num(k, v);
        else if (k == "noise_dbm_min") c.noise_dbm_min = num(k, v);
        else if (k == "noise_dbm_max") c.noise_dbm_max = num(k, v);
        else if (k == "compute_s_min") c.compute_s_min = num(k, v);
        else if (k == "compute_s_max") c.compute_s_max = num(k, v);
        else if (k == "sensor_offset_s_min") c.sensor_offset_s_min = num(k, v);
        else if (k == "sensor_offset_s_max") c.sensor_offset_s_max = num(k, v);
        else if (k == "cycle_s") c.cycle_s = num(k, v);
        else if (k == "history_frames") c.history_frames = static_cast<int>(num(k, v));
        else if (k == "num_scales") c.num_scales = static_cast<int>(num(k, v));
        else if (k == "sparse_threshold") c.sparse_threshold = num(k, v);
        else if (k == "decode_threshold") c.decode_threshold = num(k, v);
        else if (k == "loc_noise_pos_m") c.loc_noise_pos_m = num(k, v);
        else if (k == "sparse_payload") c.sparse_payload = num(k, v) != 0.0;
        else if (k == "loc_noise_yaw_rad") c.loc_noise_yaw_rad = num(k, v);
        else if (k == "adversarial_latency_s") c.adversarial_latency_s = num(k, v);
        else if (k == "seed") c.seed = static_cast<std::uint64_t>(num(k, v));
        else throw ConfigError("scenario." + k + ": unknown key");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// World generation
// ---------------------------------------------------------------------------

namespace detail {

inline AgentState make_agent(int id, double x, double y, double yaw, const ScenarioConfig& c,
                             bool ego) {
    AgentState a;
    a.id = id;
    a.pose = {x, y, yaw};
    a.sensor_range_m = c.sensor_range_m;
    a.bandwidth_hz = c.bandwidth_hz;
    a.tx_power_dbm = c.tx_power_dbm;
    a.is_ego = ego;
    return a;
}

inline ObjectBox make_box(int id, double cx, double cy, double len, double wid, double yaw,
                          double vx, double vy) {
    ObjectBox b;
    b.id = id;
    b.center = {cx, cy};
    b.length = len;
    b.width = wid;
    b.yaw = yaw;
    b.velocity = {vx, vy};
    return b;
}

// Fixed constellations are lattice-aligned (box edges on 4 m multiples) so
// the multi-scale pyramid reproduces them exactly; see the scene notes in the
// README.
inline void build_occlusion(WorldState& w, const ScenarioConfig& c, Rng& rng) {
    const double sx = 4.0 * (static_cast<double>(rng.uniform_index(5)) - 2.0);
    const double sy = 4.0 * (static_cast<double>(rng.uniform_index(5)) - 2.0);
    w.agents.push_back(make_agent(0, sx, sy, 0.0, c, true));
    w.agents.push_back(make_agent(1, sx + 24.0, sy + 16.0, 0.0, c, false));
    const double s = c.speed_max;
    w.objects.push_back(make_box(0, sx + 10.0, sy + 2.0, 4.0, 4.0, 0.0, s, 0.0));  // blocker
    w.objects.push_back(make_box(1, sx + 22.0, sy + 6.0, 4.0, 4.0, 0.0, s, 0.0));  // hidden target
}

inline void build_sparse_highway(WorldState& w, const ScenarioConfig& c, Rng& rng) {
    const double sx = 4.0 * (static_cast<double>(rng.uniform_index(3)) - 1.0);
    const double sy = 4.0 * (static_cast<double>(rng.uniform_index(3)) - 1.0);
    w.agents.push_back(make_agent(0, sx, sy, 0.0, c, true));
    w.agents.push_back(make_agent(1, sx + 24.0, sy + 20.0, 0.0, c, false));
    w.agents.push_back(make_agent(2, sx + 32.0, sy - 20.0, 0.0, c, false));
    // One object per 10 m distance bucket out to 60 m.
    const double pos[6][2] = {{10, 2}, {18, 10}, {30, -6}, {26, 34}, {42, -30}, {30, 54}};
    for (int i = 0; i < 6; ++i)
        w.objects.push_back(
            make_box(i, sx + pos[i][0], sy + pos[i][1], 4.0, 4.0, 0.0, 0.0, 0.0));
}

inline void build_latency_probe(WorldState& w, const ScenarioConfig& c, Rng& rng) {
    const double sx = 4.0 * (static_cast<double>(rng.uniform_index(5)) - 2.0);
    const double sy = 4.0 * (static_cast<double>(rng.uniform_index(5)) - 2.0);
    w.agents.push_back(make_agent(0, sx, sy, 0.0, c, true));
    w.agents.push_back(make_agent(1, sx + 24.0, sy + 16.0, 0.0, c, false));
    const double s = c.speed_max;
    w.objects.push_back(make_box(0, sx + 10.0, sy + 2.0, 4.0, 4.0, 0.0, s, 0.0));
    w.objects.push_back(make_box(1, sx + 22.0, sy + 6.0, 4.0, 4.0, 0.0, s, 0.0));
}

inline void build_ablation(WorldState& w, const ScenarioConfig& c, Rng& rng) {
    const double sx = 4.0 * (static_cast<double>(rng.uniform_index(3)) - 1.0);
    const double sy = 4.0 * (static_cast<double>(rng.uniform_index(3)) - 1.0);
    w.agents.push_back(make_agent(0, sx, sy, 0.0, c, true));
    w.agents.push_back(make_agent(1, sx + 24.0, sy + 16.0, 0.0, c, false));  // helpful
    w.agents.push_back(make_agent(2, sx - 8.0, sy, 0.0, c, false));          // stale adversary
    const double s = c.speed_max;
    w.objects.push_back(make_box(0, sx + 10.0, sy + 2.0, 4.0, 4.0, 0.0, s, 0.0));
    w.objects.push_back(make_box(1, sx + 2.0, sy + 18.0, 4.0, 4.0, 0.0, s, 0.0));
    w.objects.push_back(make_box(2, sx - 16.0, sy - 6.0, 4.0, 4.0, 0.0, s, 0.0));
}

inline void build_dense_traffic(WorldState& w, const ScenarioConfig& c, Rng& rng) {
    w.agents.push_back(make_agent(0, 0.0, 0.0, 0.0, c, true));
    for (int i = 1; i < c.agents; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 100) throw GenerationError("agent placement failed");
            const double x = rng.uniform(c.area_xmin, c.area_xmax);
            const double y = rng.uniform(c.area_ymin, c.area_ymax);
            bool clear = true;
            for (const auto& a : w.agents) {
                const double dx = a.pose.x - x, dy = a.pose.y - y;
                if (dx * dx + dy * dy < 16.0) clear = false;
            }
            if (!clear) continue;
            w.agents.push_back(make_agent(i, x, y, 0.0, c, false));
            break;
        }
    }
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < c.objects; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 100) throw GenerationError("object placement failed");
            const double x = rng.uniform(c.area_xmin, c.area_xmax);
            const double y = rng.uniform(c.area_ymin, c.area_ymax);
            const double yaw = rng.uniform(-pi, pi);
            bool clear = true;
            for (const auto& a : w.agents) {
                const double dx = a.pose.x - x, dy = a.pose.y - y;
                if (dx * dx + dy * dy < 25.0 ||
                    point_in_rect({a.pose.x, a.pose.y}, {x, y}, 4.0, 2.0, yaw))
                    clear = false;
            }
            if (!clear) continue;
            const double speed = rng.uniform(c.speed_min, c.speed_max);
            const double dir = rng.uniform(-pi, pi);
            w.objects.push_back(make_box(i, x, y, 4.0, 2.0, yaw, speed * std::cos(dir),
                                         speed * std::sin(dir)));
            break;
        }
    }
}

}  // namespace detail

/// Deterministic world for (config, seed); exactly one ego.
inline WorldState generate_world(const ScenarioConfig& config, std::uint64_t seed) {
    config.validate();
    WorldState w;
    w.time_s = 0.0;
    w.cycle_s = config.cycle_s;
    w.rng_seed = seed;
    Rng rng = Rng::stream(seed, "world_gen");
    if (config.scene == "occlusion")
        detail::build_occlusion(w, config, rng);
    else if (config.scene == "sparse_highway")
        detail::build_sparse_highway(w, config, rng);
    else if (config.scene == "latency_probe")
        detail::build_latency_probe(w, config, rng);
    else if (config.scene == "ablation")
        detail::build_ablation(w, config, rng);
    else if (config.scene == "dense_traffic")
        detail::build_dense_traffic(w, config, rng);
    else
        throw ConfigError("scenario.scene: unknown scene '" + config.scene + "'");
    return w;
}

/// Advance objects by velocity * dt; agents are static during an episode.
inline WorldState step(const WorldState& world, double dt_s) {
    if (dt_s < 0.0) throw DomainError("step: negative dt");
    WorldState out = world;
    out.time_s += dt_s;
    for (auto& o : out.objects) o.center = o.center + dt_s * o.velocity;
    return out;
}

/// Snapshot of the world `age_s` seconds ago (linear motion rewound).
inline WorldState rewound(const WorldState& world, double age_s) {
    WorldState out = world;
    out.time_s -= age_s;
    for (auto& o : out.objects) o.center = o.center - age_s * o.velocity;
    return out;
}

/// Objects within sensor range whose center ray from the agent is not
/// interrupted by any other object's footprint.
inline std::vector<ObjectBox> visible_objects(const AgentState& agent, const WorldState& world) {
    std::vector<ObjectBox> out;
    const Vec2 eye{agent.pose.x, agent.pose.y};
    for (const auto& obj : world.objects) {
        const Vec2 d = obj.center - eye;
        if (dot(d, d) > agent.sensor_range_m * agent.sensor_range_m) continue;
        bool blocked = false;
        for (const auto& other : world.objects) {
            if (other.id == obj.id) continue;
            if (segment_crosses_rect(eye, obj.center, other.center, other.length, other.width,
                                     other.yaw)) {
                blocked = true;
                break;
            }
        }
        if (!blocked) out.push_back(obj);
    }
    std::sort(out.begin(), out.end(), [](const ObjectBox& a, const ObjectBox& b) { return a.id < b.id; });
    return out;
}

/// Seeded Gaussian perturbation of position and heading.
inline Pose apply_localization_noise(const Pose& pose, double std_pos_m, double std_yaw_rad,
                                     Rng& rng) {
    if (std_pos_m < 0.0 || std_yaw_rad < 0.0)
        throw DomainError("apply_localization_noise: negative std");
    Pose out = pose;
    out.x += rng.normal(0.0, std_pos_m);
    out.y += rng.normal(0.0, std_pos_m);
    out.yaw += rng.normal(0.0, std_yaw_rad);
    return out;
}

// ---------------------------------------------------------------------------
// Line-oriented text serialization for golden tests
// ---------------------------------------------------------------------------

inline void write_world_text(const WorldState& w, std::ostream& os) {
    char buf[512];
    os << "iosicp-world v1\n";
    std::snprintf(buf, sizeof buf, "time %.17g\ncycle %.17g\nseed %llu\n", w.time_s, w.cycle_s,
                  static_cast<unsigned long long>(w.rng_seed));
    os << buf;
    os << "agents " << w.agents.size() << "\n";
    for (const auto& a : w.agents) {
        std::snprintf(buf, sizeof buf, "agent %d %.17g %.17g %.17g %.17g %d %.17g %.17g\n", a.id,
                      a.pose.x, a.pose.y, a.pose.yaw, a.sensor_range_m, a.is_ego ? 1 : 0,
                      a.bandwidth_hz, a.tx_power_dbm);
        os << buf;
    }
    os << "objects " << w.objects.size() << "\n";
    for (const auto& o : w.objects) {
        std::snprintf(buf, sizeof buf, "object %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      o.id, o.center.x, o.center.y, o.length, o.width, o.yaw, o.velocity.x,
                      o.velocity.y);
        os << buf;
    }
}

inline std::string world_to_text(const WorldState& w) {
    std::ostringstream ss;
    write_world_text(w, ss);
    return ss.str();
}

inline WorldState read_world_text(std::istream& is) {
    WorldState w;
    std::string tag;
    std::string version;
    is >> tag >> version;
    if (tag != "iosicp-world" || version != "v1") throw ParseError("world: bad header");
    unsigned long long seed = 0;
    std::size_t n = 0;
    is >> tag >> w.time_s >> tag >> w.cycle_s >> tag >> seed >> tag >> n;
    if (!is) throw ParseError("world: truncated preamble");
    w.rng_seed = seed;
    w.agents.resize(n);
    for (auto& a : w.agents) {
        int ego = 0;
        is >> tag >> a.id >> a.pose.x >> a.pose.y >> a.pose.yaw >> a.sensor_range_m >> ego >>
            a.bandwidth_hz >> a.tx_power_dbm;
        if (!is || tag != "agent") throw ParseError("world: bad agent line");
        a.is_ego = ego != 0;
    }
    is >> tag >> n;
    w.objects.resize(n);
    for (auto& o : w.objects) {
        is >> tag >> o.id >> o.center.x >> o.center.y >> o.length >> o.width >> o.yaw >>
            o.velocity.x >> o.velocity.y;
        if (!is || tag != "object") throw ParseError("world: bad object line");
    }
    return w;
}

}  // namespace iosicp
