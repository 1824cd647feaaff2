#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "iosicp/channel.hpp"
#include "iosicp/detect.hpp"
#include "iosicp/encoder.hpp"
#include "iosicp/errors.hpp"
#include "iosicp/grid.hpp"
#include "iosicp/hpha.hpp"
#include "iosicp/rng.hpp"
#include "iosicp/scenario.hpp"
#include "iosicp/selection.hpp"

namespace iosicp {

inline const std::vector<double>& eval_thresholds() {
    static const std::vector<double> t{0.3, 0.5, 0.7};
    return t;
}

struct RunConfig {
    ScenarioConfig scenario;
    bool hpha_on = true;
    bool selection_on = true;
    bool single_agent = false;  // ego perceives alone; packets are not built
    int replicates = 1;
    std::uint64_t base_seed = 1;
    std::string run_id = "run";
    double sweep_value = 0.0;
    // Forced total latency for every packet sent by `forced_sender_id`.
    int forced_sender_id = -1;
    double forced_latency_s = -1.0;
    // Optional parameter-file overrides: "gnn.default" (46 values) replaces
    // the selection network, "sta.default" the short-term attention MLP.
    ParamSet params;

    void validate() const {
        if (replicates < 1) throw ConfigError("run.replicates: must be >= 1");
        scenario.validate();
    }

    GnnParams gnn_params() const {
        const auto it = params.find("gnn.default");
        if (it == params.end()) return gnn_default_params();
        return GnnParams::from_flat(it->second);
    }

    StaParams sta_params(int channels) const {
        const auto it = params.find("sta.default");
        if (it == params.end()) return StaParams::seeded_default(channels);
        return StaParams::from_flat(channels, it->second);
    }
};

struct ResultRow {
    std::string run_id;
    std::uint64_t seed = 0;
    double sweep_value = 0.0;
    int agent_id = 0;
    double iou_threshold = 0.0;
    ApResult ap;
    bool has_visible = false;
    bool has_occluded = false;
    double recall_visible = 0.0;
    double recall_occluded = 0.0;
    double mean_latency_s = 0.0;
    int collab_count = 0;
};

// ---------------------------------------------------------------------------
// Single episode
// ---------------------------------------------------------------------------

namespace detail {

struct PerceptionOutput {
    DetectionSet dets_world;
    double mean_latency_s = 0.0;
    int collab_count = 0;
};

inline DetectionSet to_world_frame(const DetectionSet& local, const Pose& pose) {
    DetectionSet out = local;
    for (auto& d : out) {
        const Vec2 p = local_to_world(pose, {d.box.cx, d.box.cy});
        d.box.cx = p.x;
        d.box.cy = p.y;
        d.box.yaw += pose.yaw;
    }
    sort_detections(out);
    return out;
}

inline FeatureGrid mean_fusion(const FeatureGrid& ego,
                               const std::vector<const FeatureGrid*>& others) {
    FeatureGrid out = ego;
    if (others.empty()) return out;
    std::vector<double> acc(ego.data.size());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = ego.data[i];
    for (const auto* g : others) {
        if (!g->same_shape(ego)) throw ShapeError("mean_fusion: shape mismatch");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g->data[i];
    }
    const double inv = 1.0 / (1.0 + static_cast<double>(others.size()));
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.data[i] = static_cast<float>(acc[i] * inv);
    return out;
}

/// Full perception pass for one ego: stale packets, warp, selection, fusion,
/// decode. Deterministic for (config, world, ego).
inline PerceptionOutput perceive(const RunConfig& cfg, const WorldState& world,
                                 const AgentState& ego, std::uint64_t seed) {
    const GridSpec spec = GridSpec::from_config(cfg.scenario);
    const FeatureGrid f_ego = encode(ego, world, spec);

    struct Neighbor {
        int id;
        LatencyBreakdown latency;
        FeatureGrid warped;
        SparseMap map;
    };
    // A scenario-designated adversary (highest non-ego id) always sends stale
    // data; sweeps can force one specific sender on top of that.
    int adversary_id = -1;
    if (cfg.scenario.adversarial_latency_s >= 0.0)
        for (const auto& a : world.agents)
            if (!a.is_ego && a.id > adversary_id) adversary_id = a.id;

    std::vector<Neighbor> neighbors;
    if (!cfg.single_agent) {
        for (const auto& other : world.agents) {
            if (other.id == ego.id) continue;
            Neighbor nb;
            nb.id = other.id;
            if (other.id == cfg.forced_sender_id && cfg.forced_latency_s >= 0.0) {
                nb.latency = total_latency_s(0.0, cfg.forced_latency_s, 0.0);
            } else if (other.id == adversary_id) {
                nb.latency = total_latency_s(0.0, cfg.scenario.adversarial_latency_s, 0.0);
            } else {
                Rng rng = Rng::stream(seed, "latency", ego.id, other.id);
                const double t_c =
                    rng.uniform(cfg.scenario.compute_s_min, cfg.scenario.compute_s_max);
                const double dt = rng.uniform(cfg.scenario.sensor_offset_s_min,
                                              cfg.scenario.sensor_offset_s_max);
                const double noise_dbm =
                    rng.uniform(cfg.scenario.noise_dbm_min, cfg.scenario.noise_dbm_max);
                RadioLink link;
                link.bandwidth_hz = other.bandwidth_hz;
                link.tx_power_dbm = other.tx_power_dbm;
                link.noise_power_dbm = noise_dbm;
                link.distance_m = std::max(
                    1.0, std::hypot(other.pose.x - ego.pose.x, other.pose.y - ego.pose.y));
                link.carrier_ghz = cfg.scenario.carrier_ghz;
                double bits =
                    static_cast<double>(payload_bits(spec.channels, spec.height, spec.width));
                if (cfg.scenario.sparse_payload) {
                    // Size the packet from the sender's current sparse map.
                    const FeatureGrid now = encode(other, world, spec);
                    const int occupied =
                        extract_sparse_map(now, cfg.scenario.sparse_threshold).count_ones();
                    bits = static_cast<double>(payload_bits_sparse(
                        spec.channels, spec.height, spec.width, occupied));
                }
                const double t_n = transmission_time_s(bits, link);
                nb.latency = total_latency_s(t_c, t_n, dt);
            }
            SharePacket pkt = capture_stale(world, other, nb.latency, spec);
            if (cfg.scenario.loc_noise_pos_m > 0.0 || cfg.scenario.loc_noise_yaw_rad > 0.0) {
                Rng rng = Rng::stream(seed, "loc_noise", ego.id, other.id);
                pkt.sender_pose =
                    apply_localization_noise(pkt.sender_pose, cfg.scenario.loc_noise_pos_m,
                                             cfg.scenario.loc_noise_yaw_rad, rng);
            }
            nb.warped = warp_to_ego(pkt, ego.pose, spec);
            nb.map = extract_sparse_map(nb.warped, cfg.scenario.sparse_threshold);
            neighbors.push_back(std::move(nb));
        }
    }
    std::sort(neighbors.begin(), neighbors.end(),
              [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });

    const SparseMap m_ego = extract_sparse_map(f_ego, cfg.scenario.sparse_threshold);
    EnhancedWeights weights;
    std::vector<int> selected;
    if (cfg.selection_on) {
        std::vector<CollabNode> nodes;
        CollabNode ego_node;
        ego_node.agent_id = ego.id;
        ego_node.map = m_ego;
        ego_node.latency_s = 0.0;
        ego_node.occupied_fraction = occupied_fraction(m_ego);
        ego_node.overlap_with_ego = overlap_with_ego(m_ego, m_ego);
        ego_node.is_ego = true;
        nodes.push_back(std::move(ego_node));
        for (const auto& nb : neighbors) {
            CollabNode n;
            n.agent_id = nb.id;
            n.map = nb.map;
            n.latency_s = nb.latency.total_s;
            n.occupied_fraction = occupied_fraction(nb.map);
            n.overlap_with_ego = overlap_with_ego(nb.map, m_ego);
            nodes.push_back(std::move(n));
        }
        weights = gnn_enhanced_weights(nodes, cfg.gnn_params());
        selected = select_collaborators(weights);
    } else {
        for (const auto& nb : neighbors) {
            weights.by_agent[nb.id] = 1.0;
            selected.push_back(nb.id);
        }
    }

    double latency_acc = 0.0;
    for (const auto& nb : neighbors)
        if (std::find(selected.begin(), selected.end(), nb.id) != selected.end())
            latency_acc += nb.latency.total_s;

    FeatureGrid fused;
    if (cfg.hpha_on) {
        std::vector<FeatureGrid> enhanced;
        std::vector<std::pair<int, const FeatureGrid*>> sources;
        enhanced.reserve(selected.size());
        for (const auto& nb : neighbors) {
            if (std::find(selected.begin(), selected.end(), nb.id) == selected.end()) continue;
            if (cfg.selection_on)
                enhanced.push_back(enhance(nb.warped, nb.map, weights.by_agent.at(nb.id)));
            else
                enhanced.push_back(nb.warped);
        }
        std::size_t k = 0;
        for (const auto& nb : neighbors) {
            if (std::find(selected.begin(), selected.end(), nb.id) == selected.end()) continue;
            sources.emplace_back(nb.id, &enhanced[k++]);
        }
        const std::vector<FeatureGrid> history =
            history_frames(ego, world, spec, cfg.scenario.history_frames);
        HphaParams params;
        params.scales = HphaParams::scales_for(cfg.scenario.num_scales);
        params.sta = cfg.sta_params(spec.channels * (cfg.scenario.history_frames + 1));
        const FuseResult result = fuse(f_ego, ego.id, sources, history, params);
        // Instrumentation: a pruned agent's grid must never enter the blend.
        for (int id : result.sources_used)
            if (id != ego.id &&
                std::find(selected.begin(), selected.end(), id) == selected.end())
                throw Error("fusion read a pruned agent's grid");
        fused = result.fused;
    } else {
        std::vector<const FeatureGrid*> others;
        for (const auto& nb : neighbors)
            if (std::find(selected.begin(), selected.end(), nb.id) != selected.end())
                others.push_back(&nb.warped);
        fused = mean_fusion(f_ego, others);
    }

    PerceptionOutput out;
    const DetectionSet local =
        decode(fused, cfg.scenario.decode_threshold, cfg.scenario.grid_channels);
    out.dets_world = to_world_frame(local, ego.pose);
    out.collab_count = static_cast<int>(selected.size());
    out.mean_latency_s = selected.empty() ? 0.0 : latency_acc / selected.size();
    return out;
}

}  // namespace detail

/// One full pipeline pass per agent. Rows are emitted per (agent, threshold)
/// in ascending order and are a pure function of (config, seed).
inline std::vector<ResultRow> run_episode(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const WorldState world = generate_world(cfg.scenario, seed);
    const GridSpec spec = GridSpec::from_config(cfg.scenario);

    std::map<int, DetectionSet> dets;
    std::map<int, detail::PerceptionOutput> outputs;
    for (const auto& agent : world.agents) {
        detail::PerceptionOutput po = detail::perceive(cfg, world, agent, seed);
        dets[agent.id] = po.dets_world;
        outputs[agent.id] = std::move(po);
    }

    std::vector<ResultRow> rows;
    for (const EvalEntry& e : evaluate(world, dets, eval_thresholds(), spec)) {
        ResultRow r;
        r.run_id = cfg.run_id;
        r.seed = seed;
        r.sweep_value = cfg.sweep_value;
        r.agent_id = e.agent_id;
        r.iou_threshold = e.iou_threshold;
        r.ap = e.ap;
        r.has_visible = e.has_visible;
        r.has_occluded = e.has_occluded;
        r.recall_visible = e.recall_visible;
        r.recall_occluded = e.recall_occluded;
        r.mean_latency_s = outputs.at(e.agent_id).mean_latency_s;
        r.collab_count = outputs.at(e.agent_id).collab_count;
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Replicate batches (parallel, deterministic gather order)
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fn>
inline std::vector<std::vector<ResultRow>> parallel_episodes(int count, Fn&& fn) {
    std::vector<std::vector<ResultRow>> slots(count);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(count));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) slots[i] = fn(i);
        return slots;
    }
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < workers; ++t)
        threads.emplace_back([&, t]() {
            try {
                for (int i = static_cast<int>(t); i < count; i += static_cast<int>(workers))
                    slots[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& th : threads) th.join();
    if (err) std::rethrow_exception(err);
    return slots;
}

inline std::uint64_t replicate_seed(std::uint64_t base, int replicate) {
    return Rng::stream(base, "replicate", replicate).next_u64();
}

}  // namespace detail

/// `replicates` episodes of one configuration; replicate seeds depend only on
/// (base seed, index) so different sweep values share identical worlds.
inline std::vector<ResultRow> run_batch(const RunConfig& cfg) {
    cfg.validate();
    auto slots = detail::parallel_episodes(cfg.replicates, [&](int i) {
        return run_episode(cfg, detail::replicate_seed(cfg.base_seed, i));
    });
    std::vector<ResultRow> rows;
    for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
    return rows;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Designated collaborator (lowest non-ego id) latency forced per value.
inline std::vector<ResultRow> sweep_latency(RunConfig cfg, const std::vector<double>& values_s) {
    if (values_s.empty()) throw ConfigError("sweep.latency: empty value list");
    for (double v : values_s)
        if (v < 0.0) throw DomainError("sweep.latency: negative latency");
    cfg.validate();
    const WorldState probe = generate_world(cfg.scenario, detail::replicate_seed(cfg.base_seed, 0));
    int designated = -1;
    for (const auto& a : probe.agents)
        if (!a.is_ego && (designated < 0 || a.id < designated)) designated = a.id;
    if (designated < 0) throw ConfigError("sweep.latency: scenario has no collaborator");

    std::vector<ResultRow> rows;
    for (double v : values_s) {
        RunConfig c = cfg;
        c.run_id = "sweep-latency";
        c.sweep_value = v;
        c.forced_sender_id = designated;
        c.forced_latency_s = v;
        auto batch = run_batch(c);
        rows.insert(rows.end(), batch.begin(), batch.end());
    }
    return rows;
}

/// AP per ground-truth-distance bucket from the flagged ego. Detections and
/// ground truths are both restricted to the bucket ring around the ego.
inline std::vector<ResultRow> sweep_distance(RunConfig cfg, const std::vector<double>& buckets_m,
                                             double bucket_half_width_m = 5.0) {
    if (buckets_m.empty()) throw ConfigError("sweep.distance: empty bucket list");
    cfg.validate();
    cfg.run_id = "sweep-distance";
    std::vector<ResultRow> rows;
    auto slots = detail::parallel_episodes(cfg.replicates, [&](int i) {
        const std::uint64_t seed = detail::replicate_seed(cfg.base_seed, i);
        const WorldState world = generate_world(cfg.scenario, seed);
        const AgentState& ego = world.ego();
        detail::PerceptionOutput po = detail::perceive(cfg, world, ego, seed);

        std::vector<ResultRow> out;
        for (double bucket : buckets_m) {
            const double lo = bucket - bucket_half_width_m;
            const double hi = bucket + bucket_half_width_m;
            auto in_ring = [&](double x, double y) {
                const double d = std::hypot(x - ego.pose.x, y - ego.pose.y);
                return d >= lo && d < hi;
            };
            std::vector<OrientedBox> gts;
            std::vector<bool> vis_flags;
            const auto vis = visible_objects(ego, world);
            for (const auto& obj : world.objects) {
                if (!in_ring(obj.center.x, obj.center.y)) continue;
                gts.push_back(OrientedBox::of(obj));
                bool v = false;
                for (const auto& vo : vis) v |= vo.id == obj.id;
                vis_flags.push_back(v);
            }
            DetectionSet ring_dets;
            for (const auto& d : po.dets_world)
                if (in_ring(d.box.cx, d.box.cy)) ring_dets.push_back(d);

            for (double thr : eval_thresholds()) {
                ResultRow r;
                r.run_id = cfg.run_id;
                r.seed = seed;
                r.sweep_value = bucket;
                r.agent_id = ego.id;
                r.iou_threshold = thr;
                r.ap = average_precision(ring_dets, gts, thr);
                if (gts.empty() && ring_dets.empty()) r.ap.status = ApResult::Status::Skipped;
                const MatchResult m = match_detections(ring_dets, gts, thr);
                int vt = 0, vh = 0, ot = 0, oh = 0;
                for (std::size_t g = 0; g < gts.size(); ++g) {
                    if (vis_flags[g]) {
                        ++vt;
                        vh += m.gt_matched[g] ? 1 : 0;
                    } else {
                        ++ot;
                        oh += m.gt_matched[g] ? 1 : 0;
                    }
                }
                r.has_visible = vt > 0;
                r.has_occluded = ot > 0;
                r.recall_visible = vt ? static_cast<double>(vh) / vt : 0.0;
                r.recall_occluded = ot ? static_cast<double>(oh) / ot : 0.0;
                r.mean_latency_s = po.mean_latency_s;
                r.collab_count = po.collab_count;
                out.push_back(std::move(r));
            }
        }
        return out;
    });
    for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
    return rows;
}

/// Localization noise applied to collaborator poses before warping.
inline std::vector<ResultRow> sweep_noise(RunConfig cfg, const std::vector<double>& stds) {
    if (stds.empty()) throw ConfigError("sweep.noise: empty std list");
    cfg.validate();
    std::vector<ResultRow> rows;
    for (double std_v : stds) {
        if (std_v < 0.0) throw DomainError("sweep.noise: negative std");
        RunConfig c = cfg;
        c.run_id = "sweep-noise";
        c.sweep_value = std_v;
        c.scenario.loc_noise_pos_m = std_v;
        c.scenario.loc_noise_yaw_rad = std_v;
        auto batch = run_batch(c);
        rows.insert(rows.end(), batch.begin(), batch.end());
    }
    return rows;
}

/// Component ablation: baseline mean fusion, +HPHA, +HPHA+selection, all on
/// identical worlds per replicate.
inline std::vector<ResultRow> ablate(RunConfig cfg) {
    cfg.validate();
    struct Variant {
        const char* name;
        bool hpha;
        bool selection;
        double index;
    };
    const Variant variants[] = {{"ablate/baseline", false, false, 0.0},
                                {"ablate/hpha", true, false, 1.0},
                                {"ablate/hpha+selection", true, true, 2.0}};
    std::vector<ResultRow> rows;
    for (const auto& v : variants) {
        RunConfig c = cfg;
        c.run_id = v.name;
        c.sweep_value = v.index;
        c.hpha_on = v.hpha;
        c.selection_on = v.selection;
        auto batch = run_batch(c);
        rows.insert(rows.end(), batch.begin(), batch.end());
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline const char* kCsvHeader =
    "run_id,seed,sweep_value,agent_id,iou_threshold,ap,recall_visible,recall_occluded,"
    "mean_latency_s,collab_count";

inline std::string rows_to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << "# iosicp-results v1\n" << kCsvHeader << "\n";
    char buf[128];
    for (const auto& r : rows) {
        os << r.run_id << ',' << r.seed << ',';
        std::snprintf(buf, sizeof buf, "%.9g", r.sweep_value);
        os << buf << ',' << r.agent_id << ',';
        std::snprintf(buf, sizeof buf, "%.9g", r.iou_threshold);
        os << buf << ',';
        if (r.ap.status == ApResult::Status::Skipped)
            os << "skipped";
        else {
            std::snprintf(buf, sizeof buf, "%.9g", r.ap.ap);
            os << buf;
        }
        os << ',';
        if (r.has_visible) {
            std::snprintf(buf, sizeof buf, "%.9g", r.recall_visible);
            os << buf;
        } else
            os << "na";
        os << ',';
        if (r.has_occluded) {
            std::snprintf(buf, sizeof buf, "%.9g", r.recall_occluded);
            os << buf;
        } else
            os << "na";
        os << ',';
        std::snprintf(buf, sizeof buf, "%.9g", r.mean_latency_s);
        os << buf << ',' << r.collab_count << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// SVG sweep plots
// ---------------------------------------------------------------------------

namespace detail {

struct CsvPoint {
    double sweep_value;
    double threshold;
    double ap;
};

inline std::vector<CsvPoint> parse_results_csv(const std::string& text) {
    std::vector<CsvPoint> pts;
    std::istringstream is(text);
    std::string line;
    int row = 0;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != kCsvHeader)
                throw ParseError("csv row " + std::to_string(row) + ": unexpected header");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 10)
            throw ParseError("csv row " + std::to_string(row) + ": expected 10 fields, got " +
                             std::to_string(fields.size()));
        if (fields[5] == "skipped") continue;
        try {
            CsvPoint p{std::stod(fields[2]), std::stod(fields[4]), std::stod(fields[5])};
            pts.push_back(p);
        } catch (const std::exception&) {
            throw ParseError("csv row " + std::to_string(row) + ": bad numeric field");
        }
    }
    if (!header_seen) throw ParseError("csv row 0: missing header");
    return pts;
}

inline std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string render_svg_plot(const std::string& title, const std::string& x_label,
                                   const std::vector<std::pair<double, double>>& points) {
    const double width = 640, height = 480;
    const double l = 70, r = 610, t = 40, b = 430;
    double xmin = points.front().first, xmax = points.front().first;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.first);
        xmax = std::max(xmax, p.first);
    }
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    auto sx = [&](double x) { return l + (x - xmin) / (xmax - xmin) * (r - l); };
    auto sy = [&](double y) { return b - y * (b - t); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 640 480\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    os << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
          "font-size=\"14\">"
       << title << "</text>\n";
    // axes
    os << "<line x1=\"" << l << "\" y1=\"" << b << "\" x2=\"" << r << "\" y2=\"" << b
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << l << "\" y1=\"" << t << "\" x2=\"" << l << "\" y2=\"" << b
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = 0.25 * i;
        os << "<line x1=\"" << l - 4 << "\" y1=\"" << fmt_num(sy(y)) << "\" x2=\"" << l
           << "\" y2=\"" << fmt_num(sy(y)) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << l - 8 << "\" y=\"" << fmt_num(sy(y) + 4)
           << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" << fmt_num(y)
           << "</text>\n";
    }
    for (const auto& p : points) {
        os << "<line x1=\"" << fmt_num(sx(p.first)) << "\" y1=\"" << b << "\" x2=\""
           << fmt_num(sx(p.first)) << "\" y2=\"" << b + 4 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fmt_num(sx(p.first)) << "\" y=\"" << b + 18
           << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
           << fmt_num(p.first) << "</text>\n";
    }
    os << "<text x=\"340\" y=\"460\" text-anchor=\"middle\" font-family=\"monospace\" "
          "font-size=\"12\">"
       << x_label << "</text>\n";
    os << "<text x=\"20\" y=\"235\" text-anchor=\"middle\" font-family=\"monospace\" "
          "font-size=\"12\" transform=\"rotate(-90 20 235)\">mean AP</text>\n";
    if (points.size() > 1) {
        os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
        for (const auto& p : points)
            os << fmt_num(sx(p.first)) << ',' << fmt_num(sy(p.second)) << ' ';
        os << "\"/>\n";
    }
    for (const auto& p : points)
        os << "<circle cx=\"" << fmt_num(sx(p.first)) << "\" cy=\"" << fmt_num(sy(p.second))
           << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace detail

/// One SVG line plot per IoU threshold: x = sweep value, y = mean AP over all
/// non-skipped rows. Returns the generated file paths in deterministic order.
inline std::vector<std::string> emit_plots(const std::string& csv_text,
                                           const std::string& out_dir,
                                           const std::string& base_name,
                                           const std::string& x_label) {
    const auto pts = detail::parse_results_csv(csv_text);
    std::vector<std::string> files;
    std::filesystem::create_directories(out_dir);
    for (double thr : eval_thresholds()) {
        std::map<double, std::pair<double, int>> acc;  // value -> (sum, count)
        for (const auto& p : pts) {
            if (p.threshold != thr) continue;
            auto& a = acc[p.sweep_value];
            a.first += p.ap;
            a.second += 1;
        }
        if (acc.empty()) continue;
        std::vector<std::pair<double, double>> series;
        for (const auto& [v, sc] : acc) series.emplace_back(v, sc.first / sc.second);
        char thr_buf[16];
        std::snprintf(thr_buf, sizeof thr_buf, "%.2g", thr);
        const std::string path =
            out_dir + "/" + base_name + "_iou" + thr_buf + ".svg";
        const std::string svg = detail::render_svg_plot(
            base_name + " (IoU " + thr_buf + ")", x_label, series);
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("emit_plots: cannot write " + path);
        os << svg;
        files.push_back(path);
    }
    return files;
}

// ---------------------------------------------------------------------------
// Self test: miniature versions of every protocol, deterministic outputs
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os << content;
}

/// Runs a small battery of every experiment protocol and writes CSV + SVG
/// outputs; two runs with the same seed must produce byte-identical files.
inline std::vector<std::string> selftest(const std::string& out_dir, std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> files;

    auto emit_csv = [&](const std::string& name, const std::vector<ResultRow>& rows) {
        const std::string path = out_dir + "/" + name + ".csv";
        write_text_file(path, rows_to_csv(rows));
        files.push_back(path);
        return rows_to_csv(rows);
    };

    {
        RunConfig cfg;
        cfg.scenario = ScenarioConfig::for_scene("occlusion");
        cfg.run_id = "occlusion";
        cfg.replicates = 5;
        cfg.base_seed = seed;
        emit_csv("occlusion", run_batch(cfg));
    }
    {
        RunConfig cfg;
        cfg.scenario = ScenarioConfig::for_scene("latency_probe");
        cfg.replicates = 3;
        cfg.base_seed = seed;
        const std::string csv = emit_csv("latency", sweep_latency(cfg, {0.0, 0.2, 0.4}));
        for (auto& f : emit_plots(csv, out_dir, "latency", "forced latency [s]"))
            files.push_back(f);
    }
    {
        RunConfig cfg;
        cfg.scenario = ScenarioConfig::for_scene("sparse_highway");
        cfg.replicates = 3;
        cfg.base_seed = seed;
        const std::string csv =
            emit_csv("distance", sweep_distance(cfg, {10, 20, 30, 40, 50, 60}));
        for (auto& f : emit_plots(csv, out_dir, "distance", "object distance [m]"))
            files.push_back(f);
    }
    {
        RunConfig cfg;
        cfg.scenario = ScenarioConfig::for_scene("occlusion");
        cfg.replicates = 3;
        cfg.base_seed = seed;
        const std::string csv = emit_csv("noise", sweep_noise(cfg, {0.0, 0.2}));
        for (auto& f : emit_plots(csv, out_dir, "noise", "localization noise std"))
            files.push_back(f);
    }
    {
        RunConfig cfg;
        cfg.scenario = ScenarioConfig::for_scene("ablation");
        cfg.replicates = 3;
        cfg.base_seed = seed;
        emit_csv("ablate", ablate(cfg));
    }
    return files;
}

}  // namespace iosicp
