// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerance and its runtime budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "iosicp/harness.hpp"
#include "oracle_helpers.hpp"

using namespace iosicp;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, double elapsed_s, double limit_s,
            const std::string& detail) {
    const bool in_budget = elapsed_s < limit_s;
    if (!ok || !in_budget) ++failures;
    std::printf("[%s] %-24s %6.2f s (limit %g s)%s%s\n", ok && in_budget ? "PASS" : "FAIL",
                name.c_str(), elapsed_s, limit_s, detail.empty() ? "" : "  -- ",
                detail.c_str());
    std::fflush(stdout);
}

void run_criterion(const std::string& name, double limit_s,
                   const std::function<bool(std::string&)>& body) {
    std::string detail;
    const auto t0 = Clock::now();
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
        ok = false;
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    report(name, ok, elapsed, limit_s, detail);
}

FeatureGrid random_grid(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    FeatureGrid g(c, h, w, 1.0f, 0.0f, 0.0f);
    for (auto& v : g.data) v = static_cast<float>(rng.uniform(lo, hi));
    return g;
}

double mean_ap(const std::vector<ResultRow>& rows, const std::string& run, double value,
               double thr, int agent = 0) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.run_id == run && r.sweep_value == value && r.iou_threshold == thr &&
            r.agent_id == agent && r.ap.status == ApResult::Status::Ok) {
            acc += r.ap.ap;
            ++n;
        }
    return n ? acc / n : std::nan("");
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

char fmt_buf[256];
std::string fmt(const char* f, double a, double b) {
    std::snprintf(fmt_buf, sizeof fmt_buf, f, a, b);
    return fmt_buf;
}

// --------------------------------------------------------------------------

bool channel_exactness(std::string& detail) {
    bool ok = std::abs(path_loss_db(100.0, 5.9) - 87.417) <= 0.001;
    RadioLink unit;
    unit.bandwidth_hz = 1e7;
    unit.tx_power_dbm = 23.0;
    unit.noise_power_dbm = -5.0;
    unit.distance_m = 1.0;
    unit.carrier_ghz = 1.0;  // PL = 28 exactly, so SNR = 0 dB
    ok = ok && transmission_time_s(1e7, unit) == 1.0;
    Rng rng(1);
    for (int i = 0; i < 1000 && ok; ++i) {
        const double a = rng.uniform(0, 1), b = rng.uniform(0, 1), c = rng.uniform(0, 1);
        ok = total_latency_s(a, b, c).total_s == a + b + c;
    }
    detail = fmt("PL(100,5.9)=%.4f", path_loss_db(100.0, 5.9), 0.0);
    return ok;
}

bool attention_normalization(std::string& detail) {
    Rng rng(20240801);
    const std::vector<double> scales{1.0, 0.5, 0.25};
    double worst = 0.0;
    for (int instance = 0; instance < 1000; ++instance) {
        const int c = 1 + static_cast<int>(rng.uniform_index(8));
        const int h = 1 + static_cast<int>(rng.uniform_index(12));
        const int w = 1 + static_cast<int>(rng.uniform_index(12));
        const int n = static_cast<int>(rng.uniform_index(4));
        const FeatureGrid ego = random_grid(c, h, w, rng, -2, 2);
        std::vector<FeatureGrid> collabs;
        for (int i = 0; i < n; ++i) collabs.push_back(random_grid(c, h, w, rng, -2, 2));

        std::vector<std::pair<int, const FeatureGrid*>> fwd, rev;
        for (int i = 0; i < n; ++i) fwd.emplace_back(i + 1, &collabs[i]);
        for (int i = n - 1; i >= 0; --i) rev.emplace_back(i + 1, &collabs[i]);

        const MultiscaleResult a = multiscale_attention(ego, 0, fwd, scales);
        for (const auto& sw : a.weights.scales)
            for (int p = 0; p < sw.height * sw.width; ++p) {
                double sum = 0.0;
                for (const auto& src : sw.per_source) sum += src[p];
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        const MultiscaleResult b = multiscale_attention(ego, 0, rev, scales);
        for (std::size_t s = 0; s < a.aggregates.size(); ++s)
            if (a.aggregates[s].data != b.aggregates[s].data) return false;
    }
    detail = fmt("max |sum-1| = %.2e", worst, 0.0);
    return worst <= 1e-6;
}

bool gradient_checks(std::string& detail) {
    constexpr double kStep = 1e-4;
    Rng rng(777);
    const std::vector<double> scales{1.0, 0.5, 0.25};
    double worst_att = 0.0;
    for (int instance = 0; instance < 100; ++instance) {
        const int c = 1 + static_cast<int>(rng.uniform_index(8));
        const int h = 2 + static_cast<int>(rng.uniform_index(7));
        const int w = 2 + static_cast<int>(rng.uniform_index(7));
        const int n = static_cast<int>(rng.uniform_index(3));
        FeatureGrid ego = random_grid(c, h, w, rng);
        std::vector<FeatureGrid> collabs;
        for (int i = 0; i < n; ++i) collabs.push_back(random_grid(c, h, w, rng));
        DTensor up(c, h, w);
        for (auto& v : up.v) v = rng.uniform(-1, 1);

        auto sources = [&]() {
            std::vector<std::pair<int, const FeatureGrid*>> s;
            for (int i = 0; i < n; ++i) s.emplace_back(i + 1, &collabs[i]);
            return s;
        };
        const AttentionGradients grad = attention_backward(ego, 0, sources(), scales, up);
        const auto loss = [&]() { return attention_loss(ego, 0, sources(), scales, up); };
        iosicp_test::ErrorTracker t;
        for (std::size_t i = 0; i < ego.data.size(); ++i)
            t.add(grad.d_ego.v[i], iosicp_test::fd_grid(ego, i, kStep, loss));
        for (int s = 0; s < n; ++s)
            for (std::size_t i = 0; i < collabs[s].data.size(); ++i)
                t.add(grad.d_sources[s].v[i], iosicp_test::fd_grid(collabs[s], i, kStep, loss));
        worst_att = std::max(worst_att, t.relative());
    }

    double worst_sta = 0.0;
    int done = 0;
    while (done < 100) {
        const int c = 4 * (1 + static_cast<int>(rng.uniform_index(2)));
        const int h = 2 + static_cast<int>(rng.uniform_index(7));
        const int w = 2 + static_cast<int>(rng.uniform_index(7));
        FeatureGrid grid = random_grid(c, h, w, rng);
        if (!iosicp_test::max_pool_well_separated(grid, 1e-2)) continue;
        ++done;
        StaParams params = StaParams::zeros(c);
        for (auto& v : params.w1) v = rng.uniform(-0.5, 0.5);
        for (auto& v : params.w2) v = rng.uniform(-0.5, 0.5);
        DTensor up(c, h, w);
        for (auto& v : up.v) v = rng.uniform(-1, 1);

        const ShortTermGradients grad = short_term_backward(grid, params, up);
        const auto loss = [&]() { return short_term_loss(grid, params, up); };
        iosicp_test::ErrorTracker t;
        for (std::size_t i = 0; i < grid.data.size(); ++i)
            t.add(grad.d_input.v[i], iosicp_test::fd_grid(grid, i, kStep, loss));
        for (std::size_t i = 0; i < params.w1.size(); ++i)
            t.add(grad.d_params.w1[i], iosicp_test::fd_param(params.w1[i], kStep, loss));
        for (std::size_t i = 0; i < params.w2.size(); ++i)
            t.add(grad.d_params.w2[i], iosicp_test::fd_param(params.w2[i], kStep, loss));
        worst_sta = std::max(worst_sta, t.relative());
    }
    detail = fmt("rel err: attention %.2e, short-term %.2e", worst_att, worst_sta);
    return worst_att < 1e-4 && worst_sta < 1e-4;
}

bool selection_contract(std::string& detail) {
    Rng rng(55);
    for (int trial = 0; trial < 1000; ++trial) {
        EnhancedWeights w;
        const int n = static_cast<int>(rng.uniform_index(8));
        for (int i = 0; i < n; ++i) w.by_agent[i] = rng.uniform(-1.0, 1.0);
        std::vector<int> oracle;
        for (const auto& [id, v] : w.by_agent)
            if (v > 0.0) oracle.push_back(id);
        if (select_collaborators(w) != oracle) return false;
    }
    // Instrumented fusion: an episode with a pruned adversary must complete
    // (the perceive path throws if a pruned grid reaches the blend) and
    // report only the surviving collaborator.
    RunConfig cfg;
    cfg.scenario = ScenarioConfig::for_scene("ablation");
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        for (const auto& r : run_episode(cfg, seed))
            if (r.agent_id == 0 && r.collab_count != 1) {
                detail = "adversary not pruned";
                return false;
            }
    detail = "filter oracle + instrumented fusion";
    return true;
}

bool masking_exactness(std::string& detail) {
    Rng rng(66);
    for (int trial = 0; trial < 1000; ++trial) {
        const int c = 1 + static_cast<int>(rng.uniform_index(6));
        const int h = 1 + static_cast<int>(rng.uniform_index(10));
        const int w = 1 + static_cast<int>(rng.uniform_index(10));
        const FeatureGrid g = random_grid(c, h, w, rng, -5, 5);
        SparseMap m;
        m.height = h;
        m.width = w;
        m.bits.resize(static_cast<std::size_t>(h) * w);
        for (auto& b : m.bits) b = rng.uniform() < 0.5 ? 1 : 0;
        const FeatureGrid out = enhance(g, m, rng.uniform(-3, 3));
        for (int cc = 0; cc < c; ++cc)
            for (int i = 0; i < h * w; ++i)
                if (!m.bits[i] && out.data[static_cast<std::size_t>(cc) * h * w + i] != 0.0f)
                    return false;
    }
    detail = "1000 random instances exactly zero outside support";
    return true;
}

bool occlusion_recovery(std::string& detail) {
    RunConfig fused;
    fused.scenario = ScenarioConfig::for_scene("occlusion");
    fused.replicates = 50;
    fused.base_seed = 424242;
    RunConfig solo = fused;
    solo.single_agent = true;

    const auto fused_rows = run_batch(fused);
    const auto solo_rows = run_batch(solo);
    double fused_recall = 0.0;
    int n = 0;
    for (const auto& r : fused_rows)
        if (r.agent_id == 0 && r.iou_threshold == 0.3 && r.has_occluded) {
            if (r.mean_latency_s > 0.1) {
                detail = "collaborator not fresh";
                return false;
            }
            fused_recall += r.recall_occluded;
            ++n;
        }
    fused_recall /= n;
    for (const auto& r : solo_rows)
        if (r.agent_id == 0 && r.iou_threshold == 0.3 && r.has_occluded &&
            r.recall_occluded != 0.0) {
            detail = "single-agent recall not exactly zero";
            return false;
        }
    detail = fmt("fused occluded recall %.3f over 50 scenes (single-agent 0)", fused_recall,
                 0.0);
    return fused_recall >= 0.9;
}

bool latency_trend(std::string& detail) {
    RunConfig moving;
    moving.scenario = ScenarioConfig::for_scene("latency_probe");
    moving.replicates = 50;
    moving.base_seed = 31001;
    const auto m = sweep_latency(moving, {0.0, 0.4});
    const double m0 = mean_ap(m, "sweep-latency", 0.0, 0.5);
    const double m4 = mean_ap(m, "sweep-latency", 0.4, 0.5);

    RunConfig still = moving;
    still.scenario.speed_min = still.scenario.speed_max = 0.0;
    const auto s = sweep_latency(still, {0.0, 0.4});
    const double s0 = mean_ap(s, "sweep-latency", 0.0, 0.5);
    const double s4 = mean_ap(s, "sweep-latency", 0.4, 0.5);

    detail = fmt("moving %.3f -> %.3f", m0, m4) + fmt(", static %.3f / %.3f", s0, s4);
    return m4 < m0 && s0 == s4;
}

bool distance_trend(std::string& detail) {
    RunConfig cfg;
    cfg.scenario = ScenarioConfig::for_scene("sparse_highway");
    cfg.replicates = 50;
    cfg.base_seed = 90210;
    const auto rows = sweep_distance(cfg, {10, 20, 30, 40, 50, 60});
    std::string profile;
    double prev = 2.0;
    for (double b : {10., 20., 30., 40., 50., 60.}) {
        const double ap = mean_ap(rows, "sweep-distance", b, 0.5);
        if (std::isnan(ap)) {
            detail = "empty bucket";
            return false;
        }
        profile += fmt("%.0f:%.2f ", b, ap);
        if (ap > prev + 1e-9) {
            detail = profile + "(increase)";
            return false;
        }
        prev = ap;
    }
    detail = profile;
    return true;
}

bool noise_trend(std::string& detail) {
    RunConfig cfg;
    cfg.scenario = ScenarioConfig::for_scene("occlusion");
    cfg.replicates = 50;
    cfg.base_seed = 5150;
    const auto rows = sweep_noise(cfg, {0.0, 0.2});
    const double c03 = mean_ap(rows, "sweep-noise", 0.0, 0.3);
    const double n03 = mean_ap(rows, "sweep-noise", 0.2, 0.3);
    const double c07 = mean_ap(rows, "sweep-noise", 0.0, 0.7);
    const double n07 = mean_ap(rows, "sweep-noise", 0.2, 0.7);
    detail = fmt("drop@0.3 %.3f, drop@0.7 %.3f", c03 - n03, c07 - n07);
    return n07 <= c07 && (c07 - n07) >= (c03 - n03);
}

bool ablation_ordering(std::string& detail) {
    RunConfig cfg;
    cfg.scenario = ScenarioConfig::for_scene("ablation");
    cfg.replicates = 50;
    cfg.base_seed = 60601;
    const auto rows = ablate(cfg);
    const double base = mean_ap(rows, "ablate/baseline", 0.0, 0.5);
    const double hpha = mean_ap(rows, "ablate/hpha", 1.0, 0.5);
    const double full = mean_ap(rows, "ablate/hpha+selection", 2.0, 0.5);
    detail = fmt("baseline %.4f <= +HPHA %.4f", base, hpha) + fmt(" <= +both %.4f", full, 0.0);
    return full >= hpha && hpha >= base;
}

bool determinism(std::string& detail) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "iosicp_acceptance";
    fs::remove_all(base);
    const auto f1 = selftest((base / "a").string(), 2026);
    const auto f2 = selftest((base / "b").string(), 2026);
    if (f1.size() != f2.size()) return false;
    for (std::size_t i = 0; i < f1.size(); ++i)
        if (slurp(f1[i]) != slurp(f2[i])) {
            detail = "mismatch: " + f1[i];
            return false;
        }
    detail = fmt("%g output files byte-identical", static_cast<double>(f1.size()), 0.0);
    return true;
}

}  // namespace

int main() {
    std::printf("iosicp acceptance suite\n");
    run_criterion("channel-exactness", 1.0, channel_exactness);
    run_criterion("attention-normalization", 30.0, attention_normalization);
    run_criterion("gradient-checks", 120.0, gradient_checks);
    run_criterion("selection-contract", 60.0, selection_contract);
    run_criterion("masking-exactness", 60.0, masking_exactness);
    run_criterion("occlusion-recovery", 60.0, occlusion_recovery);
    run_criterion("latency-trend", 120.0, latency_trend);
    run_criterion("distance-trend", 120.0, distance_trend);
    run_criterion("noise-trend", 120.0, noise_trend);
    run_criterion("ablation-ordering", 120.0, ablation_ordering);
    run_criterion("determinism", 60.0, determinism);
    if (failures) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
