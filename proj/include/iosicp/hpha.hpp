#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "iosicp/errors.hpp"
#include "iosicp/grid.hpp"
#include "iosicp/params.hpp"
#include "iosicp/rng.hpp"
#include "iosicp/selection.hpp"

namespace iosicp {

// ---------------------------------------------------------------------------
// Enhancement (sparse map + scalar weight)
// ---------------------------------------------------------------------------

/// out = F (x) m (x) w; the mask broadcasts across channels and the output is
/// exactly zero outside the mask support.
inline FeatureGrid enhance(const FeatureGrid& grid, const SparseMap& map, double weight) {
    if (map.height != grid.height || map.width != grid.width)
        throw ShapeError("enhance: map dims differ from grid");
    FeatureGrid out = grid;
    const int hw = grid.height * grid.width;
    for (int c = 0; c < grid.channels; ++c) {
        float* po = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i)
            po[i] = map.bits[i] ? static_cast<float>(static_cast<double>(po[i]) * weight) : 0.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Double-precision tensor used by the attention interior and the gradient
// path (storage stays 32-bit only at operation boundaries).
// ---------------------------------------------------------------------------

struct DTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> v;

    DTensor() = default;
    DTensor(int c, int h, int w)
        : channels(c), height(h), width(w), v(static_cast<std::size_t>(c) * h * w, 0.0) {}

    static DTensor from_grid(const FeatureGrid& g) {
        DTensor t(g.channels, g.height, g.width);
        for (std::size_t i = 0; i < g.data.size(); ++i) t.v[i] = g.data[i];
        return t;
    }

    std::size_t index(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * height + h) * width + w;
    }
    double& at(int c, int h, int w) { return v[index(c, h, w)]; }
    double at(int c, int h, int w) const { return v[index(c, h, w)]; }
};

namespace detail {

struct ResizePlan {
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
    std::vector<int> hb, he, wb, we;
};

inline ResizePlan make_resize_plan(int in_h, int in_w, int out_h, int out_w) {
    ResizePlan p;
    p.in_h = in_h;
    p.in_w = in_w;
    p.out_h = out_h;
    p.out_w = out_w;
    axis_ranges(in_h, out_h, p.hb, p.he);
    axis_ranges(in_w, out_w, p.wb, p.we);
    return p;
}

inline DTensor resize_d(const DTensor& t, const ResizePlan& p) {
    DTensor out(t.channels, p.out_h, p.out_w);
    for (int c = 0; c < t.channels; ++c)
        for (int oh = 0; oh < p.out_h; ++oh)
            for (int ow = 0; ow < p.out_w; ++ow) {
                double acc = 0.0;
                int n = 0;
                for (int ih = p.hb[oh]; ih < p.he[oh]; ++ih)
                    for (int iw = p.wb[ow]; iw < p.we[ow]; ++iw) {
                        acc += t.at(c, ih, iw);
                        ++n;
                    }
                out.at(c, oh, ow) = acc / n;
            }
    return out;
}

/// Exact adjoint of resize_d: scatter each output gradient evenly over its
/// source window.
inline void resize_adjoint_accum(DTensor& d_in, const DTensor& d_out, const ResizePlan& p) {
    for (int c = 0; c < d_out.channels; ++c)
        for (int oh = 0; oh < p.out_h; ++oh)
            for (int ow = 0; ow < p.out_w; ++ow) {
                const int n = (p.he[oh] - p.hb[oh]) * (p.we[ow] - p.wb[ow]);
                const double share = d_out.at(c, oh, ow) / n;
                for (int ih = p.hb[oh]; ih < p.he[oh]; ++ih)
                    for (int iw = p.wb[ow]; iw < p.we[ow]; ++iw) d_in.at(c, ih, iw) += share;
            }
}

inline void resized_metadata(const FeatureGrid& g, int out_h, int out_w, float& cell, float& ox,
                             float& oy) {
    const double cell_h = static_cast<double>(g.cell_size) * g.height / out_h;
    const double cell_w = static_cast<double>(g.cell_size) * g.width / out_w;
    cell = static_cast<float>(cell_h);
    ox = static_cast<float>(g.origin_x - 0.5 * g.cell_size + 0.5 * cell_w);
    oy = static_cast<float>(g.origin_y - 0.5 * g.cell_size + 0.5 * cell_h);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-scale cross-source attention
// ---------------------------------------------------------------------------

/// Per-scale, per-source softmax weight maps. Sources are ego plus selected
/// collaborators in ascending agent id; at every scale and location the
/// weights over sources sum to 1.
struct AttentionWeights {
    std::vector<int> source_ids;
    struct Scale {
        int height = 0;
        int width = 0;
        std::vector<std::vector<double>> per_source;  // [source][h * w]
    };
    std::vector<Scale> scales;
};

struct MultiscaleResult {
    AttentionWeights weights;
    std::vector<FeatureGrid> aggregates;  // one per scale
};

namespace detail {

struct AttentionInput {
    std::vector<int> ids;               // ascending
    std::vector<const FeatureGrid*> grids;
    int ego_index = 0;
};

inline AttentionInput sort_sources(const FeatureGrid& ego, int ego_id,
                                   const std::vector<std::pair<int, const FeatureGrid*>>& collabs) {
    AttentionInput in;
    std::vector<std::pair<int, const FeatureGrid*>> all = collabs;
    all.emplace_back(ego_id, &ego);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [id, g] : all) {
        if (!g->same_shape(ego))
            throw ShapeError("multiscale_attention: source shape differs from ego");
        if (id == ego_id) in.ego_index = static_cast<int>(in.ids.size());
        in.ids.push_back(id);
        in.grids.push_back(g);
    }
    return in;
}

inline std::vector<std::pair<int, int>> scale_dims(int h, int w,
                                                   const std::vector<double>& scales) {
    if (scales.empty()) throw ConfigError("multiscale_attention: empty scale list");
    std::vector<std::pair<int, int>> dims;
    for (double f : scales) {
        if (!(f > 0.0)) throw ConfigError("multiscale_attention: scale fraction must be > 0");
        dims.emplace_back(std::max(1, static_cast<int>(std::llround(h * f))),
                          std::max(1, static_cast<int>(std::llround(w * f))));
    }
    return dims;
}

struct ScaleCache {
    ResizePlan plan;
    std::vector<DTensor> resized;                   // per source
    std::vector<std::vector<double>> weights;       // [source][hw]
    DTensor aggregate;
};

/// Scaled dot-product attention at one scale; query is the resized ego.
inline ScaleCache attention_at_scale(const std::vector<DTensor>& sources, int ego_index,
                                     int in_h, int in_w, int out_h, int out_w) {
    ScaleCache sc;
    sc.plan = make_resize_plan(in_h, in_w, out_h, out_w);
    for (const auto& s : sources) sc.resized.push_back(resize_d(s, sc.plan));

    const int n = static_cast<int>(sources.size());
    const int channels = sources[0].channels;
    const int hw = out_h * out_w;
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels));
    sc.weights.assign(n, std::vector<double>(hw, 0.0));
    sc.aggregate = DTensor(channels, out_h, out_w);

    std::vector<double> scores(n);
    for (int p = 0; p < hw; ++p) {
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int c = 0; c < channels; ++c)
                dot += sc.resized[ego_index].v[static_cast<std::size_t>(c) * hw + p] *
                       sc.resized[j].v[static_cast<std::size_t>(c) * hw + p];
            scores[j] = dot * inv_sqrt_c;
        }
        const std::vector<double> wts = stable_softmax(scores);
        for (int j = 0; j < n; ++j) {
            sc.weights[j][p] = wts[j];
            for (int c = 0; c < channels; ++c)
                sc.aggregate.v[static_cast<std::size_t>(c) * hw + p] +=
                    wts[j] * sc.resized[j].v[static_cast<std::size_t>(c) * hw + p];
        }
    }
    return sc;
}

}  // namespace detail

/// Per scale: resize ego and every enhanced source, score each source
/// against the ego query with a scaled dot product per location, softmax
/// over sources (ego included), and blend the resized source values with
/// those weights.
inline MultiscaleResult multiscale_attention(
    const FeatureGrid& ego, int ego_id,
    const std::vector<std::pair<int, const FeatureGrid*>>& collaborators,
    const std::vector<double>& scales) {
    const auto in = detail::sort_sources(ego, ego_id, collaborators);
    const auto dims = detail::scale_dims(ego.height, ego.width, scales);

    std::vector<DTensor> sources;
    sources.reserve(in.grids.size());
    for (const auto* g : in.grids) sources.push_back(DTensor::from_grid(*g));

    MultiscaleResult out;
    out.weights.source_ids = in.ids;
    for (const auto& [sh, sw] : dims) {
        auto sc = detail::attention_at_scale(sources, in.ego_index, ego.height, ego.width, sh, sw);
        AttentionWeights::Scale ws;
        ws.height = sh;
        ws.width = sw;
        ws.per_source = std::move(sc.weights);
        out.weights.scales.push_back(std::move(ws));

        float cell, ox, oy;
        detail::resized_metadata(ego, sh, sw, cell, ox, oy);
        FeatureGrid agg(ego.channels, sh, sw, cell, ox, oy);
        for (std::size_t i = 0; i < agg.data.size(); ++i)
            agg.data[i] = static_cast<float>(sc.aggregate.v[i]);
        out.aggregates.push_back(std::move(agg));
    }
    return out;
}

/// Resize every per-scale aggregate to the output size and average them.
inline FeatureGrid merge_scales(const std::vector<FeatureGrid>& aggregates, int out_h, int out_w) {
    if (aggregates.empty()) throw ShapeError("merge_scales: no aggregates");
    const int channels = aggregates[0].channels;
    std::vector<double> acc(static_cast<std::size_t>(channels) * out_h * out_w, 0.0);
    float cell = 1.0f, ox = 0.0f, oy = 0.0f;
    for (std::size_t s = 0; s < aggregates.size(); ++s) {
        if (aggregates[s].channels != channels)
            throw ShapeError("merge_scales: channel mismatch between aggregates");
        const auto plan =
            detail::make_resize_plan(aggregates[s].height, aggregates[s].width, out_h, out_w);
        const DTensor r = detail::resize_d(DTensor::from_grid(aggregates[s]), plan);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.v[i];
        if (s == 0) detail::resized_metadata(aggregates[0], out_h, out_w, cell, ox, oy);
    }
    FeatureGrid out(channels, out_h, out_w, cell, ox, oy);
    const double inv = 1.0 / static_cast<double>(aggregates.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] * inv);
    return out;
}

// ---------------------------------------------------------------------------
// Historical prior concatenation and short-term channel attention
// ---------------------------------------------------------------------------

/// Channel concatenation [H_att | history...]; frames are newest-first so the
/// oldest block lands last.
inline FeatureGrid concat_history(const FeatureGrid& h_att,
                                  const std::vector<FeatureGrid>& history) {
    int channels = h_att.channels;
    for (const auto& f : history) {
        if (!f.same_spatial(h_att) ||
            std::abs(f.cell_size - h_att.cell_size) > 1e-9f)
            throw ShapeError("concat_history: frame geometry differs");
        channels += f.channels;
    }
    FeatureGrid out(channels, h_att.height, h_att.width, h_att.cell_size, h_att.origin_x,
                    h_att.origin_y);
    std::size_t offset = 0;
    std::copy(h_att.data.begin(), h_att.data.end(), out.data.begin());
    offset += h_att.data.size();
    for (const auto& f : history) {
        std::copy(f.data.begin(), f.data.end(), out.data.begin() + offset);
        offset += f.data.size();
    }
    return out;
}

/// Shared two-layer bottleneck over pooled channel vectors,
/// W^ST = sigmoid(M(avgpool) + M(maxpool)) with M(x) = W2 tanh(W1 x).
struct StaParams {
    int channels = 0;
    int hidden = 0;
    std::vector<double> w1;  // hidden x channels
    std::vector<double> w2;  // channels x hidden

    static StaParams zeros(int channels, int reduction = 4) {
        if (channels <= 0 || channels % reduction != 0)
            throw ConfigError("sta: channel count not divisible by reduction ratio");
        StaParams p;
        p.channels = channels;
        p.hidden = channels / reduction;
        p.w1.assign(static_cast<std::size_t>(p.hidden) * channels, 0.0);
        p.w2.assign(static_cast<std::size_t>(channels) * p.hidden, 0.0);
        return p;
    }

    /// Fixed seeded default (std 0.01) for a given channel count.
    static StaParams seeded_default(int channels, int reduction = 4) {
        StaParams p = zeros(channels, reduction);
        Rng rng = Rng::stream(0x105c1905ULL, "sta_default", channels);
        for (auto& v : p.w1) v = 0.01 * rng.normal();
        for (auto& v : p.w2) v = 0.01 * rng.normal();
        return p;
    }

    /// Published hand-steppable 4-channel set.
    static StaParams test_params() {
        StaParams p = zeros(4, 4);
        p.w1 = {0.1, 0.2, -0.1, 0.3};
        p.w2 = {0.5, -0.25, 0.125, 1.0};
        return p;
    }

    static StaParams from_flat(int channels, std::span<const double> flat, int reduction = 4) {
        StaParams p = zeros(channels, reduction);
        if (flat.size() != p.w1.size() + p.w2.size())
            throw ConfigError("sta params: wrong flat size");
        std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(p.w1.size()),
                  p.w1.begin());
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(p.w1.size()), flat.end(),
                  p.w2.begin());
        return p;
    }

    std::vector<double> to_flat() const {
        std::vector<double> flat = w1;
        flat.insert(flat.end(), w2.begin(), w2.end());
        return flat;
    }
};

struct ShortTermWeights {
    std::vector<double> values;  // one per channel, each in (0, 1)
};

namespace detail {

inline std::vector<double> sta_mlp(const StaParams& p, const std::vector<double>& x) {
    std::vector<double> hidden(p.hidden, 0.0);
    for (int i = 0; i < p.hidden; ++i) {
        double z = 0.0;
        for (int c = 0; c < p.channels; ++c) z += p.w1[static_cast<std::size_t>(i) * p.channels + c] * x[c];
        hidden[i] = std::tanh(z);
    }
    std::vector<double> out(p.channels, 0.0);
    for (int c = 0; c < p.channels; ++c) {
        double z = 0.0;
        for (int i = 0; i < p.hidden; ++i) z += p.w2[static_cast<std::size_t>(c) * p.hidden + i] * hidden[i];
        out[c] = z;
    }
    return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

inline ShortTermWeights short_term_attention(const FeatureGrid& h_h, const StaParams& params) {
    if (params.channels != h_h.channels)
        throw ConfigError("short_term_attention: params sized for different channel count");
    const std::vector<double> avg = spatial_pool(h_h, PoolMode::Avg).values;
    const std::vector<double> mx = spatial_pool(h_h, PoolMode::Max).values;
    const std::vector<double> za = detail::sta_mlp(params, avg);
    const std::vector<double> zm = detail::sta_mlp(params, mx);
    ShortTermWeights w;
    w.values.resize(h_h.channels);
    for (int c = 0; c < h_h.channels; ++c) w.values[c] = detail::sigmoid(za[c] + zm[c]);
    return w;
}

/// Per-channel scaling by the short-term weights.
inline FeatureGrid refine(const FeatureGrid& h_h, const ShortTermWeights& w) {
    if (static_cast<int>(w.values.size()) != h_h.channels)
        throw ShapeError("refine: weight length differs from channel count");
    FeatureGrid out = h_h;
    const int hw = h_h.height * h_h.width;
    for (int c = 0; c < h_h.channels; ++c) {
        float* p = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i)
            p[i] = static_cast<float>(static_cast<double>(p[i]) * w.values[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full fusion
// ---------------------------------------------------------------------------

struct HphaParams {
    std::vector<double> scales{1.0, 0.5, 0.25};
    StaParams sta;

    static std::vector<double> scales_for(int count) {
        std::vector<double> s;
        for (int i = 0; i < count; ++i) s.push_back(std::ldexp(1.0, -i));
        return s;
    }
};

struct FuseResult {
    FeatureGrid fused;
    std::vector<int> sources_used;  // ascending agent ids, ego included
    AttentionWeights weights;
};

/// enhance -> multi-scale attention -> merge -> history concat -> short-term
/// attention -> refine. Inputs must already be warped, enhanced and selected.
inline FuseResult fuse(const FeatureGrid& ego, int ego_id,
                       const std::vector<std::pair<int, const FeatureGrid*>>& enhanced_sources,
                       const std::vector<FeatureGrid>& history, const HphaParams& params) {
    MultiscaleResult ms = multiscale_attention(ego, ego_id, enhanced_sources, params.scales);
    const FeatureGrid h_att = merge_scales(ms.aggregates, ego.height, ego.width);
    const FeatureGrid h_h = concat_history(h_att, history);
    const ShortTermWeights w = short_term_attention(h_h, params.sta);
    FuseResult out{refine(h_h, w), ms.weights.source_ids, std::move(ms.weights)};
    return out;
}

// ---------------------------------------------------------------------------
// Analytic gradients (double-precision interior)
// ---------------------------------------------------------------------------

/// Test loss <merged, upstream> of multiscale_attention -> merge_scales,
/// computed entirely in 64-bit from the 32-bit inputs. The gradient path and
/// the finite-difference oracle both evaluate this map.
inline double attention_loss(const FeatureGrid& ego, int ego_id,
                             const std::vector<std::pair<int, const FeatureGrid*>>& collaborators,
                             const std::vector<double>& scales, const DTensor& upstream) {
    const auto in = detail::sort_sources(ego, ego_id, collaborators);
    const auto dims = detail::scale_dims(ego.height, ego.width, scales);
    std::vector<DTensor> sources;
    for (const auto* g : in.grids) sources.push_back(DTensor::from_grid(*g));

    DTensor merged(ego.channels, ego.height, ego.width);
    for (const auto& [sh, sw] : dims) {
        auto sc = detail::attention_at_scale(sources, in.ego_index, ego.height, ego.width, sh, sw);
        const auto up = detail::make_resize_plan(sh, sw, ego.height, ego.width);
        const DTensor r = detail::resize_d(sc.aggregate, up);
        for (std::size_t i = 0; i < merged.v.size(); ++i) merged.v[i] += r.v[i];
    }
    const double inv = 1.0 / static_cast<double>(dims.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < merged.v.size(); ++i) loss += merged.v[i] * inv * upstream.v[i];
    return loss;
}

struct AttentionGradients {
    DTensor d_ego;
    std::vector<DTensor> d_sources;  // matches the collaborator input order
};

/// Analytic gradient of attention_loss with respect to the ego grid and every
/// collaborator grid.
inline AttentionGradients attention_backward(
    const FeatureGrid& ego, int ego_id,
    const std::vector<std::pair<int, const FeatureGrid*>>& collaborators,
    const std::vector<double>& scales, const DTensor& upstream) {
    const auto in = detail::sort_sources(ego, ego_id, collaborators);
    const auto dims = detail::scale_dims(ego.height, ego.width, scales);
    std::vector<DTensor> sources;
    for (const auto* g : in.grids) sources.push_back(DTensor::from_grid(*g));

    const int n = static_cast<int>(sources.size());
    const int channels = ego.channels;
    const double inv_scales = 1.0 / static_cast<double>(dims.size());
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels));

    std::vector<DTensor> d_sorted(n);
    for (int j = 0; j < n; ++j) d_sorted[j] = DTensor(channels, ego.height, ego.width);

    std::vector<double> dwt(n), ds(n);
    for (const auto& [sh, sw] : dims) {
        auto sc = detail::attention_at_scale(sources, in.ego_index, ego.height, ego.width, sh, sw);
        // dL/d(aggregate at this scale) = adjoint of the output resize, / |S|.
        const auto up = detail::make_resize_plan(sh, sw, ego.height, ego.width);
        DTensor d_agg(channels, sh, sw);
        {
            DTensor scaled_up = upstream;
            for (double& v : scaled_up.v) v *= inv_scales;
            detail::resize_adjoint_accum(d_agg, scaled_up, up);
        }

        const int hw = sh * sw;
        std::vector<DTensor> d_resized(n, DTensor(channels, sh, sw));
        for (int p = 0; p < hw; ++p) {
            // dh = d_agg(:, p); value, key and query paths per source.
            double sum_wd = 0.0;
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int c = 0; c < channels; ++c)
                    acc += sc.resized[j].v[static_cast<std::size_t>(c) * hw + p] *
                           d_agg.v[static_cast<std::size_t>(c) * hw + p];
                dwt[j] = acc;
                sum_wd += sc.weights[j][p] * acc;
            }
            for (int j = 0; j < n; ++j) ds[j] = sc.weights[j][p] * (dwt[j] - sum_wd);
            for (int c = 0; c < channels; ++c) {
                const std::size_t idx = static_cast<std::size_t>(c) * hw + p;
                const double dh = d_agg.v[idx];
                const double q = sc.resized[in.ego_index].v[idx];
                double dq = 0.0;
                for (int j = 0; j < n; ++j) {
                    d_resized[j].v[idx] += sc.weights[j][p] * dh + ds[j] * q * inv_sqrt_c;
                    dq += ds[j] * sc.resized[j].v[idx] * inv_sqrt_c;
                }
                d_resized[in.ego_index].v[idx] += dq;
            }
        }
        for (int j = 0; j < n; ++j)
            detail::resize_adjoint_accum(d_sorted[j], d_resized[j], sc.plan);
    }

    AttentionGradients out;
    out.d_ego = std::move(d_sorted[in.ego_index]);
    out.d_sources.resize(collaborators.size());
    for (std::size_t k = 0; k < collaborators.size(); ++k) {
        const int id = collaborators[k].first;
        for (int j = 0; j < n; ++j)
            if (in.ids[j] == id) {
                out.d_sources[k] = std::move(d_sorted[j]);
                break;
            }
    }
    return out;
}

/// Test loss <refine(H, sta(H)), upstream> in 64-bit.
inline double short_term_loss(const FeatureGrid& h_h, const StaParams& params,
                              const DTensor& upstream) {
    const ShortTermWeights w = short_term_attention(h_h, params);
    const int hw = h_h.height * h_h.width;
    double loss = 0.0;
    for (int c = 0; c < h_h.channels; ++c)
        for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * hw + i;
            loss += static_cast<double>(h_h.data[idx]) * w.values[c] * upstream.v[idx];
        }
    return loss;
}

struct ShortTermGradients {
    DTensor d_input;
    StaParams d_params;
};

/// Analytic gradient of short_term_loss with respect to the input grid and
/// the MLP parameters.
inline ShortTermGradients short_term_backward(const FeatureGrid& h_h, const StaParams& params,
                                              const DTensor& upstream) {
    if (params.channels != h_h.channels)
        throw ConfigError("short_term_backward: params sized for different channel count");
    const int channels = h_h.channels;
    const int hw = h_h.height * h_h.width;

    const std::vector<double> avg = spatial_pool(h_h, PoolMode::Avg).values;
    const std::vector<double> mx = spatial_pool(h_h, PoolMode::Max).values;
    // argmax per channel; first occurrence in row-major order.
    std::vector<int> argmax(channels, 0);
    for (int c = 0; c < channels; ++c) {
        const float* p = h_h.data.data() + static_cast<std::size_t>(c) * hw;
        int best = 0;
        for (int i = 1; i < hw; ++i)
            if (static_cast<double>(p[i]) > static_cast<double>(p[best])) best = i;
        argmax[c] = best;
    }

    auto hidden_of = [&](const std::vector<double>& x) {
        std::vector<double> h(params.hidden, 0.0);
        for (int i = 0; i < params.hidden; ++i) {
            double z = 0.0;
            for (int c = 0; c < channels; ++c)
                z += params.w1[static_cast<std::size_t>(i) * channels + c] * x[c];
            h[i] = std::tanh(z);
        }
        return h;
    };
    const std::vector<double> ta = hidden_of(avg);
    const std::vector<double> tm = hidden_of(mx);

    std::vector<double> z(channels, 0.0);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < params.hidden; ++i)
            z[c] += params.w2[static_cast<std::size_t>(c) * params.hidden + i] * (ta[i] + tm[i]);
    std::vector<double> w(channels);
    for (int c = 0; c < channels; ++c) w[c] = detail::sigmoid(z[c]);

    ShortTermGradients out;
    out.d_input = DTensor(channels, h_h.height, h_h.width);
    out.d_params = StaParams::zeros(channels, channels / params.hidden);

    std::vector<double> dz(channels);
    for (int c = 0; c < channels; ++c) {
        double dwc = 0.0;
        for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * hw + i;
            const double g = upstream.v[idx];
            out.d_input.v[idx] = g * w[c];  // pass-through term
            dwc += g * static_cast<double>(h_h.data[idx]);
        }
        dz[c] = dwc * w[c] * (1.0 - w[c]);
    }

    // Through W2 into both pooled branches.
    std::vector<double> dta(params.hidden, 0.0), dtm(params.hidden, 0.0);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < params.hidden; ++i) {
            const std::size_t wi = static_cast<std::size_t>(c) * params.hidden + i;
            out.d_params.w2[wi] += dz[c] * (ta[i] + tm[i]);
            dta[i] += dz[c] * params.w2[wi];
            dtm[i] += dz[c] * params.w2[wi];
        }
    std::vector<double> dua(params.hidden), dum(params.hidden);
    for (int i = 0; i < params.hidden; ++i) {
        dua[i] = dta[i] * (1.0 - ta[i] * ta[i]);
        dum[i] = dtm[i] * (1.0 - tm[i] * tm[i]);
    }
    std::vector<double> davg(channels, 0.0), dmax(channels, 0.0);
    for (int i = 0; i < params.hidden; ++i)
        for (int c = 0; c < channels; ++c) {
            const std::size_t wi = static_cast<std::size_t>(i) * channels + c;
            out.d_params.w1[wi] += dua[i] * avg[c] + dum[i] * mx[c];
            davg[c] += dua[i] * params.w1[wi];
            dmax[c] += dum[i] * params.w1[wi];
        }
    for (int c = 0; c < channels; ++c) {
        const double spread = davg[c] / hw;
        for (int i = 0; i < hw; ++i)
            out.d_input.v[static_cast<std::size_t>(c) * hw + i] += spread;
        out.d_input.v[static_cast<std::size_t>(c) * hw + argmax[c]] += dmax[c];
    }
    return out;
}

inline ParamSet builtin_sta_params() {
    return ParamSet{{"sta.test", StaParams::test_params().to_flat()}};
}

}  // namespace iosicp
