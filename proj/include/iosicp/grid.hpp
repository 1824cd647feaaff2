#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "iosicp/errors.hpp"

namespace iosicp {

/// Dense C x H x W feature grid, row-major, 32-bit storage. Interior
/// arithmetic runs in 64-bit so gradient checks stay meaningful.
/// origin is the world position of cell (0, 0) center; cell (h, w) center
/// sits at (origin_x + w * cell_size, origin_y + h * cell_size).
struct FeatureGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    float cell_size = 1.0f;
    float origin_x = 0.0f;
    float origin_y = 0.0f;
    std::vector<float> data;  // index: (c * height + h) * width + w

    FeatureGrid() = default;
    FeatureGrid(int c, int h, int w, float cell, float ox, float oy)
        : channels(c), height(h), width(w), cell_size(cell), origin_x(ox), origin_y(oy) {
        if (c <= 0 || h <= 0 || w <= 0) throw ShapeError("FeatureGrid: nonpositive dimension");
        if (!(cell > 0.0f)) throw DomainError("FeatureGrid: cell_size must be > 0");
        data.assign(static_cast<std::size_t>(c) * h * w, 0.0f);
    }

    static FeatureGrid zeros(int c, int h, int w, float cell = 1.0f, float ox = 0.0f,
                             float oy = 0.0f) {
        return FeatureGrid(c, h, w, cell, ox, oy);
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * height + h) * width + w;
    }

    float& at(int c, int h, int w) { return data[index(c, h, w)]; }
    float at(int c, int h, int w) const { return data[index(c, h, w)]; }

    bool same_spatial(const FeatureGrid& o) const { return height == o.height && width == o.width; }
    bool same_shape(const FeatureGrid& o) const {
        return channels == o.channels && same_spatial(o);
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// One value per channel, as produced by spatial pooling.
struct ChannelVector {
    std::vector<double> values;
};

enum class PoolMode { Avg, Max };

// ---------------------------------------------------------------------------
// Elementwise multiplication
// ---------------------------------------------------------------------------

/// a[c,h,w] * b[c,h,w]; b with a single channel broadcasts across channels.
inline FeatureGrid elementwise_mul(const FeatureGrid& a, const FeatureGrid& b) {
    if (!a.same_spatial(b))
        throw ShapeError("elementwise_mul: spatial dims differ");
    if (b.channels != a.channels && b.channels != 1)
        throw ShapeError("elementwise_mul: channel counts incompatible");
    FeatureGrid out = a;
    const int hw = a.height * a.width;
    for (int c = 0; c < a.channels; ++c) {
        const int bc = (b.channels == 1) ? 0 : c;
        const float* pa = a.data.data() + static_cast<std::size_t>(c) * hw;
        const float* pb = b.data.data() + static_cast<std::size_t>(bc) * hw;
        float* po = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i)
            po[i] = static_cast<float>(static_cast<double>(pa[i]) * static_cast<double>(pb[i]));
    }
    return out;
}

inline FeatureGrid elementwise_mul(const FeatureGrid& a, double scalar) {
    FeatureGrid out = a;
    for (float& v : out.data) v = static_cast<float>(static_cast<double>(v) * scalar);
    return out;
}

// ---------------------------------------------------------------------------
// Resizing
// ---------------------------------------------------------------------------

namespace detail {

// Per-axis index sets: shrinking axes use the covering window (mean pool),
// growing axes pick the nearest source cell.
inline void axis_ranges(int in, int out, std::vector<int>& begin, std::vector<int>& end) {
    begin.resize(out);
    end.resize(out);
    for (int o = 0; o < out; ++o) {
        if (out <= in) {
            begin[o] = static_cast<int>((static_cast<std::int64_t>(o) * in) / out);
            end[o] = static_cast<int>(((static_cast<std::int64_t>(o) + 1) * in + out - 1) / out);
        } else {
            int src = static_cast<int>(((2 * static_cast<std::int64_t>(o) + 1) * in) / (2 * out));
            src = std::clamp(src, 0, in - 1);
            begin[o] = src;
            end[o] = src + 1;
        }
    }
}

}  // namespace detail

/// Resample to new_h x new_w. Downsampling mean-pools the covering window,
/// upsampling is nearest-neighbor; channels preserved, cell_size rescaled.
inline FeatureGrid resize_to(const FeatureGrid& g, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1) throw ShapeError("resize_to: target dims must be >= 1");
    if (new_h == g.height && new_w == g.width) return g;

    const double cell_h = static_cast<double>(g.cell_size) * g.height / new_h;
    const double cell_w = static_cast<double>(g.cell_size) * g.width / new_w;
    FeatureGrid out(g.channels, new_h, new_w, static_cast<float>(cell_h),
                    static_cast<float>(g.origin_x - 0.5 * g.cell_size + 0.5 * cell_w),
                    static_cast<float>(g.origin_y - 0.5 * g.cell_size + 0.5 * cell_h));

    std::vector<int> hb, he, wb, we;
    detail::axis_ranges(g.height, new_h, hb, he);
    detail::axis_ranges(g.width, new_w, wb, we);

    for (int c = 0; c < g.channels; ++c)
        for (int oh = 0; oh < new_h; ++oh)
            for (int ow = 0; ow < new_w; ++ow) {
                double acc = 0.0;
                int n = 0;
                for (int ih = hb[oh]; ih < he[oh]; ++ih)
                    for (int iw = wb[ow]; iw < we[ow]; ++iw) {
                        acc += g.at(c, ih, iw);
                        ++n;
                    }
                out.at(c, oh, ow) = static_cast<float>(acc / n);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling and softmax
// ---------------------------------------------------------------------------

inline ChannelVector spatial_pool(const FeatureGrid& g, PoolMode mode) {
    ChannelVector out;
    out.values.resize(g.channels);
    const int hw = g.height * g.width;
    for (int c = 0; c < g.channels; ++c) {
        const float* p = g.data.data() + static_cast<std::size_t>(c) * hw;
        if (mode == PoolMode::Avg) {
            double acc = 0.0;
            for (int i = 0; i < hw; ++i) acc += p[i];
            out.values[c] = acc / hw;
        } else {
            double best = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < hw; ++i) best = std::max(best, static_cast<double>(p[i]));
            out.values[c] = best;
        }
    }
    return out;
}

/// Shift-invariant softmax; output sums to 1 within 1e-6.
inline std::vector<double> stable_softmax(std::span<const double> scores) {
    if (scores.empty()) throw DomainError("stable_softmax: empty input");
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// ---------------------------------------------------------------------------
// FGRD binary serialization: magic "FGRD", u32 C,H,W, f32 cell_size, f32
// origin_x, f32 origin_y, then C*H*W f32 values; everything little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError("FGRD: truncated stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) {
    std::uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace detail

inline void write_fgrd(const FeatureGrid& g, std::ostream& os) {
    os.write("FGRD", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(g.channels));
    detail::put_u32(os, static_cast<std::uint32_t>(g.height));
    detail::put_u32(os, static_cast<std::uint32_t>(g.width));
    detail::put_f32(os, g.cell_size);
    detail::put_f32(os, g.origin_x);
    detail::put_f32(os, g.origin_y);
    for (float v : g.data) detail::put_f32(os, v);
}

inline FeatureGrid read_fgrd(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGRD", 4) != 0) throw ParseError("FGRD: bad magic");
    const auto c = detail::get_u32(is);
    const auto h = detail::get_u32(is);
    const auto w = detail::get_u32(is);
    const float cell = detail::get_f32(is);
    const float ox = detail::get_f32(is);
    const float oy = detail::get_f32(is);
    if (c == 0 || h == 0 || w == 0) throw ParseError("FGRD: zero dimension");
    FeatureGrid g(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), cell, ox, oy);
    for (float& v : g.data) v = detail::get_f32(is);
    return g;
}

}  // namespace iosicp
