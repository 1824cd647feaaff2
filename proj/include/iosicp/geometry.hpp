#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace iosicp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

/// Rotate v by angle (radians).
inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Corners of an oriented rectangle, counterclockwise. length runs along the
/// heading axis, width across it.
inline std::array<Vec2, 4> rect_corners(Vec2 center, double length, double width, double yaw) {
    const double hl = 0.5 * length, hw = 0.5 * width;
    const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = center + rotate(local[i], yaw);
    return out;
}

/// Point-in-rectangle test in the box frame; boundary counts as inside.
inline bool point_in_rect(Vec2 p, Vec2 center, double length, double width, double yaw) {
    const Vec2 d = rotate(p - center, -yaw);
    return std::abs(d.x) <= 0.5 * length && std::abs(d.y) <= 0.5 * width;
}

/// Shoelace area of a simple polygon (positive for counterclockwise order).
inline double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        a += cross(p, q);
    }
    return 0.5 * a;
}

/// Sutherland-Hodgman clip of a convex subject polygon against a convex
/// clipper given in counterclockwise order.
inline std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                                     const std::vector<Vec2>& clipper) {
    std::vector<Vec2> poly = subject;
    const std::size_t n = clipper.size();
    for (std::size_t i = 0; i < n && !poly.empty(); ++i) {
        const Vec2 a = clipper[i];
        const Vec2 b = clipper[(i + 1) % n];
        const Vec2 edge = b - a;
        std::vector<Vec2> next;
        next.reserve(poly.size() + 2);
        for (std::size_t j = 0; j < poly.size(); ++j) {
            const Vec2 p = poly[j];
            const Vec2 q = poly[(j + 1) % poly.size()];
            const double sp = cross(edge, p - a);
            const double sq = cross(edge, q - a);
            if (sp >= 0.0) next.push_back(p);
            if ((sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0)) {
                const double t = sp / (sp - sq);
                next.push_back(p + t * (q - p));
            }
        }
        poly = std::move(next);
    }
    return poly;
}

/// Length fraction of segment a-b that lies strictly inside the convex
/// counterclockwise polygon (Cyrus-Beck). Grazing contact has measure zero
/// and does not count.
inline double segment_inside_fraction(Vec2 a, Vec2 b, const std::vector<Vec2>& poly) {
    const Vec2 d = b - a;
    double t0 = 0.0, t1 = 1.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = poly[i];
        const Vec2 q = poly[(i + 1) % n];
        const Vec2 edge = q - p;
        // Inside of a CCW edge is the left half-plane: cross(edge, x - p) >= 0.
        const double denom = cross(edge, d);
        const double num = cross(edge, a - p);
        if (denom == 0.0) {
            if (num < 0.0) return 0.0;  // parallel and outside
            continue;
        }
        const double t = -num / denom;
        if (denom > 0.0)
            t0 = std::max(t0, t);
        else
            t1 = std::min(t1, t);
        if (t0 >= t1) return 0.0;
    }
    return t1 - t0;
}

/// True when the open segment a-b crosses the rectangle's interior for a
/// positive length.
inline bool segment_crosses_rect(Vec2 a, Vec2 b, Vec2 center, double length, double width,
                                 double yaw, double eps = 1e-9) {
    const auto c = rect_corners(center, length, width, yaw);
    const std::vector<Vec2> poly(c.begin(), c.end());
    return segment_inside_fraction(a, b, poly) > eps;
}

}  // namespace iosicp
