#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "emdreg/errors.hpp"
#include "emdreg/image.hpp"
#include "emdreg/tps.hpp"

namespace emdreg {
namespace detail {

// Bowyer-Watson Delaunay triangulation with neighbor-walking point location.
// Coordinates in envelope use are integer pixel positions, for which the
// orientation and in-circle determinants below are exact in double precision
// (images up to ~1500 px a side), so no epsilon tuning is involved.
class DelaunayTriangulation {
public:
    struct Tri {
        int v[3];   // vertex indices, CCW
        int n[3];   // n[i] = neighbor across the edge opposite v[i], -1 if none
        bool alive = true;
    };

    // pts must be free of duplicates.
    explicit DelaunayTriangulation(const std::vector<ScatteredPoint>& pts) : pts_(pts) {
        int n = static_cast<int>(pts_.size());
        if (n < 3) throw numerical_error("delaunay: need at least 3 points");
        double lo_x = pts_[0].x, hi_x = pts_[0].x, lo_y = pts_[0].y, hi_y = pts_[0].y;
        for (const auto& p : pts_) {
            lo_x = std::min(lo_x, p.x);
            hi_x = std::max(hi_x, p.x);
            lo_y = std::min(lo_y, p.y);
            hi_y = std::max(hi_y, p.y);
        }
        double m = 2.0 * std::max({hi_x - lo_x, hi_y - lo_y, 1.0}) + 8.0;
        // Super-triangle ((-m,-m),(3m,-m),(-m,3m)) shifted to the bbox corner.
        xs_.resize(n + 3);
        ys_.resize(n + 3);
        for (int i = 0; i < n; ++i) {
            xs_[i] = pts_[i].x - lo_x;
            ys_[i] = pts_[i].y - lo_y;
        }
        xs_[n] = -m;      ys_[n] = -m;
        xs_[n + 1] = 3*m; ys_[n + 1] = -m;
        xs_[n + 2] = -m;  ys_[n + 2] = 3*m;
        tris_.push_back({{n, n + 1, n + 2}, {-1, -1, -1}, true});

        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return std::make_pair(xs_[a], ys_[a]) < std::make_pair(xs_[b], ys_[b]);
        });
        int hint = 0;
        for (int idx : order) hint = insert(idx, hint);
        n_real_ = n;
    }

    int point_count() const { return n_real_; }

    /// Surviving triangles that touch no super vertex, as vertex index triples.
    std::vector<std::array<int, 3>> real_triangles() const {
        std::vector<std::array<int, 3>> out;
        for (const auto& t : tris_) {
            if (!t.alive) continue;
            if (t.v[0] >= n_real_ || t.v[1] >= n_real_ || t.v[2] >= n_real_) continue;
            out.push_back({t.v[0], t.v[1], t.v[2]});
        }
        return out;
    }

    double x(int i) const { return xs_[i]; }
    double y(int i) const { return ys_[i]; }

private:
    static double orient(double ax, double ay, double bx, double by, double cx, double cy) {
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    }

    double orient_idx(int a, int b, int c) const {
        return orient(xs_[a], ys_[a], xs_[b], ys_[b], xs_[c], ys_[c]);
    }

    // > 0 iff point d lies strictly inside the circumcircle of CCW (a,b,c).
    bool in_circumcircle(const Tri& t, int d) const {
        double adx = xs_[t.v[0]] - xs_[d], ady = ys_[t.v[0]] - ys_[d];
        double bdx = xs_[t.v[1]] - xs_[d], bdy = ys_[t.v[1]] - ys_[d];
        double cdx = xs_[t.v[2]] - xs_[d], cdy = ys_[t.v[2]] - ys_[d];
        double ad2 = adx * adx + ady * ady;
        double bd2 = bdx * bdx + bdy * bdy;
        double cd2 = cdx * cdx + cdy * cdy;
        double det = adx * (bdy * cd2 - cdy * bd2)
                   - ady * (bdx * cd2 - cdx * bd2)
                   + ad2 * (bdx * cdy - cdx * bdy);
        return det > 0.0;
    }

    bool contains(const Tri& t, int p) const {
        return orient_idx(t.v[0], t.v[1], p) >= 0.0 &&
               orient_idx(t.v[1], t.v[2], p) >= 0.0 &&
               orient_idx(t.v[2], t.v[0], p) >= 0.0;
    }

    int locate(int p, int hint) const {
        int cur = hint;
        if (cur < 0 || cur >= static_cast<int>(tris_.size()) || !tris_[cur].alive) cur = -1;
        if (cur < 0) {
            for (int i = static_cast<int>(tris_.size()) - 1; i >= 0; --i)
                if (tris_[i].alive) { cur = i; break; }
        }
        int prev = -1;
        size_t cap = 4 * tris_.size() + 64;
        for (size_t step = 0; step < cap; ++step) {
            const Tri& t = tris_[cur];
            int next = -1;
            for (int e = 0; e < 3; ++e) {
                int a = t.v[(e + 1) % 3], b = t.v[(e + 2) % 3];
                if (t.n[e] == prev) continue;
                if (orient_idx(a, b, p) < 0.0) { next = t.n[e]; break; }
            }
            if (next < 0) {
                if (contains(t, p)) return cur;
                next = -1;
                for (int e = 0; e < 3 && next < 0; ++e) {
                    int a = t.v[(e + 1) % 3], b = t.v[(e + 2) % 3];
                    if (orient_idx(a, b, p) < 0.0) next = t.n[e];
                }
                if (next < 0) return cur;  // on boundary of walkable region
            }
            prev = cur;
            cur = next;
        }
        // Degenerate walk; fall back to scanning.
        for (int i = 0; i < static_cast<int>(tris_.size()); ++i)
            if (tris_[i].alive && contains(tris_[i], p)) return i;
        throw numerical_error("delaunay: point location failed");
    }

    int insert(int p, int hint) {
        int seed = locate(p, hint);
        // Grow the cavity of triangles whose circumcircle contains p.
        std::vector<int> bad;
        std::vector<int> stack{seed};
        std::vector<char> in_bad(tris_.size(), 0);
        if (!in_circumcircle(tris_[seed], p))
            throw numerical_error("delaunay: located triangle does not cover point");
        in_bad[seed] = 1;
        while (!stack.empty()) {
            int ti = stack.back();
            stack.pop_back();
            bad.push_back(ti);
            for (int e = 0; e < 3; ++e) {
                int q = tris_[ti].n[e];
                if (q < 0 || in_bad[q]) continue;
                if (in_circumcircle(tris_[q], p)) {
                    in_bad[q] = 1;
                    stack.push_back(q);
                }
            }
        }
        // Boundary edges of the cavity, each with its outer neighbor.
        struct Edge { int u, v, outer; };
        std::vector<Edge> boundary;
        for (int ti : bad) {
            const Tri& t = tris_[ti];
            for (int e = 0; e < 3; ++e) {
                int q = t.n[e];
                if (q >= 0 && in_bad[q]) continue;
                boundary.push_back({t.v[(e + 1) % 3], t.v[(e + 2) % 3], q});
            }
        }
        for (int ti : bad) tris_[ti].alive = false;

        std::map<std::pair<int, int>, std::pair<int, int>> open_edges;  // (lo,hi) -> (tri, slot)
        int first_new = -1;
        for (const auto& be : boundary) {
            int u = be.u, v = be.v;
            if (orient_idx(p, u, v) <= 0.0) std::swap(u, v);
            if (orient_idx(p, u, v) <= 0.0)
                throw numerical_error("delaunay: degenerate cavity boundary");
            Tri nt{{p, u, v}, {be.outer, -1, -1}, true};
            int nid = static_cast<int>(tris_.size());
            // Patch the outer triangle's back-pointer.
            if (be.outer >= 0) {
                Tri& ot = tris_[be.outer];
                for (int e = 0; e < 3; ++e) {
                    int a = ot.v[(e + 1) % 3], b = ot.v[(e + 2) % 3];
                    if ((a == u && b == v) || (a == v && b == u)) ot.n[e] = nid;
                }
            }
            // Stitch the two p-edges to sibling fan triangles.
            for (int e = 1; e < 3; ++e) {
                int a = nt.v[(e + 1) % 3], b = nt.v[(e + 2) % 3];
                auto key = std::make_pair(std::min(a, b), std::max(a, b));
                auto it = open_edges.find(key);
                if (it == open_edges.end()) {
                    open_edges.emplace(key, std::make_pair(nid, e));
                } else {
                    nt.n[e] = it->second.first;
                    tris_[it->second.first].n[it->second.second] = nid;
                    open_edges.erase(it);
                }
            }
            tris_.push_back(nt);
            if (first_new < 0) first_new = nid;
        }
        if (!open_edges.empty()) throw numerical_error("delaunay: cavity stitching failed");
        return first_new;
    }

    std::vector<ScatteredPoint> pts_;
    std::vector<double> xs_, ys_;
    std::vector<Tri> tris_;
    int n_real_ = 0;
};

// Nearest-neighbor lookup over a uniform cell grid.
class NearestPoint {
public:
    NearestPoint(const std::vector<ScatteredPoint>& pts, int width, int height) : pts_(pts) {
        double density = static_cast<double>(width) * height / std::max<size_t>(1, pts.size());
        cell_ = std::max(1, static_cast<int>(std::sqrt(density)));
        cols_ = (width + cell_ - 1) / cell_ + 1;
        rows_ = (height + cell_ - 1) / cell_ + 1;
        bins_.resize(static_cast<size_t>(cols_) * rows_);
        for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
            int cx = std::clamp(static_cast<int>(pts[i].x) / cell_, 0, cols_ - 1);
            int cy = std::clamp(static_cast<int>(pts[i].y) / cell_, 0, rows_ - 1);
            bins_[static_cast<size_t>(cy) * cols_ + cx].push_back(i);
        }
    }

    double value_at(double x, double y) const {
        int cx = std::clamp(static_cast<int>(x) / cell_, 0, cols_ - 1);
        int cy = std::clamp(static_cast<int>(y) / cell_, 0, rows_ - 1);
        double best_d2 = -1.0;
        double best_v = 0.0;
        for (int ring = 0; ring < std::max(cols_, rows_) + 1; ++ring) {
            bool advanced = false;
            for (int by = cy - ring; by <= cy + ring; ++by) {
                if (by < 0 || by >= rows_) continue;
                for (int bx = cx - ring; bx <= cx + ring; ++bx) {
                    if (bx < 0 || bx >= cols_) continue;
                    if (std::max(std::abs(bx - cx), std::abs(by - cy)) != ring) continue;
                    advanced = true;
                    for (int i : bins_[static_cast<size_t>(by) * cols_ + bx]) {
                        double dx = pts_[i].x - x, dy = pts_[i].y - y;
                        double d2 = dx * dx + dy * dy;
                        if (best_d2 < 0.0 || d2 < best_d2 ||
                            (d2 == best_d2 && pts_[i].value < best_v)) {
                            best_d2 = d2;
                            best_v = pts_[i].value;
                        }
                    }
                }
            }
            // One extra ring after the first hit covers diagonal cells.
            if (best_d2 >= 0.0 && ring > 0 &&
                static_cast<double>((ring - 1) * cell_) * ((ring - 1) * cell_) > best_d2)
                break;
            if (!advanced && ring > 0 && best_d2 >= 0.0) break;
        }
        return best_v;
    }

private:
    const std::vector<ScatteredPoint>& pts_;
    int cell_ = 1, cols_ = 1, rows_ = 1;
    std::vector<std::vector<int>> bins_;
};

} // namespace detail

/// Piecewise-linear interpolation over the Delaunay triangulation of the
/// points, with nearest-neighbor extrapolation for pixels outside the hull
/// (or in numerically uncovered slivers). Used instead of thin-plate splines
/// when the point count makes the dense solve impractical.
inline ImageGrid delaunay_interpolate(const std::vector<ScatteredPoint>& points, int width, int height) {
    std::vector<ScatteredPoint> pts = detail::dedupe_points(points);
    detail::DelaunayTriangulation dt(pts);
    ImageGrid out(width, height);
    std::vector<char> covered(out.size(), 0);

    double off_x = 0.0, off_y = 0.0;
    {
        double lo_x = pts[0].x, lo_y = pts[0].y;
        for (const auto& p : pts) {
            lo_x = std::min(lo_x, p.x);
            lo_y = std::min(lo_y, p.y);
        }
        off_x = lo_x;
        off_y = lo_y;
    }

    for (const auto& tv : dt.real_triangles()) {
        double ax = dt.x(tv[0]), ay = dt.y(tv[0]);
        double bx = dt.x(tv[1]), by = dt.y(tv[1]);
        double cx = dt.x(tv[2]), cy = dt.y(tv[2]);
        double den = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if (den == 0.0) continue;
        double va = pts[tv[0]].value, vb = pts[tv[1]].value, vc = pts[tv[2]].value;
        int x0 = std::max(0, static_cast<int>(std::floor(std::min({ax, bx, cx}) + off_x)));
        int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({ax, bx, cx}) + off_x)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}) + off_y)));
        int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({ay, by, cy}) + off_y)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double px = x - off_x, py = y - off_y;
                double w0 = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / den;
                double w1 = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / den;
                double w2 = 1.0 - w0 - w1;
                if (w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9) continue;
                out.at(x, y) = w0 * va + w1 * vb + w2 * vc;
                covered[static_cast<size_t>(y) * width + x] = 1;
            }
        }
    }

    detail::NearestPoint nn(pts, width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (!covered[static_cast<size_t>(y) * width + x]) out.at(x, y) = nn.value_at(x, y);
    return out;
}

} // namespace emdreg
