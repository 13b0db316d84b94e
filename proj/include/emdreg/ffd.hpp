#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "emdreg/image.hpp"
#include "emdreg/parallel.hpp"
#include "emdreg/rng.hpp"

namespace emdreg {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Dense per-pixel displacement vectors in pixels, row-major.
struct DisplacementField {
    int width = 0;
    int height = 0;
    std::vector<double> dx;
    std::vector<double> dy;

    DisplacementField() = default;
    DisplacementField(int w, int h)
        : width(w), height(h),
          dx(static_cast<size_t>(w) * h, 0.0), dy(static_cast<size_t>(w) * h, 0.0) {}
};

/// Cubic B-spline free-form deformation. Control point (i,j) sits at
/// ((i-1) * spacing_x, (j-1) * spacing_y): one phantom row/column on each
/// side, with spacing = extent / (n-3), so the 4x4 cubic support covers every
/// pixel of the image domain.
struct FfdTransform {
    int nx = 0;
    int ny = 0;
    double spacing_x = 0.0;
    double spacing_y = 0.0;
    int image_width = 0;
    int image_height = 0;
    std::vector<double> dx;  // nx*ny control offsets, row-major (j*nx + i)
    std::vector<double> dy;

    size_t control_count() const { return static_cast<size_t>(nx) * ny; }
};

namespace detail {

inline std::array<double, 4> bspline_weights(double t) {
    double t2 = t * t, t3 = t2 * t;
    return {(1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0};
}

struct SplineSpan {
    int base = 0;
    std::array<double, 4> w{};
};

inline SplineSpan spline_span(double coord, double spacing, int n_ctrl) {
    double u = coord / spacing;
    int i = static_cast<int>(std::floor(u));
    if (i < 0) i = 0;
    if (i > n_ctrl - 4) i = n_ctrl - 4;
    return {i, bspline_weights(u - i)};
}

} // namespace detail

/// Identity transform on an nx x ny lattice covering a width x height image.
inline FfdTransform make_uniform_grid(int width, int height, int nx, int ny) {
    if (nx < 4 || ny < 4)
        throw std::invalid_argument("make_uniform_grid: need at least 4 control points per axis");
    FfdTransform t;
    t.nx = nx;
    t.ny = ny;
    t.image_width = width;
    t.image_height = height;
    t.spacing_x = static_cast<double>(width) / (nx - 3);
    t.spacing_y = static_cast<double>(height) / (ny - 3);
    t.dx.assign(t.control_count(), 0.0);
    t.dy.assign(t.control_count(), 0.0);
    return t;
}

/// Independent uniform draws on [-amplitude, amplitude] for every control
/// offset component; row-major control order, x before y, so a seed pins the
/// whole transform.
inline FfdTransform perturb_grid(const FfdTransform& t, double amplitude, std::uint64_t seed) {
    if (amplitude < 0.0) throw std::invalid_argument("perturb_grid: negative amplitude");
    FfdTransform out = t;
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    for (size_t c = 0; c < out.control_count(); ++c) {
        out.dx[c] = t.dx[c] + u(rng);
        out.dy[c] = t.dy[c] + u(rng);
    }
    return out;
}

inline Vec2 displacement_at(const FfdTransform& t, double x, double y) {
    auto sx = detail::spline_span(x, t.spacing_x, t.nx);
    auto sy = detail::spline_span(y, t.spacing_y, t.ny);
    double ox = 0.0, oy = 0.0;
    for (int m = 0; m < 4; ++m) {
        size_t row = static_cast<size_t>(sy.base + m) * t.nx + sx.base;
        double wy = sy.w[m];
        double rx = 0.0, ry = 0.0;
        for (int l = 0; l < 4; ++l) {
            rx += sx.w[l] * t.dx[row + l];
            ry += sx.w[l] * t.dy[row + l];
        }
        ox += wy * rx;
        oy += wy * ry;
    }
    return {ox, oy};
}

inline DisplacementField dense_displacement(const FfdTransform& t) {
    DisplacementField field(t.image_width, t.image_height);
    std::vector<detail::SplineSpan> col(t.image_width);
    for (int x = 0; x < t.image_width; ++x) col[x] = detail::spline_span(x, t.spacing_x, t.nx);
    parallel_for(t.image_height, 0, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            auto sy = detail::spline_span(y, t.spacing_y, t.ny);
            size_t out = static_cast<size_t>(y) * t.image_width;
            for (int x = 0; x < t.image_width; ++x) {
                double ox = 0.0, oy = 0.0;
                for (int m = 0; m < 4; ++m) {
                    size_t row = static_cast<size_t>(sy.base + m) * t.nx + col[x].base;
                    double wy = sy.w[m];
                    double rx = 0.0, ry = 0.0;
                    for (int l = 0; l < 4; ++l) {
                        rx += col[x].w[l] * t.dx[row + l];
                        ry += col[x].w[l] * t.dy[row + l];
                    }
                    ox += wy * rx;
                    oy += wy * ry;
                }
                field.dx[out + x] = ox;
                field.dy[out + x] = oy;
            }
        }
    });
    return field;
}

/// Backward warp: out(x,y) = img sampled at (x,y) + displacement, bilinear
/// with border clamping, so every output pixel is defined.
inline ImageGrid warp_image(const ImageGrid& img, const FfdTransform& t) {
    if (img.width != t.image_width || img.height != t.image_height)
        throw std::invalid_argument("warp_image: transform domain does not match image");
    ImageGrid out(img.width, img.height);
    std::vector<detail::SplineSpan> col(img.width);
    for (int x = 0; x < img.width; ++x) col[x] = detail::spline_span(x, t.spacing_x, t.nx);
    parallel_for(img.height, 0, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            auto sy = detail::spline_span(y, t.spacing_y, t.ny);
            for (int x = 0; x < img.width; ++x) {
                double ox = 0.0, oy = 0.0;
                for (int m = 0; m < 4; ++m) {
                    size_t row = static_cast<size_t>(sy.base + m) * t.nx + col[x].base;
                    double wy = sy.w[m];
                    double rx = 0.0, ry = 0.0;
                    for (int l = 0; l < 4; ++l) {
                        rx += col[x].w[l] * t.dx[row + l];
                        ry += col[x].w[l] * t.dy[row + l];
                    }
                    ox += wy * rx;
                    oy += wy * ry;
                }
                out.at(x, y) = sample_bilinear(img, x + ox, y + oy);
            }
        }
    });
    return out;
}

/// Knot-insertion refinement: n -> 2n-3 control points per axis, spacing
/// halved, representing the identical deformation (Lane-Riesenfeld
/// subdivision), so dense fields agree to machine precision.
inline FfdTransform refine_grid(const FfdTransform& t) {
    int nx2 = 2 * t.nx - 3, ny2 = 2 * t.ny - 3;
    auto refine_component = [&](const std::vector<double>& c) {
        // Along x.
        std::vector<double> mid(static_cast<size_t>(nx2) * t.ny);
        for (int j = 0; j < t.ny; ++j) {
            const double* row = c.data() + static_cast<size_t>(j) * t.nx;
            double* out = mid.data() + static_cast<size_t>(j) * nx2;
            for (int k = 0; k <= t.nx - 2; ++k) out[2 * k] = 0.5 * (row[k] + row[k + 1]);
            for (int k = 1; k <= t.nx - 2; ++k)
                out[2 * k - 1] = (row[k - 1] + 6.0 * row[k] + row[k + 1]) / 8.0;
        }
        // Along y.
        std::vector<double> fin(static_cast<size_t>(nx2) * ny2);
        for (int i = 0; i < nx2; ++i) {
            for (int k = 0; k <= t.ny - 2; ++k)
                fin[static_cast<size_t>(2 * k) * nx2 + i] =
                    0.5 * (mid[static_cast<size_t>(k) * nx2 + i] + mid[static_cast<size_t>(k + 1) * nx2 + i]);
            for (int k = 1; k <= t.ny - 2; ++k)
                fin[static_cast<size_t>(2 * k - 1) * nx2 + i] =
                    (mid[static_cast<size_t>(k - 1) * nx2 + i] + 6.0 * mid[static_cast<size_t>(k) * nx2 + i] +
                     mid[static_cast<size_t>(k + 1) * nx2 + i]) / 8.0;
        }
        return fin;
    };

    FfdTransform out;
    out.nx = nx2;
    out.ny = ny2;
    out.image_width = t.image_width;
    out.image_height = t.image_height;
    out.spacing_x = 0.5 * t.spacing_x;
    out.spacing_y = 0.5 * t.spacing_y;
    out.dx = refine_component(t.dx);
    out.dy = refine_component(t.dy);
    return out;
}

/// Least-squares fit of an nx x ny lattice to an arbitrary displacement
/// functional sampled at every pixel of a width x height domain. Used to
/// transfer a transform between pyramid levels whose lattice sizes are not
/// exact subdivisions.
inline FfdTransform fit_lattice_to_field(int width, int height, int nx, int ny,
                                         const std::function<Vec2(double, double)>& field) {
    FfdTransform t = make_uniform_grid(width, height, nx, ny);
    int nc = static_cast<int>(t.control_count());
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nc, nc);
    Eigen::MatrixXd atb = Eigen::MatrixXd::Zero(nc, 2);

    std::vector<detail::SplineSpan> col(width);
    for (int x = 0; x < width; ++x) col[x] = detail::spline_span(x, t.spacing_x, nx);
    std::array<int, 16> idx{};
    std::array<double, 16> w{};
    for (int y = 0; y < height; ++y) {
        auto sy = detail::spline_span(y, t.spacing_y, ny);
        for (int x = 0; x < width; ++x) {
            int k = 0;
            for (int m = 0; m < 4; ++m) {
                int row = (sy.base + m) * nx + col[x].base;
                for (int l = 0; l < 4; ++l, ++k) {
                    idx[k] = row + l;
                    w[k] = sy.w[m] * col[x].w[l];
                }
            }
            Vec2 v = field(x, y);
            for (int a = 0; a < 16; ++a) {
                atb(idx[a], 0) += w[a] * v.x;
                atb(idx[a], 1) += w[a] * v.y;
                for (int b = 0; b < 16; ++b) ata(idx[a], idx[b]) += w[a] * w[b];
            }
        }
    }
    Eigen::MatrixXd sol = Eigen::LDLT<Eigen::MatrixXd>(ata).solve(atb);
    for (int c = 0; c < nc; ++c) {
        t.dx[c] = sol(c, 0);
        t.dy[c] = sol(c, 1);
    }
    return t;
}

} // namespace emdreg
