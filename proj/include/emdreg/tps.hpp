#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "emdreg/errors.hpp"
#include "emdreg/image.hpp"
#include "emdreg/parallel.hpp"

namespace emdreg {

struct ScatteredPoint {
    double x = 0.0;
    double y = 0.0;
    double value = 0.0;
};

namespace detail {

/// Averages values at identical coordinates; order of first occurrence is kept
/// so the result is deterministic.
inline std::vector<ScatteredPoint> dedupe_points(const std::vector<ScatteredPoint>& pts) {
    std::map<std::pair<double, double>, std::pair<double, int>> acc;
    std::vector<std::pair<double, double>> order;
    for (const auto& p : pts) {
        auto key = std::make_pair(p.x, p.y);
        auto it = acc.find(key);
        if (it == acc.end()) {
            acc.emplace(key, std::make_pair(p.value, 1));
            order.push_back(key);
        } else {
            it->second.first += p.value;
            it->second.second += 1;
        }
    }
    std::vector<ScatteredPoint> out;
    out.reserve(order.size());
    for (const auto& key : order) {
        const auto& [sum, cnt] = acc.at(key);
        out.push_back({key.first, key.second, sum / cnt});
    }
    return out;
}

// r^2 log r expressed through the squared distance, defined as 0 at r = 0.
inline double tps_kernel(double d2) {
    return d2 > 0.0 ? 0.5 * d2 * std::log(d2) : 0.0;
}

} // namespace detail

/// Thin-plate-spline interpolation of scattered samples, evaluated on the
/// full w x h pixel lattice: s(p) = sum_j w_j r^2 log r + a0 + a1 x + a2 y
/// with the usual interpolation + polynomial-orthogonality system.
/// Duplicate coordinates are averaged before solving; a genuinely singular
/// system (e.g. all points collinear) raises numerical_error.
inline ImageGrid tps_interpolate(const std::vector<ScatteredPoint>& points, int width, int height) {
    std::vector<ScatteredPoint> pts = detail::dedupe_points(points);
    int n = static_cast<int>(pts.size());
    if (n < 3) throw numerical_error("tps_interpolate: need at least 3 points");

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double dx = pts[i].x - pts[j].x;
            double dy = pts[i].y - pts[j].y;
            double k = detail::tps_kernel(dx * dx + dy * dy);
            A(i, j) = k;
            A(j, i) = k;
        }
        A(i, n) = 1.0;
        A(i, n + 1) = pts[i].x;
        A(i, n + 2) = pts[i].y;
        A(n, i) = 1.0;
        A(n + 1, i) = pts[i].x;
        A(n + 2, i) = pts[i].y;
        rhs(i) = pts[i].value;
    }

    Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(rhs);
    // Backward-stable LU keeps ||A sol - rhs|| small for any solvable system;
    // a large relative residual therefore flags singularity.
    double anorm = A.cwiseAbs().rowwise().sum().maxCoeff();
    double xnorm = sol.cwiseAbs().maxCoeff();
    double resid = (A * sol - rhs).cwiseAbs().maxCoeff();
    if (!sol.allFinite() || resid > 1e-7 * (anorm * xnorm + 1.0))
        throw numerical_error("tps_interpolate: singular interpolation system");

    ImageGrid out(width, height);
    const double a0 = sol(n), ax = sol(n + 1), ay = sol(n + 2);
    parallel_for(height, 0, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < width; ++x) {
                double s = a0 + ax * x + ay * y;
                for (int j = 0; j < n; ++j) {
                    double dx = x - pts[j].x;
                    double dy = y - pts[j].y;
                    s += sol(j) * detail::tps_kernel(dx * dx + dy * dy);
                }
                out.at(x, y) = s;
            }
        }
    });
    return out;
}

} // namespace emdreg
