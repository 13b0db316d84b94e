#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emdreg/image.hpp"

namespace emdreg {

/// Similarity measure selector plus its parameters (MI bin count, RC alpha).
/// All four are exposed as costs to minimize; 0 is the floor for SSD/CC/RC.
struct MeasureKind {
    enum Type { SSD, CC, RC, MI };
    Type type = SSD;
    int mi_bins = 64;
    double rc_alpha = 0.05;

    static MeasureKind ssd() { return {SSD, 64, 0.05}; }
    static MeasureKind cc() { return {CC, 64, 0.05}; }
    static MeasureKind rc(double alpha = 0.05) { return {RC, 64, alpha}; }
    static MeasureKind mi(int bins = 64) { return {MI, bins, 0.05}; }
};

inline double ssd(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "ssd");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / a.size();
}

/// 1 - r^2 with r the Pearson correlation; constant images count as
/// uncorrelated, so anti-correlated matches still score as matches.
inline double cc(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "cc");
    double n = static_cast<double>(a.size());
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double va = a.data[i], vb = b.data[i];
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
    }
    double var_a = saa - sa * sa / n;
    double var_b = sbb - sb * sb / n;
    if (var_a <= 0.0 || var_b <= 0.0) return 1.0;
    double cov = sab - sa * sb / n;
    return 1.0 - (cov * cov) / (var_a * var_b);
}

namespace detail {

// Orthonormal DCT-II basis matrices, cached per size. C * C^T = I.
inline const Eigen::MatrixXd& dct_basis(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<Eigen::MatrixXd>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
        auto m = std::make_unique<Eigen::MatrixXd>(n, n);
        double s0 = std::sqrt(1.0 / n), sk = std::sqrt(2.0 / n);
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                (*m)(k, j) = (k == 0 ? s0 : sk) * std::cos(M_PI * (j + 0.5) * k / n);
        it = cache.emplace(n, std::move(m)).first;
    }
    return *it->second;
}

inline Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
as_matrix(const ImageGrid& g) {
    return {g.data.data(), g.height, g.width};
}

} // namespace detail

/// Separable orthonormal 2D DCT-II. Parseval holds: sum(Q^2) = sum(I^2).
inline ImageGrid dct2(const ImageGrid& g) {
    const Eigen::MatrixXd& ch = detail::dct_basis(g.height);
    const Eigen::MatrixXd& cw = detail::dct_basis(g.width);
    Eigen::MatrixXd q = ch * detail::as_matrix(g) * cw.transpose();
    ImageGrid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(x, y) = q(y, x);
    return out;
}

/// Inverse of dct2 (orthonormal, so the transpose pair).
inline ImageGrid idct2(const ImageGrid& g) {
    const Eigen::MatrixXd& ch = detail::dct_basis(g.height);
    const Eigen::MatrixXd& cw = detail::dct_basis(g.width);
    Eigen::MatrixXd q = ch.transpose() * detail::as_matrix(g) * cw;
    ImageGrid out(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(x, y) = q(y, x);
    return out;
}

/// Residual complexity: sum log(1 + q^2/alpha) over DCT coefficients of the
/// residual a - b. Sparse-in-DCT (smooth) residuals cost little.
inline double rc(const ImageGrid& a, const ImageGrid& b, double alpha = 0.05) {
    require_same_shape(a, b, "rc");
    if (alpha <= 0.0) throw std::invalid_argument("rc: alpha must be positive");
    ImageGrid r(a.width, a.height);
    for (size_t i = 0; i < r.size(); ++i) r.data[i] = a.data[i] - b.data[i];
    ImageGrid q = dct2(r);
    double cost = 0.0;
    for (double v : q.data) cost += std::log1p(v * v / alpha);
    return cost;
}

namespace detail {

struct PvBin {
    int i0;
    double w0;  // weight on i0; 1-w0 goes to i0+1
};

inline PvBin pv_bin(double v, double lo, double inv_range, int bins) {
    double pos = (v - lo) * inv_range;  // in [0, bins-1]
    int i = static_cast<int>(pos);
    if (i > bins - 2) i = bins - 2;
    if (i < 0) i = 0;
    double f = pos - i;
    return {i, 1.0 - f};
}

inline double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

} // namespace detail

/// Negative mutual information (nats). Joint histogram by linear
/// partial-volume binning over each image's own [min, max] range: every
/// sample spreads bilinearly over the two nearest bins per axis, which keeps
/// the cost usefully smooth for finite-difference gradients.
inline double mi(const ImageGrid& a, const ImageGrid& b, int bins = 64) {
    require_same_shape(a, b, "mi");
    if (bins < 2) throw std::invalid_argument("mi: need at least 2 bins");
    auto [lo_a, hi_a] = min_max(a);
    auto [lo_b, hi_b] = min_max(b);
    double inv_a = hi_a > lo_a ? (bins - 1) / (hi_a - lo_a) : 0.0;
    double inv_b = hi_b > lo_b ? (bins - 1) / (hi_b - lo_b) : 0.0;

    std::vector<double> joint(static_cast<size_t>(bins) * bins, 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        auto ba = detail::pv_bin(a.data[i], lo_a, inv_a, bins);
        auto bb = detail::pv_bin(b.data[i], lo_b, inv_b, bins);
        double* row0 = joint.data() + static_cast<size_t>(ba.i0) * bins + bb.i0;
        row0[0] += ba.w0 * bb.w0;
        row0[1] += ba.w0 * (1.0 - bb.w0);
        row0[bins] += (1.0 - ba.w0) * bb.w0;
        row0[bins + 1] += (1.0 - ba.w0) * (1.0 - bb.w0);
    }
    double inv_n = 1.0 / static_cast<double>(a.size());
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    double h_joint = 0.0;
    for (int ia = 0; ia < bins; ++ia) {
        for (int ib = 0; ib < bins; ++ib) {
            double p = joint[static_cast<size_t>(ia) * bins + ib] * inv_n;
            if (p > 0.0) {
                h_joint -= p * std::log(p);
                pa[ia] += p;
                pb[ib] += p;
            }
        }
    }
    double info = detail::entropy(pa) + detail::entropy(pb) - h_joint;
    return -info;
}

/// Cost dispatch used by the optimizer and the CLI.
inline double measure_cost(const MeasureKind& m, const ImageGrid& a, const ImageGrid& b) {
    switch (m.type) {
        case MeasureKind::SSD: return ssd(a, b);
        case MeasureKind::CC: return cc(a, b);
        case MeasureKind::RC: return rc(a, b, m.rc_alpha);
        case MeasureKind::MI: return mi(a, b, m.mi_bins);
    }
    throw std::invalid_argument("measure_cost: unknown measure");
}

inline std::string measure_name(const MeasureKind& m) {
    switch (m.type) {
        case MeasureKind::SSD: return "ssd";
        case MeasureKind::CC: return "cc";
        case MeasureKind::RC: return "rc";
        case MeasureKind::MI: return "mi";
    }
    return "?";
}

} // namespace emdreg
