#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "emdreg/bemd.hpp"
#include "emdreg/ffd.hpp"
#include "emdreg/image.hpp"
#include "emdreg/parallel.hpp"
#include "emdreg/similarity.hpp"

namespace emdreg {

struct OptimizerOptions {
    int max_iters = 100;        // per level
    double initial_step = 2.0;  // largest control move per accepted step, px
    double step_shrink = 0.5;
    double min_step = 1e-3;     // px
    double fd_step = 0.5;       // central-difference h, px
    double rel_tol = 1e-6;      // relative improvement below this stops the level
    int threads = 0;            // 0 = hardware concurrency
};

/// Per-level diagnostics. costs[0] is the cost of the initial (possibly
/// warm-started) transform; later entries are accepted steps, so the trace is
/// non-increasing. identity_cost is the cost a unity transform would have had
/// at this level, recorded for warm-start comparisons.
struct LevelTrace {
    std::vector<double> costs;
    double identity_cost = 0.0;
    int iterations = 0;
    int lattice_nx = 0;
    int lattice_ny = 0;
    int image_width = 0;
    int image_height = 0;
};

struct RegistrationResult {
    FfdTransform transform;
    std::vector<LevelTrace> levels;
    double wall_time_s = 0.0;
};

namespace detail {

inline double& ffd_param(FfdTransform& t, int p) {
    size_t n = t.control_count();
    return p < static_cast<int>(n) ? t.dx[p] : t.dy[p - n];
}

// Single-threaded warp reusing precomputed per-column spans; the optimizer
// parallelizes across finite-difference parameters instead of pixels.
inline void warp_into(const ImageGrid& img, const FfdTransform& t,
                      const std::vector<SplineSpan>& col, ImageGrid& out) {
    for (int y = 0; y < img.height; ++y) {
        auto sy = spline_span(y, t.spacing_y, t.ny);
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
}

} // namespace detail

/// Gradient descent over all control offsets of `init`, with the gradient by
/// central finite differences and backtracking step control: a step is
/// accepted only if the cost strictly decreases, otherwise the step size
/// shrinks. Terminates on the iteration cap, the step dropping below the
/// minimum, or relative improvement below tolerance.
inline FfdTransform optimize_level(const ImageGrid& fixed, const ImageGrid& moving,
                                   const FfdTransform& init, const MeasureKind& measure,
                                   const OptimizerOptions& opts, LevelTrace* trace = nullptr) {
    if (!fixed.same_shape(moving) || fixed.width != init.image_width || fixed.height != init.image_height)
        throw std::invalid_argument("optimize_level: image/transform dimensions do not match");

    std::vector<detail::SplineSpan> col(fixed.width);
    for (int x = 0; x < fixed.width; ++x) col[x] = detail::spline_span(x, init.spacing_x, init.nx);

    auto eval = [&](const FfdTransform& t, ImageGrid& buf) {
        detail::warp_into(moving, t, col, buf);
        return measure_cost(measure, fixed, buf);
    };

    FfdTransform t = init;
    int n_params = static_cast<int>(2 * t.control_count());
    ImageGrid buf(fixed.width, fixed.height);
    double cost = eval(t, buf);
    if (!std::isfinite(cost)) throw numerical_error("optimize_level: non-finite cost at init");
    if (trace) {
        trace->costs = {cost};
        trace->lattice_nx = init.nx;
        trace->lattice_ny = init.ny;
        trace->image_width = fixed.width;
        trace->image_height = fixed.height;
        trace->iterations = 0;
    }

    std::vector<double> grad(n_params, 0.0);
    double step = opts.initial_step;
    const double h = opts.fd_step;

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        parallel_for(n_params, opts.threads, [&](int p0, int p1) {
            FfdTransform tp = t;
            ImageGrid pbuf(fixed.width, fixed.height);
            for (int p = p0; p < p1; ++p) {
                double& param = detail::ffd_param(tp, p);
                double saved = param;
                param = saved + h;
                double c_plus = eval(tp, pbuf);
                param = saved - h;
                double c_minus = eval(tp, pbuf);
                param = saved;
                grad[p] = (c_plus - c_minus) / (2.0 * h);
            }
        });
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        if (gmax == 0.0 || !std::isfinite(gmax)) break;

        bool accepted = false;
        FfdTransform t_try = t;
        size_t nc = t.control_count();
        double c_try = 0.0;
        while (step >= opts.min_step) {
            double scale = step / gmax;
            for (size_t c = 0; c < nc; ++c) {
                t_try.dx[c] = t.dx[c] - scale * grad[c];
                t_try.dy[c] = t.dy[c] - scale * grad[nc + c];
            }
            c_try = eval(t_try, buf);
            if (std::isfinite(c_try) && c_try < cost) {
                accepted = true;
                break;
            }
            step *= opts.step_shrink;
        }
        if (!accepted) break;

        double rel = (cost - c_try) / std::max(std::abs(cost), 1e-12);
        t = t_try;
        cost = c_try;
        if (trace) {
            trace->costs.push_back(cost);
            trace->iterations = iter + 1;
        }
        if (rel < opts.rel_tol) break;
        step = std::min(step / opts.step_shrink, opts.initial_step);
    }
    return t;
}

namespace detail {

/// Coarse-to-fine lattice sizes ending at the requested finest grid;
/// each coarser level has ceil(n/2)+1 control points (14 -> 8 -> 5).
inline std::vector<std::pair<int, int>> lattice_schedule(int levels, int finest_nx, int finest_ny) {
    std::vector<std::pair<int, int>> out(static_cast<size_t>(levels));
    int nx = finest_nx, ny = finest_ny;
    for (int i = levels - 1; i >= 0; --i) {
        out[static_cast<size_t>(i)] = {nx, ny};
        nx = std::max(4, (nx + 1) / 2 + 1);
        ny = std::max(4, (ny + 1) / 2 + 1);
    }
    return out;
}

/// Transfers a transform onto a new lattice/domain: samples the source dense
/// field at the target's pixel coordinates (rescaling both position and
/// displacement by the domain ratio) and least-squares fits the target
/// lattice to it.
inline FfdTransform transfer_transform(const FfdTransform& src, int dst_w, int dst_h,
                                       int dst_nx, int dst_ny) {
    double sx = static_cast<double>(dst_w) / src.image_width;
    double sy = static_cast<double>(dst_h) / src.image_height;
    return fit_lattice_to_field(dst_w, dst_h, dst_nx, dst_ny, [&](double x, double y) {
        Vec2 d = displacement_at(src, x / sx, y / sy);
        return Vec2{d.x * sx, d.y * sy};
    });
}

/// Shared coarse-to-fine driver. level_images(i) must yield the fixed/moving
/// pair for level i (0-based, coarse first); the estimated transform is
/// carried between levels as the next level's initialization.
template <typename LevelImages>
inline RegistrationResult run_hierarchy(int levels, const MeasureKind& measure,
                                        const OptimizerOptions& opts, int finest_nx, int finest_ny,
                                        LevelImages&& level_images) {
    auto start = std::chrono::steady_clock::now();
    auto lattices = lattice_schedule(levels, finest_nx, finest_ny);
    RegistrationResult result;
    FfdTransform cur;
    for (int i = 0; i < levels; ++i) {
        auto [fixed, moving] = level_images(i);
        auto [nx, ny] = lattices[static_cast<size_t>(i)];
        FfdTransform init = (i == 0)
                                ? make_uniform_grid(fixed.width, fixed.height, nx, ny)
                                : transfer_transform(cur, fixed.width, fixed.height, nx, ny);
        LevelTrace trace;
        trace.identity_cost = measure_cost(measure, fixed, moving);
        cur = optimize_level(fixed, moving, init, measure, opts, &trace);
        result.levels.push_back(std::move(trace));
    }
    result.transform = std::move(cur);
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace detail

/// Intensity-based hierarchical baseline: downsampled pyramids (factors 4/2/1
/// for three levels) registered coarse to fine, warm-starting each level with
/// the previous level's transform.
inline RegistrationResult register_intensity_hier(const ImageGrid& ref, const ImageGrid& flo,
                                                  int levels, const MeasureKind& measure,
                                                  const OptimizerOptions& opts = {},
                                                  int finest_nx = 14, int finest_ny = 14) {
    require_same_shape(ref, flo, "register_intensity_hier");
    if (levels < 1) throw std::invalid_argument("register_intensity_hier: levels must be >= 1");
    return detail::run_hierarchy(levels, measure, opts, finest_nx, finest_ny, [&](int i) {
        int factor = 1 << (levels - 1 - i);
        return std::make_pair(downsample(ref, factor), downsample(flo, factor));
    });
}

/// LR-EMD: registers corresponding IMFs of the two images coarse to fine.
/// Level i uses IMF (n-i+1): the lowest-frequency IMF is the coarse level,
/// since IMF 1 carries the highest frequency. All levels run at full image
/// resolution; IMFs are min-max normalized so measure parameters behave
/// uniformly across their image-dependent signed ranges.
inline RegistrationResult register_lr_emd(const ImageGrid& ref, const ImageGrid& flo, int n,
                                          const MeasureKind& measure,
                                          const OptimizerOptions& opts = {},
                                          int finest_nx = 14, int finest_ny = 14,
                                          const SiftOptions& sift_opts = {}) {
    require_same_shape(ref, flo, "register_lr_emd");
    if (n < 1) throw std::invalid_argument("register_lr_emd: n must be >= 1");
    ImfStack sr = decompose(ref, n, sift_opts);
    ImfStack sf = decompose(flo, n, sift_opts);
    return detail::run_hierarchy(n, measure, opts, finest_nx, finest_ny, [&](int i) {
        size_t imf = static_cast<size_t>(n - 1 - i);
        return std::make_pair(normalize(sr.imfs[imf]), normalize(sf.imfs[imf]));
    });
}

/// AFR-EMD: registers the per-image average of IMFs through the same
/// downsampling hierarchy as the intensity baseline.
inline RegistrationResult register_afr_emd(const ImageGrid& ref, const ImageGrid& flo, int n,
                                           const MeasureKind& measure,
                                           const OptimizerOptions& opts = {},
                                           int finest_nx = 14, int finest_ny = 14,
                                           const SiftOptions& sift_opts = {}) {
    require_same_shape(ref, flo, "register_afr_emd");
    if (n < 1) throw std::invalid_argument("register_afr_emd: n must be >= 1");
    ImageGrid fr = normalize(average_feature_map(decompose(ref, n, sift_opts)));
    ImageGrid ff = normalize(average_feature_map(decompose(flo, n, sift_opts)));
    return detail::run_hierarchy(n, measure, opts, finest_nx, finest_ny, [&](int i) {
        int factor = 1 << (n - 1 - i);
        return std::make_pair(downsample(fr, factor), downsample(ff, factor));
    });
}

} // namespace emdreg
