#pragma once

#include <cmath>

#include "emdreg/ffd.hpp"
#include "emdreg/image.hpp"

namespace emdreg {

/// A trial converged when its transformation error is strictly below 4 px.
inline constexpr double kConvergenceThresholdPx = 4.0;

inline bool converged(double t_rmse_px) { return t_rmse_px < kConvergenceThresholdPx; }

struct TrialScore {
    double t_rmse = 0.0;
    double i_rmse = 0.0;
    bool converged = false;
};

/// Root mean square of the per-pixel Euclidean difference between two dense
/// displacement fields, in pixels.
inline double t_rmse(const DisplacementField& true_field, const DisplacementField& est_field) {
    if (true_field.width != est_field.width || true_field.height != est_field.height)
        throw std::invalid_argument("t_rmse: field dimensions do not match");
    double s = 0.0;
    size_t n = true_field.dx.size();
    for (size_t i = 0; i < n; ++i) {
        double ddx = true_field.dx[i] - est_field.dx[i];
        double ddy = true_field.dy[i] - est_field.dy[i];
        s += ddx * ddx + ddy * ddy;
    }
    return std::sqrt(s / n);
}

/// Root mean square intensity difference between the reference and the
/// registered image.
inline double i_rmse(const ImageGrid& ref, const ImageGrid& registered) {
    require_same_shape(ref, registered, "i_rmse");
    double s = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        double d = ref.data[i] - registered.data[i];
        s += d * d;
    }
    return std::sqrt(s / ref.size());
}

inline TrialScore score_trial(const DisplacementField& true_field, const DisplacementField& est_field,
                              const ImageGrid& ref_clean, const ImageGrid& registered_clean) {
    TrialScore s;
    s.t_rmse = t_rmse(true_field, est_field);
    s.i_rmse = i_rmse(ref_clean, registered_clean);
    s.converged = converged(s.t_rmse);
    return s;
}

} // namespace emdreg
