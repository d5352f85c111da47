#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringdown {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Complex = std::complex<double>;

/// One continuous-time oscillation mode. A mode with omega > 0 stands for the
/// conjugate eigenvalue pair -sigma +/- j*omega; omega == 0 is a real pole.
struct Mode {
    double sigma = 0.0;  // damping factor, 1/s
    double omega = 0.0;  // angular frequency, rad/s, >= 0
};

/// Estimate message as received by the central PDC at iteration `iteration`.
/// `a_reported` is the (possibly biased) primal; `w_reported` is the dual the
/// sender computed at the previous iteration, as transmitted.
struct ConsensusMsg {
    int sender = -1;  // 0-based PDC index
    int iteration = 0;
    Vec a_reported;
    Vec w_reported;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace ringdown
