#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <optional>

#include "ringdown/signal.hpp"
#include "ringdown/types.hpp"

namespace ringdown {

/// Monic characteristic polynomial z^{2n} + a_1 z^{2n-1} + ... + a_{2n},
/// stored as the coefficient vector [a_1, ..., a_2n].
struct CharPolyCoeffs {
    Vec a;
    int order() const { return static_cast<int>(a.size()); }
};

/// One regression block: H x ~= c where x estimates the negated coefficient
/// vector -a. Row r of a single-channel block is [y(2n-1+r), ..., y(r)] and
/// c(r) = y(2n+r).
struct HankelBlock {
    Mat H;
    Vec c;
    int area_id = -1;

    int rows() const { return static_cast<int>(H.rows()); }
    int cols() const { return static_cast<int>(H.cols()); }
};

inline HankelBlock build_hankel(const RingdownSignal& signal, int channel, int pair_count,
                                int ell) {
    const int M = signal.num_samples();
    const int twon = 2 * pair_count;
    require(channel >= 0 && channel < signal.num_channels(), "build_hankel: bad channel index");
    require(pair_count >= 1, "build_hankel: pair_count must be >= 1");
    require(ell >= 0, "build_hankel: ell must be >= 0");
    require(twon + ell <= M - 1, "build_hankel: window constraint violated: 2n+ell = " +
                                     std::to_string(twon + ell) + " must be <= M-1 = " +
                                     std::to_string(M - 1));
    HankelBlock block;
    block.H.resize(ell + 1, twon);
    block.c.resize(ell + 1);
    const auto row = signal.samples.row(channel);
    for (int r = 0; r <= ell; ++r) {
        for (int j = 0; j < twon; ++j) block.H(r, j) = row(twon - 1 + r - j);
        block.c(r) = row(twon + r);
    }
    return block;
}

inline HankelBlock stack_blocks(const std::vector<HankelBlock>& blocks) {
    require(!blocks.empty(), "stack_blocks: no blocks");
    const int cols = blocks.front().cols();
    int rows = 0;
    for (const auto& b : blocks) {
        require(b.cols() == cols, "stack_blocks: mismatched column counts");
        rows += b.rows();
    }
    HankelBlock out;
    out.H.resize(rows, cols);
    out.c.resize(rows);
    int at = 0;
    for (const auto& b : blocks) {
        out.H.middleRows(at, b.rows()) = b.H;
        out.c.segment(at, b.rows()) = b.c;
        at += b.rows();
    }
    return out;
}

/// Per-area blocks: each area stacks the Hankel systems of its channels.
inline std::vector<HankelBlock> build_area_blocks(const RingdownSignal& signal,
                                                  const AreaPartition& partition,
                                                  int pair_count, int ell) {
    partition.validate(signal.num_channels());
    std::vector<HankelBlock> out;
    out.reserve(partition.assignment.size());
    for (int a = 0; a < partition.num_areas(); ++a) {
        std::vector<HankelBlock> parts;
        for (int ch : partition.assignment[a])
            parts.push_back(build_hankel(signal, ch, pair_count, ell));
        HankelBlock stacked = stack_blocks(parts);
        stacked.area_id = a;
        out.push_back(std::move(stacked));
    }
    return out;
}

/// argmin 0.5||Hx - c||^2 (+ 0.5 ridge ||x||^2), then a = -x. ridge = 0 gives
/// the minimum-norm solution on rank-deficient systems; ridge > 0 is solved
/// through the QR of the augmented stack [H; sqrt(ridge) I].
inline CharPolyCoeffs centralized_ls(const HankelBlock& block, double ridge = 0.0) {
    require(block.rows() > 0 && block.cols() > 0, "centralized_ls: empty block");
    require(block.H.allFinite() && block.c.allFinite(), "centralized_ls: non-finite entries");
    require(ridge >= 0.0 && std::isfinite(ridge), "centralized_ls: bad ridge");
    Vec x;
    if (ridge == 0.0) {
        x = block.H.completeOrthogonalDecomposition().solve(block.c);
    } else {
        const int m = block.rows(), n = block.cols();
        Mat aug(m + n, n);
        aug.topRows(m) = block.H;
        aug.bottomRows(n) = std::sqrt(ridge) * Mat::Identity(n, n);
        Vec rhs = Vec::Zero(m + n);
        rhs.head(m) = block.c;
        x = aug.householderQr().solve(rhs);
    }
    CharPolyCoeffs coeffs;
    coeffs.a = -x;
    return coeffs;
}

namespace detail {

// Parlett-Reinsch balancing; companion matrices are nearly triangular so a few
// sweeps of row/column scaling noticeably improve eigenvalue accuracy.
inline void balance_matrix(Mat& m) {
    const int n = static_cast<int>(m.rows());
    const double gamma = 0.9;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < n; ++i) {
            double row_norm = 0.0, col_norm = 0.0;
            for (int j = 0; j < n; ++j) {
                row_norm += std::abs(m(i, j));
                col_norm += std::abs(m(j, i));
            }
            row_norm -= std::abs(m(i, i));
            col_norm -= std::abs(m(i, i));
            if (row_norm == 0.0 || col_norm == 0.0) continue;
            double f = 1.0;
            double s = row_norm + col_norm;
            while (col_norm < row_norm / 2.0) {
                col_norm *= 2.0;
                row_norm /= 2.0;
                f *= 2.0;
            }
            while (col_norm > row_norm * 2.0) {
                col_norm /= 2.0;
                row_norm *= 2.0;
                f /= 2.0;
            }
            if (row_norm + col_norm < gamma * s) {
                changed = true;
                m.row(i) /= f;
                m.col(i) *= f;
            }
        }
    }
}

}  // namespace detail

/// All 2n roots of the monic characteristic polynomial, via the eigenvalues of
/// the balanced companion matrix. Sorted by descending magnitude, then
/// ascending phase, for deterministic output.
inline std::vector<Complex> char_poly_roots(const CharPolyCoeffs& coeffs) {
    const int n = coeffs.order();
    require(n >= 1, "char_poly_roots: empty coefficient vector");
    require(coeffs.a.allFinite(), "char_poly_roots: non-finite coefficients");
    Mat companion = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j) companion(0, j) = -coeffs.a(j);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    detail::balance_matrix(companion);
    Eigen::EigenSolver<Mat> solver(companion, /*computeEigenvectors=*/false);
    require(solver.info() == Eigen::Success, "char_poly_roots: eigenvalue iteration failed");
    std::vector<Complex> roots(n);
    for (int i = 0; i < n; ++i) roots[i] = solver.eigenvalues()(i);
    std::sort(roots.begin(), roots.end(), [](const Complex& lhs, const Complex& rhs) {
        const double ml = std::abs(lhs), mr = std::abs(rhs);
        if (ml != mr) return ml > mr;
        return std::arg(lhs) < std::arg(rhs);
    });
    return roots;
}

/// Monic polynomial coefficients [a_1..a_m] from its roots (monomial expansion).
inline Vec expand_roots(const std::vector<Complex>& roots) {
    std::vector<Complex> poly{1.0};
    for (const auto& r : roots) {
        std::vector<Complex> next(poly.size() + 1, Complex(0.0, 0.0));
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= poly[i] * r;
        }
        poly = std::move(next);
    }
    Vec out(static_cast<int>(poly.size()) - 1);
    for (int i = 1; i < static_cast<int>(poly.size()); ++i) out(i - 1) = poly[i].real();
    return out;
}

/// Discrete roots exp(lambda T) of a planted mode set (conjugates included).
inline std::vector<Complex> roots_from_modes(const std::vector<Mode>& modes, double T) {
    std::vector<Complex> roots;
    for (const auto& m : modes) {
        const Complex lambda(-m.sigma, m.omega);
        roots.push_back(std::exp(lambda * T));
        if (m.omega != 0.0) roots.push_back(std::exp(std::conj(lambda) * T));
    }
    return roots;
}

/// Forward oracle: the coefficient vector the estimation loop should recover.
inline CharPolyCoeffs coefficients_from_modes(const std::vector<Mode>& modes, double T) {
    CharPolyCoeffs c;
    c.a = expand_roots(roots_from_modes(modes, T));
    return c;
}

/// lambda = ln(z)/T on the principal branch; conjugate pairs merged into one
/// Mode (sigma = -Re lambda, omega = |Im lambda|). Unstable estimates keep
/// their negative sigma.
inline std::vector<Mode> to_continuous_modes(const std::vector<Complex>& roots, double T) {
    require(T > 0.0, "to_continuous_modes: T must be > 0");
    std::vector<Mode> out;
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (used[i]) continue;
        const Complex z = roots[i];
        require(z != Complex(0.0, 0.0), "to_continuous_modes: degenerate root at zero");
        if (std::imag(z) != 0.0) {
            // consume the conjugate partner if present
            const double tol = 1e-9 * (1.0 + std::abs(z));
            for (std::size_t j = i + 1; j < roots.size(); ++j) {
                if (used[j]) continue;
                if (std::abs(roots[j] - std::conj(z)) <= tol) {
                    used[j] = true;
                    break;
                }
            }
        }
        const Complex lambda = std::log(z) / T;
        out.push_back(Mode{-lambda.real(), std::abs(lambda.imag())});
    }
    return out;
}

struct ModeMatch {
    int estimated_index = -1;
    int truth_index = -1;
    double err_sigma = 0.0;
    double err_omega = 0.0;
};

struct ModeComparison {
    std::vector<ModeMatch> matches;
    std::vector<int> spurious;  // estimated modes with no matched truth
    std::vector<int> missing;   // truth modes with no matched estimate

    double max_abs_error() const {
        double m = 0.0;
        for (const auto& match : matches)
            m = std::max({m, match.err_sigma, match.err_omega});
        return m;
    }
};

/// Greedy globally-nearest matching in the (sigma, omega) plane.
inline ModeComparison compare_modes(const std::vector<Mode>& estimated,
                                    const std::vector<Mode>& truth) {
    ModeComparison cmp;
    std::vector<bool> est_used(estimated.size(), false), truth_used(truth.size(), false);
    const std::size_t pairs = std::min(estimated.size(), truth.size());
    for (std::size_t round = 0; round < pairs; ++round) {
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (std::size_t i = 0; i < estimated.size(); ++i) {
            if (est_used[i]) continue;
            for (std::size_t j = 0; j < truth.size(); ++j) {
                if (truth_used[j]) continue;
                const double d = std::hypot(estimated[i].sigma - truth[j].sigma,
                                            estimated[i].omega - truth[j].omega);
                if (d < best) {
                    best = d;
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        }
        est_used[bi] = truth_used[bj] = true;
        cmp.matches.push_back(ModeMatch{bi, bj,
                                        std::abs(estimated[bi].sigma - truth[bj].sigma),
                                        std::abs(estimated[bi].omega - truth[bj].omega)});
    }
    for (std::size_t i = 0; i < estimated.size(); ++i)
        if (!est_used[i]) cmp.spurious.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < truth.size(); ++j)
        if (!truth_used[j]) cmp.missing.push_back(static_cast<int>(j));
    return cmp;
}

}  // namespace ringdown
