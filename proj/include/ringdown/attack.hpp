#pragma once

#include <map>
#include <set>

#include "ringdown/rng.hpp"
#include "ringdown/trace.hpp"
#include "ringdown/types.hpp"

namespace ringdown {

enum class BiasKind { Constant, IidRandom, Sparse };

/// Bias generator for one compromised PDC.
///  - Constant: `base` if non-empty, else scale * ones.
///  - IidRandom: fresh seeded draw per iteration, entries scale * U[0,1).
///  - Sparse: zero outside `support`; supported entries from `base` (matched
///    by position in `support`) or `scale` when base is empty. Support indices
///    are 1-based coordinates.
struct BiasGenerator {
    BiasKind kind = BiasKind::Constant;
    double scale = 0.0;
    Vec base;                  // optional explicit vector (Constant/Sparse)
    std::vector<int> support;  // Sparse only, 1-based coordinate indices
    std::uint64_t seed = 0;

    Vec generate(int pdc, int iteration, int dim) const {
        switch (kind) {
            case BiasKind::Constant: {
                if (base.size() > 0) {
                    require(base.size() == dim, "BiasGenerator: base dimension mismatch");
                    return base;
                }
                return Vec::Constant(dim, scale);
            }
            case BiasKind::IidRandom: {
                Xoshiro256ss rng(seed_mix({seed, static_cast<std::uint64_t>(pdc),
                                           static_cast<std::uint64_t>(iteration)}));
                Vec v(dim);
                for (int i = 0; i < dim; ++i) v(i) = scale * rng.uniform();
                return v;
            }
            case BiasKind::Sparse: {
                Vec v = Vec::Zero(dim);
                require(!support.empty(), "BiasGenerator: sparse kind needs a support set");
                for (std::size_t j = 0; j < support.size(); ++j) {
                    const int coord = support[j] - 1;
                    require(coord >= 0 && coord < dim,
                            "BiasGenerator: sparse coordinate out of range");
                    v(coord) = base.size() > 0 ? base(static_cast<int>(j)) : scale;
                }
                return v;
            }
        }
        return Vec::Zero(dim);
    }
};

/// Which PDCs are compromised and how their outgoing messages are corrupted.
struct AttackSpec {
    std::set<int> attacked;  // 0-based PDC indices
    std::map<int, BiasGenerator> generators;
    int start_iteration = 1;
    bool corrupt_dual = false;

    void validate(int n_pdcs) const {
        require(static_cast<int>(attacked.size()) < n_pdcs,
                "AttackSpec: at least one PDC must remain unattacked");
        for (int pdc : attacked) {
            require(pdc >= 0 && pdc < n_pdcs, "AttackSpec: attacked index out of range");
            require(generators.count(pdc) > 0, "AttackSpec: attacked PDC has no generator");
        }
    }
};

/// Bias injected by `pdc` at iteration k; zero for honest PDCs and before the
/// start iteration. Pure and reproducible per (seed, pdc, k).
inline Vec bias_at(const AttackSpec& spec, int pdc, int iteration, int dim) {
    if (spec.attacked.count(pdc) == 0 || iteration < spec.start_iteration)
        return Vec::Zero(dim);
    return spec.generators.at(pdc).generate(pdc, iteration, dim);
}

/// Corrupts an outgoing message. The reported dual is falsified (same additive
/// bias, indexed by the dual's own iteration) only when corrupt_dual is set.
inline ConsensusMsg apply_attack(ConsensusMsg msg, const AttackSpec& spec) {
    const int dim = static_cast<int>(msg.a_reported.size());
    msg.a_reported += bias_at(spec, msg.sender, msg.iteration, dim);
    if (spec.corrupt_dual && msg.w_reported.size() > 0)
        msg.w_reported += bias_at(spec, msg.sender, msg.iteration - 1, dim);
    return msg;
}

/// Per-iteration verdicts for the localization guarantees. Evaluated with the
/// stated mix of Euclidean and max norms on the unbiased estimates; this is a
/// diagnostic over ground truth, the supervisor never runs it.
struct BiasRequirementResult {
    int k = 0;
    bool separation_vs_range = false;   // attacked-vs-honest gap beats range/N
    bool separation_vs_gap = false;     // attacked-vs-honest gap beats N*(min2-min)
    bool honest_cohesion = false;       // honest pairs stay within threshold
};

inline std::vector<BiasRequirementResult> check_bias_requirements(const FullTrace& trace,
                                                                  const AttackSpec& spec) {
    std::vector<BiasRequirementResult> out;
    const int N = trace.supervisor.n_pdcs;
    for (std::size_t idx = 0; idx < trace.truth.size(); ++idx) {
        const auto& truth = trace.truth[idx];
        BiasRequirementResult res;
        res.k = trace.supervisor.records[idx].k;

        std::vector<double> norms(N);
        for (int i = 0; i < N; ++i) norms[i] = truth.a_true[i].norm();
        std::vector<double> sorted_norms = norms;
        std::sort(sorted_norms.begin(), sorted_norms.end());
        const double nmin = sorted_norms.front();
        const double nmin2 = N >= 2 ? sorted_norms[1] : nmin;
        const double nmax = sorted_norms.back();

        double delta_max = 0.0;
        bool any_bias = false;
        for (int i : spec.attacked) {
            const double d = truth.bias[i].lpNorm<Eigen::Infinity>();
            delta_max = std::max(delta_max, d);
            any_bias = any_bias || d > 0.0;
        }

        if (any_bias) {
            bool r1 = true, r2 = true;
            for (int i : spec.attacked) {
                const double di = truth.bias[i].lpNorm<Eigen::Infinity>();
                const double ai_inf = truth.a_true[i].lpNorm<Eigen::Infinity>();
                for (int j = 0; j < N; ++j) {
                    if (spec.attacked.count(j)) continue;
                    const double aj = norms[j];
                    r1 = r1 && (di - delta_max / N > (nmax - nmin) / N + aj - ai_inf);
                    r2 = r2 && (di > N * (nmin2 - nmin) + aj - ai_inf);
                }
            }
            res.separation_vs_range = r1;
            res.separation_vs_gap = r2;
            bool r3 = true;
            const double amax_inf = [&] {
                double m = 0.0;
                for (int i = 0; i < N; ++i)
                    m = std::max(m, truth.a_true[i].lpNorm<Eigen::Infinity>());
                return m;
            }();
            for (int i = 0; i < N; ++i) {
                if (spec.attacked.count(i)) continue;
                for (int j = 0; j < N; ++j) {
                    if (j == i || spec.attacked.count(j)) continue;
                    r3 = r3 && (delta_max > N * (norms[i] - norms[j]) + nmin - amax_inf);
                }
            }
            res.honest_cohesion = r3;
        }
        out.push_back(res);
    }
    return out;
}

}  // namespace ringdown
