#pragma once

#include <Eigen/Cholesky>
#include <functional>
#include <optional>
#include <utility>

#include "ringdown/attack.hpp"
#include "ringdown/prony.hpp"
#include "ringdown/trace.hpp"

namespace ringdown {

/// One local PDC: primal/dual iterates plus the cached factorization of
/// (H^T H + rho I). Changing rho rebuilds the cache.
struct EstimatorState {
    Vec a;
    Vec w;
    double rho = 0.0;
    Mat hth;
    Vec htc;
    Eigen::LLT<Mat> solve_cache;

    void init(const HankelBlock& block, double penalty) {
        require(penalty > 0.0 && std::isfinite(penalty), "EstimatorState: rho must be > 0");
        hth = block.H.transpose() * block.H;
        htc = block.H.transpose() * block.c;
        const int dim = block.cols();
        a = Vec::Zero(dim);
        w = Vec::Zero(dim);
        rho = penalty;
        rebuild();
    }

    void set_rho(double penalty) {
        require(penalty > 0.0 && std::isfinite(penalty), "EstimatorState: rho must be > 0");
        if (penalty == rho) return;
        rho = penalty;
        rebuild();
    }

    void rebuild() {
        Mat m = hth;
        m.diagonal().array() += rho;
        solve_cache.compute(m);
        require(solve_cache.info() == Eigen::Success, "EstimatorState: factorization failed");
    }

    int dim() const { return static_cast<int>(htc.size()); }
};

/// w <- w + rho (a - z).
inline void local_dual_update(EstimatorState& state, const Vec& z) {
    require(z.size() == state.w.size(), "local_dual_update: dimension mismatch");
    state.w += state.rho * (state.a - z);
}

/// a <- (H^T H + rho I)^{-1} (H^T c - w + rho z), through the cached factor.
inline void local_primal_update(EstimatorState& state, const Vec& z) {
    require(z.size() == state.htc.size(), "local_primal_update: dimension mismatch");
    state.a = state.solve_cache.solve(state.htc - state.w + state.rho * z);
}

/// z = mean of reported primals over the non-excluded senders. Requires
/// exactly one message from every non-excluded PDC.
inline Vec average_consensus(const std::vector<ConsensusMsg>& msgs, int n_pdcs,
                             const std::set<int>& excluded = {}) {
    require(!msgs.empty(), "average_consensus: no messages");
    std::vector<bool> seen(n_pdcs, false);
    Vec sum = Vec::Zero(msgs.front().a_reported.size());
    int count = 0;
    for (const auto& msg : msgs) {
        require(msg.sender >= 0 && msg.sender < n_pdcs, "average_consensus: bad sender");
        require(!seen[msg.sender], "average_consensus: duplicate sender");
        seen[msg.sender] = true;
        if (excluded.count(msg.sender)) continue;
        sum += msg.a_reported;
        ++count;
    }
    for (int i = 0; i < n_pdcs; ++i)
        require(seen[i] || excluded.count(i),
                "average_consensus: missing message from PDC " + std::to_string(i + 1));
    require(count > 0, "average_consensus: all PDCs excluded");
    return sum / static_cast<double>(count);
}

/// Round-robin schedule: optional per-period permutations (0-based PDC ids)
/// and the scaling constant alpha. Periods beyond the provided list use the
/// fixed order 1..N.
struct RoundOrder {
    std::vector<std::vector<int>> period_orders;
    double alpha = 1.0;

    void validate(int n_pdcs) const {
        require(alpha != 0.0 && std::isfinite(alpha), "RoundOrder: alpha must be nonzero");
        for (const auto& period : period_orders) {
            require(static_cast<int>(period.size()) == n_pdcs,
                    "RoundOrder: permutation length must equal N");
            std::vector<bool> seen(n_pdcs, false);
            for (int pdc : period) {
                require(pdc >= 0 && pdc < n_pdcs, "RoundOrder: index out of range");
                require(!seen[pdc], "RoundOrder: PDC repeated within a period");
                seen[pdc] = true;
            }
        }
    }

    std::vector<int> permutation(int period, int n_pdcs) const {
        if (period < static_cast<int>(period_orders.size())) return period_orders[period];
        std::vector<int> identity(n_pdcs);
        for (int i = 0; i < n_pdcs; ++i) identity[i] = i;
        return identity;
    }
};

/// z = alpha * a_reported of the PDC the schedule selects for relative
/// iteration rel_k (1-based since the RR switch). Returns {z, source}.
inline std::pair<Vec, int> rr_consensus(const std::vector<ConsensusMsg>& msgs, int rel_k,
                                        const RoundOrder& order, int n_pdcs) {
    require(rel_k >= 1, "rr_consensus: rel_k must be >= 1");
    const int period = (rel_k - 1) / n_pdcs;
    const int pos = (rel_k - 1) % n_pdcs;
    const int sel = order.permutation(period, n_pdcs).at(pos);
    for (const auto& msg : msgs)
        if (msg.sender == sel) return {order.alpha * msg.a_reported, sel};
    throw std::runtime_error("rr_consensus: selected PDC " + std::to_string(sel + 1) +
                             " has no message at rel iteration " + std::to_string(rel_k));
}

struct LoopOptions {
    Protocol protocol = Protocol::Average;
    RoundOrder order;
    std::optional<AttackSpec> attack;
    std::set<int> exclusions;
    std::set<std::pair<int, int>> drops;  // (pdc, iteration) messages that never arrive
    std::function<void(const SupervisorRecord&)> sink;
};

/// The iteration engine. One step runs the full cycle: primal update from the
/// last broadcast, transmission (with attack bias applied), aggregation,
/// broadcast, dual update. All PDCs keep running after mitigation; excluded
/// ones are simply ignored by the aggregation.
class ConsensusLoop {
  public:
    ConsensusLoop(const std::vector<HankelBlock>& blocks, double rho, LoopOptions opts = {})
        : opts_(std::move(opts)), rho_original_(rho) {
        require(!blocks.empty(), "ConsensusLoop: no blocks");
        states_.resize(blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) states_[i].init(blocks[i], rho);
        dim_ = states_.front().dim();
        for (const auto& s : states_)
            require(s.dim() == dim_, "ConsensusLoop: mismatched block dimensions");
        if (opts_.attack) opts_.attack->validate(n_pdcs());
        opts_.order.validate(n_pdcs());
        z_ = Vec::Zero(dim_);
        trace_.supervisor.n_pdcs = n_pdcs();
        trace_.supervisor.dim = dim_;
        if (opts_.protocol == Protocol::RoundRobin) rr_anchor_ = 1;
    }

    int n_pdcs() const { return static_cast<int>(states_.size()); }
    int dim() const { return dim_; }
    int iteration() const { return k_; }
    double rho() const { return states_.front().rho; }
    double original_rho() const { return rho_original_; }
    const Vec& z() const { return z_; }
    Protocol protocol() const { return opts_.protocol; }
    const std::set<int>& exclusions() const { return opts_.exclusions; }
    const FullTrace& trace() const { return trace_; }
    const SupervisorTrace& supervisor_view() const { return trace_.supervisor; }
    const EstimatorState& state(int pdc) const { return states_.at(pdc); }

    /// Switch aggregation to round-robin; the schedule restarts at position 1
    /// of the permutation on the next iteration.
    void switch_to_rr(RoundOrder order) {
        order.validate(n_pdcs());
        opts_.order = std::move(order);
        opts_.protocol = Protocol::RoundRobin;
        rr_anchor_ = k_ + 1;
        working_period_.clear();
    }

    void switch_to_average() { opts_.protocol = Protocol::Average; }

    /// Broadcast a new penalty factor to every PDC (honest and attacked alike).
    void set_rho(double rho) {
        for (auto& s : states_) s.set_rho(rho);
    }

    /// Excludes the identified PDCs from aggregation, reverts to averaging,
    /// resets the remaining duals to zero and restores the original rho. The
    /// next primal update then re-initializes from the last broadcast z.
    void mitigate(const std::set<int>& malicious) {
        require(static_cast<int>(malicious.size()) < n_pdcs(),
                "mitigate: cannot exclude every PDC");
        for (int pdc : malicious)
            require(pdc >= 0 && pdc < n_pdcs(), "mitigate: PDC index out of range");
        if (malicious.empty()) return;
        opts_.exclusions.insert(malicious.begin(), malicious.end());
        require(static_cast<int>(opts_.exclusions.size()) < n_pdcs(),
                "mitigate: cannot exclude every PDC");
        opts_.protocol = Protocol::Average;
        set_rho(rho_original_);
        for (int i = 0; i < n_pdcs(); ++i)
            if (!opts_.exclusions.count(i)) states_[i].w.setZero();
    }

    const SupervisorRecord& step() {
        const int k = ++k_;
        const int N = n_pdcs();

        for (auto& s : states_) local_primal_update(s, z_);

        std::vector<ConsensusMsg> msgs;
        std::vector<Vec> biases(N, Vec::Zero(dim_));
        msgs.reserve(N);
        for (int i = 0; i < N; ++i) {
            if (opts_.drops.count({i, k})) continue;
            ConsensusMsg msg{i, k, states_[i].a, prev_w_.empty() ? Vec(Vec::Zero(dim_))
                                                                 : prev_w_[i]};
            if (opts_.attack) {
                biases[i] = bias_at(*opts_.attack, i, k, dim_);
                msg = apply_attack(std::move(msg), *opts_.attack);
            }
            msgs.push_back(std::move(msg));
        }

        SupervisorRecord rec;
        rec.k = k;
        rec.protocol = opts_.protocol;
        rec.rho = states_.front().rho;
        rec.exclusions = opts_.exclusions;
        if (opts_.protocol == Protocol::Average) {
            z_ = average_consensus(msgs, N, opts_.exclusions);
        } else {
            const int rel = k - rr_anchor_ + 1;
            auto [z, source] = rr_select(msgs, rel);
            z_ = std::move(z);
            rec.rr_slot = rel;
            rec.rr_source = source;
        }
        rec.z = z_;

        for (auto& s : states_) local_dual_update(s, z_);

        rec.a_reported.resize(N, Vec::Zero(dim_));
        rec.w_reported.resize(N);
        for (const auto& msg : msgs) rec.a_reported[msg.sender] = msg.a_reported;
        TruthRecord truth;
        truth.a_true.resize(N);
        truth.w_true.resize(N);
        truth.bias = biases;
        for (int i = 0; i < N; ++i) {
            truth.a_true[i] = states_[i].a;
            truth.w_true[i] = states_[i].w;
            rec.w_reported[i] = states_[i].w;
            if (opts_.attack && opts_.attack->corrupt_dual)
                rec.w_reported[i] += bias_at(*opts_.attack, i, k, dim_);
        }
        prev_w_ = truth.w_true;  // messages carry the true dual; apply_attack corrupts

        trace_.supervisor.records.push_back(rec);
        trace_.truth.push_back(std::move(truth));
        if (opts_.sink) opts_.sink(trace_.supervisor.records.back());
        return trace_.supervisor.records.back();
    }

    void run(int iterations) {
        require(iterations >= 1, "ConsensusLoop: iterations must be >= 1");
        for (int i = 0; i < iterations; ++i) step();
    }

  private:
    // Selection with the missing-message fallback: a dropped PDC is swapped
    // with the next unvisited one in the current period's permutation.
    std::pair<Vec, int> rr_select(const std::vector<ConsensusMsg>& msgs, int rel) {
        const int N = n_pdcs();
        const int period = (rel - 1) / N;
        const int pos = (rel - 1) % N;
        if (pos == 0 || working_period_.empty() || period != working_period_index_) {
            working_period_ = opts_.order.permutation(period, N);
            working_period_index_ = period;
        }
        auto has_msg = [&](int pdc) {
            return std::any_of(msgs.begin(), msgs.end(),
                               [&](const ConsensusMsg& m) { return m.sender == pdc; });
        };
        if (!has_msg(working_period_[pos])) {
            int swap_with = -1;
            for (int q = pos + 1; q < N; ++q) {
                if (has_msg(working_period_[q])) {
                    swap_with = q;
                    break;
                }
            }
            require(swap_with >= 0, "rr_select: no message available for this slot");
            std::swap(working_period_[pos], working_period_[swap_with]);
        }
        const int sel = working_period_[pos];
        for (const auto& msg : msgs)
            if (msg.sender == sel) return {opts_.order.alpha * msg.a_reported, sel};
        throw std::runtime_error("rr_select: unreachable");
    }

    LoopOptions opts_;
    std::vector<EstimatorState> states_;
    std::vector<Vec> prev_w_;
    Vec z_;
    int dim_ = 0;
    int k_ = 0;
    int rr_anchor_ = 1;
    double rho_original_ = 0.0;
    std::vector<int> working_period_;
    int working_period_index_ = -1;
    FullTrace trace_;
};

/// Fixed-configuration driver around ConsensusLoop.
inline FullTrace run_loop(const std::vector<HankelBlock>& blocks, Protocol protocol,
                          const RoundOrder& order, int iterations,
                          const std::optional<AttackSpec>& attack = std::nullopt,
                          const std::set<int>& exclusions = {},
                          std::function<void(const SupervisorRecord&)> sink = nullptr,
                          double rho = 1e-6) {
    LoopOptions opts;
    opts.protocol = protocol;
    opts.order = order;
    opts.attack = attack;
    opts.exclusions = exclusions;
    opts.sink = std::move(sink);
    ConsensusLoop loop(blocks, rho, std::move(opts));
    loop.run(iterations);
    return loop.trace();
}

/// The averaging loop written as x^{k+1} = L x^k + [P; 0] d^k with
/// x^k = [a^k; a^{k-1}] stacked over PDCs. Every scalar row of L sums to 1.
struct StateModel {
    Mat L;       // 2 N dim square
    Mat P;       // N dim x dim, the stacked rho A_i blocks
    Vec a_first; // a^1 = A_i H^T c stacked; the recursion starts from [a^1; 0]
    int n_pdcs = 0;
    int dim = 0;
};

inline StateModel build_state_model(const std::vector<HankelBlock>& blocks, double rho) {
    require(!blocks.empty(), "build_state_model: no blocks");
    require(rho > 0.0, "build_state_model: rho must be > 0");
    const int N = static_cast<int>(blocks.size());
    const int d = blocks.front().cols();
    StateModel model;
    model.n_pdcs = N;
    model.dim = d;
    model.P.resize(N * d, d);
    model.a_first.resize(N * d);
    std::vector<Mat> rho_a(N);
    for (int i = 0; i < N; ++i) {
        require(blocks[i].cols() == d, "build_state_model: mismatched dimensions");
        Mat m = blocks[i].H.transpose() * blocks[i].H;
        m.diagonal().array() += rho;
        Eigen::LLT<Mat> llt(m);
        require(llt.info() == Eigen::Success, "build_state_model: factorization failed");
        const Mat a_inv = llt.solve(Mat::Identity(d, d));
        rho_a[i] = rho * a_inv;
        model.P.middleRows(i * d, d) = rho_a[i];
        model.a_first.segment(i * d, d) = a_inv * (blocks[i].H.transpose() * blocks[i].c);
    }
    model.L = Mat::Zero(2 * N * d, 2 * N * d);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            Mat block = (2.0 / N) * rho_a[i];
            if (i == j) block += Mat::Identity(d, d) - rho_a[i];
            model.L.block(i * d, j * d, d, d) = block;                    // L11
            model.L.block(i * d, (N + j) * d, d, d) = -rho_a[i] / N;      // L12
        }
        model.L.block((N + i) * d, i * d, d, d) = Mat::Identity(d, d);
    }
    return model;
}

/// Runs the state-variable recursion against an aggregate-bias sequence
/// (deltas[k-1] = average bias at iteration k) and returns the stacked a^k for
/// k = 1..iterations. The drive combines consecutive biases as 2 d^k - d^{k-1},
/// which reduces to the constant-bias form when the bias does not vary.
inline std::vector<Vec> state_model_trajectory(const StateModel& model,
                                               const std::vector<Vec>& deltas,
                                               int iterations) {
    const int nd = model.n_pdcs * model.dim;
    std::vector<Vec> out;
    out.reserve(iterations);
    Vec x = Vec::Zero(2 * nd);
    x.head(nd) = model.a_first;
    out.push_back(model.a_first);
    auto delta_at = [&](int k) -> Vec {
        if (k < 1 || k > static_cast<int>(deltas.size())) return Vec::Zero(model.dim);
        return deltas[k - 1];
    };
    for (int k = 1; k < iterations; ++k) {
        Vec drive = 2.0 * delta_at(k) - delta_at(k - 1);
        Vec next = model.L * x;
        next.head(nd) += model.P * drive;
        x = std::move(next);
        out.push_back(x.head(nd));
    }
    return out;
}

}  // namespace ringdown
