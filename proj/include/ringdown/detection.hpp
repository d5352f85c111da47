#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>

#include "ringdown/admm.hpp"
#include "ringdown/trace.hpp"

namespace ringdown {

enum class DetectionMethod { None, Alg1, Alg2, Alg3, Alg4, RrRandom };

inline const char* method_name(DetectionMethod m) {
    switch (m) {
        case DetectionMethod::None: return "none";
        case DetectionMethod::Alg1: return "alg1";
        case DetectionMethod::Alg2: return "alg2";
        case DetectionMethod::Alg3: return "alg3";
        case DetectionMethod::Alg4: return "alg4";
        case DetectionMethod::RrRandom: return "rr-random";
    }
    return "unknown";
}

struct PresenceResult {
    bool flagged = false;
    Vec mean_dual;      // (1/N) sum of the reported duals; equals -rho Delta^1 under attack
    Vec implied_delta;  // -mean_dual / rho
};

/// Presence check on the duals of iteration 1: the mean is exactly zero for an
/// honest system under zero initialization and -rho Delta^1 otherwise.
inline PresenceResult detect_presence(const std::vector<Vec>& w_msgs, double rho,
                                      double tol = 1e-12) {
    require(!w_msgs.empty(), "detect_presence: no dual messages");
    require(rho > 0.0, "detect_presence: rho must be > 0");
    Vec mean = Vec::Zero(w_msgs.front().size());
    for (const auto& w : w_msgs) {
        require(w.size() == mean.size(), "detect_presence: dimension mismatch");
        mean += w;
    }
    mean /= static_cast<double>(w_msgs.size());
    PresenceResult out;
    out.mean_dual = mean;
    out.implied_delta = -mean / rho;
    out.flagged = mean.lpNorm<Eigen::Infinity>() > tol;
    return out;
}

/// gamma_a = min{ (max-min)/N , N (min2-min) } over the reported-estimate norms.
inline double threshold_gamma_a(const std::vector<double>& norms, int N) {
    require(N >= 2, "threshold_gamma_a: need at least two estimators");
    require(static_cast<int>(norms.size()) == N, "threshold_gamma_a: norms size mismatch");
    std::vector<double> sorted = norms;
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front(), lo2 = sorted[1], hi = sorted.back();
    return std::min((hi - lo) / N, N * (lo2 - lo));
}

struct GroupingResult {
    std::vector<std::vector<int>> groups;     // partition of 0..N-1, ascending by norm
    std::vector<double> representative_norms; // per-group minimum norm
    int unbiased_group = 0;                   // group containing the global minimum

    std::set<int> suspects() const {
        std::set<int> out;
        for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
            if (g == unbiased_group) continue;
            out.insert(groups[g].begin(), groups[g].end());
        }
        return out;
    }
};

/// Transitive closure of |n_i - n_j| <= gamma: on sorted norms this is exactly
/// the chain of consecutive gaps <= gamma.
inline GroupingResult group_estimates(const std::vector<double>& norms, double gamma) {
    require(gamma >= 0.0, "group_estimates: gamma must be >= 0");
    require(!norms.empty(), "group_estimates: empty norms");
    const int N = static_cast<int>(norms.size());
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return norms[i] != norms[j] ? norms[i] < norms[j] : i < j; });
    GroupingResult result;
    std::vector<int> current{order[0]};
    for (int idx = 1; idx < N; ++idx) {
        if (norms[order[idx]] - norms[order[idx - 1]] <= gamma) {
            current.push_back(order[idx]);
        } else {
            result.groups.push_back(current);
            current = {order[idx]};
        }
    }
    result.groups.push_back(current);
    for (auto& group : result.groups) {
        result.representative_norms.push_back(norms[group.front()]);
        std::sort(group.begin(), group.end());
    }
    const int global_min = order.front();
    for (int g = 0; g < static_cast<int>(result.groups.size()); ++g)
        if (std::count(result.groups[g].begin(), result.groups[g].end(), global_min))
            result.unbiased_group = g;
    return result;
}

struct Evidence {
    int k = 0;
    double threshold = 0.0;
    std::vector<double> values;  // norms (alg1/2) or dual-difference magnitudes (alg4)
    std::set<int> suspects;      // 0-based
    int source = -1;             // RR source PDC where applicable
    std::string note;
};

struct DetectionReport {
    DetectionMethod method = DetectionMethod::None;
    bool presence = false;
    Vec presence_evidence;
    std::set<int> identified;  // 0-based PDC indices
    bool confirmed = false;
    int confirmed_at = -1;  // iteration of confirmation
    std::vector<Evidence> evidence;
};

namespace detail {

// A report never accuses the whole fleet; the standing assumption is at least
// one honest PDC.
inline void finalize_identified(DetectionReport& report, const std::set<int>& suspects,
                                int n_pdcs, int confirmed_at) {
    if (!suspects.empty() && static_cast<int>(suspects.size()) < n_pdcs) {
        report.identified = suspects;
        report.confirmed = true;
        report.confirmed_at = confirmed_at;
    } else {
        report.confirmed = false;
        report.identified.clear();
        report.evidence.push_back(
            Evidence{confirmed_at, 0.0, {}, suspects, -1,
                     suspects.empty() ? "no suspects isolated" : "all PDCs implicated"});
    }
}

inline bool presence_gate(const SupervisorTrace& trace, double tol,
                          DetectionReport& report) {
    if (trace.records.empty()) return false;
    const auto& first = trace.records.front();
    if (first.protocol != Protocol::Average) {
        report.presence = true;  // trace starts mid-identification; gate already passed
        return true;
    }
    auto presence = detect_presence(first.w_reported, first.rho, tol);
    report.presence = presence.flagged;
    report.presence_evidence = presence.mean_dual;
    return presence.flagged;
}

// The contiguous round-robin run the identification algorithms operate on.
inline std::vector<const SupervisorRecord*> rr_segment(const SupervisorTrace& trace) {
    std::vector<const SupervisorRecord*> seg;
    for (const auto& rec : trace.records) {
        if (rec.protocol == Protocol::RoundRobin) {
            if (!seg.empty() && rec.rr_slot != seg.back()->rr_slot + 1) seg.clear();
            if (rec.rr_slot == 1) seg.clear();
            seg.push_back(&rec);
        }
    }
    return seg;
}

}  // namespace detail

/// Algorithm 1: group the reported-estimate norms at every iteration k > 2 and
/// confirm once the suspect set is identical for s consecutive iterations.
inline DetectionReport identify_alg1(const SupervisorTrace& trace, int s,
                                     double presence_tol = 1e-12) {
    require(s >= 1, "identify_alg1: s must be >= 1");
    DetectionReport report;
    report.method = DetectionMethod::Alg1;
    if (!detail::presence_gate(trace, presence_tol, report)) return report;

    const int N = trace.n_pdcs;
    std::set<int> run_set;
    int run_len = 0;
    for (const auto& rec : trace.records) {
        if (rec.k <= 2) continue;
        std::vector<double> norms(N);
        for (int i = 0; i < N; ++i) norms[i] = rec.a_reported[i].norm();
        const double gamma = threshold_gamma_a(norms, N);
        const auto grouping = group_estimates(norms, gamma);
        const auto suspects = grouping.suspects();
        report.evidence.push_back(Evidence{rec.k, gamma, norms, suspects, -1, ""});
        if (!suspects.empty() && suspects == run_set) {
            ++run_len;
        } else {
            run_set = suspects;
            run_len = suspects.empty() ? 0 : 1;
        }
        if (run_len >= s) {
            detail::finalize_identified(report, run_set, N, rec.k);
            return report;
        }
    }
    return report;  // unconfirmed; evidence retained, no guess
}

// A gamma_z at or below the heterogeneity-noise scale of a flat trace means
// the loop is not diverging; thresholding against it would flag noise. The
// floor is relative to the base norm.
inline constexpr double kGammaZFloor = 1e-6;

/// Algorithm 2 (fixed round-robin order): k_min is the argmin of ||z|| over
/// the first period; each repetition r uses base k_min + rN and threshold
/// gamma_z = ||z^{base+N}|| - ||z^{base}||, flagging slots that exceed it.
inline DetectionReport identify_alg2(const SupervisorTrace& trace, int s,
                                     double presence_tol = 1e-12) {
    require(s >= 1, "identify_alg2: s must be >= 1");
    DetectionReport report;
    report.method = DetectionMethod::Alg2;
    if (!detail::presence_gate(trace, presence_tol, report)) return report;

    const int N = trace.n_pdcs;
    const auto seg = detail::rr_segment(trace);
    if (static_cast<int>(seg.size()) < N + 1) {
        report.evidence.push_back(Evidence{0, 0, {}, {}, -1, "insufficient RR trace"});
        return report;
    }
    std::vector<double> zn(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) zn[i] = seg[i]->z.norm();

    int kmin = 0;  // 0-based index into the segment
    for (int i = 1; i < N; ++i)
        if (zn[i] < zn[kmin]) kmin = i;

    std::optional<std::set<int>> agreed;
    for (int rep = 0; rep < s; ++rep) {
        const int base = kmin + rep * N;
        const int probe = base + N;
        if (probe >= static_cast<int>(seg.size())) {
            report.evidence.push_back(Evidence{0, 0, {}, {}, -1, "insufficient RR trace"});
            return report;
        }
        const double gamma_z = zn[probe] - zn[base];
        Evidence ev;
        ev.k = seg[probe]->k;
        ev.threshold = gamma_z;
        if (gamma_z < 0.0) {
            ev.note = "gamma_z negative: trace not divergent";
            report.evidence.push_back(ev);
            return report;  // unconfirmed
        }
        if (gamma_z <= kGammaZFloor * std::max(1.0, zn[base])) {
            ev.note = "gamma_z below the significance floor: trace not divergent";
            report.evidence.push_back(ev);
            return report;
        }
        std::set<int> flags;
        for (int i = base; i < base + N; ++i) {
            ev.values.push_back(zn[i]);
            if (zn[i] > zn[base] + gamma_z) flags.insert(i % N);  // slot -> PDC, fixed order
        }
        ev.suspects = flags;
        report.evidence.push_back(std::move(ev));
        if (agreed && *agreed != flags) {
            report.evidence.push_back(Evidence{seg[probe]->k, gamma_z, {}, flags, -1,
                                               "suspect set changed between periods"});
            return report;
        }
        agreed = flags;
    }
    detail::finalize_identified(report, *agreed, N, seg[kmin + s * N]->k);
    return report;
}

/// Random-order round-robin variant: windows are period-aligned; the base of
/// window r is the slot fed by the same PDC that produced the first-period
/// minimum, located through the order log.
inline DetectionReport identify_rr_random(const SupervisorTrace& trace, int s,
                                          double presence_tol = 1e-12) {
    require(s >= 1, "identify_rr_random: s must be >= 1");
    DetectionReport report;
    report.method = DetectionMethod::RrRandom;
    if (!detail::presence_gate(trace, presence_tol, report)) return report;

    const int N = trace.n_pdcs;
    const auto seg = detail::rr_segment(trace);
    if (static_cast<int>(seg.size()) < N + 1) {
        report.evidence.push_back(Evidence{0, 0, {}, {}, -1, "insufficient RR trace"});
        return report;
    }
    std::vector<double> zn(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) zn[i] = seg[i]->z.norm();

    int kmin = 0;
    for (int i = 1; i < N; ++i)
        if (zn[i] < zn[kmin]) kmin = i;
    const int m = seg[kmin]->rr_source;

    auto slot_of = [&](int pdc, int period) -> int {
        for (int i = period * N; i < (period + 1) * N && i < static_cast<int>(seg.size()); ++i)
            if (seg[i]->rr_source == pdc) return i;
        return -1;
    };

    std::optional<std::set<int>> agreed;
    int last_probe = kmin;
    for (int rep = 0; rep < s; ++rep) {
        const int base = rep == 0 ? kmin : slot_of(m, rep);
        const int probe = slot_of(m, rep + 1);
        if (base < 0 || probe < 0) {
            report.evidence.push_back(Evidence{0, 0, {}, {}, m, "insufficient RR trace"});
            return report;
        }
        const double gamma_z = zn[probe] - zn[base];
        Evidence ev;
        ev.k = seg[probe]->k;
        ev.threshold = gamma_z;
        ev.source = m;
        if (gamma_z < 0.0) {
            ev.note = "gamma_z negative: trace not divergent";
            report.evidence.push_back(ev);
            return report;
        }
        if (gamma_z <= kGammaZFloor * std::max(1.0, zn[base])) {
            ev.note = "gamma_z below the significance floor: trace not divergent";
            report.evidence.push_back(ev);
            return report;
        }
        std::set<int> flags;
        for (int i = rep * N; i < (rep + 1) * N; ++i) {
            ev.values.push_back(zn[i]);
            if (zn[i] > zn[base] + gamma_z) flags.insert(seg[i]->rr_source);
        }
        ev.suspects = flags;
        report.evidence.push_back(std::move(ev));
        if (agreed && *agreed != flags) {
            report.evidence.push_back(
                Evidence{seg[probe]->k, gamma_z, {}, flags, m, "suspect set changed"});
            return report;
        }
        agreed = flags;
        last_probe = probe;
    }
    detail::finalize_identified(report, *agreed, N, seg[last_probe]->k);
    return report;
}

/// Algorithm 4: element-wise dual differences under round-robin. At the slot
/// serving PDC i the difference w_i^k - w_i^{k-1} equals -rho Delta_i^k; an
/// honest PDC's difference is exactly zero. The check starts at the second RR
/// iteration and one sweep completes once every PDC has a verdict.
inline DetectionReport identify_alg4(const SupervisorTrace& trace, int s,
                                     double tol_scale = 1e-12,
                                     double presence_tol = 1e-12) {
    require(s >= 1, "identify_alg4: s must be >= 1");
    DetectionReport report;
    report.method = DetectionMethod::Alg4;
    if (!detail::presence_gate(trace, presence_tol, report)) return report;

    const int N = trace.n_pdcs;
    const auto seg = detail::rr_segment(trace);
    if (seg.empty()) {
        report.evidence.push_back(Evidence{0, 0, {}, {}, -1, "no RR trace"});
        return report;
    }

    std::vector<int> verdict_count(N, 0);
    std::vector<bool> verdict_flagged(N, false);
    int sweeps_done = 0;
    std::optional<std::set<int>> agreed;
    for (std::size_t idx = 1; idx < seg.size(); ++idx) {
        const auto& rec = *seg[idx];
        const auto& prev = *seg[idx - 1];
        const int pdc = rec.rr_source;
        const Vec diff = rec.w_reported[pdc] - prev.w_reported[pdc];
        const double mag = diff.lpNorm<Eigen::Infinity>();
        const double tol =
            tol_scale * std::max(1.0, rec.w_reported[pdc].lpNorm<Eigen::Infinity>());
        const bool flagged = mag > tol;
        verdict_flagged[pdc] = flagged;
        ++verdict_count[pdc];
        report.evidence.push_back(
            Evidence{rec.k, tol, {mag}, flagged ? std::set<int>{pdc} : std::set<int>{}, pdc, ""});

        const int min_count = *std::min_element(verdict_count.begin(), verdict_count.end());
        if (min_count > sweeps_done) {
            ++sweeps_done;
            std::set<int> suspects;
            for (int i = 0; i < N; ++i)
                if (verdict_flagged[i]) suspects.insert(i);
            if (agreed && *agreed != suspects) {
                report.evidence.push_back(
                    Evidence{rec.k, 0, {}, suspects, -1, "suspect set changed between sweeps"});
                return report;
            }
            agreed = suspects;
            if (sweeps_done >= s) {
                detail::finalize_identified(report, suspects, N, rec.k);
                return report;
            }
        }
    }
    report.evidence.push_back(Evidence{0, 0, {}, {}, -1, "not enough dual messages"});
    return report;
}

/// Algorithm 3 driver: detect presence on the running loop, broadcast the
/// reduced penalty, group until s consecutive consistent suspect sets, then
/// mitigate (which also restores the original rho). The loop is left running
/// for the caller to continue.
inline DetectionReport identify_alg3(ConsensusLoop& loop, double rho_reduced, int s,
                                     int budget, double presence_tol = 1e-12,
                                     bool apply_mitigation = true) {
    require(s >= 1, "identify_alg3: s must be >= 1");
    require(loop.iteration() == 0, "identify_alg3: expects a fresh loop");
    DetectionReport report;
    report.method = DetectionMethod::Alg3;

    loop.step();
    loop.step();
    auto presence = detect_presence(loop.supervisor_view().at(1).w_reported, loop.rho(),
                                    presence_tol);
    report.presence = presence.flagged;
    report.presence_evidence = presence.mean_dual;
    if (!presence.flagged) return report;

    loop.set_rho(rho_reduced);
    const int N = loop.n_pdcs();
    std::set<int> run_set;
    int run_len = 0;
    while (loop.iteration() < budget) {
        const auto& rec = loop.step();
        std::vector<double> norms(N);
        for (int i = 0; i < N; ++i) norms[i] = rec.a_reported[i].norm();
        const double gamma = threshold_gamma_a(norms, N);
        const auto suspects = group_estimates(norms, gamma).suspects();
        report.evidence.push_back(Evidence{rec.k, gamma, norms, suspects, -1, ""});
        if (!suspects.empty() && suspects == run_set) {
            ++run_len;
        } else {
            run_set = suspects;
            run_len = suspects.empty() ? 0 : 1;
        }
        if (run_len >= s) {
            detail::finalize_identified(report, run_set, N, rec.k);
            if (report.confirmed && apply_mitigation) loop.mitigate(report.identified);
            return report;
        }
    }
    return report;
}

/// Mitigation handoff (Algorithm 1 step 6 / Algorithm 4 step 7): exclude the
/// identified PDCs, revert to averaging, reset the remaining duals, restore rho.
inline void mitigate(ConsensusLoop& loop, const std::set<int>& malicious) {
    loop.mitigate(malicious);
}

}  // namespace ringdown
