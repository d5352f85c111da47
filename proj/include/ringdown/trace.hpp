#pragma once

#include <set>

#include "ringdown/types.hpp"

namespace ringdown {

enum class Protocol { Average, RoundRobin };

/// What the central PDC can see of one iteration: reported primals, reported
/// duals (indexed by the iteration they belong to; physically they arrive one
/// round later), the consensus broadcast, and the active protocol.
struct SupervisorRecord {
    int k = 0;  // 1-based iteration
    Protocol protocol = Protocol::Average;
    int rr_slot = -1;    // 1-based position since the RR switch, -1 when averaging
    int rr_source = -1;  // 0-based PDC whose estimate fed z, -1 when averaging
    double rho = 0.0;
    std::vector<Vec> a_reported;
    std::vector<Vec> w_reported;
    Vec z;
    std::set<int> exclusions;
};

struct SupervisorTrace {
    int n_pdcs = 0;
    int dim = 0;
    std::vector<SupervisorRecord> records;

    const SupervisorRecord& at(int k) const { return records.at(k - 1); }
    int iterations() const { return static_cast<int>(records.size()); }
};

/// Ground-truth extension used only by tests and the bias-requirement check;
/// never exported and never visible to the detection algorithms.
struct TruthRecord {
    std::vector<Vec> a_true;
    std::vector<Vec> w_true;
    std::vector<Vec> bias;
};

struct FullTrace {
    SupervisorTrace supervisor;
    std::vector<TruthRecord> truth;  // parallel to supervisor.records
};

}  // namespace ringdown
