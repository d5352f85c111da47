#include <catch2/catch_amalgamated.hpp>

#include "ringdown/admm.hpp"
#include "ringdown/detection.hpp"

using namespace ringdown;

namespace {

const std::vector<Mode> kDetModes = {{0.3, 1.4}, {0.35, 2.9}, {0.45, 4.4}, {0.4, 5.9}};

std::vector<HankelBlock> det_blocks(int p = 15, int areas = 5, std::uint64_t seed = 11) {
    SignalSpec spec;
    spec.modes = kDetModes;
    spec.channels = random_channels(p, 4, 0.5, 1.5, seed);
    spec.sample_period = 0.45;
    spec.num_samples = 140;
    auto sig = synth_ringdown(spec);
    auto part = partition_channels(p, areas, PartitionPolicy::Contiguous);
    return build_area_blocks(sig, part, 4, spec.num_samples - 9);
}

HankelBlock random_block(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    Xoshiro256ss rng(seed_mix({seed}));
    HankelBlock block;
    block.H.resize(rows, cols);
    block.c.resize(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) block.H(i, j) = scale * rng.uniform(-1.0, 1.0);
        block.c(i) = scale * rng.uniform(-1.0, 1.0);
    }
    return block;
}

AttackSpec constant_attack(double d2, double d3) {
    AttackSpec spec;
    spec.attacked = {1, 2};
    spec.generators[1] = BiasGenerator{BiasKind::Constant, d2};
    spec.generators[2] = BiasGenerator{BiasKind::Constant, d3};
    return spec;
}

}  // namespace

TEST_CASE("local dual update") {
    EstimatorState state;
    state.init(random_block(6, 4, 1), 1e-6);
    SECTION("a equal to z leaves w unchanged") {
        state.a = Vec::Ones(4);
        const Vec w_before = state.w;
        local_dual_update(state, Vec::Ones(4));
        REQUIRE(state.w == w_before);
    }
    SECTION("one multiply") {
        state.a = Vec::Ones(4);
        local_dual_update(state, Vec::Zero(4));
        REQUIRE((state.w - Vec::Constant(4, 1e-6)).norm() == 0.0);
    }
    SECTION("dimension mismatch rejected") {
        REQUIRE_THROWS_AS(local_dual_update(state, Vec::Zero(3)), std::invalid_argument);
    }
}

TEST_CASE("local primal update") {
    HankelBlock zero;
    zero.H = Mat::Zero(4, 3);
    zero.c = Vec::Zero(4);
    EstimatorState state;
    state.init(zero, 0.25);
    SECTION("zero data copies the broadcast") {
        Vec z(3);
        z << 1.0, -2.0, 3.0;
        local_primal_update(state, z);
        REQUIRE((state.a - z).lpNorm<Eigen::Infinity>() < 1e-14);
    }
    SECTION("w equal to rho z cancels the broadcast") {
        Vec z(3);
        z << 1.0, -2.0, 3.0;
        state.w = 0.25 * z;
        local_primal_update(state, z);
        REQUIRE(state.a.lpNorm<Eigen::Infinity>() < 1e-14);
    }
    SECTION("matches the explicit normal equations") {
        EstimatorState s2;
        const auto block = random_block(6, 4, 9);
        s2.init(block, 1e-6);
        s2.w = Vec::Constant(4, 0.3);
        Vec z = Vec::Constant(4, -0.7);
        local_primal_update(s2, z);
        const Mat normal = block.H.transpose() * block.H + 1e-6 * Mat::Identity(4, 4);
        const Vec expected =
            normal.ldlt().solve(block.H.transpose() * block.c - s2.w + 1e-6 * z);
        REQUIRE((s2.a - expected).norm() / expected.norm() < 1e-10);
    }
    SECTION("rho change rebuilds the cache") {
        EstimatorState s2;
        s2.init(random_block(6, 4, 10), 1e-6);
        local_primal_update(s2, Vec::Zero(4));
        const Vec at_small = s2.a;
        s2.set_rho(10.0);
        local_primal_update(s2, Vec::Zero(4));
        REQUIRE(s2.a != at_small);
        REQUIRE_THROWS_AS(s2.set_rho(0.0), std::invalid_argument);
    }
}

TEST_CASE("average consensus") {
    const Vec v = Vec::Ones(3);
    SECTION("identical reports average to themselves") {
        std::vector<ConsensusMsg> msgs{{0, 1, v, {}}, {1, 1, v, {}}};
        REQUIRE(average_consensus(msgs, 2) == v);
    }
    SECTION("opposite reports cancel") {
        std::vector<ConsensusMsg> msgs{{0, 1, v, {}}, {1, 1, Vec(-v), {}}};
        REQUIRE(average_consensus(msgs, 2) == Vec::Zero(3));
    }
    SECTION("missing and duplicate senders rejected") {
        std::vector<ConsensusMsg> missing{{0, 1, v, {}}};
        REQUIRE_THROWS_AS(average_consensus(missing, 2), std::invalid_argument);
        std::vector<ConsensusMsg> dup{{0, 1, v, {}}, {0, 1, v, {}}};
        REQUIRE_THROWS_AS(average_consensus(dup, 2), std::invalid_argument);
    }
    SECTION("exclusions shrink the denominator") {
        std::vector<ConsensusMsg> msgs{{0, 1, v, {}}, {1, 1, Vec(3.0 * v), {}},
                                       {2, 1, Vec(5.0 * v), {}}};
        REQUIRE(average_consensus(msgs, 3, {1}) == 3.0 * v);
    }
}

TEST_CASE("round-robin consensus") {
    std::vector<ConsensusMsg> msgs;
    for (int i = 0; i < 5; ++i)
        msgs.push_back({i, 1, Vec::Constant(2, static_cast<double>(i + 1)), {}});
    SECTION("first slot selects PDC 1 under the fixed order") {
        RoundOrder order;
        auto [z, src] = rr_consensus(msgs, 1, order, 5);
        REQUIRE(src == 0);
        REQUIRE(z == Vec::Constant(2, 1.0));
    }
    SECTION("permuted period: iteration 5 selects the third PDC") {
        RoundOrder order;
        order.alpha = 0.9;
        order.period_orders = {{0, 1, 3, 4, 2}, {2, 1, 4, 3, 0}, {1, 4, 3, 0, 2}};
        auto [z, src] = rr_consensus(msgs, 5, order, 5);
        REQUIRE(src == 2);  // PDC 3, 1-based
        REQUIRE((z - 0.9 * Vec::Constant(2, 3.0)).norm() == 0.0);
    }
    SECTION("unbiased report passes through scaled by alpha") {
        RoundOrder order;
        order.alpha = 0.9;
        auto [z, src] = rr_consensus(msgs, 2, order, 5);
        REQUIRE(z == 0.9 * msgs[1].a_reported);
    }
}

TEST_CASE("no-attack loop converges to the centralized oracle") {
    auto blocks = det_blocks();
    const Vec astar = -centralized_ls(stack_blocks(blocks)).a;
    ConsensusLoop loop(blocks, 1e-6, {});
    loop.run(20);
    REQUIRE((loop.z() - astar).norm() / astar.norm() < 1e-6);
    // the first-iteration dual average is exactly zero with no attack
    auto presence = detect_presence(loop.supervisor_view().at(1).w_reported, 1e-6);
    REQUIRE_FALSE(presence.flagged);
}

TEST_CASE("two honest PDCs with equal initialization keep a zero dual average") {
    auto b = random_block(8, 3, 21);
    std::vector<HankelBlock> blocks{b, b};
    ConsensusLoop loop(blocks, 0.5, {});
    loop.step();
    const auto& rec = loop.supervisor_view().at(1);
    Vec mean = (rec.w_reported[0] + rec.w_reported[1]) / 2.0;
    REQUIRE(mean.lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("excluding the attacked set converges to the reduced oracle") {
    auto blocks = det_blocks();
    LoopOptions opts;
    opts.attack = constant_attack(5.0, 7.0);
    opts.exclusions = {1, 2};
    ConsensusLoop loop(blocks, 1e-6, opts);
    loop.run(30);
    std::vector<HankelBlock> honest{blocks[0], blocks[3], blocks[4]};
    const Vec reduced = -centralized_ls(stack_blocks(honest)).a;
    REQUIRE((loop.z() - reduced).norm() / reduced.norm() < 1e-6);
}

TEST_CASE("persistent random biases destabilize plain averaging") {
    SignalSpec spec;
    spec.modes = {{0.32557, 2.2262}, {0.31429, 3.2505}, {0.43118, 3.5809}, {0.43011, 4.9836}};
    spec.channels = random_channels(15, 4, 0.5, 1.5, 7);
    spec.sample_period = 0.1;
    spec.num_samples = 300;
    auto sig = synth_ringdown(spec);
    auto part = partition_channels(15, 5, PartitionPolicy::Contiguous);
    auto blocks = build_area_blocks(sig, part, 6, 300 - 13);  // over-parameterized fit
    LoopOptions opts;
    AttackSpec attack;
    attack.attacked = {1, 2};
    BiasGenerator gen;
    gen.kind = BiasKind::IidRandom;
    gen.scale = 1.0;
    gen.seed = 7;
    attack.generators[1] = gen;
    attack.generators[2] = gen;
    opts.attack = attack;
    ConsensusLoop loop(blocks, 1e-6, opts);
    double early = 0.0;
    for (int k = 0; k < 100; ++k) {
        loop.step();
        if (k < 10) early = std::max(early, loop.z().norm());
    }
    REQUIRE(loop.z().norm() > 10.0 * early);
}

TEST_CASE("missing message swaps the slot with the next available PDC") {
    auto blocks = det_blocks(10, 5, 3);
    LoopOptions opts;
    opts.protocol = Protocol::RoundRobin;
    opts.drops = {{0, 1}};  // PDC 1's very first message never arrives
    ConsensusLoop loop(blocks, 1e-6, opts);
    const auto& rec = loop.step();
    REQUIRE(rec.rr_source == 1);  // swapped in PDC 2
    const auto& rec2 = loop.step();
    REQUIRE(rec2.rr_source == 0);  // PDC 1 now occupies the swapped position
}

TEST_CASE("state model rows sum to one and reproduce the loop") {
    std::vector<HankelBlock> blocks{random_block(6, 4, 41), random_block(6, 4, 42),
                                    random_block(6, 4, 43)};
    const double rho = 0.4;
    auto model = build_state_model(blocks, rho);

    SECTION("every scalar row of L sums to 1") {
        const Vec row_sums = model.L.rowwise().sum();
        REQUIRE((row_sums - Vec::Ones(row_sums.size())).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    auto run_and_compare = [&](const std::optional<AttackSpec>& attack) {
        const int iters = 10;
        LoopOptions opts;
        opts.attack = attack;
        ConsensusLoop loop(blocks, rho, opts);
        loop.run(iters);
        std::vector<Vec> deltas;
        for (int k = 1; k <= iters; ++k) {
            Vec mean = Vec::Zero(4);
            if (attack)
                for (int i : attack->attacked) mean += bias_at(*attack, i, k, 4);
            deltas.push_back(mean / 3.0);
        }
        auto traj = state_model_trajectory(model, deltas, iters);
        double worst = 0.0;
        for (int k = 1; k <= iters; ++k) {
            const auto& truth = loop.trace().truth[k - 1];
            for (int i = 0; i < 3; ++i)
                worst = std::max(worst, (traj[k - 1].segment(4 * i, 4) - truth.a_true[i])
                                            .lpNorm<Eigen::Infinity>());
        }
        return worst;
    };

    SECTION("zero-bias trajectories agree and stay bounded") {
        REQUIRE(run_and_compare(std::nullopt) < 1e-9);
        auto traj = state_model_trajectory(model, {}, 40);
        double peak = 0.0;
        for (const auto& x : traj) peak = std::max(peak, x.lpNorm<Eigen::Infinity>());
        REQUIRE(peak < 10.0 * traj.front().lpNorm<Eigen::Infinity>() + 10.0);
    }
    SECTION("constant-bias trajectories agree") {
        AttackSpec attack;
        attack.attacked = {1};
        attack.generators[1] = BiasGenerator{BiasKind::Constant, 0.8};
        REQUIRE(run_and_compare(attack) < 1e-9);
    }
    SECTION("time-varying bias trajectories agree") {
        AttackSpec attack;
        attack.attacked = {1};
        BiasGenerator gen;
        gen.kind = BiasKind::IidRandom;
        gen.scale = 1.5;
        gen.seed = 4242;
        attack.generators[1] = gen;
        REQUIRE(run_and_compare(attack) < 1e-9);
    }
}

TEST_CASE("identical blocks make RR and averaging coincide") {
    auto b = random_block(8, 3, 55);
    std::vector<HankelBlock> blocks(5, b);
    ConsensusLoop avg(blocks, 1e-6, {});
    LoopOptions rr_opts;
    rr_opts.protocol = Protocol::RoundRobin;  // alpha defaults to 1
    ConsensusLoop rr(blocks, 1e-6, rr_opts);
    for (int k = 0; k < 50; ++k) {
        avg.step();
        rr.step();
        REQUIRE((avg.z() - rr.z()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("heterogeneous blocks drive the two protocols apart immediately") {
    std::vector<HankelBlock> blocks;
    for (int i = 0; i < 4; ++i) blocks.push_back(random_block(8, 3, 60 + i));
    ConsensusLoop avg(blocks, 1e-6, {});
    LoopOptions rr_opts;
    rr_opts.protocol = Protocol::RoundRobin;
    ConsensusLoop rr(blocks, 1e-6, rr_opts);
    double max_gap = 0.0;
    for (int k = 0; k < 5; ++k) {
        avg.step();
        rr.step();
        max_gap = std::max(max_gap, (avg.z() - rr.z()).norm());
    }
    REQUIRE(max_gap > 1e-9);
}

TEST_CASE("mitigation reconfigures the loop") {
    auto blocks = det_blocks();
    LoopOptions opts;
    opts.attack = constant_attack(5.0, 7.0);
    ConsensusLoop loop(blocks, 1e-6, opts);
    loop.run(3);
    SECTION("excluding all PDCs is rejected") {
        REQUIRE_THROWS_AS(loop.mitigate({0, 1, 2, 3, 4}), std::invalid_argument);
    }
    SECTION("empty exclusion is a no-op") {
        loop.mitigate({});
        REQUIRE(loop.exclusions().empty());
    }
    SECTION("excluded PDCs drop out of the average and duals reset") {
        loop.mitigate({1, 2});
        const auto& rec = loop.step();
        Vec manual = (rec.a_reported[0] + rec.a_reported[3] + rec.a_reported[4]) / 3.0;
        REQUIRE((rec.z - manual).lpNorm<Eigen::Infinity>() == 0.0);
        loop.run(25);
        std::vector<HankelBlock> honest{blocks[0], blocks[3], blocks[4]};
        const Vec reduced = -centralized_ls(stack_blocks(honest)).a;
        REQUIRE((loop.z() - reduced).norm() / reduced.norm() < 1e-6);
    }
}

TEST_CASE("run_loop driver records the requested schedule") {
    auto blocks = det_blocks(10, 5, 3);
    std::vector<int> seen;
    auto trace = run_loop(blocks, Protocol::Average, RoundOrder{}, 6, std::nullopt, {},
                          [&](const SupervisorRecord& rec) { seen.push_back(rec.k); });
    REQUIRE(trace.supervisor.iterations() == 6);
    REQUIRE(seen == std::vector<int>{1, 2, 3, 4, 5, 6});
    for (const auto& rec : trace.supervisor.records) {
        REQUIRE(rec.protocol == Protocol::Average);
        REQUIRE(static_cast<int>(rec.a_reported.size()) == 5);
    }
}
