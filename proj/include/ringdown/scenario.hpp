#pragma once

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "ringdown/detection.hpp"

namespace ringdown {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario configuration. User-facing PDC ids and coordinate indices are
// 1-based (configs, reports, CSV); the in-process API is 0-based.
// ---------------------------------------------------------------------------

struct SignalConfig {
    std::vector<Mode> modes;
    int num_channels = 0;             // used with residue_seed
    std::uint64_t residue_seed = 0;
    double residue_mag_lo = 0.5;
    double residue_mag_hi = 1.5;
    double noise_std = 0.0;
    std::uint64_t noise_seed = 0;
    double sample_period = 0.05;
    int num_samples = 300;
    std::vector<ChannelSpec> explicit_channels;  // overrides the random draw

    SignalSpec build() const {
        SignalSpec spec;
        spec.modes = modes;
        spec.sample_period = sample_period;
        spec.num_samples = num_samples;
        spec.seed = noise_seed;
        spec.channels = explicit_channels.empty()
                            ? random_channels(num_channels, static_cast<int>(modes.size()),
                                              residue_mag_lo, residue_mag_hi, residue_seed,
                                              noise_std)
                            : explicit_channels;
        spec.validate();
        return spec;
    }
};

struct AdmmConfig {
    double rho = 1e-6;
    double rho_reduced = 1e-9;
    double alpha = 1.0;
    int iterations = 500;
    int fit_pairs = 0;  // 0: use the planted mode count
    int window = -1;    // ell; -1: use all data (M - 2n - 1)
    Protocol protocol = Protocol::Average;  // initial protocol for method "none"
    std::vector<std::vector<int>> rr_orders;  // 1-based in config, 0-based here
};

struct DetectionConfig {
    DetectionMethod method = DetectionMethod::None;
    int window = 5;  // s, consecutive confirmations
    double presence_tol = 1e-12;
    double dual_tol = 1e-12;
};

struct VerifyConfig {
    std::optional<bool> expect_presence;
    std::optional<std::set<int>> expect_identified;  // 0-based internally
    std::optional<bool> expect_confirmed;
    std::optional<std::set<int>> expect_wrong_or_unconfirmed;
    std::optional<int> confirmed_within;
    std::optional<double> max_mode_error;
    std::optional<double> convergence_rel_tol;
    std::optional<double> divergence_factor;
};

struct ScenarioConfig {
    std::string name;
    std::string description;
    SignalConfig signal;
    int areas = 1;
    PartitionPolicy policy = PartitionPolicy::Contiguous;
    AdmmConfig admm;
    std::optional<AttackSpec> attack;
    DetectionConfig detection;
    std::string output_dir = "out";
    std::string output_format = "csv";
    VerifyConfig verify;

    void validate() const {
        require(!name.empty(), "ScenarioConfig: name required");
        require(areas >= 1, "ScenarioConfig: areas must be >= 1");
        const int p = explicit_channel_count();
        require(areas <= p, "ScenarioConfig: more areas than channels");
        if (attack) attack->validate(areas);
        for (const auto& order : admm.rr_orders)
            require(static_cast<int>(order.size()) == areas,
                    "ScenarioConfig: rr order length must equal areas");
        require(admm.iterations >= 1, "ScenarioConfig: iterations must be >= 1");
    }

    int explicit_channel_count() const {
        return signal.explicit_channels.empty() ? signal.num_channels
                                                : static_cast<int>(signal.explicit_channels.size());
    }

    int fit_pairs() const {
        return admm.fit_pairs > 0 ? admm.fit_pairs : static_cast<int>(signal.modes.size());
    }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization, lossless round-trip. Configs may carry comments.
// ---------------------------------------------------------------------------

namespace detail {

inline json mode_to_json(const Mode& m) { return json{{"sigma", m.sigma}, {"omega", m.omega}}; }
inline Mode mode_from_json(const json& j) {
    return Mode{j.at("sigma").get<double>(), j.at("omega").get<double>()};
}

inline json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline Vec vec_from_json(const json& arr) {
    Vec v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<int>(i)) = arr[i].get<double>();
    return v;
}

inline json set_to_json_1based(const std::set<int>& s) {
    json arr = json::array();
    for (int v : s) arr.push_back(v + 1);
    return arr;
}

inline std::set<int> set_from_json_1based(const json& arr) {
    std::set<int> out;
    for (const auto& v : arr) out.insert(v.get<int>() - 1);
    return out;
}

}  // namespace detail

inline json to_json(const ScenarioConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    if (!cfg.description.empty()) j["description"] = cfg.description;
    json sig;
    sig["modes"] = json::array();
    for (const auto& m : cfg.signal.modes) sig["modes"].push_back(detail::mode_to_json(m));
    sig["sample_period"] = cfg.signal.sample_period;
    sig["num_samples"] = cfg.signal.num_samples;
    if (!cfg.signal.explicit_channels.empty()) {
        json chans = json::array();
        for (const auto& ch : cfg.signal.explicit_channels) {
            json c;
            c["noise_std"] = ch.noise_std;
            json res = json::array();
            for (const auto& r : ch.residues)
                res.push_back(json{{"mag", std::abs(r)}, {"phase", std::arg(r)}});
            c["residues"] = res;
            chans.push_back(c);
        }
        sig["channels"] = chans;
    } else {
        sig["num_channels"] = cfg.signal.num_channels;
        sig["residue_seed"] = cfg.signal.residue_seed;
        sig["residue_magnitude"] = json::array({cfg.signal.residue_mag_lo, cfg.signal.residue_mag_hi});
        sig["noise_std"] = cfg.signal.noise_std;
        sig["noise_seed"] = cfg.signal.noise_seed;
    }
    j["signal"] = sig;
    j["partition"] = json{{"areas", cfg.areas},
                          {"policy", cfg.policy == PartitionPolicy::Contiguous ? "contiguous"
                                                                               : "round-robin"}};
    json admm;
    admm["rho"] = cfg.admm.rho;
    admm["rho_reduced"] = cfg.admm.rho_reduced;
    admm["alpha"] = cfg.admm.alpha;
    admm["iterations"] = cfg.admm.iterations;
    if (cfg.admm.fit_pairs > 0) admm["fit_pairs"] = cfg.admm.fit_pairs;
    if (cfg.admm.window >= 0) admm["window"] = cfg.admm.window;
    admm["protocol"] = cfg.admm.protocol == Protocol::Average ? "average" : "rr";
    if (!cfg.admm.rr_orders.empty()) {
        json orders = json::array();
        for (const auto& order : cfg.admm.rr_orders) {
            json arr = json::array();
            for (int pdc : order) arr.push_back(pdc + 1);
            orders.push_back(arr);
        }
        admm["rr_orders"] = orders;
    }
    j["admm"] = admm;
    if (cfg.attack) {
        json atk;
        atk["attacked"] = detail::set_to_json_1based(cfg.attack->attacked);
        atk["start_iteration"] = cfg.attack->start_iteration;
        atk["corrupt_dual"] = cfg.attack->corrupt_dual;
        json gens;
        for (const auto& [pdc, gen] : cfg.attack->generators) {
            json g;
            g["kind"] = gen.kind == BiasKind::Constant  ? "constant"
                        : gen.kind == BiasKind::IidRandom ? "iid-random"
                                                          : "sparse";
            g["scale"] = gen.scale;
            if (gen.base.size() > 0) g["value"] = detail::vec_to_json(gen.base);
            if (!gen.support.empty()) g["support"] = gen.support;  // already 1-based
            if (gen.seed != 0) g["seed"] = gen.seed;
            gens[std::to_string(pdc + 1)] = g;
        }
        atk["generators"] = gens;
        j["attack"] = atk;
    }
    json det;
    det["method"] = method_name(cfg.detection.method);
    det["window"] = cfg.detection.window;
    det["presence_tol"] = cfg.detection.presence_tol;
    det["dual_tol"] = cfg.detection.dual_tol;
    j["detection"] = det;
    j["output"] = json{{"dir", cfg.output_dir}, {"format", cfg.output_format}};
    json ver;
    const auto& v = cfg.verify;
    if (v.expect_presence) ver["expect_presence"] = *v.expect_presence;
    if (v.expect_identified) ver["expect_identified"] = detail::set_to_json_1based(*v.expect_identified);
    if (v.expect_confirmed) ver["expect_confirmed"] = *v.expect_confirmed;
    if (v.expect_wrong_or_unconfirmed)
        ver["expect_wrong_or_unconfirmed"] = detail::set_to_json_1based(*v.expect_wrong_or_unconfirmed);
    if (v.confirmed_within) ver["confirmed_within"] = *v.confirmed_within;
    if (v.max_mode_error) ver["max_mode_error"] = *v.max_mode_error;
    if (v.convergence_rel_tol) ver["convergence_rel_tol"] = *v.convergence_rel_tol;
    if (v.divergence_factor) ver["divergence_factor"] = *v.divergence_factor;
    if (!ver.empty()) j["verify"] = ver;
    return j;
}

inline ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.description = j.value("description", "");
    const auto& sig = j.at("signal");
    for (const auto& m : sig.at("modes")) cfg.signal.modes.push_back(detail::mode_from_json(m));
    cfg.signal.sample_period = sig.at("sample_period").get<double>();
    cfg.signal.num_samples = sig.at("num_samples").get<int>();
    if (sig.contains("channels")) {
        for (const auto& c : sig.at("channels")) {
            ChannelSpec ch;
            ch.noise_std = c.value("noise_std", 0.0);
            for (const auto& r : c.at("residues"))
                ch.residues.push_back(
                    std::polar(r.at("mag").get<double>(), r.at("phase").get<double>()));
            cfg.signal.explicit_channels.push_back(std::move(ch));
        }
    } else {
        cfg.signal.num_channels = sig.at("num_channels").get<int>();
        cfg.signal.residue_seed = sig.value("residue_seed", 0ULL);
        if (sig.contains("residue_magnitude")) {
            cfg.signal.residue_mag_lo = sig["residue_magnitude"].at(0).get<double>();
            cfg.signal.residue_mag_hi = sig["residue_magnitude"].at(1).get<double>();
        }
        cfg.signal.noise_std = sig.value("noise_std", 0.0);
        cfg.signal.noise_seed = sig.value("noise_seed", 0ULL);
    }
    const auto& part = j.at("partition");
    cfg.areas = part.at("areas").get<int>();
    cfg.policy = part.value("policy", "contiguous") == std::string("round-robin")
                     ? PartitionPolicy::RoundRobin
                     : PartitionPolicy::Contiguous;
    if (j.contains("admm")) {
        const auto& admm = j.at("admm");
        cfg.admm.rho = admm.value("rho", 1e-6);
        cfg.admm.rho_reduced = admm.value("rho_reduced", 1e-9);
        cfg.admm.alpha = admm.value("alpha", 1.0);
        cfg.admm.iterations = admm.value("iterations", 500);
        cfg.admm.fit_pairs = admm.value("fit_pairs", 0);
        cfg.admm.window = admm.value("window", -1);
        cfg.admm.protocol = admm.value("protocol", "average") == std::string("rr")
                                ? Protocol::RoundRobin
                                : Protocol::Average;
        if (admm.contains("rr_orders")) {
            for (const auto& order : admm.at("rr_orders")) {
                std::vector<int> zero_based;
                for (const auto& pdc : order) zero_based.push_back(pdc.get<int>() - 1);
                cfg.admm.rr_orders.push_back(std::move(zero_based));
            }
        }
    }
    if (j.contains("attack")) {
        const auto& atk = j.at("attack");
        AttackSpec spec;
        spec.attacked = detail::set_from_json_1based(atk.at("attacked"));
        spec.start_iteration = atk.value("start_iteration", 1);
        spec.corrupt_dual = atk.value("corrupt_dual", false);
        for (const auto& [key, g] : atk.at("generators").items()) {
            BiasGenerator gen;
            const std::string kind = g.at("kind").get<std::string>();
            gen.kind = kind == "constant"     ? BiasKind::Constant
                       : kind == "iid-random" ? BiasKind::IidRandom
                                              : BiasKind::Sparse;
            gen.scale = g.value("scale", 0.0);
            if (g.contains("value")) gen.base = detail::vec_from_json(g.at("value"));
            if (g.contains("support")) gen.support = g.at("support").get<std::vector<int>>();
            gen.seed = g.value("seed", 0ULL);
            spec.generators[std::stoi(key) - 1] = std::move(gen);
        }
        cfg.attack = std::move(spec);
    }
    if (j.contains("detection")) {
        const auto& det = j.at("detection");
        const std::string m = det.value("method", "none");
        cfg.detection.method = m == "alg1"        ? DetectionMethod::Alg1
                               : m == "alg2"      ? DetectionMethod::Alg2
                               : m == "alg3"      ? DetectionMethod::Alg3
                               : m == "alg4"      ? DetectionMethod::Alg4
                               : m == "rr-random" ? DetectionMethod::RrRandom
                                                  : DetectionMethod::None;
        cfg.detection.window = det.value("window", 5);
        cfg.detection.presence_tol = det.value("presence_tol", 1e-12);
        cfg.detection.dual_tol = det.value("dual_tol", 1e-12);
    }
    if (j.contains("output")) {
        cfg.output_dir = j["output"].value("dir", "out");
        cfg.output_format = j["output"].value("format", "csv");
    }
    if (j.contains("verify")) {
        const auto& ver = j.at("verify");
        auto& v = cfg.verify;
        if (ver.contains("expect_presence")) v.expect_presence = ver["expect_presence"].get<bool>();
        if (ver.contains("expect_identified"))
            v.expect_identified = detail::set_from_json_1based(ver["expect_identified"]);
        if (ver.contains("expect_confirmed")) v.expect_confirmed = ver["expect_confirmed"].get<bool>();
        if (ver.contains("expect_wrong_or_unconfirmed"))
            v.expect_wrong_or_unconfirmed =
                detail::set_from_json_1based(ver["expect_wrong_or_unconfirmed"]);
        if (ver.contains("confirmed_within")) v.confirmed_within = ver["confirmed_within"].get<int>();
        if (ver.contains("max_mode_error")) v.max_mode_error = ver["max_mode_error"].get<double>();
        if (ver.contains("convergence_rel_tol"))
            v.convergence_rel_tol = ver["convergence_rel_tol"].get<double>();
        if (ver.contains("divergence_factor"))
            v.divergence_factor = ver["divergence_factor"].get<double>();
    }
    cfg.validate();
    return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_scenario: cannot open " + path);
    json j = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Run trace and scenario execution.
// ---------------------------------------------------------------------------

struct RunTrace {
    std::string scenario_name;
    int n_pdcs = 0;
    int dim = 0;
    std::vector<SupervisorRecord> records;
    DetectionReport report;
    int mitigation_at = -1;
    Vec final_z;
    std::vector<Mode> final_modes;
    std::vector<Mode> oracle_modes;
    std::vector<Mode> planted_modes;
    Vec oracle_solution;  // centralized LS over the non-excluded blocks, primal space
};

inline RunTrace run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    const SignalSpec sig_spec = cfg.signal.build();
    const RingdownSignal signal = synth_ringdown(sig_spec);
    const int p = signal.num_channels();
    const AreaPartition partition = partition_channels(p, cfg.areas, cfg.policy);
    const int pairs = cfg.fit_pairs();
    const int ell = cfg.admm.window >= 0 ? cfg.admm.window
                                         : signal.num_samples() - 2 * pairs - 1;
    const auto blocks = build_area_blocks(signal, partition, pairs, ell);

    LoopOptions opts;
    opts.protocol = cfg.detection.method == DetectionMethod::None ? cfg.admm.protocol
                                                                  : Protocol::Average;
    opts.order.alpha = cfg.admm.alpha;
    if (opts.protocol == Protocol::RoundRobin) opts.order.period_orders = cfg.admm.rr_orders;
    opts.attack = cfg.attack;
    ConsensusLoop loop(blocks, cfg.admm.rho, opts);

    RunTrace out;
    out.scenario_name = cfg.name;
    out.n_pdcs = cfg.areas;
    out.planted_modes = cfg.signal.modes;

    const int budget = cfg.admm.iterations;
    const int s = cfg.detection.window;
    DetectionReport report;
    report.method = cfg.detection.method;
    bool mitigated = false;

    auto maybe_mitigate = [&](const DetectionReport& r) {
        if (r.confirmed && !mitigated) {
            loop.mitigate(r.identified);
            mitigated = true;
            out.mitigation_at = loop.iteration();
            report = r;
        }
    };

    switch (cfg.detection.method) {
        case DetectionMethod::None: {
            loop.run(budget);
            break;
        }
        case DetectionMethod::Alg1: {
            while (loop.iteration() < budget) {
                loop.step();
                if (loop.iteration() >= 3 && !mitigated) {
                    auto r = identify_alg1(loop.supervisor_view(), s, cfg.detection.presence_tol);
                    maybe_mitigate(r);
                    if (!mitigated) report = r;
                }
            }
            break;
        }
        case DetectionMethod::Alg3: {
            report = identify_alg3(loop, cfg.admm.rho_reduced, s, budget,
                                   cfg.detection.presence_tol, /*apply_mitigation=*/true);
            if (report.confirmed) {
                mitigated = true;
                out.mitigation_at = loop.iteration();
            }
            while (loop.iteration() < budget) loop.step();
            break;
        }
        case DetectionMethod::Alg2:
        case DetectionMethod::Alg4:
        case DetectionMethod::RrRandom: {
            loop.step();
            loop.step();
            auto presence = detect_presence(loop.supervisor_view().at(1).w_reported,
                                            cfg.admm.rho, cfg.detection.presence_tol);
            report.presence = presence.flagged;
            report.presence_evidence = presence.mean_dual;
            if (presence.flagged) {
                RoundOrder order;
                order.alpha = cfg.admm.alpha;
                order.period_orders = cfg.admm.rr_orders;
                loop.switch_to_rr(order);
            }
            while (loop.iteration() < budget) {
                loop.step();
                if (!mitigated && presence.flagged) {
                    DetectionReport r;
                    if (cfg.detection.method == DetectionMethod::Alg2)
                        r = identify_alg2(loop.supervisor_view(), s, cfg.detection.presence_tol);
                    else if (cfg.detection.method == DetectionMethod::Alg4)
                        r = identify_alg4(loop.supervisor_view(), s, cfg.detection.dual_tol,
                                          cfg.detection.presence_tol);
                    else
                        r = identify_rr_random(loop.supervisor_view(), s,
                                               cfg.detection.presence_tol);
                    maybe_mitigate(r);
                    if (!mitigated) report = r;
                }
            }
            break;
        }
    }

    out.records = loop.supervisor_view().records;
    out.dim = loop.dim();
    if (cfg.detection.method != DetectionMethod::None && !out.records.empty() &&
        report.presence_evidence.size() == 0) {
        const auto presence = detect_presence(out.records.front().w_reported, cfg.admm.rho,
                                              cfg.detection.presence_tol);
        report.presence = presence.flagged;
        report.presence_evidence = presence.mean_dual;
    }
    out.report = report;
    out.final_z = loop.z();

    // Final mode estimates from the last broadcast; the oracle is the
    // centralized solve over the blocks still participating.
    std::vector<HankelBlock> active;
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i)
        if (!loop.exclusions().count(i)) active.push_back(blocks[i]);
    const auto oracle = centralized_ls(stack_blocks(active), 0.0);
    out.oracle_solution = -oracle.a;
    out.oracle_modes = to_continuous_modes(char_poly_roots(oracle), signal.sample_period);
    CharPolyCoeffs final_coeffs;
    final_coeffs.a = -out.final_z;
    if (final_coeffs.a.allFinite())
        out.final_modes = to_continuous_modes(char_poly_roots(final_coeffs),
                                              signal.sample_period);
    return out;
}

// ---------------------------------------------------------------------------
// Exports. CSV columns: iteration, pdc_id (or "supervisor"), variable
// ("a" | "w" | "z"), coordinate_index (1-based), value.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void export_trace_csv(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "export_trace_csv: cannot write " + path);
    out << "iteration,pdc_id,variable,coordinate_index,value\n";
    for (const auto& rec : trace.records) {
        for (int pdc = 0; pdc < trace.n_pdcs; ++pdc) {
            for (int c = 0; c < trace.dim; ++c)
                out << rec.k << ',' << pdc + 1 << ",a," << c + 1 << ','
                    << detail::fmt_double(rec.a_reported[pdc](c)) << '\n';
            for (int c = 0; c < trace.dim; ++c)
                out << rec.k << ',' << pdc + 1 << ",w," << c + 1 << ','
                    << detail::fmt_double(rec.w_reported[pdc](c)) << '\n';
        }
        for (int c = 0; c < trace.dim; ++c)
            out << rec.k << ",supervisor,z," << c + 1 << ','
                << detail::fmt_double(rec.z(c)) << '\n';
    }
    require(out.good(), "export_trace_csv: write failed for " + path);
}

inline json report_to_json(const DetectionReport& report) {
    json j;
    j["method"] = method_name(report.method);
    j["presence"] = report.presence;
    if (report.presence_evidence.size() > 0)
        j["presence_evidence"] = detail::vec_to_json(report.presence_evidence);
    j["identified_malicious"] = detail::set_to_json_1based(report.identified);
    j["confirmed"] = report.confirmed;
    j["confirmed_at_iteration"] = report.confirmed_at;
    json evidence = json::array();
    for (const auto& ev : report.evidence) {
        json e;
        e["k"] = ev.k;
        e["threshold"] = ev.threshold;
        if (!ev.values.empty()) e["values"] = ev.values;
        e["suspects"] = detail::set_to_json_1based(ev.suspects);
        if (ev.source >= 0) e["source"] = ev.source + 1;
        if (!ev.note.empty()) e["note"] = ev.note;
        evidence.push_back(e);
    }
    j["per_iteration_evidence"] = evidence;
    return j;
}

inline DetectionReport report_from_json(const json& j) {
    DetectionReport report;
    const std::string m = j.value("method", "none");
    report.method = m == "alg1"        ? DetectionMethod::Alg1
                    : m == "alg2"      ? DetectionMethod::Alg2
                    : m == "alg3"      ? DetectionMethod::Alg3
                    : m == "alg4"      ? DetectionMethod::Alg4
                    : m == "rr-random" ? DetectionMethod::RrRandom
                                       : DetectionMethod::None;
    report.presence = j.value("presence", false);
    if (j.contains("presence_evidence"))
        report.presence_evidence = detail::vec_from_json(j["presence_evidence"]);
    report.identified = detail::set_from_json_1based(j.value("identified_malicious", json::array()));
    report.confirmed = j.value("confirmed", false);
    report.confirmed_at = j.value("confirmed_at_iteration", -1);
    for (const auto& e : j.value("per_iteration_evidence", json::array())) {
        Evidence ev;
        ev.k = e.value("k", 0);
        ev.threshold = e.value("threshold", 0.0);
        if (e.contains("values")) ev.values = e["values"].get<std::vector<double>>();
        ev.suspects = detail::set_from_json_1based(e.value("suspects", json::array()));
        if (e.contains("source")) ev.source = e["source"].get<int>() - 1;
        ev.note = e.value("note", "");
        report.evidence.push_back(std::move(ev));
    }
    return report;
}

inline json modes_to_json(const std::vector<Mode>& modes) {
    json arr = json::array();
    for (const auto& m : modes) arr.push_back(detail::mode_to_json(m));
    return arr;
}

inline std::vector<Mode> modes_from_json(const json& arr) {
    std::vector<Mode> out;
    for (const auto& m : arr) out.push_back(detail::mode_from_json(m));
    return out;
}

inline json trace_to_json(const RunTrace& trace) {
    json j;
    j["scenario"] = trace.scenario_name;
    j["n_pdcs"] = trace.n_pdcs;
    j["dim"] = trace.dim;
    json records = json::array();
    for (const auto& rec : trace.records) {
        json r;
        r["k"] = rec.k;
        r["protocol"] = rec.protocol == Protocol::Average ? "average" : "rr";
        if (rec.rr_slot >= 0) r["rr_slot"] = rec.rr_slot;
        if (rec.rr_source >= 0) r["rr_source"] = rec.rr_source + 1;
        r["rho"] = rec.rho;
        json a = json::array(), w = json::array();
        for (const auto& v : rec.a_reported) a.push_back(detail::vec_to_json(v));
        for (const auto& v : rec.w_reported) w.push_back(detail::vec_to_json(v));
        r["a_reported"] = a;
        r["w_reported"] = w;
        r["z"] = detail::vec_to_json(rec.z);
        if (!rec.exclusions.empty()) r["exclusions"] = detail::set_to_json_1based(rec.exclusions);
        records.push_back(r);
    }
    j["records"] = records;
    j["report"] = report_to_json(trace.report);
    j["mitigation_at"] = trace.mitigation_at;
    j["final_z"] = detail::vec_to_json(trace.final_z);
    j["final_modes"] = modes_to_json(trace.final_modes);
    j["oracle_modes"] = modes_to_json(trace.oracle_modes);
    j["planted_modes"] = modes_to_json(trace.planted_modes);
    j["oracle_solution"] = detail::vec_to_json(trace.oracle_solution);
    return j;
}

inline RunTrace trace_from_json(const json& j) {
    RunTrace trace;
    trace.scenario_name = j.at("scenario").get<std::string>();
    trace.n_pdcs = j.at("n_pdcs").get<int>();
    trace.dim = j.at("dim").get<int>();
    for (const auto& r : j.at("records")) {
        SupervisorRecord rec;
        rec.k = r.at("k").get<int>();
        rec.protocol = r.value("protocol", "average") == std::string("rr")
                           ? Protocol::RoundRobin
                           : Protocol::Average;
        rec.rr_slot = r.value("rr_slot", -1);
        rec.rr_source = r.contains("rr_source") ? r["rr_source"].get<int>() - 1 : -1;
        rec.rho = r.value("rho", 0.0);
        for (const auto& v : r.at("a_reported")) rec.a_reported.push_back(detail::vec_from_json(v));
        for (const auto& v : r.at("w_reported")) rec.w_reported.push_back(detail::vec_from_json(v));
        rec.z = detail::vec_from_json(r.at("z"));
        if (r.contains("exclusions")) rec.exclusions = detail::set_from_json_1based(r["exclusions"]);
        trace.records.push_back(std::move(rec));
    }
    trace.report = report_from_json(j.at("report"));
    trace.mitigation_at = j.value("mitigation_at", -1);
    trace.final_z = detail::vec_from_json(j.at("final_z"));
    trace.final_modes = modes_from_json(j.at("final_modes"));
    trace.oracle_modes = modes_from_json(j.at("oracle_modes"));
    trace.planted_modes = modes_from_json(j.at("planted_modes"));
    trace.oracle_solution = detail::vec_from_json(j.at("oracle_solution"));
    return trace;
}

inline void export_trace_json(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "export_trace_json: cannot write " + path);
    out << trace_to_json(trace).dump(2) << '\n';
    require(out.good(), "export_trace_json: write failed for " + path);
}

inline RunTrace import_trace_json(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "import_trace_json: cannot open " + path);
    return trace_from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// Embedded acceptance assertions ("verify" block).
// ---------------------------------------------------------------------------

struct VerifyOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::vector<VerifyOutcome> verify_scenario(const ScenarioConfig& cfg,
                                                  const RunTrace& trace) {
    std::vector<VerifyOutcome> out;
    const auto& v = cfg.verify;
    auto add = [&](const std::string& name, bool ok, const std::string& detail) {
        out.push_back(VerifyOutcome{name, ok, detail});
    };
    auto set_str = [](const std::set<int>& s) {
        std::string str = "{";
        for (int x : s) str += std::to_string(x + 1) + ",";
        if (str.size() > 1) str.pop_back();
        return str + "}";
    };
    if (v.expect_presence)
        add("presence", trace.report.presence == *v.expect_presence,
            std::string("presence=") + (trace.report.presence ? "true" : "false"));
    if (v.expect_identified)
        add("identified", trace.report.confirmed && trace.report.identified == *v.expect_identified,
            "identified=" + set_str(trace.report.identified) +
                (trace.report.confirmed ? "" : " (unconfirmed)"));
    if (v.expect_confirmed)
        add("confirmed", trace.report.confirmed == *v.expect_confirmed,
            std::string("confirmed=") + (trace.report.confirmed ? "true" : "false"));
    if (v.expect_wrong_or_unconfirmed) {
        const bool exact = trace.report.confirmed &&
                           trace.report.identified == *v.expect_wrong_or_unconfirmed;
        add("wrong_or_unconfirmed", !exact,
            "identified=" + set_str(trace.report.identified) +
                (trace.report.confirmed ? " confirmed" : " unconfirmed"));
    }
    if (v.confirmed_within)
        add("confirmed_within",
            trace.report.confirmed && trace.report.confirmed_at <= *v.confirmed_within,
            "confirmed_at=" + std::to_string(trace.report.confirmed_at));
    if (v.max_mode_error) {
        const auto cmp = compare_modes(trace.final_modes, trace.planted_modes);
        const bool ok = cmp.missing.empty() && cmp.max_abs_error() <= *v.max_mode_error;
        add("mode_error", ok, "max_err=" + detail::fmt_double(cmp.max_abs_error()) +
                                  " missing=" + std::to_string(cmp.missing.size()));
    }
    if (v.convergence_rel_tol) {
        const double rel = (trace.final_z - trace.oracle_solution).norm() /
                           trace.oracle_solution.norm();
        add("convergence", rel < *v.convergence_rel_tol, "rel_err=" + detail::fmt_double(rel));
    }
    if (v.divergence_factor) {
        require(trace.records.size() >= 20, "verify: trace too short for divergence check");
        double early = 0.0, late = 0.0;
        for (int i = 0; i < 10; ++i) {
            early = std::max(early, trace.records[i].z.norm());
            late = std::max(late, trace.records[trace.records.size() - 1 - i].z.norm());
        }
        add("divergence", late > *v.divergence_factor * early,
            "early=" + detail::fmt_double(early) + " late=" + detail::fmt_double(late));
    }
    return out;
}

}  // namespace ringdown
