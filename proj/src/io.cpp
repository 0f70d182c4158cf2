#include "admitlab/io.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "admitlab/error.hpp"

namespace admitlab {

using nlohmann::json;

namespace {

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("malformed config: ") + e.what());
    }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("field '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, std::string(where) + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw Error(ErrorCode::SchemaError, "unknown field '" + key + "' in " + where);
    }
}

PrbsConfig parse_prbs(const json& j, PrbsConfig p) {
    reject_unknown(j, {"order", "f_max", "amplitude", "taps", "seed"}, "prbs");
    read_opt(j, "order", p.order);
    read_opt(j, "f_max", p.f_max);
    read_opt(j, "amplitude", p.amplitude);
    read_opt(j, "taps", p.taps);
    read_opt(j, "seed", p.seed);
    return p;
}

Interval parse_interval(const json& j, Interval iv) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::SchemaError, "intervals are [lo, hi] pairs");
    iv.lo = j[0].get<double>();
    iv.hi = j[1].get<double>();
    return iv;
}

std::FILE* open_for_write(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    return f;
}

void close_checked(std::FILE* f, const std::filesystem::path& path) {
    if (std::fclose(f) != 0) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelDescriptor parse_descriptor(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"structure", "params", "circuit", "op"}, "descriptor");
    ModelDescriptor d;
    if (!j.contains("structure")) throw Error(ErrorCode::SchemaError, "descriptor needs 'structure'");
    d.structure = parse_structure(j.at("structure").get<std::string>());

    const json params = j.value("params", json::object());
    if (mode_of(d.structure) == Mode::GFL) {
        reject_unknown(params, {"omega_p", "omega_q", "omega_v", "omega_n", "xi_n", "omega_cc", "delay",
                                "omega_lpf_vi", "omega_ff"}, "params");
        GflControlParams p;
        read_opt(params, "omega_p", p.omega_p);
        read_opt(params, "omega_q", p.omega_q);
        read_opt(params, "omega_v", p.omega_v);
        read_opt(params, "omega_n", p.omega_n);
        read_opt(params, "xi_n", p.xi_n);
        read_opt(params, "omega_cc", p.omega_cc);
        read_opt(params, "delay", p.delay);
        read_opt(params, "omega_lpf_vi", p.omega_lpf_vi);
        read_opt(params, "omega_ff", p.omega_ff);
        d.params = p;
    } else {
        reject_unknown(params, {"inertia_h", "damping_xi", "omega_f", "r_v", "omega_lpf", "omega_cc", "delay",
                                "omega_ff"}, "params");
        GfmControlParams p;
        read_opt(params, "inertia_h", p.inertia_h);
        read_opt(params, "damping_xi", p.damping_xi);
        read_opt(params, "omega_f", p.omega_f);
        read_opt(params, "r_v", p.r_v);
        read_opt(params, "omega_lpf", p.omega_lpf);
        read_opt(params, "omega_cc", p.omega_cc);
        read_opt(params, "delay", p.delay);
        read_opt(params, "omega_ff", p.omega_ff);
        d.params = p;
    }

    const json circuit = j.value("circuit", json::object());
    reject_unknown(circuit, {"preset", "scr", "l_filter", "r_filter", "l_grid", "r_grid"}, "circuit");
    if (circuit.contains("scr")) {
        d.circuit = CircuitParams::with_scr(circuit.at("scr").get<double>());
    } else {
        const std::string preset = circuit.value("preset", "table1");
        if (preset != "table1") throw Error(ErrorCode::SchemaError, "unknown circuit preset '" + preset + "'");
        d.circuit = CircuitParams::table1();
    }
    read_opt(circuit, "l_filter", d.circuit.l_filter);
    read_opt(circuit, "r_filter", d.circuit.r_filter);
    read_opt(circuit, "l_grid", d.circuit.l_grid);
    read_opt(circuit, "r_grid", d.circuit.r_grid);

    const json op = j.value("op", json::object());
    reject_unknown(op, {"p", "q", "v"}, "op");
    read_opt(op, "p", d.op.p);
    read_opt(op, "q", d.op.q);
    read_opt(op, "v", d.op.v);
    return d;
}

ModelDescriptor load_descriptor(const std::filesystem::path& path) {
    return parse_descriptor(read_text_file(path));
}

MeasurementConfig parse_measurement_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"dt", "periods_discard", "periods_average", "injection_mode", "prbs_d", "prbs_q",
                       "prbs_slow", "prbs_mid", "slow_dt_factor", "stitch_hz", "mid_stitch_hz", "f_min_hz",
                       "f_max_hz", "auto_settle",
                       "network"},
                   "measurement config");
    MeasurementConfig c;
    read_opt(j, "dt", c.dt);
    read_opt(j, "periods_discard", c.periods_discard);
    read_opt(j, "periods_average", c.periods_average);
    if (j.contains("injection_mode")) {
        const std::string m = j.at("injection_mode").get<std::string>();
        if (m == "shunt_current") {
            c.injection_mode = InjectionMode::ShuntCurrent;
        } else if (m == "series_voltage") {
            c.injection_mode = InjectionMode::SeriesVoltage;
        } else {
            throw Error(ErrorCode::SchemaError, "unknown injection_mode '" + m + "'");
        }
    }
    if (j.contains("prbs_d")) c.prbs_d = parse_prbs(j.at("prbs_d"), c.prbs_d);
    if (j.contains("prbs_q")) c.prbs_q = parse_prbs(j.at("prbs_q"), c.prbs_q);
    if (j.contains("prbs_slow")) c.prbs_slow = parse_prbs(j.at("prbs_slow"), c.prbs_slow);
    if (j.contains("prbs_mid")) c.prbs_mid = parse_prbs(j.at("prbs_mid"), c.prbs_mid);
    read_opt(j, "slow_dt_factor", c.slow_dt_factor);
    read_opt(j, "stitch_hz", c.stitch_hz);
    read_opt(j, "mid_stitch_hz", c.mid_stitch_hz);
    read_opt(j, "f_min_hz", c.f_min_hz);
    read_opt(j, "f_max_hz", c.f_max_hz);
    read_opt(j, "auto_settle", c.auto_settle);
    if (j.contains("network")) {
        const json& n = j.at("network");
        reject_unknown(n, {"c_pcc", "g_pcc"}, "network");
        read_opt(n, "c_pcc", c.network.c_pcc);
        read_opt(n, "g_pcc", c.network.g_pcc);
    }
    return c;
}

SamplingSpec parse_sampling_spec(const std::string& json_text, std::uint64_t seed) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"counts", "gfl", "gfm", "op", "scr", "grid"}, "sampling spec");
    SamplingSpec s = SamplingSpec::default_pool(seed);
    s.count(StructureId::viGFL) = 2500;
    if (j.contains("counts")) {
        s.counts = {};
        const json& c = j.at("counts");
        if (!c.is_object()) throw Error(ErrorCode::SchemaError, "counts must map structure names to integers");
        for (const auto& [name, v] : c.items()) s.count(parse_structure(name)) = v.get<int>();
    }
    if (j.contains("gfl")) {
        const json& g = j.at("gfl");
        reject_unknown(g, {"omega_p", "omega_q", "omega_v", "omega_n", "omega_cc", "delay"}, "gfl");
        if (g.contains("omega_p")) s.gfl.omega_p = parse_interval(g["omega_p"], s.gfl.omega_p);
        if (g.contains("omega_q")) s.gfl.omega_q = parse_interval(g["omega_q"], s.gfl.omega_q);
        if (g.contains("omega_v")) s.gfl.omega_v = parse_interval(g["omega_v"], s.gfl.omega_v);
        if (g.contains("omega_n")) s.gfl.omega_n = parse_interval(g["omega_n"], s.gfl.omega_n);
        if (g.contains("omega_cc")) s.gfl.omega_cc = parse_interval(g["omega_cc"], s.gfl.omega_cc);
        if (g.contains("delay")) s.gfl.delay = parse_interval(g["delay"], s.gfl.delay);
    }
    if (j.contains("gfm")) {
        const json& g = j.at("gfm");
        reject_unknown(g, {"inertia_h", "damping_xi", "omega_cc", "delay"}, "gfm");
        if (g.contains("inertia_h")) s.gfm.inertia_h = parse_interval(g["inertia_h"], s.gfm.inertia_h);
        if (g.contains("damping_xi")) s.gfm.damping_xi = parse_interval(g["damping_xi"], s.gfm.damping_xi);
        if (g.contains("omega_cc")) s.gfm.omega_cc = parse_interval(g["omega_cc"], s.gfm.omega_cc);
        if (g.contains("delay")) s.gfm.delay = parse_interval(g["delay"], s.gfm.delay);
    }
    if (j.contains("op")) {
        const json& o = j.at("op");
        reject_unknown(o, {"p", "q", "v"}, "op");
        if (o.contains("p")) s.op.p = parse_interval(o["p"], s.op.p);
        if (o.contains("q")) s.op.q = parse_interval(o["q"], s.op.q);
        if (o.contains("v")) s.op.v = parse_interval(o["v"], s.op.v);
    }
    if (j.contains("scr")) s.circuit = CircuitParams::with_scr(j.at("scr").get<double>());
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        reject_unknown(g, {"f_lo", "f_hi", "points"}, "grid");
        s.grid = log_grid(g.value("f_lo", 1.0), g.value("f_hi", 1000.0), g.value("points", 100));
    }
    return s;
}

Hyperparams parse_hyperparams(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"lr_max_iter", "lr_rate", "dt_max_depth", "rf_n_trees", "rf_max_depth", "knn_k", "svm_c",
                       "svm_epochs", "gbt_rounds", "gbt_depth", "gbt_shrinkage", "gbt_lambda", "nbc_var_floor",
                       "max_bins"},
                   "hyperparameters");
    Hyperparams h;
    read_opt(j, "lr_max_iter", h.lr_max_iter);
    read_opt(j, "lr_rate", h.lr_rate);
    read_opt(j, "dt_max_depth", h.dt_max_depth);
    read_opt(j, "rf_n_trees", h.rf_n_trees);
    read_opt(j, "rf_max_depth", h.rf_max_depth);
    read_opt(j, "knn_k", h.knn_k);
    read_opt(j, "svm_c", h.svm_c);
    read_opt(j, "svm_epochs", h.svm_epochs);
    read_opt(j, "gbt_rounds", h.gbt_rounds);
    read_opt(j, "gbt_depth", h.gbt_depth);
    read_opt(j, "gbt_shrinkage", h.gbt_shrinkage);
    read_opt(j, "gbt_lambda", h.gbt_lambda);
    read_opt(j, "nbc_var_floor", h.nbc_var_floor);
    read_opt(j, "max_bins", h.max_bins);
    h.validate();
    return h;
}

void write_bode(const AdmittanceSpectrum& s, const std::filesystem::path& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "freq_hz,mag_dd,phase_dd_deg,mag_dq,phase_dq_deg,mag_qd,phase_qd_deg,mag_qq,phase_qq_deg\n");
    constexpr double kDeg = 180.0 / std::numbers::pi;
    for (std::size_t k = 0; k < s.frequencies.size(); ++k) {
        const ComplexMatrix2& y = s.entries[k];
        std::fprintf(f, "%.17g", s.frequencies[k]);
        for (const cplx& v : {y.dd, y.dq, y.qd, y.qq}) std::fprintf(f, ",%.17g,%.17g", std::abs(v), std::arg(v) * kDeg);
        std::fprintf(f, "\n");
    }
    close_checked(f, path);
}

void write_admittance(const AdmittanceSpectrum& s, const std::filesystem::path& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "freq_hz,re_ydd,im_ydd,re_ydq,im_ydq,re_yqd,im_yqd,re_yqq,im_yqq\n");
    for (std::size_t k = 0; k < s.frequencies.size(); ++k) {
        const ComplexMatrix2& y = s.entries[k];
        std::fprintf(f, "%.17g", s.frequencies[k]);
        for (const cplx& v : {y.dd, y.dq, y.qd, y.qq}) std::fprintf(f, ",%.17g,%.17g", v.real(), v.imag());
        std::fprintf(f, "\n");
    }
    close_checked(f, path);
}

std::string validation_to_json(const ValidationReport& r, const std::vector<double>& dropped) {
    nlohmann::ordered_json j;
    j["band_hz"] = {r.band_lo_hz, r.band_hi_hz};
    j["tol_mag_db"] = r.tol_mag_db;
    j["tol_phase_deg"] = r.tol_phase_deg;
    j["bins_checked"] = r.bins.size();
    j["pass_fraction"] = r.pass_fraction;
    j["passed"] = r.passed;
    j["dropped_hz"] = dropped;
    auto& bins = j["bins"] = nlohmann::ordered_json::array();
    for (const BinCheck& b : r.bins) {
        bins.push_back({{"freq_hz", b.frequency},
                        {"dd_mag_err_db", b.dd_mag_err_db},
                        {"dd_phase_err_deg", b.dd_phase_err_deg},
                        {"qq_mag_err_db", b.qq_mag_err_db},
                        {"qq_phase_err_deg", b.qq_phase_err_deg},
                        {"pass", b.pass}});
    }
    return j.dump(2);
}

}  // namespace admitlab
