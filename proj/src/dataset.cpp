#include "admitlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "admitlab/error.hpp"
#include "admitlab/parallel.hpp"
#include "admitlab/rng.hpp"

namespace admitlab {

using nlohmann::json;

namespace {

constexpr std::uint64_t kParamStream = 0x70617261ull;  // "para"
constexpr std::uint64_t kOpStream = 0x6f700000ull;     // "op"

void check_interval(const Interval& iv, const char* name) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi) {
        throw Error(ErrorCode::ParamOutOfRange, std::string("bad sampling interval for ") + name);
    }
}

std::size_t find_frequency(const std::vector<double>& freqs, double f) {
    const double tol = 1e-9 * std::max(1.0, std::abs(f));
    const auto it = std::lower_bound(freqs.begin(), freqs.end(), f - tol);
    if (it == freqs.end() || std::abs(*it - f) > tol) {
        std::ostringstream msg;
        msg << "spectrum has no bin at " << f << " Hz";
        throw Error(ErrorCode::MissingFrequency, msg.str());
    }
    return static_cast<std::size_t>(it - freqs.begin());
}

// Unwrapped from the top of the grid down. Every structure approaches the passive filter
// there, so the anchor sits near -90 deg and never straddles the +-180 deg cut.
std::vector<double> unwrapped_deg(const std::vector<cplx>& values) {
    std::vector<double> out(values.size());
    double prev = 0.0;
    for (std::size_t j = values.size(); j-- > 0;) {
        double ph = std::arg(values[j]);
        if (j + 1 < values.size()) {
            ph += 2.0 * std::numbers::pi * std::round((prev - ph) / (2.0 * std::numbers::pi));
        }
        prev = ph;
        out[j] = ph * 180.0 / std::numbers::pi;
    }
    return out;
}

json params_to_json(const ControlParams& p) {
    if (const auto* g = std::get_if<GflControlParams>(&p)) {
        return {{"kind", "GFL"},         {"omega_p", g->omega_p},   {"omega_q", g->omega_q},
                {"omega_v", g->omega_v}, {"omega_n", g->omega_n},   {"xi_n", g->xi_n},
                {"omega_cc", g->omega_cc}, {"delay", g->delay},     {"omega_lpf_vi", g->omega_lpf_vi},
                {"omega_ff", g->omega_ff}};
    }
    const auto& g = std::get<GfmControlParams>(p);
    return {{"kind", "GFM"},           {"inertia_h", g.inertia_h}, {"damping_xi", g.damping_xi},
            {"omega_f", g.omega_f},    {"r_v", g.r_v},             {"omega_lpf", g.omega_lpf},
            {"omega_cc", g.omega_cc},  {"delay", g.delay},         {"omega_ff", g.omega_ff}};
}

ControlParams params_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "GFL") {
        GflControlParams g;
        g.omega_p = j.at("omega_p");
        g.omega_q = j.at("omega_q");
        g.omega_v = j.at("omega_v");
        g.omega_n = j.at("omega_n");
        g.xi_n = j.at("xi_n");
        g.omega_cc = j.at("omega_cc");
        g.delay = j.at("delay");
        g.omega_lpf_vi = j.at("omega_lpf_vi");
        g.omega_ff = j.at("omega_ff");
        return g;
    }
    if (kind == "GFM") {
        GfmControlParams g;
        g.inertia_h = j.at("inertia_h");
        g.damping_xi = j.at("damping_xi");
        g.omega_f = j.at("omega_f");
        g.r_v = j.at("r_v");
        g.omega_lpf = j.at("omega_lpf");
        g.omega_cc = j.at("omega_cc");
        g.delay = j.at("delay");
        g.omega_ff = j.at("omega_ff");
        return g;
    }
    throw Error(ErrorCode::SchemaError, "unknown control parameter kind '" + kind + "'");
}

json circuit_to_json(const CircuitParams& c) {
    json j = {{"l_filter", c.l_filter}, {"r_filter", c.r_filter}, {"l_grid", c.l_grid},
              {"r_grid", c.r_grid}};
    if (c.scr) j["scr"] = *c.scr;
    return j;
}

CircuitParams circuit_from_json(const json& j) {
    CircuitParams c;
    c.l_filter = j.at("l_filter");
    c.r_filter = j.at("r_filter");
    c.l_grid = j.at("l_grid");
    c.r_grid = j.at("r_grid");
    if (j.contains("scr")) c.scr = j.at("scr").get<double>();
    return c;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                          : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view s, std::size_t row, std::size_t col) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        std::ostringstream msg;
        msg << "row " << row << " column " << col << ": '" << s << "' is not a number";
        throw Error(ErrorCode::SchemaError, msg.str());
    }
    return v;
}

}  // namespace

void SamplingSpec::validate() const {
    for (int c : counts) {
        if (c < 0) throw Error(ErrorCode::ParamOutOfRange, "sample counts must be >= 0");
    }
    check_interval(gfl.omega_p, "omega_p");
    check_interval(gfl.omega_q, "omega_q");
    check_interval(gfl.omega_v, "omega_v");
    check_interval(gfl.omega_n, "omega_n");
    check_interval(gfl.omega_cc, "omega_cc");
    check_interval(gfl.delay, "delay");
    check_interval(gfm.inertia_h, "inertia_h");
    check_interval(gfm.damping_xi, "damping_xi");
    check_interval(gfm.omega_cc, "omega_cc");
    check_interval(gfm.delay, "delay");
    check_interval(op.p, "p");
    check_interval(op.q, "q");
    check_interval(op.v, "v");
    if (op.p.lo < -1.0 || op.p.hi > 1.0 || op.q.lo < -0.4 || op.q.hi > 0.4 || op.v.lo < 0.9 ||
        op.v.hi > 1.1) {
        throw Error(ErrorCode::ParamOutOfRange, "operating ranges exceed p [-1,1], q [-0.4,0.4], v [0.9,1.1]");
    }
    if (gfl.omega_p.lo <= 0.0 || gfl.omega_q.lo <= 0.0 || gfl.omega_v.lo <= 0.0 ||
        gfl.omega_n.lo <= 0.0 || gfl.omega_cc.lo <= 0.0 || gfl.delay.lo <= 0.0 ||
        gfm.inertia_h.lo <= 0.0 || gfm.damping_xi.lo <= 0.0 || gfm.omega_cc.lo <= 0.0 ||
        gfm.delay.lo <= 0.0) {
        throw Error(ErrorCode::ParamOutOfRange, "control parameter intervals must be positive");
    }
    circuit.validate();
    if (grid.empty()) throw Error(ErrorCode::ParamOutOfRange, "feature grid is empty");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k] > 0.0) || (k > 0 && !(grid[k] > grid[k - 1]))) {
            throw Error(ErrorCode::ParamOutOfRange, "feature grid must be positive and strictly increasing");
        }
    }
}

SamplingSpec SamplingSpec::default_pool(std::uint64_t seed) {
    SamplingSpec s;
    s.seed = seed;
    s.count(StructureId::pqGFL) = 2500;
    s.count(StructureId::pvGFL) = 2500;
    s.count(StructureId::ccGFM) = 2500;
    s.count(StructureId::vcGFM) = 2500;
    return s;
}

SamplingSpec SamplingSpec::default_holdout(std::uint64_t seed) {
    SamplingSpec s;
    s.seed = seed;
    s.count(StructureId::viGFL) = 2500;
    return s;
}

ControlParams sample_parameters(const SamplingSpec& spec, StructureId structure,
                                std::uint64_t draw_index) {
    KeyedRng rng{spec.seed, kParamStream, static_cast<std::uint64_t>(structure), draw_index};
    if (mode_of(structure) == Mode::GFL) {
        GflControlParams p;
        const auto& iv = spec.gfl;
        p.omega_p = rng.uniform(iv.omega_p.lo, iv.omega_p.hi);
        p.omega_q = rng.uniform(iv.omega_q.lo, iv.omega_q.hi);
        p.omega_v = rng.uniform(iv.omega_v.lo, iv.omega_v.hi);
        p.omega_n = rng.uniform(iv.omega_n.lo, iv.omega_n.hi);
        p.omega_cc = rng.uniform(iv.omega_cc.lo, iv.omega_cc.hi);
        p.delay = rng.uniform(iv.delay.lo, iv.delay.hi);
        return p;
    }
    GfmControlParams p;
    const auto& iv = spec.gfm;
    p.inertia_h = rng.uniform(iv.inertia_h.lo, iv.inertia_h.hi);
    p.damping_xi = rng.uniform(iv.damping_xi.lo, iv.damping_xi.hi);
    p.omega_cc = rng.uniform(iv.omega_cc.lo, iv.omega_cc.hi);
    p.delay = rng.uniform(iv.delay.lo, iv.delay.hi);
    return p;
}

OperatingPoint sample_operating_point(const SamplingSpec& spec, StructureId structure,
                                      std::uint64_t draw_index) {
    KeyedRng rng{spec.seed, kOpStream, static_cast<std::uint64_t>(structure), draw_index};
    OperatingPoint op;
    op.p = rng.uniform(spec.op.p.lo, spec.op.p.hi);
    op.q = rng.uniform(spec.op.q.lo, spec.op.q.hi);
    op.v = rng.uniform(spec.op.v.lo, spec.op.v.hi);
    return op;
}

std::string feature_name(FeatureKind kind, FeatureAxis axis, double freq_hz) {
    if (!(freq_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "feature frequency must be positive");
    std::string s = kind == FeatureKind::M ? "M" : "P";
    s += axis == FeatureAxis::dd ? "dd" : "qq";
    s += std::to_string(std::llround(freq_hz));
    s += "Hz";
    return s;
}

std::vector<std::string> feature_names(const std::vector<double>& grid) {
    std::vector<std::string> names;
    names.reserve(4 * grid.size());
    for (auto [kind, axis] : {std::pair{FeatureKind::M, FeatureAxis::dd},
                              std::pair{FeatureKind::P, FeatureAxis::dd},
                              std::pair{FeatureKind::M, FeatureAxis::qq},
                              std::pair{FeatureKind::P, FeatureAxis::qq}}) {
        for (double f : grid) names.push_back(feature_name(kind, axis, f));
    }
    return names;
}

std::vector<double> extract_features(const AdmittanceSpectrum& spectrum,
                                     const std::vector<double>& grid) {
    const std::size_t n = grid.size();
    std::vector<cplx> ydd(n), yqq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = find_frequency(spectrum.frequencies, grid[k]);
        ydd[k] = spectrum.entries[j].dd;
        yqq[k] = spectrum.entries[j].qq;
    }
    std::vector<double> out;
    out.reserve(4 * n);
    for (const cplx& y : ydd) out.push_back(std::abs(y));
    for (double p : unwrapped_deg(ydd)) out.push_back(p);
    for (const cplx& y : yqq) out.push_back(std::abs(y));
    for (double p : unwrapped_deg(yqq)) out.push_back(p);
    return out;
}

std::uint64_t sample_id(StructureId structure, std::uint64_t draw_index) {
    return (static_cast<std::uint64_t>(structure) << 32) | (draw_index & 0xffffffffull);
}

Dataset generate_dataset(const SamplingSpec& spec, const std::vector<StructureId>& structures,
                         int threads, GenerationReport* report) {
    spec.validate();
    Dataset ds;
    ds.grid = spec.grid;
    ds.feature_names = feature_names(spec.grid);
    ds.seed = spec.seed;
    ds.circuit = spec.circuit;
    GenerationReport rep;
    rep.seed = spec.seed;

    for (StructureId s : structures) {
        const int want = spec.count(s);
        StructureReport sr{s, want, 0, 0};
        std::uint64_t next_index = 0;
        int have = 0;
        while (have < want) {
            // Evaluate a batch of consecutive indices, then accept in index order.
            const std::size_t batch = static_cast<std::size_t>(want - have) + 8;
            std::vector<std::optional<Sample>> cand(batch);
            parallel_for(batch, threads, [&](std::size_t j) {
                const std::uint64_t idx = next_index + j;
                Provenance prov{sample_parameters(spec, s, idx), sample_operating_point(spec, s, idx), idx};
                try {
                    const StateSpaceModel m = build_model(s, prov.params, spec.circuit, prov.op);
                    Sample smp;
                    smp.id = sample_id(s, idx);
                    smp.structure = s;
                    smp.mode = mode_of(s);
                    smp.features = extract_features(sweep_admittance(m, spec.grid), spec.grid);
                    if (!std::all_of(smp.features.begin(), smp.features.end(),
                                     [](double v) { return std::isfinite(v); })) {
                        return;
                    }
                    smp.provenance = prov;
                    cand[j] = std::move(smp);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::UnstableLinearization &&
                        e.code() != ErrorCode::NoConvergence &&
                        e.code() != ErrorCode::SingularResolvent) {
                        throw;
                    }
                }
            });
            for (std::size_t j = 0; j < batch && have < want; ++j) {
                ++sr.drawn;
                if (cand[j]) {
                    ds.samples.push_back(std::move(*cand[j]));
                    ++have;
                } else {
                    ++sr.rejected;
                }
                if (sr.drawn >= 20 && 2 * sr.rejected > sr.drawn) {
                    std::ostringstream msg;
                    msg << to_string(s) << ": " << sr.rejected << " of " << sr.drawn
                        << " draws rejected as unstable";
                    throw Error(ErrorCode::GenerationStalled, msg.str());
                }
            }
            next_index += batch;
            if (next_index > 0xffffffffull) {
                throw Error(ErrorCode::GenerationStalled, "draw index space exhausted");
            }
        }
        rep.structures.push_back(sr);
    }
    if (report) *report = rep;
    return ds;
}

std::filesystem::path meta_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p += ".meta.json";
    return p;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    for (const Sample& s : ds.samples) {
        if (s.features.size() != ds.width()) {
            throw Error(ErrorCode::WidthMismatch, "sample width differs from the feature header");
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    for (const std::string& name : ds.feature_names) out << name << ',';
    out << "structure,mode\n";
    char buf[32];
    for (const Sample& s : ds.samples) {
        for (double v : s.features) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << to_string(s.structure) << ',' << to_string(s.mode) << '\n';
    }
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());

    json meta;
    meta["format"] = "admitlab-dataset-1";
    meta["grid"] = ds.grid;
    if (ds.seed) meta["seed"] = *ds.seed;
    if (ds.circuit) meta["circuit"] = circuit_to_json(*ds.circuit);
    json rows = json::array();
    for (const Sample& s : ds.samples) {
        json r = {{"id", s.id}};
        if (s.provenance) {
            r["draw_index"] = s.provenance->draw_index;
            r["params"] = params_to_json(s.provenance->params);
            r["op"] = {{"p", s.provenance->op.p}, {"q", s.provenance->op.q}, {"v", s.provenance->op.v}};
        }
        rows.push_back(std::move(r));
    }
    meta["rows"] = std::move(rows);
    std::ofstream mo(meta_path(path), std::ios::binary | std::ios::trunc);
    if (!mo) throw Error(ErrorCode::IoError, "cannot open " + meta_path(path).string() + " for writing");
    mo << meta.dump(1) << '\n';
    if (!mo) throw Error(ErrorCode::IoError, "write failed for " + meta_path(path).string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, path.string() + " has no header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[header.size() - 1] != "mode" || header[header.size() - 2] != "structure") {
        throw Error(ErrorCode::SchemaError, "header must end with 'structure,mode'");
    }
    Dataset ds;
    for (std::size_t k = 0; k + 2 < header.size(); ++k) {
        if (header[k].empty()) throw Error(ErrorCode::SchemaError, "empty feature name in header");
        ds.feature_names.emplace_back(header[k]);
    }
    const std::size_t width = ds.feature_names.size();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != width + 2) {
            throw Error(ErrorCode::SchemaError, "row " + std::to_string(row) + " has " +
                                                    std::to_string(cells.size()) + " columns, expected " +
                                                    std::to_string(width + 2));
        }
        Sample s;
        s.features.resize(width);
        for (std::size_t k = 0; k < width; ++k) s.features[k] = parse_double(cells[k], row, k);
        try {
            s.structure = parse_structure(cells[width]);
            s.mode = parse_mode(cells[width + 1]);
        } catch (const Error& e) {
            throw Error(ErrorCode::SchemaError, "row " + std::to_string(row) + ": " + e.what());
        }
        if (s.mode != mode_of(s.structure)) {
            throw Error(ErrorCode::SchemaError, "row " + std::to_string(row) + ": mode does not match structure");
        }
        s.id = ds.samples.size();
        ds.samples.push_back(std::move(s));
    }

    const auto mp = meta_path(path);
    if (!std::filesystem::exists(mp)) return ds;
    std::ifstream mi(mp, std::ios::binary);
    if (!mi) throw Error(ErrorCode::IoError, "cannot open " + mp.string());
    try {
        const json meta = json::parse(mi);
        ds.grid = meta.at("grid").get<std::vector<double>>();
        if (meta.contains("seed")) ds.seed = meta.at("seed").get<std::uint64_t>();
        if (meta.contains("circuit")) ds.circuit = circuit_from_json(meta.at("circuit"));
        const json& rows = meta.at("rows");
        if (rows.size() != ds.samples.size()) {
            throw Error(ErrorCode::SchemaError, "sidecar lists " + std::to_string(rows.size()) +
                                                    " rows, CSV has " + std::to_string(ds.samples.size()));
        }
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const json& r = rows[k];
            ds.samples[k].id = r.at("id").get<std::uint64_t>();
            if (r.contains("params")) {
                Provenance p;
                p.draw_index = r.at("draw_index").get<std::uint64_t>();
                p.params = params_from_json(r.at("params"));
                p.op = {r.at("op").at("p"), r.at("op").at("q"), r.at("op").at("v")};
                ds.samples[k].provenance = p;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, mp.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace admitlab
