// Command-line front end: sweep, measure, generate, train-eval, generalize, importance
// and the chained pipeline.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "admitlab/classifiers.hpp"
#include "admitlab/dataset.hpp"
#include "admitlab/error.hpp"
#include "admitlab/evaluation.hpp"
#include "admitlab/io.hpp"
#include "admitlab/measurement.hpp"
#include "admitlab/smallsignal.hpp"

namespace fs = std::filesystem;
using namespace admitlab;

namespace {

enum Exit { kOk = 0, kConfig = 2, kCompute = 3, kValidation = 4 };

struct Common {
    std::uint64_t seed = 1;
    std::string config;
    std::string out = "out";
    int threads = 1;
    bool force = false;
};

// Refuses to clobber existing outputs unless --force was given.
class Outputs {
public:
    Outputs(fs::path dir, bool force) : dir_(std::move(dir)), force_(force) {}

    fs::path claim(const fs::path& rel) {
        const fs::path p = dir_ / rel;
        if (fs::exists(p) && !force_) {
            throw Error(ErrorCode::InvalidArgument, p.string() + " exists; pass --force to overwrite");
        }
        claimed_.push_back(p);
        return p;
    }

    void prepare() const {
        for (const auto& p : claimed_) fs::create_directories(p.parent_path());
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    bool force_;
    std::vector<fs::path> claimed_;
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::vector<LearnerId> parse_learner_list(const std::string& csv) {
    std::vector<LearnerId> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_learner(item));
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no learners given");
    return out;
}

// ---- sweep ----

struct SweepOpts {
    double f_lo = 1.0, f_hi = 10e3;
    int points = 200;
};

int cmd_sweep(const Common& c, const SweepOpts& o) {
    if (c.config.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs --config <descriptor.json>");
    const ModelDescriptor d = load_descriptor(c.config);
    Outputs out(c.out, c.force);
    const fs::path bode = out.claim("bode.csv");
    const fs::path adm = out.claim("admittance.csv");
    const StateSpaceModel m = build_model(d.structure, d.params, d.circuit, d.op);
    const auto grid = log_grid(o.f_lo, o.f_hi, o.points);
    const AdmittanceSpectrum s = sweep_admittance(m, grid);
    out.prepare();
    write_bode(s, bode);
    write_admittance(s, adm);
    std::printf("%s: %d states, %zu frequencies -> %s\n", std::string(to_string(d.structure)).c_str(),
                m.order(), grid.size(), bode.string().c_str());
    return kOk;
}

// ---- measure ----

struct MeasureOpts {
    std::string measurement;
    double band_lo = 1.0, band_hi = 1000.0, tol_db = 1.0, tol_deg = 5.0;
};

int cmd_measure(const Common& c, const MeasureOpts& o) {
    if (c.config.empty()) throw Error(ErrorCode::InvalidArgument, "measure needs --config <descriptor.json>");
    const ModelDescriptor d = load_descriptor(c.config);
    const MeasurementConfig mc =
        o.measurement.empty() ? MeasurementConfig{} : parse_measurement_config(read_text_file(o.measurement));
    mc.validate();
    Outputs out(c.out, c.force);
    const fs::path measured = out.claim("measured_admittance.csv");
    const fs::path analytical = out.claim("analytical_admittance.csv");
    const fs::path report = out.claim("validation.json");

    const StateSpaceModel m = build_model(d.structure, d.params, d.circuit, d.op);
    const MeasurementResult r = measure_admittance(m, mc, {}, c.threads);
    const ValidationReport v = validate_measurement(r.measured, m, o.band_lo, o.band_hi, o.tol_db, o.tol_deg);
    out.prepare();
    write_admittance(r.measured, measured);
    write_admittance(sweep_admittance(m, r.measured.frequencies), analytical);
    write_text(report, validation_to_json(v, r.dropped) + "\n");
    std::printf("%zu bins in [%g, %g] Hz, %.1f%% within %g dB / %g deg, %zu dropped: %s\n", v.bins.size(),
                o.band_lo, o.band_hi, 100.0 * v.pass_fraction, o.tol_db, o.tol_deg, r.dropped.size(),
                v.passed ? "PASS" : "FAIL");
    return v.passed ? kOk : kValidation;
}

// ---- generate ----

struct Generated {
    fs::path pool, holdout;
};

Generated run_generate(const Common& c, Outputs& out) {
    const SamplingSpec spec = c.config.empty() ? parse_sampling_spec("{}", c.seed)
                                               : parse_sampling_spec(read_text_file(c.config), c.seed);
    spec.validate();
    Generated g{out.claim("pool.csv"), out.claim("holdout.csv")};
    out.claim("pool.csv.meta.json");
    out.claim("holdout.csv.meta.json");
    const fs::path report_path = out.claim("generation_report.json");

    std::vector<StructureId> pool_structs, hold_structs;
    for (StructureId s : kAllStructures) (s == StructureId::viGFL ? hold_structs : pool_structs).push_back(s);
    GenerationReport rp, rh;
    const Dataset pool = generate_dataset(spec, pool_structs, c.threads, &rp);
    const Dataset hold = generate_dataset(spec, hold_structs, c.threads, &rh);
    out.prepare();
    write_dataset(pool, g.pool);
    write_dataset(hold, g.holdout);

    nlohmann::ordered_json rep;
    rep["seed"] = spec.seed;
    rep["grid_points"] = spec.grid.size();
    auto& rows = rep["structures"] = nlohmann::ordered_json::array();
    for (const auto* r : {&rp, &rh}) {
        for (const StructureReport& s : r->structures) {
            rows.push_back({{"structure", std::string(to_string(s.structure))},
                            {"requested", s.requested},
                            {"drawn", s.drawn},
                            {"rejected", s.rejected}});
        }
    }
    rep["pool_rows"] = pool.size();
    rep["holdout_rows"] = hold.size();
    write_text(report_path, rep.dump(2) + "\n");
    std::printf("pool: %zu rows -> %s\nholdout: %zu rows -> %s\n", pool.size(), g.pool.string().c_str(),
                hold.size(), g.holdout.string().c_str());
    return g;
}

int cmd_generate(const Common& c) {
    Outputs out(c.out, c.force);
    run_generate(c, out);
    return kOk;
}

// ---- train-eval ----

struct TrainOpts {
    std::string dataset;
    std::string learners = "LR,DT,RF,NBC,XGB,SVM,KNN";
    std::string hyperparams;
    int runs = 100;
    std::string cv_mode = "resplit";
};

int run_train_eval(const Common& c, const TrainOpts& o, const fs::path& dataset, Outputs& out) {
    const std::vector<LearnerId> learners = parse_learner_list(o.learners);
    const Hyperparams hp0 = o.hyperparams.empty() ? Hyperparams{} : parse_hyperparams(read_text_file(o.hyperparams));
    std::vector<fs::path> model_paths, report_paths;
    for (LearnerId l : learners) {
        model_paths.push_back(out.claim(fs::path("models") / (std::string(to_string(l)) + ".model")));
        report_paths.push_back(out.claim(fs::path("reports") / (std::string(to_string(l)) + ".json")));
    }
    const fs::path table_csv = out.claim("comparison.csv");
    const fs::path table_txt = out.claim("comparison.txt");

    const LabeledData data = LabeledData::from_dataset(read_dataset(dataset));
    Hyperparams hp = hp0;
    hp.seed = c.seed;
    const SplitIndices s = split(data, 0.8, c.seed);
    const LabeledData train_set = data.subset(s.train), test_set = data.subset(s.test);
    out.prepare();

    std::string csv = "learner,test_accuracy,cv_mean,cv_std,cv_runs\n";
    std::string txt = "learner  test_acc  cv_mean  cv_std   (" + std::to_string(o.runs) + " runs, " +
                      std::to_string(train_set.size()) + "/" + std::to_string(test_set.size()) + " split)\n";
    for (std::size_t k = 0; k < learners.size(); ++k) {
        const LearnerId l = learners[k];
        const TrainedModel m = train(l, hp, train_set, c.threads);
        EvaluationReport r = evaluate(m, test_set);
        if (o.runs > 0) {
            r.cv = o.cv_mode == "kfold" ? cross_validate_kfold(data, l, hp, o.runs, c.seed, c.threads)
                                        : cross_validate(data, l, hp, o.runs, c.seed, 0.8, c.threads);
        }
        save_model(m, model_paths[k]);
        write_text(report_paths[k], report_to_json(r) + "\n");
        const double mean = r.cv ? r.cv->mean : r.accuracy, sd = r.cv ? r.cv->std : 0.0;
        csv += r.learner + "," + fmt(r.accuracy, 6) + "," + fmt(mean, 6) + "," + fmt(sd, 6) + "," +
               std::to_string(o.runs) + "\n";
        char line[128];
        std::snprintf(line, sizeof line, "%-7s  %.4f    %.4f   %.4f\n", r.learner.c_str(), r.accuracy, mean, sd);
        txt += line;
        std::fputs(line, stdout);
        std::fflush(stdout);
    }
    write_text(table_csv, csv);
    write_text(table_txt, txt);
    return kOk;
}

int cmd_train_eval(const Common& c, const TrainOpts& o) {
    if (o.dataset.empty()) throw Error(ErrorCode::InvalidArgument, "train-eval needs --dataset <pool.csv>");
    Outputs out(c.out, c.force);
    return run_train_eval(c, o, o.dataset, out);
}

// ---- generalize ----

struct GeneralizeOpts {
    std::string models;
    std::string holdout;
};

int run_generalize(const fs::path& models_dir, const fs::path& holdout_path, Outputs& out) {
    std::vector<fs::path> files;
    if (!fs::is_directory(models_dir)) throw Error(ErrorCode::IoError, models_dir.string() + " is not a directory");
    for (const auto& e : fs::directory_iterator(models_dir)) {
        if (e.path().extension() == ".model") files.push_back(e.path());
    }
    if (files.empty()) throw Error(ErrorCode::IoError, "no .model files in " + models_dir.string());
    // Table order follows the learner enumeration.
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        const auto rank = [](const fs::path& p) {
            try {
                return static_cast<int>(parse_learner(p.stem().string()));
            } catch (const Error&) {
                return 100;
            }
        };
        return std::pair(rank(a), a.string()) < std::pair(rank(b), b.string());
    });
    const fs::path csv_path = out.claim("generalization.csv");
    const fs::path txt_path = out.claim("generalization.txt");
    const fs::path json_path = out.claim("generalization.json");

    const LabeledData hold = LabeledData::from_dataset(read_dataset(holdout_path));
    if (hold.size() == 0) throw Error(ErrorCode::TooFewSamples, "holdout " + holdout_path.string() + " is empty");
    out.prepare();
    std::string csv = "learner,accuracy,n\n", txt = "learner  holdout_acc  (n = " + std::to_string(hold.size()) + ")\n";
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (const fs::path& f : files) {
        const TrainedModel m = load_model(f);
        const EvaluationReport r = evaluate_generalization(m, hold);
        csv += r.learner + "," + fmt(r.accuracy, 6) + "," + std::to_string(r.n) + "\n";
        char line[96];
        std::snprintf(line, sizeof line, "%-7s  %.4f\n", r.learner.c_str(), r.accuracy);
        txt += line;
        std::fputs(line, stdout);
        all.push_back(nlohmann::ordered_json::parse(report_to_json(r)));
    }
    write_text(csv_path, csv);
    write_text(txt_path, txt);
    write_text(json_path, all.dump(2) + "\n");
    return kOk;
}

int cmd_generalize(const Common& c, const GeneralizeOpts& o) {
    if (o.models.empty() || o.holdout.empty()) {
        throw Error(ErrorCode::InvalidArgument, "generalize needs --models <dir> and --holdout <csv>");
    }
    Outputs out(c.out, c.force);
    return run_generalize(o.models, o.holdout, out);
}

// ---- importance ----

struct ImportanceOpts {
    std::string model;
    int k = 5;
};

int run_importance(const fs::path& model_path, int k, Outputs& out) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "--k must be >= 1");
    const TrainedModel m = load_model(model_path);
    const FeatureImportance fi = feature_importances(m, static_cast<std::size_t>(k));
    const std::string tag = std::string(to_string(m.learner));
    const fs::path csv_path = out.claim("importance_" + tag + ".csv");
    const fs::path txt_path = out.claim("importance_" + tag + ".txt");
    out.prepare();
    std::string csv = "rank,feature,weight\n", txt = tag + " top " + std::to_string(fi.ranked.size()) + "\n";
    for (std::size_t r = 0; r < fi.ranked.size(); ++r) {
        char w[32];
        std::snprintf(w, sizeof w, "%.17g", fi.ranked[r].second);
        csv += std::to_string(r + 1) + "," + fi.ranked[r].first + "," + w + "\n";
        txt += std::to_string(r + 1) + ". " + fi.ranked[r].first + "  " + fmt(fi.ranked[r].second) + "\n";
    }
    write_text(csv_path, csv);
    write_text(txt_path, txt);
    std::fputs(txt.c_str(), stdout);
    return kOk;
}

int cmd_importance(const Common& c, const ImportanceOpts& o) {
    if (o.model.empty()) throw Error(ErrorCode::InvalidArgument, "importance needs --model <file>");
    Outputs out(c.out, c.force);
    return run_importance(o.model, o.k, out);
}

// ---- pipeline ----

int cmd_pipeline(const Common& c, const TrainOpts& t, int k) {
    const fs::path root = c.out;
    Outputs data_out(root / "data", c.force);
    const Generated g = run_generate(c, data_out);

    Common tc = c;
    tc.config.clear();
    Outputs train_out(root / "train", c.force);
    run_train_eval(tc, t, g.pool, train_out);

    Outputs gen_out(root / "generalize", c.force);
    run_generalize(root / "train" / "models", g.holdout, gen_out);

    Outputs imp_out(root / "importance", c.force);
    for (const char* name : {"DT", "RF"}) {
        const fs::path p = root / "train" / "models" / (std::string(name) + ".model");
        if (fs::exists(p)) run_importance(p, k, imp_out);
    }
    return kOk;
}

void add_common(CLI::App* sub, Common& c, bool needs_seed) {
    auto* seed = sub->add_option("--seed", c.seed, "Master seed");
    if (needs_seed) seed->required();
    sub->add_option("--config", c.config, "Config file (JSON)");
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::Range(1, 1024));
    sub->add_flag("--force", c.force, "Overwrite existing outputs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Converter admittance modeling, virtual measurement and control-mode classification"};
    app.require_subcommand(1);

    Common common;
    SweepOpts sweep;
    MeasureOpts measure;
    TrainOpts train_opts;
    GeneralizeOpts gen;
    ImportanceOpts imp;

    auto* s = app.add_subcommand("sweep", "Analytical admittance sweep of one converter descriptor");
    add_common(s, common, false);
    s->add_option("--f-lo", sweep.f_lo, "Lowest frequency, Hz")->capture_default_str();
    s->add_option("--f-hi", sweep.f_hi, "Highest frequency, Hz")->capture_default_str();
    s->add_option("--points", sweep.points, "Log-spaced points")->capture_default_str();

    auto* m = app.add_subcommand("measure", "PRBS measurement checked against the analytical model");
    add_common(m, common, false);
    m->add_option("--measurement", measure.measurement, "Measurement config (JSON)");
    m->add_option("--band-lo", measure.band_lo, "Validation band start, Hz")->capture_default_str();
    m->add_option("--band-hi", measure.band_hi, "Validation band end, Hz")->capture_default_str();
    m->add_option("--tol-db", measure.tol_db, "Magnitude tolerance, dB")->capture_default_str();
    m->add_option("--tol-deg", measure.tol_deg, "Phase tolerance, deg")->capture_default_str();

    auto* g = app.add_subcommand("generate", "Generate the training pool and the viGFL holdout");
    add_common(g, common, true);

    auto* te = app.add_subcommand("train-eval", "Train, test and cross-validate learners");
    add_common(te, common, true);
    te->add_option("--dataset", train_opts.dataset, "Training pool CSV");
    te->add_option("--learners", train_opts.learners, "Comma-separated learner names")->capture_default_str();
    te->add_option("--hyperparams", train_opts.hyperparams, "Hyperparameter overrides (JSON)");
    te->add_option("--runs", train_opts.runs, "Cross-validation runs, or folds with --cv kfold (0 skips)")
        ->capture_default_str();
    te->add_option("--cv", train_opts.cv_mode, "Cross-validation protocol")
        ->check(CLI::IsMember({"resplit", "kfold"}))
        ->capture_default_str();

    auto* ge = app.add_subcommand("generalize", "Evaluate stored models on a holdout structure");
    add_common(ge, common, false);
    ge->add_option("--models", gen.models, "Directory of .model files");
    ge->add_option("--holdout", gen.holdout, "Holdout CSV");

    auto* im = app.add_subcommand("importance", "Top-k impurity importances of a tree model");
    add_common(im, common, false);
    im->add_option("--model", imp.model, "Model file");
    im->add_option("--k", imp.k, "Number of features")->capture_default_str();

    auto* pl = app.add_subcommand("pipeline", "generate, train-eval, generalize and importance in one run");
    add_common(pl, common, true);
    pl->add_option("--learners", train_opts.learners, "Comma-separated learner names")->capture_default_str();
    pl->add_option("--hyperparams", train_opts.hyperparams, "Hyperparameter overrides (JSON)");
    pl->add_option("--runs", train_opts.runs, "Cross-validation runs, or folds with --cv kfold")
        ->capture_default_str();
    pl->add_option("--cv", train_opts.cv_mode, "Cross-validation protocol")
        ->check(CLI::IsMember({"resplit", "kfold"}))
        ->capture_default_str();
    pl->add_option("--k", imp.k, "Importance features to report")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (s->parsed()) return cmd_sweep(common, sweep);
        if (m->parsed()) return cmd_measure(common, measure);
        if (g->parsed()) return cmd_generate(common);
        if (te->parsed()) return cmd_train_eval(common, train_opts);
        if (ge->parsed()) return cmd_generalize(common, gen);
        if (im->parsed()) return cmd_importance(common, imp);
        if (pl->parsed()) return cmd_pipeline(common, train_opts, imp.k);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return is_config_error(e.code()) ? kConfig : kCompute;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCompute;
    }
    return kConfig;
}
