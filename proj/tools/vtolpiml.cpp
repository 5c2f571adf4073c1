// vtolpiml: dataset generation, training, evaluation, prediction, gradient
// checks and report emission.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "vtol/checks.hpp"
#include "vtol/data.hpp"
#include "vtol/log.hpp"
#include "vtol/piml.hpp"

namespace fs = std::filesystem;
using namespace vtol;
using piml::ModelKind;

namespace {

// Validation and assertion failures; exit code 1.
struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or missing flags discovered after parsing; exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr const char* kOutEnv = "VTOLPIML_OUT";

struct Globals {
    std::string aircraft;
    std::string out;
    int threads = 0;
};

std::string default_out() {
    const char* e = std::getenv(kOutEnv);
    return e != nullptr && *e != '\0' ? e : "out";
}

ModelKind parse_kind(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return c == '-' ? '_' : std::tolower(c); });
    if (s == "low_fidelity") s = "lf";
    if (s == "pure_ann") s = "ann";
    try {
        return piml::kind_from_string(s);
    } catch (const std::invalid_argument&) {
        throw UsageError("unknown model '" + s + "' (expected low-fidelity, piml-a, piml-b or ann)");
    }
}

std::string display(ModelKind k) {
    switch (k) {
        case ModelKind::LowFidelity:
            return "low-fidelity";
        case ModelKind::PimlA:
            return "piml-a";
        case ModelKind::PimlB:
            return "piml-b";
        case ModelKind::PureAnn:
            return "ann";
    }
    return "?";
}

const std::vector<ModelKind>& all_kinds() {
    static const std::vector<ModelKind> k = {ModelKind::LowFidelity, ModelKind::PureAnn, ModelKind::PimlA,
                                             ModelKind::PimlB};
    return k;
}

geometry::AircraftConfig aircraft(const Globals& g) {
    if (g.aircraft.empty()) return geometry::AircraftConfig::nominal();
    if (!fs::exists(g.aircraft)) throw Failure("aircraft config not found: " + g.aircraft);
    return geometry::load_aircraft_config(g.aircraft);
}

fs::path out_dir(const Globals& g) {
    fs::path p(g.out);
    fs::create_directories(p);
    return p;
}

fs::path checkpoint_path(const fs::path& dir, ModelKind k) { return dir / (display(k) + ".model"); }
fs::path history_path(const fs::path& dir, ModelKind k) { return dir / (display(k) + "_history.csv"); }

data::Dataset load_split_dataset(const std::string& path) {
    if (!fs::exists(path)) throw Failure("dataset not found: " + path);
    data::Dataset d = data::load_dataset(path);
    if (d.count(data::Split::Train) == 0) throw Failure("dataset has no training split: " + path);
    return d;
}

piml::Model model_for(ModelKind k, const fs::path& ckpt) {
    if (k == ModelKind::LowFidelity) {
        piml::Model m;
        m.kind = k;
        return m;
    }
    if (!fs::exists(ckpt)) throw Failure("missing checkpoint for " + display(k) + ": " + ckpt.string());
    piml::Model m = piml::load_model(ckpt.string());
    if (m.kind != k) {
        throw Failure(fmt::format("checkpoint {} holds a {} model, not {}", ckpt.string(), display(m.kind),
                                  display(k)));
    }
    return m;
}

std::vector<int> parse_layers(const std::string& spec) {
    // "6x200" or "200,100,50"
    std::vector<int> out;
    const auto x = spec.find('x');
    try {
        if (x != std::string::npos) {
            const int depth = std::stoi(spec.substr(0, x));
            const int width = std::stoi(spec.substr(x + 1));
            out.assign(static_cast<std::size_t>(depth), width);
        } else {
            std::stringstream ss(spec);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
        }
    } catch (const std::exception&) {
        throw UsageError("bad layer spec '" + spec + "' (use DEPTHxWIDTH or W1,W2,...)");
    }
    if (out.empty() || std::any_of(out.begin(), out.end(), [](int w) { return w < 1; })) {
        throw UsageError("bad layer spec '" + spec + "'");
    }
    return out;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Failure("cannot write " + p.string());
    os << s;
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
    int n = data::kDefaultSamples;
    std::uint64_t seed = data::kDefaultSeed;
    int train = data::kDefaultTrain;
    std::string oracle;
    std::string output;
};

int cmd_gen_data(const Globals& g, const GenArgs& a) {
    if (a.train >= a.n) {
        throw Failure(fmt::format("--train {} must be smaller than --n {}", a.train, a.n));
    }
    data::OracleConfig oc;
    if (!a.oracle.empty()) {
        if (!fs::exists(a.oracle)) throw Failure("oracle config not found: " + a.oracle);
        oc = data::load_oracle_config(a.oracle);
    }
    const data::Oracle oracle(aircraft(g), oc);
    data::Dataset d = data::generate_dataset(oracle, a.n, a.seed);
    if (a.train >= d.valid_count()) {
        throw Failure(fmt::format("--train {} leaves no validation samples ({} valid)", a.train, d.valid_count()));
    }
    data::split(d, a.train, a.seed);
    const fs::path csv = a.output.empty() ? out_dir(g) / "dataset.csv" : fs::path(a.output);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    data::save_dataset(d, csv.string());
    fs::path side = csv;
    side.replace_extension(".json");
    data::save_sidecar(d, side.string());
    const int n = static_cast<int>(d.records.size());
    fmt::print("samples {} valid {} invalid {}\n", n, d.valid_count(), n - d.valid_count());
    fmt::print("split train {} val {}\n", d.count(data::Split::Train), d.count(data::Split::Val));
    fmt::print("oracle {} {}\n", d.oracle_version, d.oracle_hash);
    fmt::print("wrote {} and {}\n", csv.string(), side.string());
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string model;
    std::string dataset;
    int epochs = 10000;
    int patience = 500;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    std::string layers;
    double time_limit = 0.0;
    std::string checkpoint;
    std::string history;
    bool no_prior = false;
    bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    const ModelKind kind = parse_kind(a.model);
    if (kind == ModelKind::LowFidelity) throw Failure("low-fidelity model has no trainable parameters");
    if (a.epochs < 1) throw UsageError("--epochs must be positive");
    const fs::path dir = out_dir(g);
    const data::Dataset d = load_split_dataset(a.dataset.empty() ? (dir / "dataset.csv").string() : a.dataset);
    const piml::Batch tr = d.batch(data::Split::Train);
    const piml::Batch va = d.batch(data::Split::Val);
    if (va.size() == 0) throw Failure("dataset has no validation split");

    piml::Architecture arch;
    if (!a.layers.empty()) {
        const auto l = parse_layers(a.layers);
        arch.piml_a_transfer_hidden = l;
        arch.piml_a_correction_hidden = l;
        arch.piml_b_hidden = l;
        arch.ann_hidden = l;
    }
    arch.induced_prior_from_bem = !a.no_prior;

    const fs::path ckpt = a.checkpoint.empty() ? checkpoint_path(dir, kind) : fs::path(a.checkpoint);
    const fs::path hist = a.history.empty() ? history_path(dir, kind) : fs::path(a.history);
    piml::TrainConfig cfg;
    cfg.max_epochs = a.epochs;
    cfg.patience = a.patience;
    cfg.adam.learning_rate = a.lr;
    cfg.seed = a.seed;
    cfg.time_limit_seconds = a.time_limit;
    cfg.checkpoint_path = ckpt.string();
    if (!a.quiet) {
        cfg.on_epoch = [](int epoch, double tl, double vl) {
            if (epoch % 100 == 0) fmt::print(stderr, "epoch {:6d} train {:.6e} val {:.6e}\n", epoch, tl, vl);
        };
    }

    const piml::Physics ph(aircraft(g));
    const piml::TrainResult r = piml::train(ph, kind, tr, va, cfg, arch);
    {
        std::ofstream os(hist, std::ios::binary);
        if (!os) throw Failure("cannot write " + hist.string());
        piml::write_history_csv(os, r.history);
    }
    if (r.aborted) {
        throw Failure(fmt::format("training aborted at epoch {}: {}; last good checkpoint kept at {}",
                                  r.history.empty() ? 0 : r.history.back().epoch, r.abort_reason, ckpt.string()));
    }
    const auto& best = r.history[static_cast<std::size_t>(r.best_epoch)];
    fmt::print("{} epochs {} best {} train {:.6e} val {:.6e} seconds {:.1f}{}\n", display(kind), r.history.size(),
               r.best_epoch, best.train_loss, best.val_loss, r.seconds, r.stopped_early ? " (early stop)" : "");
    fmt::print("wrote {} and {}\n", ckpt.string(), hist.string());
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string model;
    bool all = false;
    std::string dataset;
    std::string checkpoint_dir;
    int timing_passes = 3;
    bool json = false;
};

void write_errors_csv(const fs::path& p, const piml::Batch& set, const piml::Evaluation& e) {
    std::ostringstream os;
    os << "index";
    for (const char* n : kInputNames) os << ',' << n;
    for (const char* n : kOutputNames) os << ",pred_" << n;
    for (const char* n : kOutputNames) os << ",err_" << n;
    os << '\n';
    for (int i = 0; i < set.size(); ++i) {
        os << i;
        for (int c = 0; c < FlightState::kInputs; ++c) os << fmt::format(",{:.17g}", set.x(i, c));
        for (int c = 0; c < 4; ++c) os << fmt::format(",{:.17g}", e.predictions(i, c));
        for (int c = 0; c < 4; ++c) os << fmt::format(",{:.17g}", e.errors(i, c));
        os << '\n';
    }
    write_text(p, os.str());
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
    if (a.all == !a.model.empty()) throw UsageError("give exactly one of --model or --all");
    const fs::path dir = out_dir(g);
    const fs::path cdir = a.checkpoint_dir.empty() ? dir : fs::path(a.checkpoint_dir);
    const data::Dataset d = load_split_dataset(a.dataset.empty() ? (dir / "dataset.csv").string() : a.dataset);
    const piml::Batch tr = d.batch(data::Split::Train);
    const piml::Batch va = d.batch(data::Split::Val);
    if (va.size() == 0) throw Failure("validation split is empty");
    const nn::Scaler target_scaler = nn::Scaler::fit(tr.y);

    std::vector<ModelKind> kinds;
    if (a.all) {
        kinds = all_kinds();
    } else {
        kinds.push_back(parse_kind(a.model));
    }
    std::vector<piml::Model> models;
    std::vector<std::string> missing;
    for (ModelKind k : kinds) {
        if (k != ModelKind::LowFidelity && !fs::exists(checkpoint_path(cdir, k))) {
            missing.push_back(checkpoint_path(cdir, k).string());
            continue;
        }
        models.push_back(model_for(k, checkpoint_path(cdir, k)));
    }
    if (!missing.empty()) {
        std::string msg = "missing checkpoints:";
        for (const auto& m : missing) msg += " " + m;
        throw Failure(msg);
    }

    const piml::Physics ph(aircraft(g));
    nlohmann::ordered_json js = nlohmann::ordered_json::array();
    if (!a.json) {
        fmt::print("{:<13}{:>12}{:>12}{:>12}{:>12}{:>11}{:>14}\n", "model", "rmse_CL", "rmse_CD", "rmse_Cl",
                   "rmse_Cm", "aggregate", "s/sample");
    }
    for (const piml::Model& m : models) {
        const piml::Evaluation e = piml::evaluate(ph, m, va, target_scaler, a.timing_passes);
        write_errors_csv(dir / ("errors_" + display(m.kind) + ".csv"), va, e);
        if (a.json) {
            js.push_back({{"model", display(m.kind)},
                          {"rmse", {{"CL", e.rmse[0]}, {"CD", e.rmse[1]}, {"Cl", e.rmse[2]}, {"Cm", e.rmse[3]}}},
                          {"aggregate", e.aggregate},
                          {"seconds_per_sample", e.seconds_per_sample},
                          {"samples", va.size()}});
        } else {
            fmt::print("{:<13}{:>12.5g}{:>12.5g}{:>12.5g}{:>12.5g}{:>11.4f}{:>14.3e}\n", display(m.kind), e.rmse[0],
                       e.rmse[1], e.rmse[2], e.rmse[3], e.aggregate, e.seconds_per_sample);
        }
    }
    if (a.json) std::cout << js.dump(2) << '\n';
    return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictArgs {
    std::string model = "low-fidelity";
    std::string checkpoint;
    std::array<std::optional<double>, FlightState::kInputs> inputs;
    bool json = false;
};

std::string flag_name(const char* input) {
    std::string s = std::string("--") + input;
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

int cmd_predict(const Globals& g, const PredictArgs& a) {
    std::string missing;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        if (!a.inputs[i]) missing += " " + flag_name(kInputNames[i]);
    }
    if (!missing.empty()) {
        std::string all;
        for (const char* n : kInputNames) all += " " + flag_name(n);
        throw UsageError("missing inputs:" + missing + "\nall seven inputs are required:" + all);
    }
    std::array<double, FlightState::kInputs> x{};
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = *a.inputs[i];
    const FlightState f = FlightState::from_array(x);

    const ModelKind kind = parse_kind(a.model);
    const fs::path ckpt = a.checkpoint.empty() ? checkpoint_path(fs::path(g.out), kind) : fs::path(a.checkpoint);
    const piml::Model m = model_for(kind, ckpt);
    const piml::Physics ph(aircraft(g));
    const piml::Prediction p = piml::predict(ph, m, f);
    if (!p.converged) fmt::print(stderr, "warning: rotor solution did not converge\n");
    const auto c = p.coefficients.as_array();
    if (a.json) {
        nlohmann::ordered_json js;
        for (std::size_t k = 0; k < 4; ++k) js[kOutputNames[k]] = c[k];
        std::cout << js.dump() << '\n';
    } else {
        for (std::size_t k = 0; k < 4; ++k) fmt::print("{} {:.10g}\n", kOutputNames[k], c[k]);
    }
    return 0;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
    std::vector<std::string> checks;
    double threshold = -1.0;
};

int cmd_gradcheck(const Globals& g, const GradcheckArgs& a) {
    const auto known = checks::gradcheck_names();
    const std::vector<std::string> run = a.checks.empty() ? known : a.checks;
    for (const auto& c : run) {
        if (std::find(known.begin(), known.end(), c) == known.end()) {
            std::string all;
            for (const auto& k : known) all += " " + k;
            throw UsageError("unknown check '" + c + "'; available:" + all);
        }
    }
    const piml::Physics ph(aircraft(g));
    int failed = 0;
    for (const auto& c : run) {
        const checks::CheckResult r = checks::run_gradcheck(ph, c, a.threshold);
        fmt::print("{:<22} {} max_rel_error {:.3e} threshold {:.1e}  {}\n", r.name, r.passed() ? "PASS" : "FAIL",
                   r.max_rel_error, r.threshold, r.worst);
        if (!r.passed()) ++failed;
    }
    if (failed > 0) throw Failure(fmt::format("{} of {} gradient checks exceed their threshold", failed, run.size()));
    return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
    std::string models = "piml-a,piml-b,ann";
    std::string dataset;
    std::string checkpoint_dir;
};

int cmd_report(const Globals& g, const ReportArgs& a) {
    const fs::path dir = out_dir(g);
    const fs::path cdir = a.checkpoint_dir.empty() ? dir : fs::path(a.checkpoint_dir);
    std::vector<ModelKind> kinds;
    {
        std::stringstream ss(a.models);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            const ModelKind k = parse_kind(item);
            if (k != ModelKind::LowFidelity && std::find(kinds.begin(), kinds.end(), k) == kinds.end()) {
                kinds.push_back(k);
            }
        }
    }
    if (kinds.empty()) throw UsageError("--models names no trained model");
    std::vector<std::string> missing;
    for (ModelKind k : kinds) {
        if (!fs::exists(checkpoint_path(cdir, k))) missing.push_back(checkpoint_path(cdir, k).string());
    }
    if (!missing.empty()) {
        std::string msg = "missing checkpoints:";
        for (const auto& m : missing) msg += " " + m;
        throw Failure(msg);
    }
    std::vector<piml::Model> models;
    for (ModelKind k : kinds) models.push_back(model_for(k, checkpoint_path(cdir, k)));

    const data::Dataset d = load_split_dataset(a.dataset.empty() ? (dir / "dataset.csv").string() : a.dataset);
    const piml::Batch all = d.valid_batch();
    std::vector<data::Split> splits;
    for (const auto& r : d.records) {
        if (r.valid) splits.push_back(r.split);
    }
    const piml::Physics ph(aircraft(g));

    for (const piml::Model& m : models) {
        if (m.kind != ModelKind::PimlA && m.kind != ModelKind::PimlB) continue;
        const Eigen::MatrixXd corr = piml::correction_report(ph, m, all);
        std::ostringstream os;
        piml::write_correction_csv(os, m.kind, all, corr);
        const fs::path p = dir / ("corrections_" + display(m.kind) + ".csv");
        write_text(p, os.str());
        fmt::print("wrote {} ({} rows)\n", p.string(), all.size());
    }

    // One row per valid sample: inputs, targets, LF and model predictions.
    std::vector<Eigen::MatrixXd> preds;
    {
        piml::Model lf;
        lf.kind = ModelKind::LowFidelity;
        preds.push_back(piml::evaluate(ph, lf, all, nn::Scaler::fit(all.y)).predictions);
    }
    for (const piml::Model& m : models) preds.push_back(piml::evaluate(ph, m, all, nn::Scaler::fit(all.y)).predictions);
    std::ostringstream os;
    os << "index,split";
    for (const char* n : kInputNames) os << ',' << n;
    for (const char* n : kOutputNames) os << ",target_" << n;
    for (const char* n : kOutputNames) os << ",low-fidelity_" << n;
    for (const piml::Model& m : models) {
        for (const char* n : kOutputNames) os << ',' << display(m.kind) << '_' << n;
    }
    os << '\n';
    for (int i = 0; i < all.size(); ++i) {
        os << i << ',' << data::to_string(splits[static_cast<std::size_t>(i)]);
        for (int c = 0; c < FlightState::kInputs; ++c) os << fmt::format(",{:.17g}", all.x(i, c));
        for (int c = 0; c < 4; ++c) os << fmt::format(",{:.17g}", all.y(i, c));
        for (const auto& p : preds) {
            for (int c = 0; c < 4; ++c) os << fmt::format(",{:.17g}", p(i, c));
        }
        os << '\n';
    }
    write_text(dir / "comparison.csv", os.str());
    fmt::print("wrote {} ({} rows)\n", (dir / "comparison.csv").string(), all.size());

    // Convergence histories side by side, where present.
    std::ostringstream conv;
    conv << "model,epoch,train_loss,val_loss,lr,seconds\n";
    std::vector<ModelKind> with_history;
    for (ModelKind k : kinds) {
        std::ifstream is(history_path(cdir, k));
        if (!is) continue;
        with_history.push_back(k);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            if (!line.empty()) conv << display(k) << ',' << line << '\n';
        }
    }
    write_text(dir / "convergence.csv", conv.str());

    std::ostringstream gp;
    gp << "set datafile separator ','\nset key autotitle columnhead\n";
    gp << "set terminal pngcairo size 900,600\n";
    if (!with_history.empty()) {
        gp << "set output 'convergence.png'\nset logscale y\nset xlabel 'epoch'\nset ylabel 'loss'\nplot ";
        for (std::size_t i = 0; i < with_history.size(); ++i) {
            const std::string n = display(with_history[i]);
            gp << (i ? ", " : "") << "'" << n << "_history.csv' using 1:2 with lines title '" << n
               << " train', '" << n << "_history.csv' using 1:3 with lines title '" << n << " val'";
        }
        gp << "\nunset logscale y\n";
    }
    const int base = 2 + FlightState::kInputs;
    for (int c = 0; c < 4; ++c) {
        gp << "set output 'parity_" << kOutputNames[static_cast<std::size_t>(c)] << ".png'\n";
        gp << "set xlabel 'target " << kOutputNames[static_cast<std::size_t>(c)] << "'\nset ylabel 'prediction'\n";
        gp << "plot x notitle";
        for (std::size_t m = 0; m < preds.size(); ++m) {
            gp << ", 'comparison.csv' using " << base + 1 + c << ':' << base + 5 + 4 * static_cast<int>(m) + c
               << " with points title '" << (m == 0 ? std::string("low-fidelity") : display(models[m - 1].kind))
               << "'";
        }
        gp << '\n';
    }
    write_text(dir / "plot.gp", gp.str());
    fmt::print("wrote {} and {}\n", (dir / "convergence.csv").string(), (dir / "plot.gp").string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-fidelity blown-wing aerodynamics with physics-informed corrections"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    g.out = default_out();
    app.add_option("--aircraft", g.aircraft, "aircraft YAML (default: built-in nominal)");
    app.add_option("--out", g.out, std::string("output directory (default: $") + kOutEnv + " or ./out)");
    app.add_option("--threads", g.threads, "cap on worker threads")->check(CLI::PositiveNumber);
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress warnings and progress");

    GenArgs gen;
    auto* s_gen = app.add_subcommand("gen-data", "generate the LHS dataset and its sidecar");
    s_gen->add_option("--n", gen.n, "samples")->capture_default_str();
    s_gen->add_option("--seed", gen.seed, "sampling and split seed")->capture_default_str();
    s_gen->add_option("--train", gen.train, "training-split size")->capture_default_str();
    s_gen->add_option("--oracle", gen.oracle, "oracle YAML");
    s_gen->add_option("--output", gen.output, "dataset CSV (default: OUT/dataset.csv)");

    TrainArgs tr;
    auto* s_train = app.add_subcommand("train", "train one model kind");
    s_train->add_option("--model", tr.model, "piml-a, piml-b or ann")->required();
    s_train->add_option("--dataset", tr.dataset, "dataset CSV (default: OUT/dataset.csv)");
    s_train->add_option("--epochs", tr.epochs, "maximum epochs")->capture_default_str();
    s_train->add_option("--patience", tr.patience, "early-stop patience in epochs")->capture_default_str();
    s_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    s_train->add_option("--seed", tr.seed, "weight-initialization seed")->capture_default_str();
    s_train->add_option("--layers", tr.layers, "hidden layers for every net, DEPTHxWIDTH or W1,W2,...");
    s_train->add_option("--time-limit", tr.time_limit, "seconds, 0 for none")->capture_default_str();
    s_train->add_option("--checkpoint", tr.checkpoint, "checkpoint path (default: OUT/<model>.model)");
    s_train->add_option("--history", tr.history, "history CSV (default: OUT/<model>_history.csv)");
    s_train->add_flag("--no-bem-prior", tr.no_prior, "PIML-A: start induced magnitudes at softplus(0) scale");

    EvalArgs ev;
    auto* s_eval = app.add_subcommand("eval", "validation RMSE and inference time");
    s_eval->add_option("--model", ev.model, "low-fidelity, piml-a, piml-b or ann");
    s_eval->add_flag("--all", ev.all, "all four models side by side");
    s_eval->add_option("--dataset", ev.dataset, "dataset CSV (default: OUT/dataset.csv)");
    s_eval->add_option("--checkpoint-dir", ev.checkpoint_dir, "checkpoint directory (default: OUT)");
    s_eval->add_option("--timing-passes", ev.timing_passes, "timed passes; the fastest is reported")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    s_eval->add_flag("--json", ev.json, "JSON output");

    PredictArgs pr;
    auto* s_pred = app.add_subcommand("predict", "coefficients for one flight state");
    s_pred->add_option("--model", pr.model, "low-fidelity, piml-a, piml-b or ann")->capture_default_str();
    s_pred->add_option("--checkpoint", pr.checkpoint, "checkpoint path (default: OUT/<model>.model)");
    const std::array<const char*, FlightState::kInputs> units = {"m/s", "deg", "rpm", "rpm", "deg", "deg", "deg"};
    for (std::size_t i = 0; i < pr.inputs.size(); ++i) {
        s_pred->add_option(flag_name(kInputNames[i]), pr.inputs[i], units[i]);
    }
    s_pred->add_flag("--json", pr.json, "JSON output");

    GradcheckArgs gc;
    auto* s_gc = app.add_subcommand("gradcheck", "autodiff against central differences");
    s_gc->add_option("--check", gc.checks, "run only the named checks");
    s_gc->add_option("--threshold", gc.threshold, "relative error bound for every check (default: per check)");

    ReportArgs rp;
    auto* s_rep = app.add_subcommand("report", "correction, comparison and convergence CSVs");
    s_rep->add_option("--models", rp.models, "comma-separated trained models")->capture_default_str();
    s_rep->add_option("--dataset", rp.dataset, "dataset CSV (default: OUT/dataset.csv)");
    s_rep->add_option("--checkpoint-dir", rp.checkpoint_dir, "checkpoint directory (default: OUT)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (g.threads > 0) omp_set_num_threads(g.threads);
    if (quiet) {
        set_warnings_to_stderr(false);
        tr.quiet = true;
    }
    try {
        if (*s_gen) return cmd_gen_data(g, gen);
        if (*s_train) return cmd_train(g, tr);
        if (*s_eval) return cmd_eval(g, ev);
        if (*s_pred) return cmd_predict(g, pr);
        if (*s_gc) return cmd_gradcheck(g, gc);
        if (*s_rep) return cmd_report(g, rp);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
