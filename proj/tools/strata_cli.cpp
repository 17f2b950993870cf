// Batch front end: fit, tune, simulate, penalty-lemma, bench.
//
// Every option can also be given in a flat key=value file (--config); flags
// given on the command line win over the file.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "strata/dataset.hpp"
#include "strata/error.hpp"
#include "strata/m1.hpp"
#include "strata/m2.hpp"
#include "strata/methods.hpp"
#include "strata/penalty.hpp"
#include "strata/rng.hpp"
#include "strata/simulation.hpp"

using json = nlohmann::ordered_json;
using namespace strata;

namespace {

enum Exit : int {
    ok = 0,
    internal = 1,
    usage = 2,
    input = 3,
    invalid = 4,
    degenerate = 5,
    convergence = 6,
    io = 7,
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

const std::vector<std::string> kCommands{"fit", "tune", "simulate", "penalty-lemma", "bench"};

struct RunConfig {
    std::string command;
    std::string input;
    std::string output = "-";
    std::string stratum_column = "stratum";
    std::string response_column = "response";
    Loss loss = Loss::linear;
    bool standardize = false;

    Method method = Method::m1;
    std::vector<Method> methods{Method::m1, Method::ident, Method::indep};
    double lambda1 = 0.1;
    double lambda2 = 0.05;
    double phi = 1.0;
    MethodOptions opts;

    // simulate; unset fields take the design's defaults
    DesignKind design = DesignKind::study1;
    std::optional<int> K, p, n_k, pattern;
    std::optional<double> sp_glob, sp_spec, sigma2, snr, alpha, c, beta;
    std::optional<Covariance> covariance;
    std::optional<Heterogeneity> heterogeneity;
    int replications = 100;
    std::vector<double> thresholds;
    std::string dataset_output;

    LemmaOptions lemma;
    int repeats = 5;

    SimulationDesign resolved_design() const
    {
        SimulationDesign d = SimulationDesign::defaults(design);
        if (K) d.K = *K;
        if (p) d.p = *p;
        if (n_k) d.n_k = *n_k;
        if (pattern) d.pattern = *pattern;
        if (sp_glob) d.sp_glob = *sp_glob;
        if (sp_spec) d.sp_spec = *sp_spec;
        if (sigma2) d.sigma2 = *sigma2;
        if (snr) d.snr = *snr;
        if (alpha) d.alpha = *alpha;
        if (c) d.c = *c;
        if (beta) d.beta = *beta;
        if (covariance) d.covariance = *covariance;
        if (heterogeneity) d.heterogeneity = *heterogeneity;
        if (d.kind == DesignKind::twotask && !n_k) d.n_k = twotask_sample_size(d.p, d.alpha, d.c);
        d.seed = opts.seed;
        return d;
    }
};

// ---- value parsing ---------------------------------------------------------

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& v)
{
    const std::string t = trim(v);
    if (t == "inf") return kInf;
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw ConfigError("not a number: '" + v + "'");
    return x;
}

long long to_integer(const std::string& v)
{
    const std::string t = trim(v);
    long long x = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw ConfigError("not an integer: '" + v + "'");
    return x;
}

int to_int(const std::string& v)
{
    const long long x = to_integer(v);
    if (x < -2147483647LL || x > 2147483647LL) throw ConfigError("integer out of range: '" + v + "'");
    return static_cast<int>(x);
}

bool to_bool(const std::string& v)
{
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("not a boolean: '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> to_doubles(const std::string& v)
{
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(s));
    return out;
}

json json_number(double v)
{
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

template <class T> json opt_json(const std::optional<T>& v)
{
    return v ? json(*v) : json(nullptr);
}

// ---- settings registry -----------------------------------------------------

struct Setting {
    std::string key;
    std::string help;
    std::vector<std::string> commands;
    std::function<void(const std::string&)> set;
    std::function<json()> get;

    bool applies(const std::string& cmd) const
    {
        return std::find(commands.begin(), commands.end(), cmd) != commands.end();
    }
};

std::vector<Setting> settings(RunConfig& c)
{
    const std::vector<std::string> data_cmds{"fit", "tune"};
    const std::vector<std::string> model_cmds{"fit", "tune", "simulate"};
    const std::vector<std::string> grid_cmds{"tune", "simulate"};
    const std::vector<std::string> sim{"simulate"};
    const std::vector<std::string> all = kCommands;
    std::vector<Setting> s;
    auto add = [&](std::string key, std::string help, std::vector<std::string> cmds,
                   std::function<void(const std::string&)> set, std::function<json()> get) {
        s.push_back({std::move(key), std::move(help), std::move(cmds), std::move(set), std::move(get)});
    };

    add("input", "input CSV (stratum, response, features)", data_cmds, [&](auto& v) { c.input = v; },
        [&] { return json(c.input); });
    add("output", "output file, - for stdout", all, [&](auto& v) { c.output = v; }, [&] { return json(c.output); });
    add("stratum_column", "stratum column name", data_cmds, [&](auto& v) { c.stratum_column = v; },
        [&] { return json(c.stratum_column); });
    add("response_column", "response column name", data_cmds, [&](auto& v) { c.response_column = v; },
        [&] { return json(c.response_column); });
    add("loss", "linear or logistic", data_cmds, [&](auto& v) { c.loss = loss_from_string(v); },
        [&] { return json(c.loss == Loss::linear ? "linear" : "logistic"); });
    add("standardize", "standardize covariates on the pooled rows", data_cmds,
        [&](auto& v) { c.standardize = to_bool(v); }, [&] { return json(c.standardize); });

    add("method", "m1, m1-adaptive, m1-relaxed, m2, m2-adaptive, indep, ident, inter", data_cmds,
        [&](auto& v) { c.method = method_from_string(v); }, [&] { return json(to_string(c.method)); });
    add("methods", "comma-separated methods to compare", sim,
        [&](auto& v) {
            c.methods.clear();
            for (const auto& m : split_list(v)) c.methods.push_back(method_from_string(m));
        },
        [&] {
            json a = json::array();
            for (Method m : c.methods) a.push_back(to_string(m));
            return a;
        });
    add("lambda1", "penalty on the common effect (single lambda for indep/ident)", {"fit"},
        [&](auto& v) { c.lambda1 = to_double(v); }, [&] { return json_number(c.lambda1); });
    add("lambda2", "penalty on the deviations", {"fit"}, [&](auto& v) { c.lambda2 = to_double(v); },
        [&] { return json_number(c.lambda2); });
    add("phi", "relaxation factor for m1-relaxed", {"fit"}, [&](auto& v) { c.phi = to_double(v); },
        [&] { return json_number(c.phi); });
    add("intercept", "fit per-stratum intercepts", model_cmds, [&](auto& v) { c.opts.intercept = to_bool(v); },
        [&] { return json(c.opts.intercept); });
    add("rho", "adaptive weight exponent", model_cmds, [&](auto& v) { c.opts.rho = to_double(v); },
        [&] { return json_number(c.opts.rho); });
    add("reference", "reference stratum of inter (0-based)", model_cmds,
        [&](auto& v) { c.opts.reference = to_int(v); }, [&] { return json(c.opts.reference); });
    add("tol", "KKT tolerance", model_cmds, [&](auto& v) { c.opts.solver.tol = to_double(v); },
        [&] { return json_number(c.opts.solver.tol); });
    add("max_iter", "sweep cap", model_cmds, [&](auto& v) { c.opts.solver.max_iter = to_int(v); },
        [&] { return json(c.opts.solver.max_iter); });

    add("selection", "cv or 2step-bic", grid_cmds, [&](auto& v) { c.opts.selection = selector_from_string(v); },
        [&] { return json(to_string(c.opts.selection)); });
    add("n_ratios", "ratios of the M1 grid", grid_cmds, [&](auto& v) { c.opts.n_ratios = to_int(v); },
        [&] { return json(c.opts.n_ratios); });
    add("n_lambda", "lambda values per ratio (or per single-lambda path)", grid_cmds,
        [&](auto& v) { c.opts.n_lambda = to_int(v); }, [&] { return json(c.opts.n_lambda); });
    add("n_lambda1", "lambda1 values of the M2 grid", grid_cmds, [&](auto& v) { c.opts.n_lambda1 = to_int(v); },
        [&] { return json(c.opts.n_lambda1); });
    add("n_lambda2", "lambda2 values per lambda1 of the M2 grid", grid_cmds,
        [&](auto& v) { c.opts.n_lambda2 = to_int(v); }, [&] { return json(c.opts.n_lambda2); });
    add("phis", "comma-separated relaxation factors for m1-relaxed", grid_cmds,
        [&](auto& v) { c.opts.phis = to_doubles(v); }, [&] { return json(c.opts.phis); });
    add("folds", "cross-validation folds", grid_cmds, [&](auto& v) { c.opts.folds = to_int(v); },
        [&] { return json(c.opts.folds); });
    add("seed", "random seed", {"tune", "simulate", "penalty-lemma", "bench"},
        [&](auto& v) { c.opts.seed = c.lemma.seed = static_cast<std::uint64_t>(to_integer(v)); },
        [&] { return json(c.opts.seed); });

    add("design", "study1, study2, twotask or confbetas", sim, [&](auto& v) { c.design = design_kind_from_string(v); },
        [&] { return json(to_string(c.design)); });
    auto design_value = [&](auto member) { return [&c, member] { return json(c.resolved_design().*member); }; };
    add("K", "number of strata", {"simulate", "bench"}, [&](auto& v) { c.K = to_int(v); },
        design_value(&SimulationDesign::K));
    add("p", "number of covariates", {"simulate", "bench"}, [&](auto& v) { c.p = to_int(v); },
        design_value(&SimulationDesign::p));
    add("n_k", "observations per stratum", {"simulate", "bench"}, [&](auto& v) { c.n_k = to_int(v); },
        design_value(&SimulationDesign::n_k));
    add("spglob", "common-effect sparsity (study1)", sim, [&](auto& v) { c.sp_glob = to_double(v); },
        design_value(&SimulationDesign::sp_glob));
    add("spspec", "deviation sparsity (study1)", sim, [&](auto& v) { c.sp_spec = to_double(v); },
        design_value(&SimulationDesign::sp_spec));
    add("sigma2", "noise variance", sim, [&](auto& v) { c.sigma2 = to_double(v); },
        design_value(&SimulationDesign::sigma2));
    add("snr", "signal-to-noise ratio (overrides sigma2)", sim, [&](auto& v) { c.snr = to_double(v); },
        [&] { return opt_json(c.resolved_design().snr); });
    add("covariance", "toeplitz_half or identity", sim, [&](auto& v) { c.covariance = covariance_from_string(v); },
        [&] { return json(to_string(c.resolved_design().covariance)); });
    add("heterogeneity", "none, low or moderate (study2)", sim,
        [&](auto& v) { c.heterogeneity = heterogeneity_from_string(v); },
        [&] { return json(to_string(c.resolved_design().heterogeneity)); });
    add("alpha", "support overlap (twotask)", sim, [&](auto& v) { c.alpha = to_double(v); },
        design_value(&SimulationDesign::alpha));
    add("c", "rescaled sample size (twotask)", sim, [&](auto& v) { c.c = to_double(v); },
        design_value(&SimulationDesign::c));
    add("beta", "nonzero magnitude (twotask)", sim, [&](auto& v) { c.beta = to_double(v); },
        design_value(&SimulationDesign::beta));
    add("pattern", "confbetas pattern 1..4, 0 cycles all four", sim, [&](auto& v) { c.pattern = to_int(v); },
        design_value(&SimulationDesign::pattern));
    add("replications", "replications", sim, [&](auto& v) { c.replications = to_int(v); },
        [&] { return json(c.replications); });
    add("thresholds", "comma-separated hard thresholds for extra support metrics", sim,
        [&](auto& v) { c.thresholds = to_doubles(v); }, [&] { return json(c.thresholds); });

    add("dataset_output", "also write the data of replication 0 as CSV", sim,
        [&](auto& v) { c.dataset_output = v; }, [&] { return json(c.dataset_output); });

    add("trials", "random instances", {"penalty-lemma"}, [&](auto& v) { c.lemma.trials = to_int(v); },
        [&] { return json(c.lemma.trials); });
    add("min_ratio", "smallest lambda1 / lambda2", {"penalty-lemma"},
        [&](auto& v) { c.lemma.min_ratio = to_double(v); }, [&] { return json_number(c.lemma.min_ratio); });
    add("max_ratio", "largest lambda1 / lambda2 (exclusive)", {"penalty-lemma"},
        [&](auto& v) { c.lemma.max_ratio = to_double(v); }, [&] { return json_number(c.lemma.max_ratio); });
    add("repeats", "timed repetitions per kernel", {"bench"}, [&](auto& v) { c.repeats = to_int(v); },
        [&] { return json(c.repeats); });
    return s;
}

void apply(const std::vector<Setting>& reg, const std::string& key, const std::string& value)
{
    for (const auto& s : reg)
        if (s.key == key) {
            try {
                s.set(value);
            } catch (const Error& e) {
                throw ConfigError(key + ": " + e.what());
            }
            return;
        }
    throw ConfigError("unknown key '" + key + "'");
}

void load_config(const std::vector<Setting>& reg, const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        if (key == "command") continue;
        apply(reg, key, trim(t.substr(eq + 1)));
    }
}

json resolved(const std::vector<Setting>& reg, const RunConfig& c)
{
    json j;
    j["command"] = c.command;
    for (const auto& s : reg)
        if (s.applies(c.command)) j[s.key] = s.get();
    return j;
}

// ---- outputs ---------------------------------------------------------------

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string commented(const json& config, const std::string& csv)
{
    std::string out;
    for (const auto& [k, v] : config.items()) out += "# " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    return out + csv;
}

json matrix_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(json_number(m(i, j)));
        rows.push_back(std::move(r));
    }
    return rows;
}

json vector_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v(i)));
    return a;
}

json point_json(const GridPoint& pt)
{
    return {{"lambda1", json_number(pt.lambda1)}, {"lambda2", json_number(pt.lambda2)}, {"phi", json_number(pt.phi)}};
}

json fit_document(const json& config, const StratifiedDataset& data, Method method, const MethodFit& f)
{
    json doc;
    doc["config"] = config;
    doc["method"] = to_string(method);
    json ids = json::array();
    for (int k = 0; k < data.strata(); ++k) ids.push_back(data.stratum(k).id);
    doc["strata"] = ids;
    doc["covariates"] = data.covariate_names();
    doc["B"] = matrix_json(f.coef.B);
    doc["intercepts"] = f.coef.intercepts.size() ? vector_json(f.coef.intercepts) : json(nullptr);
    doc["common"] = vector_json(f.common);
    doc["deviations"] = matrix_json(f.deviations);
    doc["df"] = f.df;
    doc["objective"] = json_number(f.objective);
    doc["kkt_residual"] = json_number(f.kkt_residual);
    doc["selection"] = nullptr;
    return doc;
}

StratifiedDataset load_input(const RunConfig& c)
{
    if (c.input.empty()) throw ConfigError("input is required");
    CsvSchema schema;
    schema.stratum_column = c.stratum_column;
    schema.response_column = c.response_column;
    schema.loss = c.loss;
    schema.standardize = c.standardize;
    return load_csv(c.input, schema);
}

int run_fit(const RunConfig& c, const json& config)
{
    const StratifiedDataset data = load_input(c);
    const MethodFit f = fit_method(data, c.method, {c.lambda1, c.lambda2, c.phi}, c.opts);
    write_output(c.output, fit_document(config, data, c.method, f).dump(2) + "\n");
    return ok;
}

int run_tune(const RunConfig& c, const json& config)
{
    const StratifiedDataset data = load_input(c);
    const TunedFit t = tune_method(data, c.method, c.opts);
    json doc = fit_document(config, data, c.method, t.estimate);
    json sel;
    sel["selector"] = to_string(t.selector);
    json per = json::array();
    for (std::size_t i = 0; i < t.selections.size(); ++i) {
        const auto& s = t.selections[i];
        json e;
        e["stratum"] = c.method == Method::indep ? json(data.stratum(static_cast<int>(i)).id) : json(nullptr);
        e["index"] = s.selection.index;
        e["point"] = point_json(s.selection.fit.point);
        e["score"] = json_number(s.selection.score.value);
        json folds = json::array();
        for (double v : s.selection.score.fold_errors) folds.push_back(json_number(v));
        e["fold_errors"] = folds;
        json surface = json::array();
        for (std::size_t g = 0; g < s.grid.size(); ++g) {
            json pt = point_json(s.grid[g]);
            pt["score"] = json_number(s.selection.scores[g]);
            pt["df"] = s.selection.df[g];
            surface.push_back(std::move(pt));
        }
        e["surface"] = surface;
        per.push_back(std::move(e));
    }
    sel["selections"] = per;
    if (t.selector == Selector::two_step_bic) {
        // B above is the refit; the penalized fit at the selected point follows
        sel["penalized"] = {{"B", matrix_json(t.fit.coef.B)},
                            {"common", vector_json(t.fit.common)},
                            {"deviations", matrix_json(t.fit.deviations)},
                            {"objective", json_number(t.fit.objective)},
                            {"kkt_residual", json_number(t.fit.kkt_residual)}};
    }
    doc["selection"] = sel;
    write_output(c.output, doc.dump(2) + "\n");
    return ok;
}

int run_simulate(const RunConfig& c, const json& config)
{
    ReplicationSpec spec;
    spec.design = c.resolved_design();
    spec.methods = c.methods;
    spec.replications = c.replications;
    spec.options = c.opts;
    spec.thresholds = c.thresholds;
    if (!c.dataset_output.empty()) {
        SimulationDesign first = spec.design;
        first.seed = Rng::derive(spec.design.seed, 0);
        write_output(c.dataset_output, to_csv(generate(first).first));
    }
    const auto rows = run_replications(spec);
    write_output(c.output, commented(config, replication_csv(spec, rows)));
    return ok;
}

int run_lemma(const RunConfig& c, const json& config)
{
    const auto rows = penalty_lemma_table(c.lemma);
    write_output(c.output, commented(config, lemma_table_csv(rows)));
    return ok;
}

template <class F> double median_ms(int repeats, F&& f)
{
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
        const auto a = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

int run_bench(const RunConfig& c, const json& config)
{
    if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
    RunConfig bc = c;
    bc.design = DesignKind::study1;
    const auto [data, truth] = generate(bc.resolved_design());
    const int K = data.strata();
    json kernels = json::array();
    auto record = [&](const std::string& name, double ms) { kernels.push_back({{"kernel", name}, {"median_ms", ms}}); };
    record("m1", median_ms(c.repeats, [&] { fit_m1(data, PenaltySpec::uniform(K, 0.05, 0.02)); }));
    record("m1_estimator_path", median_ms(c.repeats, [&] {
               M1Estimator est(data);
               for (double l : {0.2, 0.1, 0.05, 0.02, 0.01}) est.fit(PenaltySpec::uniform(K, l, l / 2));
           }));
    record("m2", median_ms(c.repeats, [&] { fit_m2(data, M2PenaltySpec::uniform(K, 0.05, 0.02)); }));
    record("indep", median_ms(c.repeats, [&] { fit_method(data, Method::indep, {0.05, 0.0, 1.0}); }));
    record("ident", median_ms(c.repeats, [&] { fit_method(data, Method::ident, {0.05, 0.0, 1.0}); }));
    json doc;
    doc["config"] = config;
    doc["kernels"] = kernels;
    write_output(c.output, doc.dump(2) + "\n");
    return ok;
}

int fail(int code, const std::string& kind, const std::string& message)
{
    json e;
    e["error"] = {{"code", code}, {"kind", kind}, {"message", message}};
    std::cerr << e.dump() << "\n";
    return code;
}

std::optional<std::string> config_path(int argc, char** argv)
{
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return std::nullopt;
}

} // namespace

int main(int argc, char** argv)
{
    RunConfig cfg;
    const std::vector<Setting> reg = settings(cfg);
    try {
        if (const auto path = config_path(argc, argv)) load_config(reg, *path);

        CLI::App app{"Stratified sparse regression: fit, tune, simulate, check"};
        app.require_subcommand(1);
        std::map<std::string, CLI::App*> subs;
        std::string config_file;  // read before parsing
        for (const auto& name : kCommands) {
            CLI::App* sub = app.add_subcommand(name);
            sub->add_option("--config", config_file, "flat key=value file; flags override it");
            for (const auto& s : reg)
                if (s.applies(name))
                    sub->add_option_function<std::string>("--" + s.key, [&s](const std::string& v) {
                        try {
                            s.set(v);
                        } catch (const Error& e) {
                            throw CLI::ValidationError("--" + s.key, e.what());
                        }
                    }, s.help);
            subs[name] = sub;
        }
        subs["fit"]->description("fit one method at given penalties; writes a JSON result");
        subs["tune"]->description("select the penalties of a method; writes the winning fit and the score surface");
        subs["simulate"]->description("replicate a simulation design; writes a long-format CSV");
        subs["penalty-lemma"]->description("Monte Carlo check of the scalar penalty lemma; writes a CSV");
        subs["bench"]->description("time the solver kernels; writes JSON");

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            return fail(usage, "usage", e.what());
        }
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) cfg.command = name;
        const json config = resolved(reg, cfg);
        if (cfg.command == "fit") return run_fit(cfg, config);
        if (cfg.command == "tune") return run_tune(cfg, config);
        if (cfg.command == "simulate") return run_simulate(cfg, config);
        if (cfg.command == "penalty-lemma") return run_lemma(cfg, config);
        return run_bench(cfg, config);
    } catch (const ConfigError& e) {
        return fail(usage, "config", e.what());
    } catch (const IoError& e) {
        return fail(io, "io", e.what());
    } catch (const SchemaError& e) {
        return fail(input, "schema", e.what());
    } catch (const ParseError& e) {
        return fail(input, "parse", e.what());
    } catch (const DimensionError& e) {
        return fail(input, "dimension", e.what());
    } catch (const InvalidArgument& e) {
        return fail(invalid, "invalid_argument", e.what());
    } catch (const DegenerateProblem& e) {
        return fail(degenerate, "degenerate", e.what());
    } catch (const NotFound& e) {
        return fail(degenerate, "not_found", e.what());
    } catch (const ConvergenceError& e) {
        return fail(convergence, "convergence", e.what());
    } catch (const std::exception& e) {
        return fail(internal, "internal", e.what());
    }
}
