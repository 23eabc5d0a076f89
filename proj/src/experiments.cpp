#include "cqcd/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include "json.hpp"

#include "cqcd/error.hpp"
#include "cqcd/srp_numerics.hpp"

#ifndef CQCD_VERSION
#define CQCD_VERSION "0.0.0"
#endif

namespace cqcd {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& key, const std::string& what) {
    throw Error(ErrorKind::SchemaError, key + ": " + what);
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number(const json& v, const std::string& key) {
    if (!v.is_number()) schema_error(key, "expected a number");
    return v.get<double>();
}

long long integer(const json& v, const std::string& key) {
    if (!v.is_number_integer()) schema_error(key, "expected an integer");
    return v.get<long long>();
}

std::string text(const json& v, const std::string& key) {
    if (!v.is_string()) schema_error(key, "expected a string");
    return v.get<std::string>();
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) schema_error(where.empty() ? "config" : where, "expected an object");
    for (const auto& [k, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) schema_error(where.empty() ? k : where + "." + k, "unknown key");
    }
}

template <class F>
auto reinterpret(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::SchemaError) throw;
        schema_error(key, e.what());
    }
}

ExperimentName parse_name(const std::string& s) {
    for (auto n : {ExperimentName::Example1, ExperimentName::Example2, ExperimentName::Example3,
                   ExperimentName::Example4, ExperimentName::Custom}) {
        if (s == to_string(n)) return n;
    }
    schema_error("experiment", "unknown experiment '" + s + "'");
}

std::vector<double> unit_grid() {
    std::vector<double> eps;
    for (int i = 1; i <= 10; ++i) eps.push_back(i / 10.0);
    return eps;
}

std::string figure_stem(ExperimentName name) {
    switch (name) {
        case ExperimentName::Example1: return "fig2";
        case ExperimentName::Example2: return "fig3";
        case ExperimentName::Example3: return "fig4";
        case ExperimentName::Example4: return "fig5";
        case ExperimentName::Custom: return "results";
    }
    return "results";
}

json to_json(const RunConfig& cfg) {
    const auto& b = cfg.base;
    json j;
    j["experiment"] = to_string(cfg.experiment);
    j["pair"] = {{"mu0", b.pair.mu0}, {"mu1", b.pair.mu1}, {"sigma", b.pair.sigma}};
    j["policy"] = to_string(b.policy);
    j["detector"] = to_string(b.detector);
    j["epsilon"] = b.epsilon;
    j["target_arl"] = b.target_arl;
    j["change_points"] = b.change_points;
    j["de_cusum_change_points"] = b.de_cusum_change_points;
    j["runs"] = b.runs;
    j["delay_runs"] = b.delay_runs;
    j["energy_runs"] = b.energy_runs;
    j["energy_horizon"] = b.energy_horizon;
    j["seed"] = b.seed;
    j["optimizer_step"] = b.optimizer_step;
    j["srp_grid_step"] = b.srp_grid_step;
    j["cap_factor"] = b.cap_factor;
    j["epsilons"] = cfg.epsilons;
    json pols = json::array();
    for (auto p : cfg.policies) pols.push_back(to_string(p));
    j["policies"] = pols;
    json th = json::object();
    for (const auto& [p, a] : cfg.trace.thresholds) th[std::string(to_string(p))] = a;
    j["trace"] = {{"change_point", cfg.trace.change_point}, {"length", cfg.trace.length}, {"thresholds", th}};
    if (cfg.threshold) j["threshold"] = *cfg.threshold;
    return j;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
    return os;
}

void write_sweep_plot(const std::filesystem::path& dir, const std::string& stem, const std::vector<TradeoffRow>& rows,
                      const std::vector<PolicyChoice>& policies, const std::string& title, RunReport& report) {
    const auto dat = dir / (stem + ".dat");
    {
        auto os = open_output(dat);
        char buf[256];
        for (auto p : policies) {
            os << "# policy " << to_string(p) << "\n# epsilon delay_mean delay_ci arl_mean arl_ci threshold energy_rate\n";
            for (const auto& r : rows) {
                if (r.policy != p) continue;
                std::snprintf(buf, sizeof buf, "%.6g %.10g %.6g %.10g %.6g %.10g %.6g\n", r.epsilon, r.delay.mean,
                              r.delay.half_width_95, r.arl.mean, r.arl.half_width_95, r.threshold, r.energy.mean);
                os << buf;
            }
            os << "\n\n";
        }
    }
    const auto gp = dir / (stem + ".gp");
    {
        auto os = open_output(gp);
        os << "set terminal pngcairo size 800,560\n"
           << "set output '" << stem << ".png'\n"
           << "set title '" << title << "'\n"
           << "set xlabel 'energy budget (epsilon)'\n"
           << "set ylabel 'worst-case detection delay'\n"
           << "set key top right\nset grid\n"
           << "plot ";
        for (std::size_t i = 0; i < policies.size(); ++i) {
            os << (i == 0 ? "'" + stem + ".dat'" : std::string(", ''")) << " index " << i
               << " using 1:2:3 with yerrorlines title '" << to_string(policies[i]) << "'";
        }
        os << "\n";
    }
    report.files.push_back(dat);
    report.files.push_back(gp);
}

void record_rows(const std::vector<TradeoffRow>& rows, RunReport& report) {
    for (const auto& r : rows) {
        for (const auto* est : {&r.arl, &r.delay, &r.energy}) {
            if (!est->reliable()) {
                report.degraded = true;
                report.diagnostics.push_back(std::string(to_string(r.policy)) + " eps=" + std::to_string(r.epsilon) +
                                             " " + std::string(to_string(est->quantity)) + ": " + est->warning);
            }
        }
    }
}

void run_traces(const RunConfig& cfg, const std::filesystem::path& dir, RunReport& report) {
    const auto set = sample_traces(cfg.base, cfg.base.epsilon, cfg.trace);
    const auto csv = dir / "fig4.csv";
    {
        auto os = open_output(csv);
        os << "k,regime,censoring,random,de_cusum\n";
        char buf[256];
        for (const auto& p : set.points) {
            const bool post = p.k >= cfg.trace.change_point;
            std::snprintf(buf, sizeof buf, "%d,%s,%.10g,%.10g,%.10g\n", p.k, post ? "post" : "pre", p.censoring,
                          p.random, p.de_cusum);
            os << buf;
        }
    }
    const auto dat = dir / "fig4.dat";
    {
        auto os = open_output(dat);
        os << "# change_point " << cfg.trace.change_point << "\n";
        for (const auto& [p, t] : set.stop_times) os << "# stop " << to_string(p) << " " << t << "\n";
        for (const auto& [p, t] : set.log_thresholds) os << "# log_threshold " << to_string(p) << " " << t << "\n";
        os << "# k censoring random de_cusum\n";
        char buf[256];
        for (const auto& p : set.points) {
            std::snprintf(buf, sizeof buf, "%d %.10g %.10g %.10g\n", p.k, p.censoring, p.random, p.de_cusum);
            os << buf;
        }
    }
    const auto gp = dir / "fig4.gp";
    {
        auto os = open_output(gp);
        os << "set terminal pngcairo size 800,560\nset output 'fig4.png'\n"
           << "set xlabel 'time k'\nset ylabel 'log statistic'\nset key top left\nset grid\n"
           << "set arrow from " << cfg.trace.change_point << ", graph 0 to " << cfg.trace.change_point
           << ", graph 1 nohead dashtype 2\n";
        int style = 1;
        for (const auto& [p, t] : set.log_thresholds) {
            os << "set arrow from graph 0, first " << t << " to graph 1, first " << t << " nohead lt " << style++
               << " dashtype 3\n";
        }
        os << "plot 'fig4.dat' using 1:2 with lines title 'censoring', '' using 1:3 with lines title 'random', "
              "'' using 1:4 with lines title 'de_cusum'\n";
    }
    report.files.push_back(csv);
    report.files.push_back(dat);
    report.files.push_back(gp);
}

}  // namespace

std::string_view to_string(ExperimentName name) noexcept {
    switch (name) {
        case ExperimentName::Example1: return "example1";
        case ExperimentName::Example2: return "example2";
        case ExperimentName::Example3: return "example3";
        case ExperimentName::Example4: return "example4";
        case ExperimentName::Custom: return "custom";
    }
    return "custom";
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig default_run_config(ExperimentName name) {
    RunConfig cfg;
    cfg.experiment = name;
    cfg.epsilons = unit_grid();
    switch (name) {
        case ExperimentName::Example1:
            cfg.policies = {PolicyChoice::Censoring, PolicyChoice::Random};
            break;
        case ExperimentName::Example2:
            cfg.policies = {PolicyChoice::Censoring, PolicyChoice::DeCusum};
            break;
        case ExperimentName::Example3:
            cfg.base.epsilon = 0.1;
            cfg.policies = {PolicyChoice::Censoring, PolicyChoice::Random, PolicyChoice::DeCusum};
            break;
        case ExperimentName::Example4:
            cfg.base.detector = DetectorKind::Srp;
            cfg.base.target_arl = 1500.0;
            cfg.policies = {PolicyChoice::Censoring, PolicyChoice::Random};
            break;
        case ExperimentName::Custom:
            cfg.epsilons.clear();
            break;
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        schema_error("config", std::string("not valid JSON: ") + e.what());
    }
    check_keys(root, "",
               {"experiment", "pair", "policy", "policies", "detector", "epsilon", "epsilons", "target_arl",
                "change_points", "de_cusum_change_points", "runs", "delay_runs", "energy_runs", "energy_horizon",
                "seed", "optimizer_step", "srp_grid_step", "cap_factor", "workers", "threshold", "trace"});

    const json* name = find(root, "experiment");
    if (!name) schema_error("experiment", "missing");
    RunConfig cfg = default_run_config(parse_name(text(*name, "experiment")));
    auto& b = cfg.base;

    if (const json* p = find(root, "pair")) {
        check_keys(*p, "pair", {"mu0", "mu1", "sigma"});
        if (const json* v = find(*p, "mu0")) b.pair.mu0 = number(*v, "pair.mu0");
        if (const json* v = find(*p, "mu1")) b.pair.mu1 = number(*v, "pair.mu1");
        if (const json* v = find(*p, "sigma")) b.pair.sigma = number(*v, "pair.sigma");
        if (!(b.pair.sigma > 0.0)) schema_error("pair.sigma", "must be positive");
    }
    if (const json* v = find(root, "policy")) {
        b.policy = reinterpret("policy", [&] { return parse_policy_choice(text(*v, "policy")); });
    }
    if (const json* v = find(root, "policies")) {
        if (!v->is_array() || v->empty()) schema_error("policies", "expected a nonempty array");
        cfg.policies.clear();
        for (const auto& e : *v) {
            cfg.policies.push_back(reinterpret("policies", [&] { return parse_policy_choice(text(e, "policies")); }));
        }
    }
    if (const json* v = find(root, "detector")) {
        b.detector = reinterpret("detector", [&] { return parse_detector_kind(text(*v, "detector")); });
    }
    if (const json* v = find(root, "epsilon")) {
        b.epsilon = number(*v, "epsilon");
        if (!(b.epsilon > 0.0 && b.epsilon <= 1.0)) schema_error("epsilon", "must be in (0, 1]");
    }
    if (const json* v = find(root, "epsilons")) {
        if (!v->is_array() || v->empty()) schema_error("epsilons", "expected a nonempty array");
        cfg.epsilons.clear();
        for (const auto& e : *v) {
            const double eps = number(e, "epsilons");
            if (!(eps > 0.0 && eps <= 1.0)) schema_error("epsilons", "entries must be in (0, 1]");
            cfg.epsilons.push_back(eps);
        }
    }
    if (const json* v = find(root, "target_arl")) b.target_arl = number(*v, "target_arl");
    const auto int_list = [&](const char* key, std::vector<int>& out) {
        if (const json* v = find(root, key)) {
            if (!v->is_array()) schema_error(key, "expected an array of integers");
            out.clear();
            for (const auto& e : *v) out.push_back(static_cast<int>(integer(e, key)));
        }
    };
    int_list("change_points", b.change_points);
    int_list("de_cusum_change_points", b.de_cusum_change_points);
    if (const json* v = find(root, "runs")) b.runs = static_cast<int>(integer(*v, "runs"));
    if (const json* v = find(root, "delay_runs")) b.delay_runs = static_cast<int>(integer(*v, "delay_runs"));
    if (const json* v = find(root, "energy_runs")) b.energy_runs = static_cast<int>(integer(*v, "energy_runs"));
    if (const json* v = find(root, "energy_horizon")) {
        b.energy_horizon = static_cast<int>(integer(*v, "energy_horizon"));
    }
    if (const json* v = find(root, "seed")) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
            schema_error("seed", "expected an unsigned integer");
        }
        b.seed = v->get<std::uint64_t>();
    }
    if (const json* v = find(root, "optimizer_step")) b.optimizer_step = number(*v, "optimizer_step");
    if (const json* v = find(root, "srp_grid_step")) b.srp_grid_step = number(*v, "srp_grid_step");
    if (const json* v = find(root, "cap_factor")) b.cap_factor = number(*v, "cap_factor");
    if (const json* v = find(root, "workers")) b.workers = static_cast<int>(integer(*v, "workers"));
    if (const json* v = find(root, "threshold")) {
        cfg.threshold = number(*v, "threshold");
        if (!(*cfg.threshold > 0.0)) schema_error("threshold", "must be positive");
    }
    if (const json* t = find(root, "trace")) {
        check_keys(*t, "trace", {"change_point", "length", "thresholds"});
        if (const json* v = find(*t, "change_point")) {
            cfg.trace.change_point = static_cast<int>(integer(*v, "trace.change_point"));
        }
        if (const json* v = find(*t, "length")) cfg.trace.length = static_cast<int>(integer(*v, "trace.length"));
        if (const json* th = find(*t, "thresholds")) {
            check_keys(*th, "trace.thresholds", {"censoring", "random", "de_cusum"});
            for (const auto& [k, v] : th->items()) {
                const double a = number(v, "trace.thresholds." + k);
                if (!(a > 0.0)) schema_error("trace.thresholds." + k, "must be positive");
                cfg.trace.thresholds[parse_policy_choice(k)] = a;
            }
        }
        if (cfg.trace.change_point < 1) schema_error("trace.change_point", "must be >= 1");
        if (cfg.trace.length < cfg.trace.change_point) schema_error("trace.length", "must cover the change point");
    }

    // Remaining range checks; their messages already lead with the field name.
    try {
        b.validate();
    } catch (const Error& e) {
        const std::string msg = e.what();
        const auto colon = msg.find(": ");
        throw Error(ErrorKind::SchemaError, colon == std::string::npos ? msg : msg.substr(colon + 2));
    }
    if (b.detector == DetectorKind::Srp) {
        for (auto p : cfg.policies) {
            if (p == PolicyChoice::DeCusum) schema_error("policies", "de_cusum requires the cusum detector");
        }
    }
    return cfg;
}

TraceSet sample_traces(const ExperimentConfig& base, double epsilon, const TraceSpec& trace) {
    TraceSet out;
    const auto pair = base.pair.build();
    const auto at = [&](PolicyChoice p) {
        const auto it = trace.thresholds.find(p);
        if (it == trace.thresholds.end()) throw Error(ErrorKind::InvalidParameter, "trace threshold missing");
        return it->second;
    };
    out.points.resize(static_cast<std::size_t>(trace.length) + 1);
    for (int k = 0; k <= trace.length; ++k) out.points[static_cast<std::size_t>(k)].k = k;
    const auto regime = [&](int k) { return k >= trace.change_point ? Regime::PostChange : Regime::PreChange; };

    for (auto kind : {PolicyChoice::Censoring, PolicyChoice::Random}) {
        const auto policy = kind == PolicyChoice::Censoring ? optimize_policy(pair, epsilon, base.optimizer_step)
                                                            : random_policy(epsilon);
        const double a = at(kind);
        Rng rng = Rng::stream(base.seed, 0x7ace0000ULL + static_cast<std::uint64_t>(kind));
        auto st = cusum_start(a);
        int stop = 0;
        for (int k = 1; k <= trace.length; ++k) {
            const auto obs = apply_policy(policy, pair.sample(regime(k), rng), rng);
            st = cusum_step_log(st, censored_log_lr(policy, pair, obs));
            if (stop == 0 && crossed(st)) stop = k;
            auto& pt = out.points[static_cast<std::size_t>(k)];
            (kind == PolicyChoice::Censoring ? pt.censoring : pt.random) = st.log_s;
        }
        out.stop_times[kind] = stop;
        out.log_thresholds[kind] = std::log(a);
    }
    {
        const double a = at(PolicyChoice::DeCusum);
        Rng rng = Rng::stream(base.seed, 0x7ace0000ULL + static_cast<std::uint64_t>(PolicyChoice::DeCusum));
        auto st = de_cusum_start(de_cusum_mu(pair, epsilon), a);
        int stop = 0;
        for (int k = 1; k <= trace.length; ++k) {
            st = de_cusum_step(st, pair, regime(k), rng).state;
            if (stop == 0 && crossed(st)) stop = k;
            out.points[static_cast<std::size_t>(k)].de_cusum = st.w;
        }
        out.stop_times[PolicyChoice::DeCusum] = stop;
        out.log_thresholds[PolicyChoice::DeCusum] = std::log(a);
    }
    return out;
}

RunReport run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir, const std::string& config_source,
                         const std::string& config_text) {
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out_dir);
    RunReport report;
    const std::string stem = figure_stem(cfg.experiment);

    if (cfg.experiment == ExperimentName::Example3) {
        run_traces(cfg, out_dir, report);
    } else {
        std::vector<TradeoffRow> rows;
        if (cfg.experiment == ExperimentName::Custom) {
            const Experiment exp(cfg.base);
            TradeoffRow row;
            row.epsilon = cfg.base.epsilon;
            row.policy = cfg.base.policy;
            row.detector = cfg.base.detector;
            row.seed = cfg.base.seed;
            row.runs = cfg.base.runs;
            if (cfg.threshold) {
                row.threshold = *cfg.threshold;
                row.arl = exp.estimate_arl(row.threshold);
            } else {
                const auto cal = exp.calibrate_threshold();
                row.threshold = cal.threshold;
                row.arl = cal.arl;
            }
            row.delay = exp.estimate_worst_delay(row.threshold);
            row.energy = exp.estimate_energy_rate();
            rows.push_back(std::move(row));
        } else {
            rows = run_tradeoff_sweep(cfg.base, cfg.epsilons, cfg.policies);
        }
        const auto csv = out_dir / (stem + ".csv");
        {
            auto os = open_output(csv);
            write_csv(os, rows);
        }
        report.files.push_back(csv);
        record_rows(rows, report);
        if (cfg.experiment != ExperimentName::Custom) {
            const std::string title = cfg.base.detector == DetectorKind::Srp
                                          ? "SRP, integral equations, ARL " + std::to_string(cfg.base.target_arl)
                                          : "CuSum, Monte Carlo, ARL " + std::to_string(cfg.base.target_arl);
            write_sweep_plot(out_dir, stem, rows, cfg.policies, title, report);
        }
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto manifest_path = out_dir / "manifest.json";
    report.files.push_back(manifest_path);

    json manifest;
    manifest["experiment"] = to_string(cfg.experiment);
    manifest["config_path"] = config_source;
    manifest["config_hash"] = hex64(fnv1a(config_text.empty() ? to_json(cfg).dump() : config_text));
    manifest["resolved_config"] = to_json(cfg);
    manifest["seed"] = cfg.base.seed;
    manifest["workers"] = cfg.base.workers;
    manifest["output_dir"] = out_dir.string();
    json files = json::array();
    for (const auto& f : report.files) files.push_back(f.filename().string());
    manifest["files"] = files;
    manifest["wall_seconds"] = report.wall_seconds;
    manifest["degraded"] = report.degraded;
    manifest["diagnostics"] = report.diagnostics;
    manifest["versions"] = {
        {"cqcd", CQCD_VERSION},
        {"compiler", __VERSION__},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"openmp", _OPENMP},
        {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                     "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
    };
    auto os = open_output(manifest_path);
    os << manifest.dump(2) << "\n";
    return report;
}

}  // namespace cqcd
