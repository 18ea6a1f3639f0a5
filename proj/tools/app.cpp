#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ncl/block_kernel.hpp"
#include "ncl/errors.hpp"
#include "ncl/format.hpp"
#include "ncl/lambda_measure.hpp"
#include "ncl/nested_sim.hpp"
#include "ncl/rde_solver.hpp"
#include "ncl/sibuya_bounds.hpp"

#ifndef NCL_VERSION
#define NCL_VERSION "dev"
#endif

namespace ncl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ArgumentError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write " + p.string());
    out << content;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IntegrityError("sha256 failed");
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i)
        ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return ss.str();
}

// --timestamp, then SOURCE_DATE_EPOCH, then the epoch itself. Never the wall clock,
// so reruns stay byte-identical.
std::string resolve_timestamp(const std::string& flag) {
    if (!flag.empty()) return flag;
    std::time_t t = 0;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end == env || *end != '\0') throw ArgumentError("SOURCE_DATE_EPOCH is not an integer");
        t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Flat JSON config; keys are flag names without the leading dashes (underscores
// also accepted), scoped to the chosen subcommand.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_lnames().empty() || opt->count() == 0) continue;
            const auto& res = opt->results();
            j[opt->get_lnames().front()] = res.size() == 1 ? json(res.front()) : json(res);
        }
        return j.dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<std::string> parents;
        const auto subs = root_->get_subcommands();
        if (!subs.empty()) parents.push_back(subs.front()->get_name());
        std::vector<CLI::ConfigItem> items;
        for (const auto& [raw_key, value] : j.items()) {
            std::string key = raw_key;
            std::replace(key.begin(), key.end(), '_', '-');
            CLI::ConfigItem item;
            if (root_->get_option_no_throw("--" + key) == nullptr) item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_float()) return fmt17(v.get<double>());
        return v.dump();
    }

    const CLI::App* root_;
};

struct Common {
    std::string out_dir = "out";
    std::string config_path;
    std::string timestamp;
};

struct Manifest {
    std::string command;
    json config;
    json inputs = json::object();
    std::string timestamp;

    json to_json() const {
        return {{"command", command},
                {"config", config},
                {"version", NCL_VERSION},
                {"timestamp", timestamp},
                {"input_sha256", inputs}};
    }
    std::string csv_header() const { return "# manifest " + to_json().dump() + "\n"; }
};

struct MeasureInput {
    std::string text;
    std::string file;

    LambdaMeasure resolve(Manifest& m) const {
        if (!text.empty() && !file.empty())
            throw ArgumentError("give either --measure or --measure-file, not both");
        if (!file.empty()) {
            const std::string body = read_file(file);
            m.inputs[file] = sha256_hex(body);
            return LambdaMeasure::parse(body);
        }
        if (text.empty()) throw ArgumentError("a measure is required (--measure or --measure-file)");
        return LambdaMeasure::parse(text);
    }
};

Manifest start_manifest(const std::string& command, const Common& common) {
    Manifest m;
    m.command = command;
    m.timestamp = resolve_timestamp(common.timestamp);
    if (!common.config_path.empty()) m.inputs[common.config_path] = sha256_hex(read_file(common.config_path));
    return m;
}

fs::path prepare_out(const Common& common) {
    fs::path dir(common.out_dir);
    fs::create_directories(dir);
    return dir;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_measure_options(CLI::App* sub, MeasureInput& in) {
    sub->add_option("--measure", in.text, "beta:<alpha> or a measure JSON object");
    sub->add_option("--measure-file", in.file, "file holding a measure JSON object");
}

// ---- rates ----

struct RatesArgs {
    MeasureInput measure;
    int b_max = 0;
};

int cmd_rates(const RatesArgs& a, const Common& common) {
    Manifest man = start_manifest("rates", common);
    const LambdaMeasure m = a.measure.resolve(man);
    if (a.b_max < 2) throw ArgumentError("--bmax must be at least 2");
    man.config = {{"measure", m.to_json()}, {"bmax", a.b_max}};

    const auto t0 = std::chrono::steady_clock::now();
    const RateTable table(m, a.b_max);
    const fs::path dir = prepare_out(common);

    std::string csv = man.csv_header() + "b,k,lambda_bk,transition_rate\n";
    for (int b = 2; b <= a.b_max; ++b)
        for (int k = 2; k <= b; ++k)
            csv += std::to_string(b) + "," + std::to_string(k) + "," + fmt17(table.lambda_bk(b, k)) + "," +
                   fmt17(table.transition(b, b - k + 1)) + "\n";
    write_file(dir / "rates.csv", csv);

    std::string totals = man.csv_header() + "b,lambda_b\n";
    for (int b = 2; b <= a.b_max; ++b) totals += std::to_string(b) + "," + fmt17(table.lambda_b(b)) + "\n";
    write_file(dir / "lambda_b.csv", totals);

    const double violation = table.consistency_violation();
    json report{{"manifest", man.to_json()},
                {"bmax", a.b_max},
                {"consistency_violation", json_number(violation)}};
    write_file(dir / "rates.json", report.dump(2) + "\n");
    std::cerr << "rates: bmax " << a.b_max << ", consistency violation " << fmt17(violation) << ", "
              << seconds_since(t0) << " s\n";
    return kOk;
}

// ---- solve ----

struct SolveArgs {
    MeasureInput measure;
    double c = 0.0;
    std::string from = "one";
    int n = 512;
    double tol = 1e-12;
    long max_iter = 100000;
    std::string policy = "envelope";
    bool assert_finite_mean = false;
    bool write_kernel = false;
};

int cmd_solve(const SolveArgs& a, const Common& common) {
    Manifest man = start_manifest("solve", common);
    const LambdaMeasure m = a.measure.resolve(man);
    if (!(a.c > 0.0)) throw ArgumentError("--c must be positive");
    if (a.n < 2) throw ArgumentError("--n must be at least 2");
    if (a.from != "one" && a.from != "inf") throw ArgumentError("--from must be one or inf");
    FixOptions opts;
    opts.tol = a.tol;
    opts.max_iter = a.max_iter;
    opts.policy = parse_tail_policy(a.policy);
    man.config = {{"measure", m.to_json()}, {"c", a.c},          {"from", a.from},
                  {"n", a.n},               {"tol", a.tol},      {"max_iter", a.max_iter},
                  {"policy", to_string(opts.policy)},            {"assert_finite_mean", a.assert_finite_mean}};

    if (a.assert_finite_mean && regime_of(m, a.c) != Regime::FiniteMean)
        throw DomainError("finite-mean hypothesis violated: c = " + fmt17(a.c) + " >= E[1/X] = " +
                          fmt17(mean_inv_x(m)));

    const auto t0 = std::chrono::steady_clock::now();
    const LYKernel kernel(m, a.c, a.n, m.is_dust());
    const fs::path dir = prepare_out(common);

    auto emit = [&](const FixResult& r) {
        const FixDiagnostics diag = diagnose(r, kernel);
        json j = to_json(r, kernel, diag);
        j["from"] = a.from;
        j["manifest"] = man.to_json();
        write_file(dir / "solve.json", j.dump(2) + "\n");
        std::string csv = man.csv_header() + "n,p,cdf\n";
        const auto cdf = r.dist.cdf();
        for (int n = 1; n <= r.dist.size(); ++n)
            csv += std::to_string(n) + "," + fmt17(r.dist.mass(n)) + "," + fmt17(cdf[n - 1]) + "\n";
        csv += "inf," + fmt17(r.dist.p_inf()) + ",\n";
        write_file(dir / "solve.csv", csv);
        if (a.write_kernel) {
            std::ostringstream ks;
            ks << man.csv_header();
            kernel.write_csv(ks);
            write_file(dir / "kernel.csv", ks.str());
        }
        std::cerr << "solve: " << r.iterations << " iterations, regime " << to_string(r.regime)
                  << ", p_inf " << fmt17(r.dist.p_inf()) << ", " << seconds_since(t0) << " s\n";
    };

    try {
        const FixResult r = a.from == "one" ? fix_from_delta1(kernel, opts) : fix_from_delta_inf(kernel, opts);
        emit(r);
    } catch (const ConvergenceError& e) {
        emit(e.partial());
        throw;
    }
    return kOk;
}

// ---- simulate ----

struct SimulateArgs {
    MeasureInput measure;
    double c = 0.0;
    std::vector<int> s;
    int m = 1;
    std::string init = "one";
    long reps = 1000;
    std::uint64_t seed = 0;
    int b_cap = 0;
    int threads = 0;
    int n = 512;
    int bucket_cap = 50;
    std::string compare_to;
};

struct Reference {
    std::optional<ExtDist> dist;
    std::string source;
};

Reference load_reference(const SimulateArgs& a, const LambdaMeasure& m, Manifest& man, InitKind init) {
    Reference ref;
    if (!a.compare_to.empty()) {
        const std::string body = read_file(a.compare_to);
        man.inputs[a.compare_to] = sha256_hex(body);
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception& e) {
            throw ArgumentError(std::string("--compare-to is not valid JSON: ") + e.what());
        }
        if (!j.contains("measure") || !j.contains("c"))
            throw ArgumentError("--compare-to file has no measure/c fields");
        const LambdaMeasure other = LambdaMeasure::from_json(j.at("measure"));
        const double other_c = number_from_json(j.at("c"));
        if (!(other == m) || std::abs(other_c - a.c) > 1e-12 * std::max(1.0, std::abs(a.c)))
            throw MismatchError("compare target was produced for measure " + other.to_json().dump() +
                                ", c = " + fmt17(other_c) + "; this run uses " + m.to_json().dump() +
                                ", c = " + fmt17(a.c));
        ref.dist = ext_dist_from_json(j);
        ref.source = a.compare_to;
        return ref;
    }
    try {
        const LYKernel kernel(m, a.c, a.n, m.is_dust());
        ref.dist = init == InitKind::One ? fix_from_delta1(kernel).dist : fix_from_delta_inf(kernel).dist;
        ref.source = init == InitKind::One ? "fixed point from delta_1" : "fixed point from delta_inf";
    } catch (const Error& e) {
        ref.source = std::string("unavailable: ") + e.what();
    }
    return ref;
}

int cmd_simulate(const SimulateArgs& a, const Common& common) {
    Manifest man = start_manifest("simulate", common);
    const LambdaMeasure m = a.measure.resolve(man);
    if (a.s.empty()) throw ArgumentError("--s is required");
    if (!(a.c > 0.0)) throw ArgumentError("--c must be positive");
    if (a.bucket_cap < 1) throw ArgumentError("--bucket-cap must be positive");
    const InitKind init = parse_init(a.init);
    const Reference ref = load_reference(a, m, man, init);
    man.config = {{"measure", m.to_json()}, {"c", a.c},         {"s", a.s},
                  {"m", a.m},               {"init", to_string(init)}, {"reps", a.reps},
                  {"seed", a.seed},         {"b_cap", a.b_cap}, {"n", a.n},
                  {"bucket_cap", a.bucket_cap}, {"compare_to", a.compare_to}};
    const fs::path dir = prepare_out(common);
    const ExtDist* ref_ptr = ref.dist ? &*ref.dist : nullptr;
    const bool sweep = a.s.size() > 1;

    json runs = json::array();
    std::string trend = man.csv_header() + "s,tv_to_reference,max_abs_correlation\n";
    for (int s : a.s) {
        SimConfig cfg{m, a.c, s, a.m, init, a.reps, a.seed, a.b_cap, a.threads};
        const SimResult r = run_many(cfg);
        std::ostringstream csv;
        csv << man.csv_header();
        write_replicates_csv(csv, r);
        write_file(dir / (sweep ? "simulate_s" + std::to_string(s) + ".csv" : "simulate.csv"), csv.str());
        json summ = summary_json(r, cfg, ref_ptr, a.bucket_cap);
        double max_corr = 0.0;
        for (double v : r.correlations)
            if (std::isfinite(v)) max_corr = std::max(max_corr, std::abs(v));
        summ["max_abs_correlation"] = max_corr;
        const double tv = ref_ptr ? number_from_json(summ.at("tv_to_reference")) : std::nan("");
        trend += std::to_string(s) + "," + fmt17(tv) + "," + fmt17(max_corr) + "\n";
        runs.push_back(std::move(summ));
        std::cerr << "simulate: s " << s << ", " << a.reps << " replicates in " << r.runtime_seconds << " s\n";
    }

    json out;
    if (sweep) {
        std::vector<double> tvs;
        for (const auto& r : runs)
            tvs.push_back(r.contains("tv_to_reference") ? number_from_json(r.at("tv_to_reference")) : std::nan(""));
        bool non_increasing = true;
        for (std::size_t i = 1; i < tvs.size(); ++i) non_increasing = non_increasing && tvs[i] <= tvs[i - 1];
        out = {{"runs", runs}, {"s", a.s}, {"tv_to_reference", json_array(tvs)},
               {"tv_non_increasing", non_increasing}};
        write_file(dir / "sweep.csv", trend);
    } else {
        out = runs.front();
    }
    out["reference"] = ref.source;
    out["manifest"] = man.to_json();
    write_file(dir / "simulate.json", out.dump(2) + "\n");
    return kOk;
}

// ---- sibuya ----

struct SibuyaArgs {
    bool gamma_only = false;
    double alpha = 0.5;
    int n_max = 100000;
    MeasureInput measure;
    std::optional<double> c;
    std::optional<double> beta;
    int n = 4096;
    double tol = 1e-10;
    bool search = false;
    std::optional<double> a;
    std::optional<double> eps;
    std::optional<int> k;
};

int cmd_gamma(const SibuyaArgs& a, const Common& common) {
    Manifest man = start_manifest("sibuya", common);
    man.config = {{"gamma_only", true}, {"alpha", a.alpha}, {"nmax", a.n_max}};
    const GammaSeq g = gamma_coeffs(a.alpha, a.n_max);
    const fs::path dir = prepare_out(common);
    json j = to_json(g);
    j["manifest"] = man.to_json();
    write_file(dir / "gamma.json", j.dump(2) + "\n");
    std::string csv = man.csv_header() + "n,gamma\n";
    for (int n = 1; n <= a.n_max; ++n) csv += std::to_string(n) + "," + fmt17(g.at(n)) + "\n";
    write_file(dir / "gamma.csv", csv);
    std::cerr << "sibuya: asymptotic ratio at n = " << a.n_max << " is " << fmt17(g.asymptotic_ratio(a.n_max))
              << "\n";
    return kOk;
}

int cmd_bracket(const SibuyaArgs& a, const Common& common) {
    Manifest man = start_manifest("sibuya", common);
    const LambdaMeasure m = a.measure.resolve(man);
    if (!a.c) throw ArgumentError("--c is required for the bracket");
    const int explicit_count = static_cast<int>(a.a.has_value()) + a.eps.has_value() + a.k.has_value();
    if (explicit_count != 0 && explicit_count != 3)
        throw ArgumentError("--a, --eps and --k must be given together");
    BracketParams prm;
    prm.beta = a.beta;
    prm.n = a.n;
    prm.tol = a.tol;
    prm.a = a.a;
    prm.eps = a.eps;
    prm.k = a.k;
    man.config = {{"measure", m.to_json()}, {"c", *a.c}, {"n", a.n}, {"tol", a.tol},
                  {"search", explicit_count == 0}};
    if (a.beta) man.config["beta"] = *a.beta;
    if (explicit_count == 3) {
        man.config["a"] = *a.a;
        man.config["eps"] = *a.eps;
        man.config["k"] = *a.k;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const BracketReport rep = bracket_fixed_point(m, *a.c, prm);
    const fs::path dir = prepare_out(common);
    json j = to_json(rep);
    j["manifest"] = man.to_json();
    write_file(dir / "bracket.json", j.dump(2) + "\n");

    std::string csv = man.csv_header() + "n,mu0,nu0,lower,upper,star,mu0_margin,mu0_band,nu0_margin,nu0_band\n";
    const int n = rep.mu0.size();
    for (int i = 1; i <= n; ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        csv += std::to_string(i) + "," + fmt17(rep.mu0.mass(i)) + "," + fmt17(rep.nu0.dist.mass(i)) + "," +
               fmt17(rep.lower.fix.dist.mass(i)) + "," + fmt17(rep.upper.fix.dist.mass(i)) + "," +
               fmt17(rep.star.dist.mass(i)) + "," + fmt17(rep.mu0_dominance.margin[k]) + "," +
               fmt17(rep.mu0_dominance.band[k]) + "," + fmt17(rep.nu0_dominance.margin[k]) + "," +
               fmt17(rep.nu0_dominance.band[k]) + "\n";
    }
    write_file(dir / "bracket.csv", csv);
    std::cerr << "sibuya: bracket " << (rep.passed ? "passed" : "FAILED") << " (a " << fmt17(rep.a) << ", eps "
              << fmt17(rep.eps) << ", k " << rep.nu0.k << ") in " << seconds_since(t0) << " s\n";
    return rep.passed ? kOk : kIntegrity;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ArgumentError*>(&e)) return kUsage;
    if (dynamic_cast<const DomainError*>(&e)) return kHypothesis;
    if (dynamic_cast<const MismatchError*>(&e)) return kMismatch;
    if (dynamic_cast<const json::exception*>(&e)) return kUsage;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return kUsage;
    return kIntegrity;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Nested Lambda-coalescent lineage-count toolkit"};
    app.set_version_flag("--version", NCL_VERSION);
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.allow_config_extras(CLI::config_extras_mode::error);

    Common common;
    app.set_config("--config", "", "flat JSON file; keys are flag names, flags on the command line win");
    app.add_option("--out", common.out_dir, "output directory")->capture_default_str();
    app.add_option("--timestamp", common.timestamp, "timestamp recorded in manifests");

    RatesArgs rates;
    auto* rates_cmd = app.add_subcommand("rates", "tabulate lambda_{b,k} and check the consistency recursion");
    add_measure_options(rates_cmd, rates.measure);
    rates_cmd->add_option("--bmax", rates.b_max, "largest block count")->required();

    SolveArgs solve;
    auto* solve_cmd = app.add_subcommand("solve", "iterate G_c to a fixed point on {1..N} u {inf}");
    add_measure_options(solve_cmd, solve.measure);
    solve_cmd->add_option("--c", solve.c, "species merger rate")->required();
    solve_cmd->add_option("--from", solve.from, "start from delta_1 (one) or delta_inf (inf)")
        ->check(CLI::IsMember({"one", "inf"}))
        ->capture_default_str();
    solve_cmd->add_option("--n", solve.n, "truncation level N")->capture_default_str();
    solve_cmd->add_option("--tol", solve.tol, "TV stopping tolerance")->capture_default_str();
    solve_cmd->add_option("--max-iter", solve.max_iter, "iteration cap")->capture_default_str();
    solve_cmd->add_option("--policy", solve.policy, "tail policy: envelope, fold_to_n, fold_to_inf")
        ->capture_default_str();
    solve_cmd->add_flag("--assert-finite-mean", solve.assert_finite_mean, "fail (exit 3) unless c < E[1/X]");
    solve_cmd->add_flag("--write-kernel", solve.write_kernel, "also write the L_i(Y) kernel as CSV");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo of the nested coalescent");
    add_measure_options(sim_cmd, sim.measure);
    sim_cmd->add_option("--c", sim.c, "species merger rate")->required();
    sim_cmd->add_option("--s", sim.s, "initial species count; a comma list runs a sweep")
        ->required()
        ->delimiter(',');
    sim_cmd->add_option("--m", sim.m, "species count at which lineages are recorded")->capture_default_str();
    sim_cmd->add_option("--init", sim.init, "initial lineages per species: one or inf")
        ->check(CLI::IsMember({"one", "inf"}))
        ->capture_default_str();
    sim_cmd->add_option("--reps", sim.reps, "replicates")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "64-bit seed")->capture_default_str();
    sim_cmd->add_option("--b-cap", sim.b_cap, "largest tabulated block count (default: s)");
    sim_cmd->add_option("--threads", sim.threads, "worker threads (default: NCL_THREADS or all cores)");
    sim_cmd->add_option("--n", sim.n, "truncation level of the internal reference")->capture_default_str();
    sim_cmd->add_option("--bucket-cap", sim.bucket_cap, "TV uses {1..cap} plus one tail bucket")
        ->capture_default_str();
    sim_cmd->add_option("--compare-to", sim.compare_to, "solve.json to compare against");

    SibuyaArgs sib;
    auto* sib_cmd = app.add_subcommand("sibuya", "Sibuya coefficients and the heavy-tailed bracket");
    sib_cmd->add_flag("--gamma-only", sib.gamma_only, "only tabulate gamma_{alpha,n}");
    sib_cmd->add_option("--alpha", sib.alpha, "Sibuya index for --gamma-only")->capture_default_str();
    sib_cmd->add_option("--nmax", sib.n_max, "last n for --gamma-only")->capture_default_str();
    add_measure_options(sib_cmd, sib.measure);
    sib_cmd->add_option("--c", sib.c, "species merger rate");
    sib_cmd->add_option("--beta", sib.beta, "second Sibuya index (default: inside the admissible range)");
    sib_cmd->add_option("--n", sib.n, "truncation level N")->capture_default_str();
    sib_cmd->add_option("--tol", sib.tol, "TV stopping tolerance of the two iterations")->capture_default_str();
    auto* search_flag = sib_cmd->add_flag("--search", sib.search, "search (a, eps, k); the default");
    sib_cmd->add_option("--a", sib.a, "explicit a")->excludes(search_flag);
    sib_cmd->add_option("--eps", sib.eps, "explicit eps")->excludes(search_flag);
    sib_cmd->add_option("--k", sib.k, "explicit k")->excludes(search_flag);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (auto* cfg = app.get_option("--config"); cfg->count() > 0) common.config_path = cfg->as<std::string>();
        if (rates_cmd->parsed()) return cmd_rates(rates, common);
        if (solve_cmd->parsed()) return cmd_solve(solve, common);
        if (sim_cmd->parsed()) return cmd_simulate(sim, common);
        if (sib_cmd->parsed()) return sib.gamma_only ? cmd_gamma(sib, common) : cmd_bracket(sib, common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace ncl::cli
