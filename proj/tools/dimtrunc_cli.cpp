// Command-line driver: dimension truncation studies, FEM verification,
// moment checks, lattice construction, and the theory test battery.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dimtrunc/betagauss.hpp"
#include "dimtrunc/fem2d.hpp"
#include "dimtrunc/lattice.hpp"
#include "dimtrunc/randfield.hpp"
#include "dimtrunc/truncstudy.hpp"

namespace fs = std::filesystem;
using namespace dimtrunc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// Flat key=value config; '#' starts a comment, unknown keys are errors.
std::map<std::string, std::string> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

void apply_config(const std::map<std::string, std::string>& kv, StudyConfig& cfg) {
    for (const auto& [key, val] : kv) {
        if (key == "field.kind") {
            if (val == "affine")
                cfg.field.kind = FieldKind::Affine;
            else if (val == "lognormal")
                cfg.field.kind = FieldKind::Lognormal;
            else
                throw std::domain_error("config: field.kind must be affine|lognormal");
        } else if (key == "field.a0") {
            cfg.field.a0 = std::stod(val);
        } else if (key == "field.theta") {
            cfg.field.theta = std::stod(val);
        } else if (key == "field.max_dim") {
            cfg.field.max_dim = std::stoi(val);
        } else if (key == "fem.level") {
            cfg.fem_level = std::stoi(val);
        } else if (key == "fem.cg_tol") {
            cfg.cg_tol = std::stod(val);
        } else if (key == "fem.cg_max_iters") {
            cfg.cg_max_iters = std::stoi(val);
        } else if (key == "study.s_ref") {
            cfg.s_ref = std::stoi(val);
        } else if (key == "study.nodes") {
            cfg.n_nodes = std::stoull(val);
        } else if (key == "study.seed") {
            cfg.seed = std::stoull(val);
        } else if (key == "study.beta") {
            cfg.beta = std::stod(val);
        } else if (key == "study.threads") {
            cfg.threads = std::stoi(val);
        } else if (key == "lattice.kind") {
            if (val == "cbc")
                cfg.lattice_kind = LatticeKind::Cbc;
            else if (val == "korobov")
                cfg.lattice_kind = LatticeKind::Korobov;
            else
                throw std::domain_error("config: lattice.kind must be cbc|korobov");
        } else if (key == "lattice.korobov_a") {
            cfg.korobov_a = std::stoull(val);
        } else if (key == "study.subcommand" || key == "study.qoi") {
            // manifest bookkeeping keys, ignored on replay
        } else {
            throw std::domain_error("config: unknown key " + key);
        }
    }
}

std::string short_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const StudyConfig& cfg, const std::string& start,
                    const std::vector<std::string>& outputs) {
    std::ofstream mf(out_dir / "manifest.txt");
    mf << "# run manifest; feed back via --config to reproduce the CSV\n";
    mf << "study.subcommand = " << subcommand << '\n';
    mf << "field.kind = " << (cfg.field.kind == FieldKind::Affine ? "affine" : "lognormal")
       << '\n';
    mf << "field.a0 = " << format_double(cfg.field.a0) << '\n';
    mf << "field.theta = " << format_double(cfg.field.theta) << '\n';
    mf << "field.max_dim = " << cfg.field.max_dim << '\n';
    mf << "fem.level = " << cfg.fem_level << '\n';
    mf << "fem.cg_tol = " << format_double(cfg.cg_tol) << '\n';
    mf << "fem.cg_max_iters = " << cfg.cg_max_iters << '\n';
    mf << "study.s_ref = " << cfg.s_ref << '\n';
    mf << "study.nodes = " << cfg.n_nodes << '\n';
    mf << "study.seed = " << cfg.seed << '\n';
    mf << "study.beta = " << format_double(cfg.beta) << '\n';
    mf << "study.threads = " << cfg.threads << '\n';
    mf << "lattice.kind = " << (cfg.lattice_kind == LatticeKind::Cbc ? "cbc" : "korobov")
       << '\n';
    mf << "lattice.korobov_a = " << cfg.korobov_a << '\n';
    mf << "# started  " << start << '\n';
    mf << "# finished " << timestamp() << '\n';
    for (const auto& o : outputs) mf << "# output " << o << '\n';
}

struct StudyFlags {
    std::string config_path, out_dir = ".";
    bool emit_plot = false, timings = false;
    std::string lattice_kind;
};

void add_study_flags(CLI::App* cmd, StudyConfig& cfg, StudyFlags& flags) {
    cmd->add_option("--config", flags.config_path,
                    "flat key=value config file; flags override its keys");
    cmd->add_option("--out", flags.out_dir, "output directory for CSV/manifest");
    cmd->add_option("--seed", cfg.seed, "random-shift seed (single random shift)");
    cmd->add_option("--threads", cfg.threads, "worker threads, 0 = auto");
    cmd->add_option("--theta", cfg.field.theta,
                    "basis decay exponent of j^{-theta} sin(j pi x1) sin(j pi x2)");
    cmd->add_option("--fem-level", cfg.fem_level, "mesh level m, h = 2^-m");
    cmd->add_option("--s-ref", cfg.s_ref, "reference truncation dimension s'");
    cmd->add_option("--nodes", cfg.n_nodes, "lattice cubature nodes (power of two)");
    cmd->add_option("--lattice", flags.lattice_kind,
                    "generating vector construction: cbc|korobov")
        ->check(CLI::IsMember({"cbc", "korobov"}));
    cmd->add_flag("--emit-plot", flags.emit_plot, "also write <out>/plot.gp");
    cmd->add_flag("--timings", flags.timings,
                  "write measured per-s solve times into the wall_ms column "
                  "(breaks byte-for-byte reproducibility)");
}

int run_study_command(const std::string& subcommand, StudyConfig cfg,
                      const StudyFlags& flags, CLI::App* cmd) {
    if (!flags.config_path.empty()) {
        // Config first, then flags that were actually passed win.
        StudyConfig merged = cfg;
        apply_config(load_config(flags.config_path), merged);
        if (cmd->count("--seed")) merged.seed = cfg.seed;
        if (cmd->count("--threads")) merged.threads = cfg.threads;
        if (cmd->count("--theta")) merged.field.theta = cfg.field.theta;
        if (cmd->count("--fem-level")) merged.fem_level = cfg.fem_level;
        if (cmd->count("--s-ref")) merged.s_ref = cfg.s_ref;
        if (cmd->count("--nodes")) merged.n_nodes = cfg.n_nodes;
        if (cmd->get_option_no_throw("--beta") && cmd->count("--beta"))
            merged.beta = cfg.beta;
        cfg = merged;
    }
    if (!flags.lattice_kind.empty())
        cfg.lattice_kind =
            flags.lattice_kind == "cbc" ? LatticeKind::Cbc : LatticeKind::Korobov;
    // Dimensions 2^1.. up to s_ref/2, against reference s_ref.
    cfg.s_list = default_s_list(cfg.s_ref);
    cfg.field.max_dim = std::max(cfg.field.max_dim, cfg.s_ref);

    const std::string start = timestamp();
    const StudyResult res = cfg.qoi == Qoi::H1MeanField ? run_lognormal_study(cfg)
                                                        : run_affine_qoi_study(cfg);

    fs::create_directories(flags.out_dir);
    const fs::path csv_path =
        fs::path(flags.out_dir) /
        (subcommand + "-" + short_double(cfg.field.theta) + ".csv");
    {
        std::ofstream csv(csv_path);
        emit_csv(res, csv, flags.timings);
    }
    std::vector<std::string> outputs = {csv_path.string()};
    if (flags.emit_plot) {
        const fs::path gp = fs::path(flags.out_dir) / "plot.gp";
        std::ofstream os(gp);
        emit_plot_script(res, csv_path.filename().string(), os);
        outputs.push_back(gp.string());
    }
    write_manifest(flags.out_dir, subcommand, cfg, start, outputs);

    std::cout << subcommand << ": theta = " << short_double(cfg.field.theta)
              << ", fitted slope = " << format_double(res.fitted_slope)
              << " on s in [" << res.fit_lo << ", " << res.fit_hi << "]"
              << " (theoretical " << short_double(theoretical_rate(cfg.field.theta))
              << "), wrote " << csv_path.string() << std::endl;
    for (const auto& e : res.entries)
        if (e.at_machine_precision)
            std::cout << "  s = " << e.s
                      << ": difference smaller than machine precision, excluded"
                      << std::endl;
    return 0;
}

int cmd_moments(double beta, double alpha, int nu) {
    const BetaGaussian dist(beta);
    const double quad = exp_weighted_moment(dist, WeightedMomentSpec(alpha, nu));
    double closed = std::numeric_limits<double>::quiet_NaN();
    if (alpha == 0.0) {
        closed = dist.abs_moment(nu);
    } else if (beta == 1.0) {
        // nu! / (1 - alpha)^{nu+1}
        closed = std::exp(log_gamma(nu + 1.0) - (nu + 1.0) * std::log(1.0 - alpha));
    }
    std::cout << "beta = " << short_double(beta) << ", alpha = " << short_double(alpha)
              << ", nu = " << nu << '\n';
    std::cout << "quadrature  = " << format_double(quad) << '\n';
    if (std::isnan(closed)) {
        std::cout << "closed-form = (none for beta > 1 with alpha > 0)\n";
    } else {
        std::cout << "closed-form = " << format_double(closed) << '\n';
        std::cout << "difference  = " << format_double(quad - closed) << '\n';
    }
    return 0;
}

int cmd_lattice_gen(std::uint64_t n, int s, double theta, std::uint64_t korobov_a,
                    bool use_korobov, bool emit_points, std::uint64_t seed) {
    std::vector<std::uint64_t> z;
    if (use_korobov)
        z = korobov_vector(n, korobov_a, s);
    else
        z = cbc_vector(n, s, ProductWeights::decay(s, theta));
    if (emit_points) {
        const LatticeRule rule(n, z);
        const Shift shift = random_shift(seed, s);
        std::vector<double> pt(s);
        for (std::uint64_t i = 0; i < n; ++i) {
            lattice_point(rule, shift, i, pt);
            for (int j = 0; j < s; ++j)
                std::cout << (j ? "," : "") << format_double(pt[j]);
            std::cout << '\n';
        }
    } else {
        for (auto zj : z) std::cout << zj << '\n';
    }
    return 0;
}

int cmd_fem_verify(int min_level, int max_level) {
    const auto exact_grad = [](std::array<double, 2> x) -> std::array<double, 2> {
        return {M_PI * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]),
                M_PI * std::sin(M_PI * x[0]) * std::cos(M_PI * x[1])};
    };
    const auto rhs = [](std::array<double, 2> x) {
        return 2.0 * M_PI * M_PI * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]);
    };
    std::cout << "m,h1_error,ratio_to_previous\n";
    double prev = 0.0;
    for (int m = min_level; m <= max_level; ++m) {
        const TriMesh mesh = build_mesh(m);
        const auto stiff =
            assemble_stiffness(mesh, [](std::array<double, 2>) { return 1.0; });
        const auto load = assemble_load(mesh, rhs);
        const FemSystem sys = make_system(mesh, stiff, load);
        const FemFunction u = solve(sys);
        const double err = h1_error_vs_exact(mesh, u, exact_grad);
        std::cout << m << ',' << format_double(err) << ','
                  << (prev > 0.0 ? format_double(prev / err) : "") << '\n';
        prev = err;
    }
    return 0;
}

int cmd_check_theory(std::uint64_t seed, int strang_draws) {
    int failures = 0;

    // Stechkin tail bound on randomized nonincreasing sequences.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int stechkin_fail = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(2000);
        if (trial % 2 == 0) {
            const double r = 1.5 + 2.5 * unif(rng);
            const double c = 0.1 + 10.0 * unif(rng);
            for (std::size_t k = 0; k < a.size(); ++k)
                a[k] = c * std::pow(static_cast<double>(k + 1), -r);
            const double p = 1.0 / r + 0.1 + unif(rng) * (2.0 - 1.0 / r - 0.1);
            const double q = p + 3.0 * unif(rng);
            const int N = 1 + static_cast<int>(unif(rng) * 50);
            if (!stechkin_check(a, p, q, N).holds) ++stechkin_fail;
        } else {
            const double rho = 0.2 + 0.7 * unif(rng);
            const double c = 0.1 + 10.0 * unif(rng);
            for (std::size_t k = 0; k < a.size(); ++k)
                a[k] = c * std::pow(rho, static_cast<double>(k));
            const double p = 0.3 + 1.5 * unif(rng);
            const double q = p + 3.0 * unif(rng);
            const int N = 1 + static_cast<int>(unif(rng) * 50);
            if (!stechkin_check(a, p, q, N).holds) ++stechkin_fail;
        }
    }
    std::cout << "stechkin: " << (200 - stechkin_fail) << "/200 hold\n";
    failures += stechkin_fail;

    // Discrete Strang inequality for lognormal draws.
    StudyConfig cfg = lognormal_config(2.0);
    cfg.seed = seed;
    for (int s : {1, 2, 4, 8}) {
        const StrangReport rep = strang_bound_check(cfg, strang_draws, s);
        std::cout << "strang s = " << s << ": max ratio = "
                  << format_double(rep.max_ratio) << ", violations = "
                  << rep.violations << "/" << rep.draws << '\n';
        failures += rep.violations;
    }

    // Weighted moments bounded independently of beta (beta = 1 dominates).
    int moment_fail = 0;
    for (double alpha : {0.0, 0.25, 0.5, 0.9}) {
        for (int nu = 0; nu <= 4; ++nu) {
            const double ref =
                exp_weighted_moment(BetaGaussian(1.0), WeightedMomentSpec(alpha, nu));
            for (double beta : {1.0, 1.25, 2.0, 4.0, 8.0}) {
                const double val = exp_weighted_moment(BetaGaussian(beta),
                                                       WeightedMomentSpec(alpha, nu));
                if (!(val <= ref + 1e-8)) ++moment_fail;
            }
        }
    }
    std::cout << "beta-uniform moment bound: "
              << (moment_fail == 0 ? "all hold" : std::to_string(moment_fail) +
                                                      " violations")
              << '\n';
    failures += moment_fail;

    if (failures > 0) {
        std::cout << "check-theory: FAILED (" << failures << " violations)\n";
        return kExitNumerical;
    }
    std::cout << "check-theory: all checks hold\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dimension truncation error studies for parametric elliptic PDEs"};
    app.require_subcommand(1);

    // study-lognormal
    StudyConfig ln_cfg = lognormal_config(2.0);
    StudyFlags ln_flags;
    auto* ln = app.add_subcommand(
        "study-lognormal",
        "H1 dimension truncation study for the lognormal coefficient "
        "exp(sum y_j psi_j)");
    add_study_flags(ln, ln_cfg, ln_flags);
    ln->add_option("--beta", ln_cfg.beta,
                   "shape exponent of the beta-Gaussian parameter distribution");

    // study-affine-qoi
    StudyConfig af_cfg = affine_config(1.5);
    StudyFlags af_flags;
    auto* af = app.add_subcommand(
        "study-affine-qoi",
        "nonlinear-QoI truncation study for the affine coefficient 3/2 + sum "
        "y_j psi_j");
    add_study_flags(af, af_cfg, af_flags);

    // moments
    double mom_beta = 2.0, mom_alpha = 0.0;
    int mom_nu = 1;
    auto* mom = app.add_subcommand(
        "moments", "closed-form vs quadrature exponentially weighted moments");
    mom->add_option("--beta", mom_beta, "shape exponent, >= 1")->required();
    mom->add_option("--alpha", mom_alpha, "exponential weight, >= 0")->required();
    mom->add_option("--nu", mom_nu, "moment order, >= 0")->required();

    // lattice-gen
    std::uint64_t lg_n = 1024, lg_korobov_a = 1571, lg_seed = 20240901;
    int lg_s = 16;
    double lg_theta = 2.0;
    bool lg_emit_points = false;
    auto* lg = app.add_subcommand("lattice-gen",
                                  "rank-1 generating vector, one integer per line");
    lg->add_option("--n", lg_n, "node count (power of two)")->required();
    lg->add_option("--s", lg_s, "dimension")->required();
    lg->add_option("--theta", lg_theta, "decay exponent; CBC weights j^{-2 theta}");
    auto* lg_korobov_opt =
        lg->add_option("--korobov", lg_korobov_a, "use z_j = a^{j-1} mod n instead of CBC");
    lg->add_flag("--emit-points", lg_emit_points, "stream shifted points as CSV");
    lg->add_option("--seed", lg_seed, "shift seed for --emit-points");

    // fem-verify
    int fv_min = 2, fv_max = 6;
    auto* fv = app.add_subcommand(
        "fem-verify", "manufactured-solution H1 convergence study, CSV per level");
    fv->add_option("--min-level", fv_min, "coarsest mesh level m");
    fv->add_option("--max-level", fv_max, "finest mesh level m");

    // check-theory
    std::uint64_t ct_seed = 20240901;
    int ct_draws = 50;
    auto* ct = app.add_subcommand(
        "check-theory",
        "Stechkin tail bound, discrete Strang inequality, beta-uniform moments");
    ct->add_option("--seed", ct_seed, "seed for randomized checks");
    ct->add_option("--draws", ct_draws, "lognormal draws for the Strang check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (ln->parsed()) return run_study_command("study-lognormal", ln_cfg, ln_flags, ln);
        if (af->parsed()) return run_study_command("study-affine-qoi", af_cfg, af_flags, af);
        if (mom->parsed()) return cmd_moments(mom_beta, mom_alpha, mom_nu);
        if (lg->parsed())
            return cmd_lattice_gen(lg_n, lg_s, lg_theta, lg_korobov_a,
                                   lg_korobov_opt->count() > 0, lg_emit_points, lg_seed);
        if (fv->parsed()) return cmd_fem_verify(fv_min, fv_max);
        if (ct->parsed()) return cmd_check_theory(ct_seed, ct_draws);
    } catch (const NoConvergence& e) {
        std::cerr << "numerical failure: " << e.what() << std::endl;
        return kExitNumerical;
    } catch (const NonPositiveCoefficient& e) {
        std::cerr << "numerical failure: " << e.what() << std::endl;
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitUsage;
    }
    return kExitUsage;
}
