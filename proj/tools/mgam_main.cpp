#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "mgam/archive.hpp"
#include "mgam/inference.hpp"
#include "mgam/simulate.hpp"

namespace {

using namespace mgam;

std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

struct SeedChoice {
    std::uint64_t value = 0;
    bool entropy = false;
    std::string describe() const {
        return std::to_string(value) + (entropy ? " (entropy)" : "");
    }
};

// Flag wins over the config file; with neither, draw one and say so.
SeedChoice resolve_seed(bool flag_set, std::uint64_t flag_value, bool config_set = false,
                        std::uint64_t config_value = 0) {
    if (flag_set) return {flag_value, false};
    if (config_set) return {config_value, false};
    return {entropy_seed(), true};
}

// The shared prediction writer: fit --fitted and predict emit identical
// columns for identical inputs, which makes round trips string-comparable.
DataTable prediction_table(const ModelDesign& design, const FitResult& fit,
                           const DataTable& newdata, double level,
                           const std::vector<double>& quantiles, int draws,
                           std::uint64_t seed, int threads) {
    const ParameterPrediction pp = predict_parameters(design, fit, newdata, level);
    const std::vector<std::string> names = design.family.parameter_names();

    DataTable out;
    for (int d = 0; d < design.family.dim(); ++d) {
        out.add(names[d], pp.theta.col(d));
        out.add(names[d] + "_se", pp.se.col(d));
        out.add(names[d] + "_lo", pp.lower.col(d));
        out.add(names[d] + "_hi", pp.upper.col(d));
    }
    if (!quantiles.empty()) {
        const QuantileCurves qc =
            gev_quantile_curves(design, fit, newdata, quantiles, level, draws, seed, threads);
        for (std::size_t k = 0; k < quantiles.size(); ++k) {
            const std::string stem = "q" + format_double(quantiles[k]);
            out.add(stem, qc.value.col(static_cast<Eigen::Index>(k)));
            out.add(stem + "_lo", qc.lower.col(static_cast<Eigen::Index>(k)));
            out.add(stem + "_hi", qc.upper.col(static_cast<Eigen::Index>(k)));
        }
    }
    Eigen::VectorXd flag(newdata.rows());
    for (Eigen::Index i = 0; i < newdata.rows(); ++i) flag[i] = pp.extrapolated[i] ? 1.0 : 0.0;
    out.add("extrapolated", flag);
    return out;
}

struct FitArgs {
    std::string config_path, data_path, out_path, fitted_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
    double tol = 0.0, pll_tol = 0.0;
    int max_outer = 0;
};

int run_fit(const FitArgs& args) {
    ModelConfig cfg = read_config(args.config_path);
    if (args.threads >= 0) {
        cfg.threads = args.threads;
        cfg.em.threads = args.threads;
    }
    if (args.tol > 0.0) cfg.em.epsilon_rel = args.tol;
    if (args.pll_tol > 0.0) cfg.em.pll_tol_rel = args.pll_tol;
    if (args.max_outer > 0) cfg.em.max_outer = args.max_outer;
    const SeedChoice seed = resolve_seed(args.seed_set, args.seed, cfg.has_seed, cfg.seed);
    cfg.seed = seed.value;
    cfg.has_seed = true;

    const DataTable data = read_csv(args.data_path);
    const Eigen::VectorXd& y = data.col(cfg.response);
    const ModelDesign design = assemble(cfg.spec, data);

    FitResult fit;
    try {
        fit = em_fit(design, y, cfg.em);
    } catch (const SupportError& e) {
        std::cerr << "error: " << e.what() << "; no archive written\n";
        return 2;
    }

    write_archive(args.out_path, make_archive(cfg, design, fit));
    if (!args.fitted_path.empty())
        write_csv(args.fitted_path,
                  prediction_table(design, fit, data, 0.95, {}, 0, cfg.seed, cfg.threads));

    int dropped = design.p - static_cast<int>(fit.kept.size());
    std::cout << "family: " << design.family.name() << "\n"
              << "observations: " << design.n << "\n"
              << "coefficients: " << design.p << " (dropped: " << dropped << ")\n";
    if (dropped > 0) {
        std::vector<bool> kept(static_cast<std::size_t>(design.p), false);
        for (int k : fit.kept) kept[static_cast<std::size_t>(k)] = true;
        std::cout << "dropped coefficients:";
        for (int i = 0; i < design.p; ++i)
            if (!kept[static_cast<std::size_t>(i)])
                std::cout << ' ' << design.coef_names[static_cast<std::size_t>(i)];
        std::cout << "\n";
    }
    std::cout << "seed: " << seed.describe() << "\n"
              << "smoothing parameters:\n";
    for (int j = 0; j < design.q(); ++j)
        std::cout << "  " << design.penalties[static_cast<std::size_t>(j)].label
                  << "  lambda = " << format_double(fit.lambda[j]) << "\n";
    std::cout << "penalized log-likelihood: " << format_double(fit.fit.loglik_pen) << "\n"
              << "log-likelihood: " << format_double(fit.fit.loglik) << "\n"
              << "outer iterations: " << fit.outer_iterations << "\n"
              << "status: " << (fit.converged ? "converged" : fit.message) << "\n"
              << "archive: " << args.out_path << "\n";
    if (!args.fitted_path.empty()) std::cout << "fitted: " << args.fitted_path << "\n";

    if (!fit.converged) {
        std::cerr << "error: " << fit.message << " (archive of the last iterate written)\n";
        return 2;
    }
    return 0;
}

struct SimArgs {
    std::string model, out_path;
    int n = 25000, replicates = 10, basis_k = 10, threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool timing = false;
    double tol = 0.0, pll_tol = 0.0;
    int max_outer = 0;
};

int run_simulate(const SimArgs& args) {
    StudyConfig config;
    config.model = args.model;
    config.n = args.n;
    config.replicates = args.replicates;
    config.basis_k = args.basis_k;
    config.threads = args.threads;
    const SeedChoice seed = resolve_seed(args.seed_set, args.seed);
    config.seed = seed.value;
    if (args.tol > 0.0) config.em.epsilon_rel = args.tol;
    if (args.pll_tol > 0.0) config.em.pll_tol_rel = args.pll_tol;
    if (args.max_outer > 0) config.em.max_outer = args.max_outer;

    const StudyReport report = run_study(config);
    write_report_csv(args.out_path, report, args.timing);

    std::cout << "model: " << report.model << "  n: " << config.n
              << "  replicates: " << config.replicates << "\n"
              << "seed: " << seed.describe() << "\n"
              << "converged: " << (config.replicates - report.failures) << "/"
              << config.replicates << "\n";
    for (std::size_t d = 0; d < report.parameter_names.size(); ++d)
        std::cout << "mean mse " << report.parameter_names[d] << ": "
                  << format_double(report.mean_mse[static_cast<Eigen::Index>(d)]) << "\n";
    std::cout << "report: " << args.out_path << "\n";
    return 0; // replicate failures are rows in the report, not a CLI failure
}

struct PredictArgs {
    std::string archive_path, data_path, out_path;
    double level = 0.95;
    std::vector<double> quantiles;
    int draws = 1000, threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_predict(const PredictArgs& args) {
    const FitArchive archive = read_archive(args.archive_path);
    const DataTable data = read_csv(args.data_path);
    const SeedChoice seed = resolve_seed(args.seed_set, args.seed);

    const DataTable out = prediction_table(archive.design, archive.fit, data, args.level,
                                           args.quantiles, args.draws, seed.value, args.threads);
    write_csv(args.out_path, out);

    int flagged = 0;
    const Eigen::VectorXd& flag = out.col("extrapolated");
    for (Eigen::Index i = 0; i < flag.size(); ++i) flagged += flag[i] != 0.0;
    std::cout << "rows: " << data.rows() << "\n"
              << "level: " << format_double(args.level) << "\n";
    if (!args.quantiles.empty()) std::cout << "seed: " << seed.describe() << "\n";
    std::cout << "extrapolated rows: " << flagged << "\n"
              << "predictions: " << args.out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized multi-parameter additive model fitting"};
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "Fit a configured model to CSV data");
    fit->add_option("--config", fit_args.config_path, "model config file")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--data", fit_args.data_path, "training CSV")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--out", fit_args.out_path, "fit archive to write")->required();
    fit->add_option("--fitted", fit_args.fitted_path, "also write in-sample predictions CSV");
    fit->add_option("--seed", fit_args.seed, "seed recorded in the archive")
        ->envname("MGAM_SEED");
    fit->add_option("--threads", fit_args.threads, "worker threads (0 = all cores)")
        ->envname("MGAM_THREADS");
    fit->add_option("--tol", fit_args.tol, "smoothing freeze tolerance")
        ->envname("MGAM_TOL")
        ->check(CLI::PositiveNumber);
    fit->add_option("--pll-tol", fit_args.pll_tol, "outer stagnation tolerance")
        ->envname("MGAM_PLL_TOL")
        ->check(CLI::PositiveNumber);
    fit->add_option("--max-outer", fit_args.max_outer, "outer iteration cap")
        ->envname("MGAM_MAX_OUTER")
        ->check(CLI::PositiveNumber);

    SimArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "Run the benchmark simulation study");
    sim->add_option("--model", sim_args.model, "gauss|poisson|exponential|gamma|binomial|gev")
        ->required();
    sim->add_option("--out", sim_args.out_path, "report CSV to write")->required();
    sim->add_option("--n", sim_args.n, "observations per replicate");
    sim->add_option("--replicates", sim_args.replicates, "training sets to fit");
    sim->add_option("--basis-k", sim_args.basis_k, "basis size per smooth");
    sim->add_option("--seed", sim_args.seed, "master seed")->envname("MGAM_SEED");
    sim->add_option("--threads", sim_args.threads, "replicate-level workers (0 = all cores)")
        ->envname("MGAM_THREADS");
    sim->add_flag("--timing", sim_args.timing, "keep wall-clock seconds in the report");
    sim->add_option("--tol", sim_args.tol, "smoothing freeze tolerance")
        ->envname("MGAM_TOL")
        ->check(CLI::PositiveNumber);
    sim->add_option("--pll-tol", sim_args.pll_tol, "outer stagnation tolerance")
        ->envname("MGAM_PLL_TOL")
        ->check(CLI::PositiveNumber);
    sim->add_option("--max-outer", sim_args.max_outer, "outer iteration cap")
        ->envname("MGAM_MAX_OUTER")
        ->check(CLI::PositiveNumber);

    PredictArgs pred_args;
    CLI::App* pred = app.add_subcommand("predict", "Evaluate a fit archive at new data");
    pred->add_option("--archive", pred_args.archive_path, "fit archive")
        ->required()
        ->check(CLI::ExistingFile);
    pred->add_option("--data", pred_args.data_path, "CSV of covariate rows")
        ->required()
        ->check(CLI::ExistingFile);
    pred->add_option("--out", pred_args.out_path, "predictions CSV to write")->required();
    pred->add_option("--level", pred_args.level, "credible band level")->envname("MGAM_LEVEL");
    pred->add_option("--quantiles", pred_args.quantiles,
                     "response quantiles to predict (gev archives)")
        ->delimiter(',')
        ->envname("MGAM_QUANTILES");
    pred->add_option("--draws", pred_args.draws, "posterior draws for quantile bands")
        ->envname("MGAM_DRAWS");
    pred->add_option("--seed", pred_args.seed, "seed for quantile bands")->envname("MGAM_SEED");
    pred->add_option("--threads", pred_args.threads, "workers for quantile bands")
        ->envname("MGAM_THREADS");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    fit_args.seed_set = fit->count("--seed") > 0;
    sim_args.seed_set = sim->count("--seed") > 0;
    pred_args.seed_set = pred->count("--seed") > 0;

    try {
        if (fit->parsed()) return run_fit(fit_args);
        if (sim->parsed()) return run_simulate(sim_args);
        return run_predict(pred_args);
    } catch (const mgam::SupportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
