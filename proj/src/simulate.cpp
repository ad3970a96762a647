#include "mgam/simulate.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "mgam/parallel.hpp"

namespace mgam {

double eval_f(int j, double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("eval_f: x must be in [0,1]");
    switch (j) {
        case 1: {
            const double u = 1.0 - x;
            return 1e4 * x * x * x * std::pow(u, 6) * (std::pow(u, 4) + 20.0 * std::pow(x, 8));
        }
        case 2:
            return 2.0 * std::sin(M_PI * x);
        case 3:
            return std::exp(2.0 * x);
        case 4:
            return 0.1 * x * x;
        case 5:
            return 0.5 * std::sin(2.0 * M_PI * x);
        case 6:
            return -0.2 - 0.5 * x * x * x;
        case 7:
            return -0.5 * x * x + std::sin(M_PI * x);
    }
    throw std::invalid_argument("eval_f: j must be in 1..7");
}

ModelSpec StudyModel::model_spec() const {
    ModelSpec spec;
    spec.family = family;
    for (const std::vector<int>& in : inputs) {
        ParamTerms pt;
        for (int j : in)
            pt.smooths.push_back(
                BasisSpec{BasisKind::CubicRegression, basis_k, "x" + std::to_string(j), 0.0});
        spec.params.push_back(std::move(pt));
    }
    return spec;
}

double report_value(ReportScale scale, double eta) {
    switch (scale) {
        case ReportScale::Identity: return eta;
        case ReportScale::Exp: return std::exp(eta);
        case ReportScale::ExpHalf: return std::exp(0.5 * eta);
        case ReportScale::NegExp: return std::exp(-eta);
    }
    return eta;
}

StudyModel study_model(const std::string& name, int basis_k) {
    if (basis_k < 4) throw std::invalid_argument("study_model: basis size must be >= 4");
    StudyModel m;
    m.name = name;
    m.basis_k = basis_k;
    const std::vector<int> mu = {1, 2, 3}, sigma = {4, 5, 6}, xi = {7};
    if (name == "gauss") {
        m.family = FamilySpec{FamilyKind::Gaussian};
        m.inputs = {mu, sigma};
        m.predictor_scale = {1.0, 1.0};
        m.report = {ReportScale::Identity, ReportScale::ExpHalf}; // mean, sd
        m.parameter_names = {"mu", "sigma"};
    } else if (name == "poisson") {
        m.family = FamilySpec{FamilyKind::Poisson};
        m.inputs = {mu};
        m.predictor_scale = {6.0};
        m.report = {ReportScale::Exp}; // rate
        m.parameter_names = {"mu"};
    } else if (name == "exponential") {
        m.family = FamilySpec{FamilyKind::Exponential};
        m.inputs = {mu};
        m.predictor_scale = {6.0};
        m.report = {ReportScale::Exp}; // rate
        m.parameter_names = {"mu"};
    } else if (name == "gamma") {
        m.family = FamilySpec{FamilyKind::Gamma};
        m.inputs = {mu, sigma};
        m.predictor_scale = {6.0, 1.0};
        m.report = {ReportScale::Exp, ReportScale::NegExp}; // shape, scale
        m.parameter_names = {"mu", "sigma"};
    } else if (name == "binomial") {
        m.family = FamilySpec{FamilyKind::Binomial};
        m.inputs = {mu};
        m.predictor_scale = {1.0};
        m.report = {ReportScale::Identity}; // the predictor is mu itself
        m.parameter_names = {"mu"};
    } else if (name == "gev") {
        m.family = FamilySpec{FamilyKind::Gev};
        m.inputs = {mu, sigma, xi};
        m.predictor_scale = {1.0, 1.0, 1.0};
        m.report = {ReportScale::Identity, ReportScale::Exp, ReportScale::Identity};
        m.parameter_names = {"mu", "sigma", "xi"};
    } else {
        throw std::invalid_argument("study_model: unknown model '" + name + "'");
    }
    return m;
}

std::vector<std::string> study_model_names() {
    return {"gauss", "poisson", "exponential", "gamma", "binomial", "gev"};
}

Replicate generate_replicate(const StudyModel& model, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("generate_replicate: n must be positive");
    const int D = model.family.dim();

    Eigen::MatrixXd x(n, 7);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 7; ++j) x(i, j) = rng.uniform();

    Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(n, D);
    for (int d = 0; d < D; ++d)
        for (int j : model.inputs[d])
            for (int i = 0; i < n; ++i) truth(i, d) += eval_f(j, x(i, j - 1));

    Eigen::VectorXd y(n);
    double th[3] = {0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < D; ++d) th[d] = truth(i, d) / model.predictor_scale[d];
        y[i] = sample(model.family, th, rng);
    }

    Replicate out;
    for (int j = 0; j < 7; ++j) out.data.add("x" + std::to_string(j + 1), x.col(j));
    out.data.add("y", std::move(y));
    out.truth = std::move(truth);
    return out;
}

double mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& fitted) {
    if (truth.size() != fitted.size() || truth.size() == 0)
        throw std::invalid_argument("mse: length mismatch");
    return (truth - fitted).squaredNorm() / static_cast<double>(truth.size());
}

StudyReport run_study(const StudyConfig& config) {
    const StudyModel model = study_model(config.model, config.basis_k);
    if (config.replicates < 1) throw std::invalid_argument("run_study: need replicates >= 1");
    if (config.n < 10 * config.basis_k)
        throw std::invalid_argument("run_study: n must be at least 10x the basis size");

    const int D = model.family.dim();
    StudyReport report;
    report.model = model.name;
    report.parameter_names = model.parameter_names;
    report.rows.resize(config.replicates);

    EmSettings em = config.em;
    em.parallel_mstep = false; // parallelism lives at the replicate level
    em.threads = 1;

    parallel_for(config.replicates, config.threads, [&](int r) {
        ReplicateResult& row = report.rows[r];
        row.replicate = r;
        row.mse = Eigen::VectorXd::Constant(D, std::numeric_limits<double>::quiet_NaN());

        Rng rng(Rng::mix(config.seed, static_cast<std::uint64_t>(r)));
        const Replicate rc = generate_replicate(model, config.n, rng);

        const auto t0 = std::chrono::steady_clock::now();
        try {
            const ModelDesign dz = assemble(model.model_spec(), rc.data);
            const FitResult fit = em_fit(dz, rc.data.col("y"), em);
            row.converged = fit.converged;
            row.message = fit.message;
            if (fit.converged) {
                const Eigen::MatrixXd th = predictors(dz, fit.beta);
                for (int d = 0; d < D; ++d) {
                    const ReportScale rs = model.report[d];
                    const double s = model.predictor_scale[d];
                    Eigen::VectorXd tv(config.n), hv(config.n);
                    for (int i = 0; i < config.n; ++i) {
                        tv[i] = report_value(rs, rc.truth(i, d) / s);
                        hv[i] = report_value(rs, th(i, d));
                    }
                    row.mse[d] = mse(tv, hv);
                }
            }
        } catch (const std::exception& e) {
            row.converged = false;
            row.message = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    report.mean_mse = Eigen::VectorXd::Constant(D, std::numeric_limits<double>::quiet_NaN());
    report.var_mse = Eigen::VectorXd::Constant(D, std::numeric_limits<double>::quiet_NaN());
    int ok = 0;
    for (const ReplicateResult& row : report.rows) ok += row.converged;
    report.failures = config.replicates - ok;
    if (ok >= 1) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
        for (const ReplicateResult& row : report.rows)
            if (row.converged) mean += row.mse;
        mean /= ok;
        report.mean_mse = mean;
        if (ok >= 2) {
            Eigen::VectorXd ss = Eigen::VectorXd::Zero(D);
            for (const ReplicateResult& row : report.rows)
                if (row.converged) ss += (row.mse - mean).cwiseAbs2();
            report.var_mse = ss / (ok - 1);
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const StudyReport& report, bool timing) {
    out << "model,replicate,parameter,mse,seconds,converged\n";
    const int D = static_cast<int>(report.parameter_names.size());
    for (const ReplicateResult& row : report.rows) {
        for (int d = 0; d < D; ++d) {
            out << report.model << ',' << row.replicate << ',' << report.parameter_names[d]
                << ',' << format_double(row.mse[d]) << ','
                << format_double(timing ? row.seconds : 0.0) << ',' << (row.converged ? 1 : 0)
                << '\n';
        }
    }
}

void write_report_csv(const std::string& path, const StudyReport& report, bool timing) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_report_csv(out, report, timing);
}

} // namespace mgam
