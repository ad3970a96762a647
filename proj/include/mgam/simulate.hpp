#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mgam/em.hpp"

namespace mgam {

// The seven benchmark smooths over [0,1], j in 1..7.
double eval_f(int j, double x);

// How a fitted linear predictor maps to the scale errors are reported on.
// Identity keeps the predictor itself (means, locations, shapes); the other
// transforms recover the generator's distribution parameter (rates, standard
// deviations, gamma scales) from its log-link predictor.
enum class ReportScale { Identity, Exp, ExpHalf, NegExp };

double report_value(ReportScale scale, double eta);

// One benchmark model: which x_j feed each distribution parameter, the
// divisor that maps the functional parameter to the linear predictor (6
// where the generator wraps it in exp(./6)), and the per-parameter report
// transform. Errors are measured between true and fitted distribution
// parameters (rate, standard deviation, ...), not the raw predictors, except
// where the predictor is the parameter.
struct StudyModel {
    std::string name;
    FamilySpec family;
    std::vector<std::vector<int>> inputs; // per parameter: indices into x1..x7
    std::vector<double> predictor_scale;  // per parameter
    std::vector<ReportScale> report;      // per parameter
    std::vector<std::string> parameter_names; // functional names: mu, sigma, xi
    int basis_k = 10;

    ModelSpec model_spec() const; // cubic regression smooths, K per smooth
};

// Known models: gauss, poisson, exponential, gamma, binomial, gev.
StudyModel study_model(const std::string& name, int basis_k = 10);
std::vector<std::string> study_model_names();

// One training set: columns x1..x7 and y, plus the true functional
// parameters (n x D, generator scale) used for the error metric.
struct Replicate {
    DataTable data;
    Eigen::MatrixXd truth;
};

Replicate generate_replicate(const StudyModel& model, int n, Rng& rng);

// (1/n) sum (truth_i - fitted_i)^2
double mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& fitted);

struct StudyConfig {
    std::string model = "gauss";
    int n = 25000;
    int replicates = 10;
    std::uint64_t seed = 1;
    int basis_k = 10;
    int threads = 0; // replicate-level parallelism
    EmSettings em;
};

struct ReplicateResult {
    int replicate = 0;
    bool converged = false;
    std::string message;
    Eigen::VectorXd mse;    // per functional parameter, NaN when failed
    double seconds = 0.0;   // wall clock of the fit
};

struct StudyReport {
    std::string model;
    std::vector<std::string> parameter_names;
    std::vector<ReplicateResult> rows; // replicate order
    Eigen::VectorXd mean_mse;          // over converged replicates
    Eigen::VectorXd var_mse;           // sample variance over converged replicates
    int failures = 0;
};

// Fits `replicates` independent training sets; replicate r's data depend
// only on (seed, r). Fit failures are recorded, never thrown.
StudyReport run_study(const StudyConfig& config);

// Long-form CSV: columns model, replicate, parameter, mse, seconds,
// converged. Seconds are zeroed unless `timing` (byte-identical reports).
void write_report_csv(std::ostream& out, const StudyReport& report, bool timing = false);
void write_report_csv(const std::string& path, const StudyReport& report, bool timing = false);

} // namespace mgam
