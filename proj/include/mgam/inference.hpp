#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mgam/em.hpp"

namespace mgam {

// Fitted functional parameters over a data table, with pointwise
// delta-method bands on the linear-predictor scale: theta -/+ z * se where
// se_i = sqrt(x_i' Cov x_i) under the Gaussian posterior N(beta, Hp^-1).
struct ParameterPrediction {
    Eigen::MatrixXd theta; // n x D
    Eigen::MatrixXd se;    // n x D
    Eigen::MatrixXd lower;
    Eigen::MatrixXd upper;
    std::vector<unsigned char> extrapolated; // per row: outside a training range
    double level = 0.95;
    double z = 0.0;
};

ParameterPrediction predict_parameters(const ModelDesign& design, const FitResult& fit,
                                       const DataTable& newdata, double level = 0.95);

// One smooth term's contribution to its parameter's predictor, centered the
// way it entered the fit (no intercept share), with its own pointwise band.
struct TermPrediction {
    std::string label;
    Eigen::VectorXd value;
    Eigen::VectorXd se;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double level = 0.95;
};

TermPrediction predict_term(const ModelDesign& design, const FitResult& fit,
                            const DataTable& newdata, int term, double level = 0.95);

// Natural-scale view of one predictor column: display name plus a monotone
// pointwise map. Band ends are mapped through the same function; callers
// reorder the ends where the map is decreasing.
struct ResponseScale {
    std::string name;
    std::function<double(double)> fn;
    bool increasing = true;
};

std::vector<ResponseScale> response_scales(const FamilySpec& family);

// Coefficient draws from N(beta, posterior covariance), one column per draw.
// The covariance may be rank deficient (dropped coefficients); negative
// eigenvalues are clamped. Serial and reproducible for a given seed.
Eigen::MatrixXd posterior_draws(const FitResult& fit, int draws, std::uint64_t seed);

// GEV quantile curves q_p(x) at the fitted coefficients, with pointwise
// confidence bands taken as empirical quantiles over posterior draws.
struct QuantileCurves {
    std::vector<double> probs;
    Eigen::MatrixXd value; // n x probs, at the fitted coefficients
    Eigen::MatrixXd lower; // empirical posterior band ends
    Eigen::MatrixXd upper;
    double level = 0.95;
    int draws = 0;
};

QuantileCurves gev_quantile_curves(const ModelDesign& design, const FitResult& fit,
                                   const DataTable& newdata, const std::vector<double>& probs,
                                   double level = 0.95, int draws = 1000, std::uint64_t seed = 0,
                                   int threads = 0);

// Independent response draws from the fitted distributions, one column per
// replicate. Column r depends only on (seed, r), never on thread count.
Eigen::MatrixXd simulate_from_fit(const ModelDesign& design, const FitResult& fit,
                                  const DataTable& newdata, int replicates, std::uint64_t seed,
                                  int threads = 0);

} // namespace mgam
