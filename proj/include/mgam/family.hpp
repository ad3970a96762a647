#pragma once

#include <Eigen/Core>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgam/rng.hpp"

namespace mgam {

// Response distributions. Every distribution parameter is driven by its own
// linear predictor; the predictor scales are:
//   gaussfix     theta = (mean), unit variance
//   gaussian     theta = (mean, log variance)          sd = exp(theta2 / 2)
//   poisson      theta = (log rate)
//   exponential  theta = (log rate)
//   gamma        theta = (log shape, -log scale)
//   binomial     theta = (mu), P(y=1) = 1/(1 + exp((5 - mu)/6))
//   gev          theta = (location, log scale, shape)
enum class FamilyKind { GaussFix, Gaussian, Poisson, Exponential, Gamma, Binomial, Gev };

struct FamilySpec {
    FamilyKind kind = FamilyKind::Gaussian;

    int dim() const;
    const char* name() const;
    std::vector<std::string> parameter_names() const;
    static FamilySpec parse(const std::string& name); // throws on unknown
};

// Observation outside the support region for the proposed parameters.
// `index` is filled in by callers that know which row misbehaved.
struct SupportError : std::runtime_error {
    Eigen::Index index;
    explicit SupportError(Eigen::Index i = -1)
        : std::runtime_error(i >= 0
              ? "observation " + std::to_string(i) + " outside the support region"
              : "observation outside the support region"),
          index(i) {}
    explicit SupportError(const std::string& what, Eigen::Index i = -1)
        : std::runtime_error(what), index(i) {}
};

// Log-likelihood contribution of one observation with derivatives in the
// predictors up to third order. Entries beyond `dim` are zero; the third
// array is the full 3x3x3 tensor, exactly symmetric under index permutation.
struct DerivBundle {
    int dim = 0;
    double loglik = 0.0;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    Eigen::Matrix3d neg_hess = Eigen::Matrix3d::Zero();
    std::array<double, 27> third{};

    double third_at(int a, int b, int c) const { return third[(a * 3 + b) * 3 + c]; }
};

// Value-only fast path; returns -inf (rather than throwing) when the
// observation leaves the support, which is what line searches want.
double loglik(const FamilySpec& f, double y, const double* theta);

// Full derivative bundle; throws SupportError outside the support.
DerivBundle loglik_derivs(const FamilySpec& f, double y, const double* theta);

inline DerivBundle loglik_derivs(const FamilySpec& f, double y, const Eigen::VectorXd& theta) {
    return loglik_derivs(f, y, theta.data());
}

// One random draw given the predictors. Deterministic for a given Rng state.
double sample(const FamilySpec& f, const double* theta, Rng& rng);

// Method-of-moments intercept start values from the raw response.
Eigen::Vector3d init_predictors(const FamilySpec& f, const Eigen::VectorXd& y);

// Throws std::invalid_argument if any response value can never be observed
// under the family (negative counts, y<=0 for gamma, ...).
void validate_response(const FamilySpec& f, const Eigen::VectorXd& y);

// |shape| at or below this evaluates on the Gumbel branch (analytic limits).
double gev_branch_threshold();

double gev_mean(double mu, double tau, double xi);
double gev_quantile(double mu, double tau, double xi, double p);

} // namespace mgam
