#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "mgam/solver.hpp"

namespace mgam {

struct EmSettings {
    double epsilon_rel = 1e-5; // freeze term j when |G_j| < epsilon_rel * (1 + |l_P|)
    double pll_tol_rel = 1e-7; // outer stop after two stagnant l_P changes
    int max_outer = 200;
    double lambda0 = 1.0; // initial smoothing parameter, every term
    bool freeze = true;   // per-term freezing (off recomputes every term each step)
    bool parallel_mstep = true;
    int threads = 0; // 0 = hardware concurrency
    NewtonSettings newton;
};

// One outer-iteration record: the smoothing vector the inner fit ran at, the
// resulting c_j, and the convergence gradient against the previous iteration.
struct EmIterate {
    Eigen::VectorXd lambda;
    Eigen::VectorXd c;     // NaN where frozen or never computed
    Eigen::VectorXd oakes; // 0.5 * (c_prev - c); NaN on the first iteration
    double loglik_pen = 0.0;
    std::vector<unsigned char> frozen;
    int inner_iterations = 0;
};

struct FitResult {
    Eigen::VectorXd beta;   // full-length coefficients (zeros where dropped)
    Eigen::VectorXd lambda; // final smoothing parameters, original term order
    PenalizedFit fit;       // final inner fit (kept space)
    std::shared_ptr<const ModelDesign> active; // reduced design when columns were dropped
    std::vector<int> kept;                     // global indices behind fit/posterior rows
    Eigen::MatrixXd posterior_cov;             // full p x p, zero rows/cols where dropped
    std::vector<EmIterate> trace;
    int outer_iterations = 0;
    bool converged = false;
    std::string message;
};

// c_j = beta^(j)' S_j beta^(j) + tr[ H_P^{-1} (S_j + dH/dlambda_j) ], the
// quantity whose fixed point the smoothing update chases. The shared-state
// overload reuses one derivative cache and one factorization across all j.
double compute_c(const ModelDesign& design, const DerivCache& cache,
                 const Eigen::LDLT<Eigen::MatrixXd>& Hp, const Eigen::VectorXd& beta, int j);
double compute_c(const ModelDesign& design, const Eigen::VectorXd& y, const PenalizedFit& fit,
                 int j);

// lambda_j = rank(S_j) / c_j, the closed-form maximizer of the E-step
// surrogate (each component independent).
Eigen::VectorXd update_lambda(const Eigen::VectorXd& c, const Eigen::VectorXd& ranks);

// 0.5 * (c_prev - c_next) per component: the marginal-likelihood gradient at
// the updated smoothing parameters, used as the convergence criterion.
Eigen::VectorXd oakes_gradient(const Eigen::VectorXd& c_prev, const Eigen::VectorXd& c_next);

// Outer loop: alternate full inner Newton fits with the closed-form smoothing
// update until every term's criterion is below tolerance (or the penalized
// log-likelihood stops moving). Never computes the marginal likelihood.
FitResult em_fit(const ModelDesign& design, const Eigen::VectorXd& y,
                 const EmSettings& settings = {});

} // namespace mgam
