#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "mgam/design.hpp"

namespace mgam {

struct NewtonSettings {
    double grad_tol_rel = 1e-7;  // converge when ||U_P||_inf < grad_tol_rel * (1 + |l_P|)
    int max_iter = 200;
    int max_halvings = 30;
    double eig_floor_rel = 1e-7; // floor = eig_floor_rel * (1 + largest |eigenvalue|)
    double init_rate = 1.0;      // initial step fraction, halved until l_P increases
    double rank_tol = 1e-10;     // pivoted-QR identifiability threshold, relative
};

enum class FitStatus { Converged, MaxIterations, Stalled };
const char* fit_status_name(FitStatus s);

// Result of one penalized Newton solve. When collinearity forces coefficient
// drops the fit restarts on a reduced design; `kept`/`dropped` index into the
// design that was passed in, `beta` is full length with zeros at dropped
// positions, and everything else lives in the kept space.
struct PenalizedFit {
    Eigen::VectorXd beta;      // full length (zeros where dropped)
    Eigen::VectorXd beta_kept; // kept-space coefficients
    double loglik = 0.0;       // unpenalized log-likelihood at beta
    double loglik_pen = 0.0;   // l_P at beta
    double grad_inf = 0.0;     // ||U_P||_inf at the final iterate
    Eigen::MatrixXd Hp;        // kept-space penalized curvature at beta
    std::vector<int> kept;
    std::vector<int> dropped;
    std::shared_ptr<const ModelDesign> reduced; // set iff anything was dropped
    std::vector<double> lp_trace;               // accepted l_P path (last restart)
    int iterations = 0;
    int halvings = 0;
    FitStatus status = FitStatus::Converged;

    bool converged() const { return status == FitStatus::Converged; }
};

// Eigen-decompose a symmetric matrix and raise every eigenvalue below
// `eig_floor` to that floor. Returns the input unchanged when already above.
Eigen::MatrixXd stabilize(const Eigen::MatrixXd& H, double eig_floor);

struct Identifiability {
    int rank = 0;
    std::vector<int> kept;    // ascending
    std::vector<int> dropped; // ascending
};

// Pivoted-QR rank probe of the (unstabilized) penalized curvature; a
// coefficient is dropped when its pivot falls below rel_tol times the first.
Identifiability detect_identifiability(const Eigen::MatrixXd& Hp, double rel_tol = 1e-10);

// Penalty blocks of `design` that keep at least one column when only
// `kept_local` coefficients survive; ascending block indices.
std::vector<int> surviving_penalties(const ModelDesign& design, const std::vector<int>& kept_local);

// Stabilized Newton ascent of l_P(beta) = l(beta) - beta' S_lambda beta / 2
// with step halving; support violations during a trial step just trigger more
// halving. At convergence the identifiability of the coefficients is checked
// and the solve restarts on a reduced design if any have to go.
PenalizedFit maximize_penalized(const ModelDesign& design, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta0,
                                const NewtonSettings& settings = {});

} // namespace mgam
