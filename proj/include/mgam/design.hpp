#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mgam/basis.hpp"
#include "mgam/family.hpp"
#include "mgam/table.hpp"

namespace mgam {

// Term list for one distribution parameter: smooth terms, plain covariate
// columns, and an optional offset column.
struct ParamTerms {
    std::vector<BasisSpec> smooths;
    std::vector<std::string> linear;
    std::string offset; // empty = none
};

struct ModelSpec {
    FamilySpec family;
    std::vector<ParamTerms> params; // must have family.dim() entries
};

// One penalized coefficient block: lambda_j multiplies beta' S beta over the
// global coefficient range [offset, offset+size).
struct PenaltyBlock {
    Eigen::MatrixXd S;
    int offset = 0;
    int size = 0;
    int rank = 0;
    int param = 0;
    std::string label;
};

// The assembled model: per-parameter design matrices over a common
// coefficient vector, plus everything needed to rebuild rows at new data.
struct ModelDesign {
    FamilySpec family;
    Eigen::Index n = 0;
    int p = 0;              // total coefficients
    int null_space_dim = 0; // p - sum of penalty ranks

    std::vector<Eigen::MatrixXd> X;       // per d: n x p_d
    std::vector<Eigen::VectorXd> offsets; // per d: n or empty
    std::vector<int> beta_offset;         // per d: start of block in beta
    std::vector<PenaltyBlock> penalties;  // q blocks

    // prediction metadata (present when built by assemble())
    std::vector<std::vector<SmoothTerm>> terms;       // per d
    std::vector<std::vector<std::string>> linear_cols; // per d
    std::vector<std::string> offset_cols;              // per d ("" = none)
    std::vector<std::string> coef_names;               // length p

    int dim() const { return static_cast<int>(X.size()); }
    int pcols(int d) const { return static_cast<int>(X[d].cols()); }
    int q() const { return static_cast<int>(penalties.size()); }
    Eigen::VectorXd penalty_ranks() const;
};

ModelDesign assemble(const ModelSpec& spec, const DataTable& data);

// Rebuild the per-parameter model matrices for new data using the stored
// terms (the same evaluation path used during assembly). `extrapolated`,
// when given, is set per row if any smooth sees a covariate outside its
// training range.
std::vector<Eigen::MatrixXd> model_matrices(const ModelDesign& design, const DataTable& data,
                                            std::vector<Eigen::VectorXd>* offsets_out = nullptr,
                                            std::vector<unsigned char>* extrapolated = nullptr);

// n x D matrix of linear predictors.
Eigen::MatrixXd predictors(const ModelDesign& design, const Eigen::VectorXd& beta);

// Unpenalized log-likelihood; -inf if any observation leaves the support.
double loglik_sum(const ModelDesign& design, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& beta);

struct Accumulated {
    double loglik = 0.0;
    Eigen::VectorXd score;    // p
    Eigen::MatrixXd neg_hess; // p x p, exactly symmetric
};

// Score and expected-curvature accumulation at beta. Throws SupportError
// (with the row index) if an observation is outside the support.
Accumulated accumulate(const ModelDesign& design, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta);

// Per-observation derivatives at a fixed beta, packed for reuse across the
// smoothing-parameter updates (third-order tensors included).
struct DerivCache {
    double loglik = 0.0;
    Eigen::MatrixXd theta; // n x D
    Eigen::MatrixXd grad;  // n x D
    Eigen::MatrixXd hess;  // n x D(D+1)/2, -d2 l, pairs (a<=b) lexicographic
    Eigen::MatrixXd third; // n x D(D+1)(D+2)/6, +d3 l, triples (a<=b<=c)
};

DerivCache evaluate_cache(const ModelDesign& design, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta);
Accumulated accumulate_from_cache(const ModelDesign& design, const DerivCache& cache);

// Directional derivative of the accumulated curvature matrix along a
// coefficient direction v: sum_i X_i' [ sum_c T_i(:,:,c) (X_i v)_c ] X_i with
// T the per-observation third-derivative tensor of -l_i.
Eigen::MatrixXd hessian_lambda_derivative(const ModelDesign& design, const DerivCache& cache,
                                          const Eigen::VectorXd& v);
Eigen::MatrixXd hessian_lambda_derivative(const ModelDesign& design, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& beta, const Eigen::VectorXd& v);

// Block-diagonal penalty assembled over the global coefficients.
Eigen::MatrixXd penalty_matrix(const ModelDesign& design, const Eigen::VectorXd& lambda);
Eigen::VectorXd penalty_apply(const ModelDesign& design, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& beta); // S_lambda beta
double penalty_quadform(const ModelDesign& design, const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& beta);

// Restriction of the design to a subset of global coefficients (ascending).
// Penalty sub-blocks are re-ranked; empty blocks are removed.
ModelDesign reduce(const ModelDesign& design, const std::vector<int>& kept);

// packed-index helpers (D <= 3)
int pair_index(int D, int a, int b);
int triple_index(int D, int a, int b, int c);

} // namespace mgam
