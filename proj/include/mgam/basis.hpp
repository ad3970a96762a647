#pragma once

#include <Eigen/Core>
#include <string>

namespace mgam {

enum class BasisKind { CubicRegression, CyclicCubic, ThinPlate };

const char* basis_kind_name(BasisKind k);
BasisKind parse_basis_kind(const std::string& name); // throws on unknown

// Declaration of one smooth term. K is the basis dimension before the
// sum-to-zero constraint is absorbed (so the term contributes K-1 columns).
struct BasisSpec {
    BasisKind kind = BasisKind::CubicRegression;
    int K = 10;
    std::string predictor;
    double period = 0.0; // cyclic only; must cover the data range
};

// A built smooth term: everything needed to evaluate basis rows at new
// covariate values and to penalize curvature.
//
// Cubic kinds parameterize the spline by its values at the knots; `F` maps
// those values to second derivatives at the knots (natural or periodic end
// conditions), and the raw curvature penalty is S_raw = D' B^{-1} D of the
// usual banded construction. The thin-plate kind keeps the radial-basis
// centers and the (eigenvector x constraint-null-space) weight matrix that
// turns radial evaluations into the K-2 wiggly columns.
struct SmoothTerm {
    BasisSpec spec;
    Eigen::VectorXd knots;      // knot sites, or thin-plate centers
    double period = 0.0;        // resolved cyclic period
    Eigen::VectorXd wrap_h;     // cyclic: interval lengths incl. wrap piece
    Eigen::MatrixXd F;          // cubic kinds: K x K values -> 2nd derivatives
    Eigen::MatrixXd tps_wiggly; // thin-plate: m x (K-2)
    Eigen::MatrixXd Z;          // K x (K-1) constraint transform
    Eigen::MatrixXd S;          // constrained penalty, (K-1) x (K-1)
    int rank = 0;               // rank of S
    double xmin = 0.0, xmax = 0.0; // training covariate range

    int cols() const { return static_cast<int>(Z.cols()); }

    // Basis row before constraint absorption; order in {0,1,2} selects the
    // derivative of the represented function. Outside [xmin, xmax] the cubic
    // kinds continue linearly (cyclic wraps instead).
    Eigen::RowVectorXd raw_row(double x, int order = 0) const;

    // Constrained row: raw_row(x) * Z.
    Eigen::RowVectorXd row(double x, int order = 0) const;

    // Cyclic only: evaluate within a given piece without wrapping x, so the
    // two one-sided limits at the seam can be compared.
    Eigen::RowVectorXd raw_row_cyclic_piece(int piece, double x, int order) const;
};

// Evenly spaced knots over the data range, endpoints included.
// Throws if the predictor is constant or K < 2.
Eigen::VectorXd place_knots(const Eigen::VectorXd& x, int K, BasisKind kind);

// Sum-to-zero constraint absorption: Z is an orthonormal basis of the null
// space of the column-sum row vector of B_raw.
struct AbsorbResult {
    Eigen::MatrixXd B; // B_raw * Z, n x (K-1)
    Eigen::MatrixXd S; // Z' * S_raw * Z
    Eigen::MatrixXd Z; // K x (K-1)
};
AbsorbResult absorb_constraint(const Eigen::MatrixXd& B_raw, const Eigen::MatrixXd& S_raw);

SmoothTerm build_term(const Eigen::VectorXd& x, const BasisSpec& spec);

// n x cols() constrained basis matrix at arbitrary covariate values; the
// single evaluation path shared by fitting and prediction.
Eigen::MatrixXd basis_matrix(const SmoothTerm& term, const Eigen::VectorXd& x);

} // namespace mgam
