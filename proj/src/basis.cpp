#include "mgam/basis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mgam {

const char* basis_kind_name(BasisKind k) {
    switch (k) {
        case BasisKind::CubicRegression: return "cubic-regression";
        case BasisKind::CyclicCubic: return "cyclic-cubic";
        case BasisKind::ThinPlate: return "thin-plate";
    }
    return "?";
}

BasisKind parse_basis_kind(const std::string& name) {
    if (name == "cubic-regression" || name == "cr") return BasisKind::CubicRegression;
    if (name == "cyclic-cubic" || name == "cc") return BasisKind::CyclicCubic;
    if (name == "thin-plate" || name == "tp") return BasisKind::ThinPlate;
    throw std::invalid_argument("unknown basis kind: '" + name + "'");
}

Eigen::VectorXd place_knots(const Eigen::VectorXd& x, int K, BasisKind) {
    if (K < 2) throw std::invalid_argument("place_knots: K must be at least 2");
    if (x.size() == 0) throw std::invalid_argument("place_knots: empty predictor");
    const double lo = x.minCoeff(), hi = x.maxCoeff();
    if (!(hi > lo)) throw std::invalid_argument("place_knots: constant predictor");
    Eigen::VectorXd t(K);
    for (int i = 0; i < K; ++i)
        t[i] = lo + (hi - lo) * static_cast<double>(i) / (K - 1);
    t[K - 1] = hi; // exact endpoint
    return t;
}

namespace {

long count_unique(const Eigen::VectorXd& x) {
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    return std::unique(v.begin(), v.end()) - v.begin();
}

int numeric_rank(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    const double tol = 1e-9 * std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff());
    return static_cast<int>((es.eigenvalues().array() > tol).count());
}

// Natural cubic spline banded matrices for knots t (Wood-style D and B):
// B gamma = D beta relates interior second derivatives to knot values.
void natural_DB(const Eigen::VectorXd& t, Eigen::MatrixXd& D, Eigen::MatrixXd& B) {
    const int K = static_cast<int>(t.size());
    Eigen::VectorXd h = t.tail(K - 1) - t.head(K - 1);
    D = Eigen::MatrixXd::Zero(K - 2, K);
    B = Eigen::MatrixXd::Zero(K - 2, K - 2);
    for (int i = 0; i < K - 2; ++i) {
        D(i, i) = 1.0 / h[i];
        D(i, i + 1) = -1.0 / h[i] - 1.0 / h[i + 1];
        D(i, i + 2) = 1.0 / h[i + 1];
        B(i, i) = (h[i] + h[i + 1]) / 3.0;
        if (i > 0) B(i, i - 1) = h[i] / 6.0;
        if (i < K - 3) B(i, i + 1) = h[i + 1] / 6.0;
    }
}

// Periodic analogue over K distinct cycle points with interval lengths h
// (h[K-1] is the wrap piece back to knot 0).
void cyclic_DB(const Eigen::VectorXd& h, Eigen::MatrixXd& D, Eigen::MatrixXd& B) {
    const int K = static_cast<int>(h.size());
    D = Eigen::MatrixXd::Zero(K, K);
    B = Eigen::MatrixXd::Zero(K, K);
    for (int j = 0; j < K; ++j) {
        const int jm = (j + K - 1) % K, jp = (j + 1) % K;
        const double hm = h[jm], hj = h[j];
        B(j, j) += (hm + hj) / 3.0;
        B(j, jm) += hm / 6.0;
        B(j, jp) += hj / 6.0;
        D(j, j) += -1.0 / hm - 1.0 / hj;
        D(j, jm) += 1.0 / hm;
        D(j, jp) += 1.0 / hj;
    }
}

// Hermite-like weights for one cubic piece of length h at local offsets
// dm = right_knot - x, dp = x - left_knot. Returns the four multipliers of
// (beta_left, beta_right, gamma_left, gamma_right) for the given derivative.
struct PieceWeights { double am, ap, cm, cp; };
PieceWeights piece_weights(double h, double dm, double dp, int order) {
    PieceWeights w{};
    switch (order) {
        case 0:
            w.am = dm / h;
            w.ap = dp / h;
            w.cm = (dm * dm * dm / h - h * dm) / 6.0;
            w.cp = (dp * dp * dp / h - h * dp) / 6.0;
            break;
        case 1:
            w.am = -1.0 / h;
            w.ap = 1.0 / h;
            w.cm = (-3.0 * dm * dm / h + h) / 6.0;
            w.cp = (3.0 * dp * dp / h - h) / 6.0;
            break;
        case 2:
            w.am = 0.0;
            w.ap = 0.0;
            w.cm = dm / h;
            w.cp = dp / h;
            break;
        default:
            throw std::invalid_argument("basis row: order must be 0, 1 or 2");
    }
    return w;
}

double tps_eta(double r) { return r * r * r / 12.0; }

} // namespace

AbsorbResult absorb_constraint(const Eigen::MatrixXd& B_raw, const Eigen::MatrixXd& S_raw) {
    const int K = static_cast<int>(B_raw.cols());
    if (S_raw.rows() != K || S_raw.cols() != K)
        throw std::invalid_argument("absorb_constraint: penalty/basis size mismatch");
    Eigen::VectorXd c = B_raw.colwise().sum().transpose();
    AbsorbResult out;
    const double nc = c.norm();
    if (nc < 1e-12 * std::max<double>(1.0, B_raw.rows())) {
        // Column sums already vanish; drop an arbitrary direction.
        out.Z = Eigen::MatrixXd::Identity(K, K).leftCols(K - 1);
    } else {
        // Householder reflector sending c to a multiple of e_0; remaining
        // columns form an orthonormal basis of {v : c'v = 0}.
        Eigen::VectorXd v = c;
        v[0] += (c[0] >= 0.0 ? nc : -nc);
        const double vtv = v.squaredNorm();
        Eigen::MatrixXd H = Eigen::MatrixXd::Identity(K, K) - (2.0 / vtv) * (v * v.transpose());
        out.Z = H.rightCols(K - 1);
    }
    out.B = B_raw * out.Z;
    out.S = out.Z.transpose() * S_raw * out.Z;
    out.S = 0.5 * (out.S + out.S.transpose()).eval();
    return out;
}

SmoothTerm build_term(const Eigen::VectorXd& x, const BasisSpec& spec) {
    const int K = spec.K;
    if (K < 4) throw std::invalid_argument("build_term: K must be at least 4");
    if (count_unique(x) < K)
        throw std::invalid_argument("build_term('" + spec.predictor + "'): basis exceeds data");

    SmoothTerm term;
    term.spec = spec;
    term.xmin = x.minCoeff();
    term.xmax = x.maxCoeff();

    Eigen::MatrixXd S_raw;

    if (spec.kind == BasisKind::CubicRegression) {
        term.knots = place_knots(x, K, spec.kind);
        Eigen::MatrixXd D, B;
        natural_DB(term.knots, D, B);
        Eigen::MatrixXd Binv_D = B.ldlt().solve(D);
        term.F = Eigen::MatrixXd::Zero(K, K);
        term.F.middleRows(1, K - 2) = Binv_D; // natural ends: zero curvature
        S_raw = D.transpose() * Binv_D;
    } else if (spec.kind == BasisKind::CyclicCubic) {
        const double span = term.xmax - term.xmin;
        if (!(spec.period > 0.0))
            throw std::invalid_argument("build_term('" + spec.predictor +
                                        "'): cyclic basis requires a period");
        if (spec.period < span * (1.0 - 1e-12))
            throw std::invalid_argument("build_term('" + spec.predictor +
                                        "'): period does not cover the data range");
        term.period = spec.period;
        if (spec.period - span <= 1e-9 * spec.period) {
            // Data span the full cycle: first knot maps to last, so place
            // K+1 even points and keep the K distinct ones.
            term.knots.resize(K);
            for (int i = 0; i < K; ++i)
                term.knots[i] = term.xmin + spec.period * static_cast<double>(i) / K;
        } else {
            term.knots = place_knots(x, K, spec.kind);
        }
        term.wrap_h.resize(K);
        for (int j = 0; j < K - 1; ++j) term.wrap_h[j] = term.knots[j + 1] - term.knots[j];
        term.wrap_h[K - 1] = term.period - (term.knots[K - 1] - term.knots[0]);
        Eigen::MatrixXd D, B;
        cyclic_DB(term.wrap_h, D, B);
        term.F = B.partialPivLu().solve(D);
        S_raw = D.transpose() * term.F;
    } else { // ThinPlate
        // Centers: unique covariate values, thinned to at most 2000.
        std::vector<double> uq(x.data(), x.data() + x.size());
        std::sort(uq.begin(), uq.end());
        uq.erase(std::unique(uq.begin(), uq.end()), uq.end());
        const long m_all = static_cast<long>(uq.size());
        const long m = std::min<long>(m_all, 2000);
        term.knots.resize(m);
        for (long i = 0; i < m; ++i)
            term.knots[i] = uq[(i * (m_all - 1)) / std::max<long>(1, m - 1)];

        Eigen::MatrixXd E(m, m);
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < m; ++j)
                E(i, j) = tps_eta(std::abs(term.knots[i] - term.knots[j]));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(E);
        // K eigenpairs of largest magnitude
        std::vector<long> idx(m);
        for (long i = 0; i < m; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](long a, long b) {
            return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
        });
        Eigen::MatrixXd U(m, K);
        Eigen::VectorXd lam(K);
        for (int j = 0; j < K; ++j) {
            U.col(j) = es.eigenvectors().col(idx[j]);
            lam[j] = es.eigenvalues()[idx[j]];
        }
        // Constrain the radial coefficients to the polynomial-orthogonality
        // null space: T' U delta = 0 with T = [1, center].
        Eigen::MatrixXd T(m, 2);
        T.col(0).setOnes();
        T.col(1) = term.knots;
        Eigen::MatrixXd C = T.transpose() * U; // 2 x K
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
        Eigen::MatrixXd Zk = svd.matrixV().rightCols(K - 2);
        term.tps_wiggly = U * Zk; // m x (K-2)
        Eigen::MatrixXd Sw = Zk.transpose() * lam.asDiagonal() * Zk;
        S_raw = Eigen::MatrixXd::Zero(K, K);
        S_raw.topLeftCorner(K - 2, K - 2) = 0.5 * (Sw + Sw.transpose());
    }

    // Raw design over the training data, then absorb the sum-to-zero
    // constraint shared by every kind.
    Eigen::MatrixXd B_raw(x.size(), K);
    for (Eigen::Index i = 0; i < x.size(); ++i) B_raw.row(i) = term.raw_row(x[i]);
    AbsorbResult a = absorb_constraint(B_raw, S_raw);
    term.Z = a.Z;
    term.S = a.S;
    term.rank = numeric_rank(term.S);
    return term;
}

// --- row evaluation ---------------------------------------------------------

Eigen::RowVectorXd SmoothTerm::raw_row(double x, int order) const {
    const int K = spec.K;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K);

    if (spec.kind == BasisKind::CyclicCubic) {
        double u = std::fmod(x - knots[0], period);
        if (u < 0.0) u += period;
        const double xw = knots[0] + u;
        int piece = K - 1;
        for (int j = 0; j < K - 1; ++j)
            if (xw < knots[j + 1]) { piece = j; break; }
        return raw_row_cyclic_piece(piece, xw, order);
    }

    if (spec.kind == BasisKind::ThinPlate) {
        const long m = knots.size();
        Eigen::RowVectorXd e(m);
        for (long i = 0; i < m; ++i) {
            const double d = x - knots[i], r = std::abs(d), s = d >= 0.0 ? 1.0 : -1.0;
            switch (order) {
                case 0: e[i] = tps_eta(r); break;
                case 1: e[i] = r * r * s / 4.0; break;
                case 2: e[i] = r / 2.0; break;
                default: throw std::invalid_argument("basis row: order must be 0, 1 or 2");
            }
        }
        row.head(K - 2) = e * tps_wiggly;
        row[K - 2] = order == 0 ? 1.0 : 0.0;
        row[K - 1] = order == 0 ? x : (order == 1 ? 1.0 : 0.0);
        return row;
    }

    // Natural cubic: linear continuation beyond the boundary knots.
    const double lo = knots[0], hi = knots[K - 1];
    if (x < lo || x > hi) {
        const double at = x < lo ? lo : hi;
        switch (order) {
            case 0: return raw_row(at, 0) + (x - at) * raw_row(at, 1);
            case 1: return raw_row(at, 1);
            case 2: return row; // zero
            default: throw std::invalid_argument("basis row: order must be 0, 1 or 2");
        }
    }
    int j = K - 2;
    for (int i = 0; i < K - 1; ++i)
        if (x < knots[i + 1]) { j = i; break; }
    const double h = knots[j + 1] - knots[j];
    const PieceWeights w = piece_weights(h, knots[j + 1] - x, x - knots[j], order);
    row[j] += w.am;
    row[j + 1] += w.ap;
    row += w.cm * F.row(j) + w.cp * F.row(j + 1);
    return row;
}

Eigen::RowVectorXd SmoothTerm::raw_row_cyclic_piece(int piece, double x, int order) const {
    const int K = spec.K;
    const int jp = (piece + 1) % K;
    const double h = wrap_h[piece];
    const double left = knots[piece];
    const PieceWeights w = piece_weights(h, left + h - x, x - left, order);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K);
    row[piece] += w.am;
    row[jp] += w.ap;
    row += w.cm * F.row(piece) + w.cp * F.row(jp);
    return row;
}

Eigen::RowVectorXd SmoothTerm::row(double x, int order) const {
    return raw_row(x, order) * Z;
}

Eigen::MatrixXd basis_matrix(const SmoothTerm& term, const Eigen::VectorXd& x) {
    Eigen::MatrixXd B(x.size(), term.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) B.row(i) = term.row(x[i]);
    return B;
}

} // namespace mgam
