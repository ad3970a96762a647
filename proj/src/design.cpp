#include "mgam/design.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mgam {

int pair_index(int D, int a, int b) {
    if (a > b) std::swap(a, b);
    return a * D - a * (a + 1) / 2 + b;
}

int triple_index(int D, int a, int b, int c) {
    int s[3] = {a, b, c};
    std::sort(s, s + 3);
    int idx = 0;
    for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j)
            for (int k = j; k < D; ++k) {
                if (i == s[0] && j == s[1] && k == s[2]) return idx;
                ++idx;
            }
    throw std::logic_error("triple_index: bad indices");
}

Eigen::VectorXd ModelDesign::penalty_ranks() const {
    Eigen::VectorXd r(q());
    for (int j = 0; j < q(); ++j) r[j] = penalties[j].rank;
    return r;
}

ModelDesign assemble(const ModelSpec& spec, const DataTable& data) {
    const int D = spec.family.dim();
    if (static_cast<int>(spec.params.size()) != D)
        throw std::invalid_argument("assemble: expected " + std::to_string(D) +
                                    " parameter term lists for family " +
                                    std::string(spec.family.name()));
    ModelDesign dz;
    dz.family = spec.family;
    dz.n = data.rows();
    if (dz.n == 0) throw std::invalid_argument("assemble: empty data");

    const auto pnames = spec.family.parameter_names();
    dz.terms.resize(D);
    dz.linear_cols.resize(D);
    dz.offset_cols.resize(D);
    for (int d = 0; d < D; ++d) {
        const ParamTerms& pt = spec.params[d];
        dz.linear_cols[d] = pt.linear;
        dz.offset_cols[d] = pt.offset;
        for (const std::string& c : pt.linear)
            (void)data.col(c); // existence check
        if (!pt.offset.empty()) (void)data.col(pt.offset);
        for (const BasisSpec& bs : pt.smooths)
            dz.terms[d].push_back(build_term(data.col(bs.predictor), bs));
    }

    // global coefficient layout: per parameter, intercept then linear columns
    // then each smooth block.
    dz.beta_offset.resize(D);
    int off = 0;
    for (int d = 0; d < D; ++d) {
        dz.beta_offset[d] = off;
        dz.coef_names.push_back(pnames[d] + ".intercept");
        ++off;
        for (const std::string& c : dz.linear_cols[d]) {
            dz.coef_names.push_back(pnames[d] + "." + c);
            ++off;
        }
        for (const SmoothTerm& t : dz.terms[d]) {
            PenaltyBlock blk;
            blk.S = t.S;
            blk.offset = off;
            blk.size = t.cols();
            blk.rank = t.rank;
            blk.param = d;
            blk.label = pnames[d] + ":s(" + t.spec.predictor + ")";
            dz.penalties.push_back(std::move(blk));
            for (int k = 0; k < t.cols(); ++k)
                dz.coef_names.push_back(pnames[d] + ".s(" + t.spec.predictor + ")." +
                                        std::to_string(k + 1));
            off += t.cols();
        }
    }
    dz.p = off;
    dz.X = model_matrices(dz, data, &dz.offsets);

    int rank_sum = 0;
    for (const auto& b : dz.penalties) rank_sum += b.rank;
    dz.null_space_dim = dz.p - rank_sum;
    return dz;
}

std::vector<Eigen::MatrixXd> model_matrices(const ModelDesign& design, const DataTable& data,
                                            std::vector<Eigen::VectorXd>* offsets_out,
                                            std::vector<unsigned char>* extrapolated) {
    const int D = static_cast<int>(design.terms.size());
    const Eigen::Index n = data.rows();
    if (extrapolated) extrapolated->assign(n, 0);

    std::vector<Eigen::MatrixXd> X(D);
    if (offsets_out) offsets_out->assign(D, Eigen::VectorXd());
    for (int d = 0; d < D; ++d) {
        int pd = 1 + static_cast<int>(design.linear_cols[d].size());
        for (const SmoothTerm& t : design.terms[d]) pd += t.cols();
        X[d].resize(n, pd);
        int c = 0;
        X[d].col(c++).setOnes();
        for (const std::string& name : design.linear_cols[d]) X[d].col(c++) = data.col(name);
        for (const SmoothTerm& t : design.terms[d]) {
            const Eigen::VectorXd& x = data.col(t.spec.predictor);
            X[d].middleCols(c, t.cols()) = basis_matrix(t, x);
            if (extrapolated && t.spec.kind != BasisKind::CyclicCubic)
                for (Eigen::Index i = 0; i < n; ++i)
                    if (x[i] < t.xmin || x[i] > t.xmax) (*extrapolated)[i] = 1;
            c += t.cols();
        }
        if (offsets_out && !design.offset_cols[d].empty())
            (*offsets_out)[d] = data.col(design.offset_cols[d]);
    }
    return X;
}

Eigen::MatrixXd predictors(const ModelDesign& design, const Eigen::VectorXd& beta) {
    const int D = design.dim();
    if (beta.size() != design.p) throw std::invalid_argument("predictors: beta size mismatch");
    Eigen::MatrixXd theta(design.n, D);
    for (int d = 0; d < D; ++d) {
        theta.col(d).noalias() =
            design.X[d] * beta.segment(design.beta_offset[d], design.pcols(d));
        if (design.offsets[d].size()) theta.col(d) += design.offsets[d];
    }
    return theta;
}

double loglik_sum(const ModelDesign& design, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& beta) {
    const Eigen::MatrixXd theta = predictors(design, beta);
    const int D = design.dim();
    double acc = 0.0;
    double th[3] = {0, 0, 0};
    for (Eigen::Index i = 0; i < design.n; ++i) {
        for (int d = 0; d < D; ++d) th[d] = theta(i, d);
        const double li = loglik(design.family, y[i], th);
        if (!std::isfinite(li)) return -std::numeric_limits<double>::infinity();
        acc += li;
    }
    return acc;
}

DerivCache evaluate_cache(const ModelDesign& design, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta) {
    const int D = design.dim();
    const int npair = D * (D + 1) / 2;
    const int ntrip = D * (D + 1) * (D + 2) / 6;
    DerivCache c;
    c.theta = predictors(design, beta);
    c.grad.resize(design.n, D);
    c.hess.resize(design.n, npair);
    c.third.resize(design.n, ntrip);

    double th[3] = {0, 0, 0};
    for (Eigen::Index i = 0; i < design.n; ++i) {
        for (int d = 0; d < D; ++d) th[d] = c.theta(i, d);
        DerivBundle b;
        try {
            b = loglik_derivs(design.family, y[i], th);
        } catch (const SupportError&) {
            throw SupportError(i);
        }
        c.loglik += b.loglik;
        for (int d = 0; d < D; ++d) c.grad(i, d) = b.grad[d];
        for (int a = 0; a < D; ++a)
            for (int bb = a; bb < D; ++bb) c.hess(i, pair_index(D, a, bb)) = b.neg_hess(a, bb);
        for (int a = 0; a < D; ++a)
            for (int bb = a; bb < D; ++bb)
                for (int cc = bb; cc < D; ++cc)
                    c.third(i, triple_index(D, a, bb, cc)) = b.third_at(a, bb, cc);
    }
    return c;
}

namespace {

// Assemble sum_i X_i' diag-block weights X_i from per-observation pair
// weights; exact symmetry by construction.
Eigen::MatrixXd weighted_crossprod(const ModelDesign& design, const Eigen::MatrixXd& w) {
    const int D = design.dim();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(design.p, design.p);
    for (int a = 0; a < D; ++a)
        for (int b = a; b < D; ++b) {
            const Eigen::MatrixXd blk = design.X[a].transpose() *
                                        w.col(pair_index(D, a, b)).asDiagonal() * design.X[b];
            H.block(design.beta_offset[a], design.beta_offset[b], design.pcols(a),
                    design.pcols(b)) += blk;
            if (a != b)
                H.block(design.beta_offset[b], design.beta_offset[a], design.pcols(b),
                        design.pcols(a)) += blk.transpose();
        }
    // exact symmetry for the diagonal blocks too
    Eigen::MatrixXd Ht = H.transpose();
    return 0.5 * (H + Ht);
}

} // namespace

Accumulated accumulate_from_cache(const ModelDesign& design, const DerivCache& cache) {
    const int D = design.dim();
    Accumulated out;
    out.loglik = cache.loglik;
    out.score.resize(design.p);
    for (int d = 0; d < D; ++d)
        out.score.segment(design.beta_offset[d], design.pcols(d)).noalias() =
            design.X[d].transpose() * cache.grad.col(d);
    out.neg_hess = weighted_crossprod(design, cache.hess);
    return out;
}

Accumulated accumulate(const ModelDesign& design, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta) {
    return accumulate_from_cache(design, evaluate_cache(design, y, beta));
}

Eigen::MatrixXd hessian_lambda_derivative(const ModelDesign& design, const DerivCache& cache,
                                          const Eigen::VectorXd& v) {
    const int D = design.dim();
    const int npair = D * (D + 1) / 2;
    Eigen::MatrixXd dtheta(design.n, D);
    for (int d = 0; d < D; ++d)
        dtheta.col(d).noalias() = design.X[d] * v.segment(design.beta_offset[d], design.pcols(d));

    // pair weights: sum_c (-third)(a,b,c) dtheta_c
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(design.n, npair);
    for (int a = 0; a < D; ++a)
        for (int b = a; b < D; ++b) {
            auto col = w.col(pair_index(D, a, b));
            for (int c = 0; c < D; ++c)
                col.array() -=
                    cache.third.col(triple_index(D, a, b, c)).array() * dtheta.col(c).array();
        }
    return weighted_crossprod(design, w);
}

Eigen::MatrixXd hessian_lambda_derivative(const ModelDesign& design, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& beta, const Eigen::VectorXd& v) {
    return hessian_lambda_derivative(design, evaluate_cache(design, y, beta), v);
}

Eigen::MatrixXd penalty_matrix(const ModelDesign& design, const Eigen::VectorXd& lambda) {
    if (lambda.size() != design.q())
        throw std::invalid_argument("penalty_matrix: lambda size mismatch");
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(design.p, design.p);
    for (int j = 0; j < design.q(); ++j) {
        const PenaltyBlock& b = design.penalties[j];
        S.block(b.offset, b.offset, b.size, b.size) += lambda[j] * b.S;
    }
    return S;
}

Eigen::VectorXd penalty_apply(const ModelDesign& design, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& beta) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(design.p);
    for (int j = 0; j < design.q(); ++j) {
        const PenaltyBlock& b = design.penalties[j];
        out.segment(b.offset, b.size).noalias() +=
            lambda[j] * (b.S * beta.segment(b.offset, b.size));
    }
    return out;
}

double penalty_quadform(const ModelDesign& design, const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& beta) {
    double acc = 0.0;
    for (int j = 0; j < design.q(); ++j) {
        const PenaltyBlock& b = design.penalties[j];
        const auto seg = beta.segment(b.offset, b.size);
        acc += lambda[j] * seg.dot(b.S * seg);
    }
    return acc;
}

namespace {
int numeric_rank(const Eigen::MatrixXd& S) {
    if (S.rows() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    const double tol = 1e-9 * std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff());
    return static_cast<int>((es.eigenvalues().array() > tol).count());
}
} // namespace

ModelDesign reduce(const ModelDesign& design, const std::vector<int>& kept) {
    ModelDesign out;
    out.family = design.family;
    out.n = design.n;
    out.offsets = design.offsets;
    const int D = design.dim();
    out.X.resize(D);
    out.beta_offset.resize(D);

    std::vector<int> newpos(design.p, -1);
    for (std::size_t k = 0; k < kept.size(); ++k) newpos[kept[k]] = static_cast<int>(k);

    int off = 0;
    for (int d = 0; d < D; ++d) {
        std::vector<int> local;
        for (int c = 0; c < design.pcols(d); ++c)
            if (newpos[design.beta_offset[d] + c] >= 0) local.push_back(c);
        out.beta_offset[d] = off;
        out.X[d].resize(design.n, local.size());
        for (std::size_t c = 0; c < local.size(); ++c) out.X[d].col(c) = design.X[d].col(local[c]);
        for (int c : local) out.coef_names.push_back(
            design.coef_names.empty() ? "" : design.coef_names[design.beta_offset[d] + c]);
        off += static_cast<int>(local.size());
    }
    out.p = off;

    int rank_sum = 0;
    for (const PenaltyBlock& b : design.penalties) {
        std::vector<int> local;
        for (int c = 0; c < b.size; ++c)
            if (newpos[b.offset + c] >= 0) local.push_back(c);
        if (local.empty()) continue;
        PenaltyBlock nb;
        nb.size = static_cast<int>(local.size());
        nb.S.resize(nb.size, nb.size);
        for (int i = 0; i < nb.size; ++i)
            for (int j = 0; j < nb.size; ++j) nb.S(i, j) = b.S(local[i], local[j]);
        nb.offset = newpos[b.offset + local[0]];
        nb.param = b.param;
        nb.label = b.label;
        nb.rank = numeric_rank(nb.S);
        rank_sum += nb.rank;
        out.penalties.push_back(std::move(nb));
    }
    out.null_space_dim = out.p - rank_sum;
    return out;
}

} // namespace mgam
