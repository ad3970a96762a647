#include "mgam/solver.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mgam {

const char* fit_status_name(FitStatus s) {
    switch (s) {
        case FitStatus::Converged: return "converged";
        case FitStatus::MaxIterations: return "max-iterations";
        case FitStatus::Stalled: return "stalled";
    }
    return "?";
}

Eigen::MatrixXd stabilize(const Eigen::MatrixXd& H, double eig_floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    if (es.info() != Eigen::Success) throw std::runtime_error("stabilize: eigensolver failed");
    if (es.eigenvalues().minCoeff() >= eig_floor) return H;
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eig_floor);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Identifiability detect_identifiability(const Eigen::MatrixXd& Hp, double rel_tol) {
    const int p = static_cast<int>(Hp.cols());
    // Equilibrate to unit diagonal first: exact collinearity survives the
    // congruence scaling, while scale gaps between heavily penalized and
    // barely penalized coefficients (easily 1e10 and more) do not get
    // mistaken for rank deficiency.
    Eigen::VectorXd d = Hp.diagonal().cwiseAbs().cwiseSqrt();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0.0)) throw std::runtime_error("model fully unidentifiable");
    for (int i = 0; i < p; ++i) d[i] = d[i] > 1e-150 * dmax ? 1.0 / d[i] : 0.0;
    const Eigen::MatrixXd E = d.asDiagonal() * Hp * d.asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(E);
    const Eigen::MatrixXd& R = qr.matrixR();
    const double lead = std::abs(R(0, 0));

    Identifiability id;
    int r = 0;
    while (r < p && std::abs(R(r, r)) > rel_tol * lead) ++r;
    id.rank = r;
    if (r == 0) throw std::runtime_error("model fully unidentifiable");

    const auto& perm = qr.colsPermutation().indices();
    for (int k = 0; k < p; ++k)
        (k < r ? id.kept : id.dropped).push_back(perm[k]);
    std::sort(id.kept.begin(), id.kept.end());
    std::sort(id.dropped.begin(), id.dropped.end());
    return id;
}

std::vector<int> surviving_penalties(const ModelDesign& design,
                                     const std::vector<int>& kept_local) {
    std::vector<char> alive(design.p, 0);
    for (int k : kept_local) alive[k] = 1;
    std::vector<int> out;
    for (int j = 0; j < design.q(); ++j) {
        const PenaltyBlock& b = design.penalties[j];
        for (int c = 0; c < b.size; ++c)
            if (alive[b.offset + c]) {
                out.push_back(j);
                break;
            }
    }
    return out;
}

namespace {

double penalized_loglik(const ModelDesign& dz, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta) {
    const double ll = loglik_sum(dz, y, beta);
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
    return ll - 0.5 * penalty_quadform(dz, lambda, beta);
}

} // namespace

PenalizedFit maximize_penalized(const ModelDesign& design, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta0,
                                const NewtonSettings& st) {
    if (lambda.size() != design.q())
        throw std::invalid_argument("maximize_penalized: lambda has wrong length");
    if (beta0.size() != design.p)
        throw std::invalid_argument("maximize_penalized: beta0 has wrong length");
    if ((lambda.array() < 0.0).any())
        throw std::invalid_argument("maximize_penalized: negative smoothing parameter");
    if (y.size() != design.n) throw std::invalid_argument("maximize_penalized: y has wrong length");

    PenalizedFit out;
    out.kept.resize(design.p);
    std::iota(out.kept.begin(), out.kept.end(), 0);

    const ModelDesign* active = &design;
    std::shared_ptr<const ModelDesign> reduced;
    Eigen::VectorXd lam = lambda;
    Eigen::VectorXd beta = beta0;

    for (int restart = 0;; ++restart) {
        double lp = penalized_loglik(*active, y, lam, beta);
        if (!std::isfinite(lp))
            throw SupportError(
                "maximize_penalized: starting coefficients outside the likelihood support");
        out.lp_trace.assign(1, lp);

        Accumulated acc;
        FitStatus status = FitStatus::MaxIterations;
        bool acc_current = false;
        for (int iter = 0; iter < st.max_iter; ++iter, ++out.iterations) {
            acc = accumulate(*active, y, beta);
            acc_current = true;
            const Eigen::VectorXd Up = acc.score - penalty_apply(*active, lam, beta);
            out.grad_inf = Up.cwiseAbs().maxCoeff();
            if (out.grad_inf < st.grad_tol_rel * (1.0 + std::abs(lp))) {
                status = FitStatus::Converged;
                break;
            }

            // stabilized Newton direction; the floor is scaled by the
            // unpenalized curvature so that huge smoothing parameters cannot
            // drown out genuinely small data eigenvalues
            const Eigen::MatrixXd Hp = acc.neg_hess + penalty_matrix(*active, lam);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hp);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esH(acc.neg_hess,
                                                               Eigen::EigenvaluesOnly);
            if (es.info() != Eigen::Success || esH.info() != Eigen::Success)
                throw std::runtime_error("maximize_penalized: eigensolver failed");
            const double floor =
                st.eig_floor_rel * (1.0 + esH.eigenvalues().cwiseAbs().maxCoeff());
            const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
            const Eigen::VectorXd delta =
                es.eigenvectors() *
                ((es.eigenvectors().transpose() * Up).array() / ev.array()).matrix();

            double rate = st.init_rate;
            bool accepted = false;
            for (int h = 0; h <= st.max_halvings; ++h) {
                const Eigen::VectorXd cand = beta + rate * delta;
                const double lp_cand = penalized_loglik(*active, y, lam, cand);
                if (lp_cand > lp) {
                    beta = cand;
                    lp = lp_cand;
                    out.lp_trace.push_back(lp);
                    accepted = true;
                    break;
                }
                rate *= 0.5;
                ++out.halvings;
            }
            if (!accepted) {
                // near the optimum the gain of the last step can sit below
                // the fp resolution of the summed log-likelihood; take the
                // full step anyway if it directly satisfies first-order
                // optimality, otherwise report the stall
                status = FitStatus::Stalled;
                const Eigen::VectorXd cand = beta + st.init_rate * delta;
                const double lp_cand = penalized_loglik(*active, y, lam, cand);
                if (std::isfinite(lp_cand)) {
                    const Accumulated acand = accumulate(*active, y, cand);
                    const Eigen::VectorXd Ucand =
                        acand.score - penalty_apply(*active, lam, cand);
                    if (Ucand.cwiseAbs().maxCoeff() <
                        st.grad_tol_rel * (1.0 + std::abs(lp_cand))) {
                        beta = cand;
                        lp = lp_cand;
                        acc = acand;
                        acc_current = true;
                        out.grad_inf = Ucand.cwiseAbs().maxCoeff();
                        status = FitStatus::Converged;
                    }
                }
                break;
            }
            acc_current = false;
        }
        if (!acc_current) acc = accumulate(*active, y, beta);

        const Eigen::MatrixXd Hp = acc.neg_hess + penalty_matrix(*active, lam);
        out.grad_inf =
            (acc.score - penalty_apply(*active, lam, beta)).cwiseAbs().maxCoeff();
        out.loglik = acc.loglik;
        out.loglik_pen = lp;
        out.status = status;

        if (status == FitStatus::Converged && restart < 16) {
            const Identifiability id = detect_identifiability(Hp, st.rank_tol);
            if (id.rank < active->p) {
                // drop for good, restart on the reduced design
                std::vector<int> kept_next, dropped_next = out.dropped;
                kept_next.reserve(id.kept.size());
                for (int k : id.kept) kept_next.push_back(out.kept[k]);
                for (int k : id.dropped) dropped_next.push_back(out.kept[k]);
                std::sort(dropped_next.begin(), dropped_next.end());

                const std::vector<int> blocks = surviving_penalties(*active, id.kept);
                Eigen::VectorXd lam_next(blocks.size());
                for (std::size_t b = 0; b < blocks.size(); ++b) lam_next[b] = lam[blocks[b]];

                Eigen::VectorXd beta_next(id.rank);
                for (int i = 0; i < id.rank; ++i) beta_next[i] = beta[id.kept[i]];

                reduced = std::make_shared<const ModelDesign>(reduce(*active, id.kept));
                active = reduced.get();
                out.kept = std::move(kept_next);
                out.dropped = std::move(dropped_next);
                lam = std::move(lam_next);
                beta = std::move(beta_next);
                continue;
            }
        }

        out.Hp = Hp;
        out.beta_kept = beta;
        out.reduced = reduced;
        out.beta = Eigen::VectorXd::Zero(design.p);
        for (std::size_t i = 0; i < out.kept.size(); ++i) out.beta[out.kept[i]] = beta[i];
        return out;
    }
}

} // namespace mgam
