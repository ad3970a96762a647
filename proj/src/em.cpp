#include "mgam/em.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mgam/parallel.hpp"

namespace mgam {

double compute_c(const ModelDesign& design, const DerivCache& cache,
                 const Eigen::LDLT<Eigen::MatrixXd>& Hp, const Eigen::VectorXd& beta, int j) {
    if (j < 0 || j >= design.q()) throw std::invalid_argument("compute_c: bad term index");
    const PenaltyBlock& b = design.penalties[j];
    const auto seg = beta.segment(b.offset, b.size);

    Eigen::VectorXd Sb = Eigen::VectorXd::Zero(design.p);
    Sb.segment(b.offset, b.size).noalias() = b.S * seg;
    const double quad = seg.dot(Sb.segment(b.offset, b.size));

    // v = dbeta/dlambda_j, then the curvature response along it
    const Eigen::VectorXd v = -Hp.solve(Sb);
    Eigen::MatrixXd M = hessian_lambda_derivative(design, cache, v);
    M.block(b.offset, b.offset, b.size, b.size) += b.S;

    const double c = quad + Hp.solve(M).trace();
    if (!std::isfinite(c) || c <= 0.0)
        throw std::runtime_error("compute_c: invalid curvature for term '" + b.label + "'");
    return c;
}

double compute_c(const ModelDesign& design, const Eigen::VectorXd& y, const PenalizedFit& fit,
                 int j) {
    const ModelDesign& active = fit.reduced ? *fit.reduced : design;
    const DerivCache cache = evaluate_cache(active, y, fit.beta_kept);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.Hp);
    return compute_c(active, cache, ldlt, fit.beta_kept, j);
}

Eigen::VectorXd update_lambda(const Eigen::VectorXd& c, const Eigen::VectorXd& ranks) {
    if (c.size() != ranks.size()) throw std::invalid_argument("update_lambda: length mismatch");
    if ((c.array() <= 0.0).any()) throw std::invalid_argument("update_lambda: c must be positive");
    return ranks.cwiseQuotient(c);
}

Eigen::VectorXd oakes_gradient(const Eigen::VectorXd& c_prev, const Eigen::VectorXd& c_next) {
    if (c_prev.size() != c_next.size())
        throw std::invalid_argument("oakes_gradient: length mismatch");
    return 0.5 * (c_prev - c_next);
}

FitResult em_fit(const ModelDesign& design, const Eigen::VectorXd& y, const EmSettings& st) {
    validate_response(design.family, y);
    const int D = design.dim();
    const int q = design.q();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(design.p);
    const Eigen::Vector3d th0 = init_predictors(design.family, y);
    for (int d = 0; d < D; ++d) beta0[design.beta_offset[d]] = th0[d];

    FitResult out;
    out.kept.resize(design.p);
    std::iota(out.kept.begin(), out.kept.end(), 0);
    out.lambda = Eigen::VectorXd::Constant(q, st.lambda0);

    const ModelDesign* active = &design;
    Eigen::VectorXd lam_active = out.lambda;
    std::vector<int> block_map(q); // active block -> original term index
    std::iota(block_map.begin(), block_map.end(), 0);

    auto adopt_reduction = [&](const PenalizedFit& fit) {
        if (!fit.reduced) return;
        const std::vector<int> blocks = surviving_penalties(*active, fit.kept);
        Eigen::VectorXd lam_next(blocks.size());
        std::vector<int> map_next(blocks.size());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            lam_next[b] = lam_active[blocks[b]];
            map_next[b] = block_map[blocks[b]];
        }
        std::vector<int> kept_next(fit.kept.size());
        for (std::size_t i = 0; i < fit.kept.size(); ++i) kept_next[i] = out.kept[fit.kept[i]];
        out.active = fit.reduced;
        active = out.active.get();
        lam_active = std::move(lam_next);
        block_map = std::move(map_next);
        out.kept = std::move(kept_next);
    };

    auto finish = [&](PenalizedFit fit, bool converged, std::string message) {
        for (std::size_t b = 0; b < block_map.size(); ++b) out.lambda[block_map[b]] = lam_active[b];
        out.beta = Eigen::VectorXd::Zero(design.p);
        for (std::size_t i = 0; i < out.kept.size(); ++i) out.beta[out.kept[i]] = fit.beta_kept[i];
        const int r = static_cast<int>(out.kept.size());
        const Eigen::MatrixXd cov_kept =
            fit.Hp.ldlt().solve(Eigen::MatrixXd::Identity(r, r));
        out.posterior_cov = Eigen::MatrixXd::Zero(design.p, design.p);
        for (int i = 0; i < r; ++i)
            for (int k = 0; k < r; ++k)
                out.posterior_cov(out.kept[i], out.kept[k]) =
                    0.5 * (cov_kept(i, k) + cov_kept(k, i));
        out.fit = std::move(fit);
        out.converged = converged;
        out.message = std::move(message);
        return out;
    };

    if (q == 0) {
        PenalizedFit fit =
            maximize_penalized(*active, y, Eigen::VectorXd(), beta0, st.newton);
        adopt_reduction(fit);
        out.outer_iterations = 1;
        const bool ok = fit.converged();
        const std::string msg =
            ok ? "no smooth terms; single inner fit"
               : std::string("inner solve ") + fit_status_name(fit.status);
        return finish(std::move(fit), ok, msg);
    }

    Eigen::VectorXd c_prev = Eigen::VectorXd::Constant(q, nan); // original term order
    std::vector<unsigned char> frozen(q, 0);
    Eigen::VectorXd beta_start = beta0;
    double lp_prev = nan;
    int stagnant = 0;

    for (int outer = 0; outer < st.max_outer; ++outer) {
        PenalizedFit fit = maximize_penalized(*active, y, lam_active, beta_start, st.newton);
        out.outer_iterations = outer + 1;
        if (!fit.converged())
            return finish(std::move(fit), false,
                          std::string("inner solve ") + fit_status_name(fit.status) +
                              " at outer iteration " + std::to_string(outer + 1));
        adopt_reduction(fit);
        beta_start = fit.beta_kept;

        // M-step: every still-active term, sharing one cache + factorization
        const DerivCache cache = evaluate_cache(*active, y, fit.beta_kept);
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.Hp);
        const int qa = active->q();
        std::vector<int> todo;
        for (int b = 0; b < qa; ++b)
            if (!(st.freeze && frozen[block_map[b]])) todo.push_back(b);

        Eigen::VectorXd c_act = Eigen::VectorXd::Constant(qa, nan);
        parallel_for(
            static_cast<int>(todo.size()), st.parallel_mstep ? st.threads : 1, [&](int t) {
                c_act[todo[t]] = compute_c(*active, cache, ldlt, fit.beta_kept, todo[t]);
            });

        Eigen::VectorXd c_now = Eigen::VectorXd::Constant(q, nan);
        for (int b = 0; b < qa; ++b) c_now[block_map[b]] = c_act[b];

        EmIterate it;
        it.lambda = out.lambda;
        for (std::size_t b = 0; b < block_map.size(); ++b) it.lambda[block_map[b]] = lam_active[b];
        it.c = c_now;
        it.oakes = Eigen::VectorXd::Constant(q, nan);
        it.loglik_pen = fit.loglik_pen;
        it.frozen.assign(frozen.begin(), frozen.end());
        it.inner_iterations = fit.iterations;

        // convergence bookkeeping against the previous pass
        const double eps_eff = st.epsilon_rel * (1.0 + std::abs(fit.loglik_pen));
        for (int j = 0; j < q; ++j) {
            if (frozen[j] || std::isnan(c_prev[j]) || std::isnan(c_now[j])) continue;
            it.oakes[j] = 0.5 * (c_prev[j] - c_now[j]);
            if (std::abs(it.oakes[j]) < eps_eff) frozen[j] = 1;
        }
        out.trace.push_back(it);

        bool all_frozen = true;
        for (int j = 0; j < q; ++j)
            if (!frozen[j]) {
                // terms whose block vanished entirely count as settled
                bool active_term = false;
                for (int b : block_map)
                    if (b == j) active_term = true;
                if (active_term) all_frozen = false;
            }
        if (all_frozen) return finish(std::move(fit), true, "all smoothing terms converged");

        if (!std::isnan(lp_prev) &&
            std::abs(fit.loglik_pen - lp_prev) <
                st.pll_tol_rel * (1.0 + std::abs(fit.loglik_pen))) {
            if (++stagnant >= 2)
                return finish(std::move(fit), true, "penalized log-likelihood stagnated");
        } else {
            stagnant = 0;
        }
        lp_prev = fit.loglik_pen;

        // closed-form smoothing update for the live terms
        for (int b = 0; b < qa; ++b) {
            const int j = block_map[b];
            if (st.freeze && frozen[j]) continue;
            lam_active[b] = active->penalties[b].rank / c_act[b];
        }
        c_prev = c_now;

        if (outer + 1 == st.max_outer)
            return finish(std::move(fit), false,
                          "smoothing selection did not converge in " +
                              std::to_string(st.max_outer) + " outer iterations");
    }
    throw std::logic_error("em_fit: unreachable");
}

} // namespace mgam
