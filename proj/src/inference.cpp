#include "mgam/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mgam/parallel.hpp"
#include "mgam/special.hpp"

namespace mgam {

namespace {

void check_fit(const ModelDesign& dz, const FitResult& fit) {
    if (fit.beta.size() != dz.p)
        throw std::invalid_argument("prediction: fit does not match the design (p differs)");
    if (fit.posterior_cov.rows() != dz.p || fit.posterior_cov.cols() != dz.p)
        throw std::invalid_argument("prediction: posterior covariance has the wrong shape");
}

double band_z(double level) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("prediction: level must be in (0,1)");
    return normal_quantile(0.5 * (1.0 + level));
}

Eigen::MatrixXd theta_at(const ModelDesign& dz, const std::vector<Eigen::MatrixXd>& X,
                         const std::vector<Eigen::VectorXd>& offs, const Eigen::VectorXd& beta) {
    const int D = dz.dim();
    Eigen::MatrixXd th(X[0].rows(), D);
    for (int d = 0; d < D; ++d) {
        th.col(d) = X[d] * beta.segment(dz.beta_offset[d], X[d].cols());
        if (offs[d].size()) th.col(d) += offs[d];
    }
    return th;
}

// q-th order statistic on the 0..n-1 scale, nearest rank.
double order_stat(std::vector<double>& v, double q) {
    const int n = static_cast<int>(v.size());
    int k = static_cast<int>(std::llround(q * (n - 1)));
    k = std::clamp(k, 0, n - 1);
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

} // namespace

ParameterPrediction predict_parameters(const ModelDesign& design, const FitResult& fit,
                                       const DataTable& newdata, double level) {
    check_fit(design, fit);
    ParameterPrediction out;
    out.level = level;
    out.z = band_z(level);

    std::vector<Eigen::VectorXd> offs;
    std::vector<unsigned char> flags;
    const std::vector<Eigen::MatrixXd> X = model_matrices(design, newdata, &offs, &flags);
    out.extrapolated = std::move(flags);

    const Eigen::Index n = X[0].rows();
    const int D = design.dim();
    out.theta = theta_at(design, X, offs, fit.beta);
    out.se.resize(n, D);
    for (int d = 0; d < D; ++d) {
        const int off = design.beta_offset[d];
        const int pd = static_cast<int>(X[d].cols());
        const Eigen::MatrixXd C = fit.posterior_cov.block(off, off, pd, pd);
        // diag(X C X') without forming the n x n product
        out.se.col(d) = ((X[d] * C).cwiseProduct(X[d])).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
    }
    out.lower = out.theta - out.z * out.se;
    out.upper = out.theta + out.z * out.se;
    return out;
}

TermPrediction predict_term(const ModelDesign& design, const FitResult& fit,
                            const DataTable& newdata, int term, double level) {
    check_fit(design, fit);
    if (term < 0 || term >= design.q())
        throw std::invalid_argument("prediction: no such smooth term");
    TermPrediction out;
    out.level = level;
    const double z = band_z(level);

    std::vector<Eigen::VectorXd> offs;
    const std::vector<Eigen::MatrixXd> X = model_matrices(design, newdata, &offs);
    const PenaltyBlock& b = design.penalties[term];
    out.label = b.label;
    const int local = b.offset - design.beta_offset[b.param];
    const Eigen::MatrixXd Xs = X[b.param].middleCols(local, b.size);

    out.value = Xs * fit.beta.segment(b.offset, b.size);
    const Eigen::MatrixXd C = fit.posterior_cov.block(b.offset, b.offset, b.size, b.size);
    out.se = ((Xs * C).cwiseProduct(Xs)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
    out.lower = out.value - z * out.se;
    out.upper = out.value + z * out.se;
    return out;
}

std::vector<ResponseScale> response_scales(const FamilySpec& family) {
    const auto id = [](double v) { return v; };
    switch (family.kind) {
        case FamilyKind::GaussFix:
            return {{"mean", id, true}};
        case FamilyKind::Gaussian:
            return {{"mean", id, true}, {"sd", [](double v) { return std::exp(0.5 * v); }, true}};
        case FamilyKind::Poisson:
        case FamilyKind::Exponential:
            return {{"rate", [](double v) { return std::exp(v); }, true}};
        case FamilyKind::Gamma:
            return {{"shape", [](double v) { return std::exp(v); }, true},
                    {"scale", [](double v) { return std::exp(-v); }, false}};
        case FamilyKind::Binomial:
            return {{"prob", [](double v) { return 1.0 / (1.0 + std::exp((5.0 - v) / 6.0)); },
                     true}};
        case FamilyKind::Gev:
            return {{"location", id, true},
                    {"scale", [](double v) { return std::exp(v); }, true},
                    {"shape", id, true}};
    }
    throw std::logic_error("response_scales: unknown family");
}

Eigen::MatrixXd posterior_draws(const FitResult& fit, int draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("posterior_draws: need at least one draw");
    const Eigen::Index p = fit.beta.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.posterior_cov);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("posterior_draws: eigendecomposition failed");
    const Eigen::MatrixXd factor =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    Rng rng(Rng::mix(seed, 0x647261fd));
    Eigen::MatrixXd out(p, draws);
    Eigen::VectorXd zvec(p);
    for (int r = 0; r < draws; ++r) {
        for (Eigen::Index i = 0; i < p; ++i) zvec[i] = rng.normal();
        out.col(r) = fit.beta + factor * zvec;
    }
    return out;
}

QuantileCurves gev_quantile_curves(const ModelDesign& design, const FitResult& fit,
                                   const DataTable& newdata, const std::vector<double>& probs,
                                   double level, int draws, std::uint64_t seed, int threads) {
    check_fit(design, fit);
    if (design.family.kind != FamilyKind::Gev)
        throw std::invalid_argument("quantile curves need a gev fit");
    if (probs.empty()) throw std::invalid_argument("quantile curves: no probability levels");
    for (double p : probs)
        if (!(p > 0.0 && p < 1.0))
            throw std::invalid_argument("quantile curves: probabilities must be in (0,1)");
    if (draws < 2) throw std::invalid_argument("quantile curves: need at least two draws");
    const double alpha = 0.5 * (1.0 - level);
    if (!(alpha > 0.0 && alpha < 0.5))
        throw std::invalid_argument("prediction: level must be in (0,1)");

    std::vector<Eigen::VectorXd> offs;
    const std::vector<Eigen::MatrixXd> X = model_matrices(design, newdata, &offs);
    const Eigen::Index n = X[0].rows();
    const int P = static_cast<int>(probs.size());

    QuantileCurves out;
    out.probs = probs;
    out.level = level;
    out.draws = draws;
    out.value.resize(n, P);
    const Eigen::MatrixXd th = theta_at(design, X, offs, fit.beta);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < P; ++k)
            out.value(i, k) = gev_quantile(th(i, 0), th(i, 1), th(i, 2), probs[k]);

    const Eigen::MatrixXd B = posterior_draws(fit, draws, seed);
    std::vector<Eigen::MatrixXd> per_draw(draws);
    parallel_for(draws, threads, [&](int r) {
        const Eigen::MatrixXd thr = theta_at(design, X, offs, B.col(r));
        Eigen::MatrixXd q(n, P);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int k = 0; k < P; ++k)
                q(i, k) = gev_quantile(thr(i, 0), thr(i, 1), thr(i, 2), probs[k]);
        per_draw[r] = std::move(q);
    });

    out.lower.resize(n, P);
    out.upper.resize(n, P);
    std::vector<double> slab(draws);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < P; ++k) {
            for (int r = 0; r < draws; ++r) slab[r] = per_draw[r](i, k);
            out.lower(i, k) = order_stat(slab, alpha);
            out.upper(i, k) = order_stat(slab, 1.0 - alpha);
        }
    }
    return out;
}

Eigen::MatrixXd simulate_from_fit(const ModelDesign& design, const FitResult& fit,
                                  const DataTable& newdata, int replicates, std::uint64_t seed,
                                  int threads) {
    check_fit(design, fit);
    if (replicates < 1) throw std::invalid_argument("simulate_from_fit: need replicates >= 1");

    std::vector<Eigen::VectorXd> offs;
    const std::vector<Eigen::MatrixXd> X = model_matrices(design, newdata, &offs);
    const Eigen::MatrixXd th = theta_at(design, X, offs, fit.beta);
    const Eigen::Index n = th.rows();
    const int D = design.dim();

    Eigen::MatrixXd out(n, replicates);
    parallel_for(replicates, threads, [&](int r) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(r)));
        double t[3] = {0.0, 0.0, 0.0};
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int d = 0; d < D; ++d) t[d] = th(i, d);
            out(i, r) = sample(design.family, t, rng);
        }
    });
    return out;
}

} // namespace mgam
