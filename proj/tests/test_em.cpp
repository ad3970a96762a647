#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mgam/em.hpp"
#include "mgam/rng.hpp"

using namespace mgam;

namespace {

// Scalar ridge problem with X'X = 4, X'y = 4: observations x=(2,0), y=(2,0).
ModelDesign scalar_ridge() {
    ModelDesign dz;
    dz.family = FamilySpec{FamilyKind::GaussFix};
    dz.n = 2;
    dz.p = 1;
    Eigen::MatrixXd X(2, 1);
    X << 2.0, 0.0;
    dz.X = {std::move(X)};
    dz.offsets = {Eigen::VectorXd()};
    dz.beta_offset = {0};
    PenaltyBlock b;
    b.S = Eigen::MatrixXd::Identity(1, 1);
    b.offset = 0;
    b.size = 1;
    b.rank = 1;
    b.param = 0;
    b.label = "ridge";
    dz.penalties = {std::move(b)};
    dz.null_space_dim = 0;
    return dz;
}

ModelDesign gauss_ridge(int n, int p, unsigned long long seed, Eigen::VectorXd* y_out) {
    Rng rng(seed);
    Eigen::MatrixXd X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    Eigen::VectorXd beta_true(p);
    for (int j = 0; j < p; ++j) beta_true[j] = 0.5 * std::sin(1.0 + j);
    Eigen::VectorXd y = X * beta_true;
    for (int i = 0; i < n; ++i) y[i] += rng.normal();

    ModelDesign dz;
    dz.family = FamilySpec{FamilyKind::GaussFix};
    dz.n = n;
    dz.p = p;
    dz.X = {std::move(X)};
    dz.offsets = {Eigen::VectorXd()};
    dz.beta_offset = {0};
    PenaltyBlock b;
    b.S = Eigen::MatrixXd::Identity(p, p);
    b.offset = 0;
    b.size = p;
    b.rank = p;
    b.param = 0;
    b.label = "ridge";
    dz.penalties = {std::move(b)};
    dz.null_space_dim = 0;
    *y_out = std::move(y);
    return dz;
}

DataTable poisson_wiggle(int n, unsigned long long seed) {
    Rng rng(seed);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i + 0.5) / n;
        const double th[1] = {0.4 + std::sin(2.0 * M_PI * x[i])};
        y[i] = sample(FamilySpec{FamilyKind::Poisson}, th, rng);
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);
    return t;
}

// Test-only marginal-likelihood surrogate: l_P at the inner optimum plus the
// half-log-determinant correction (additive constants dropped).
double laplace_marginal(const ModelDesign& dz, const Eigen::VectorXd& y, double lambda,
                        const Eigen::VectorXd& warm) {
    NewtonSettings tight;
    tight.grad_tol_rel = 1e-10;
    Eigen::VectorXd lam(1);
    lam << lambda;
    const PenalizedFit fit = maximize_penalized(dz, y, lam, warm, tight);
    REQUIRE(fit.converged());
    const PenaltyBlock& b = dz.penalties[0];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.S, Eigen::EigenvaluesOnly);
    double logdet_S = 0.0;
    const double tol = 1e-9 * es.eigenvalues().maxCoeff();
    for (int i = 0; i < b.size; ++i)
        if (es.eigenvalues()[i] > tol) logdet_S += std::log(lambda * es.eigenvalues()[i]);
    const Eigen::LLT<Eigen::MatrixXd> llt(fit.Hp);
    REQUIRE(llt.info() == Eigen::Success);
    double logdet_H = 0.0;
    for (int i = 0; i < dz.p; ++i) logdet_H += 2.0 * std::log(llt.matrixL()(i, i));
    return fit.loglik_pen + 0.5 * logdet_S - 0.5 * logdet_H;
}

} // namespace

TEST_CASE("compute_c and update_lambda: scalar ridge chain") {
    ModelDesign dz = scalar_ridge();
    Eigen::VectorXd y(2);
    y << 2.0, 0.0;
    Eigen::VectorXd lam(1);
    lam << 1.0;
    NewtonSettings tight;
    tight.grad_tol_rel = 1e-12;

    PenalizedFit fit = maximize_penalized(dz, y, lam, Eigen::VectorXd::Zero(1), tight);
    REQUIRE(fit.converged());
    CHECK(fit.beta[0] == doctest::Approx(0.8).epsilon(1e-12));

    const double c0 = compute_c(dz, y, fit, 0);
    CHECK(c0 == doctest::Approx(0.84).epsilon(1e-12));

    const Eigen::VectorXd lam1 = update_lambda(Eigen::VectorXd::Constant(1, c0),
                                               dz.penalty_ranks());
    CHECK(lam1[0] == doctest::Approx(1.1904762).epsilon(1e-7));
    // the update is exactly stationary for the surrogate it maximizes
    CHECK(dz.penalty_ranks()[0] / lam1[0] == doctest::Approx(c0).epsilon(1e-15));

    // one more EM step, against the closed-form ridge algebra
    PenalizedFit fit1 = maximize_penalized(dz, y, lam1, fit.beta, tight);
    const double b1 = 4.0 / (4.0 + lam1[0]);
    CHECK(fit1.beta[0] == doctest::Approx(b1).epsilon(1e-12));
    const double c1 = compute_c(dz, y, fit1, 0);
    CHECK(c1 == doctest::Approx(b1 * b1 + 1.0 / (4.0 + lam1[0])).epsilon(1e-12));

    const Eigen::VectorXd g = oakes_gradient(Eigen::VectorXd::Constant(1, c0),
                                             Eigen::VectorXd::Constant(1, c1));
    CHECK(g[0] == doctest::Approx(0.5 * (0.84 - c1)).epsilon(1e-12));

    // iterate the recursion to its fixed point; the criterion goes to zero
    double ck = c0;
    for (int k = 0; k < 200; ++k) {
        const double lamk = 1.0 / ck;
        const double bk = 4.0 / (4.0 + lamk);
        const double cn = bk * bk + 1.0 / (4.0 + lamk);
        if (std::abs(0.5 * (ck - cn)) < 1e-12) {
            ck = cn;
            break;
        }
        ck = cn;
    }
    const double lam_fix = 1.0 / ck;
    const double b_fix = 4.0 / (4.0 + lam_fix);
    CHECK(std::abs(0.5 * (ck - (b_fix * b_fix + 1.0 / (4.0 + lam_fix)))) < 1e-8);

    // em_fit lands on the same fixed point
    EmSettings st;
    st.newton = tight;
    FitResult res = em_fit(dz, y, st);
    CHECK(res.converged);
    CHECK(res.lambda[0] == doctest::Approx(1.0 / ck).epsilon(1e-4));
    CHECK(res.fit.beta[0] == doctest::Approx(4.0 / (4.0 + res.lambda[0])).epsilon(1e-10));

    CHECK_THROWS(update_lambda(Eigen::VectorXd::Constant(1, -1.0), dz.penalty_ranks()));
    CHECK_THROWS(compute_c(dz, y, fit, 3));
}

TEST_CASE("compute_c: quadratic likelihood reduces to the pure trace form") {
    const int n = 80;
    Rng rng(19);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i + 0.5) / n;
        y[i] = std::sin(5.0 * x[i]) + 0.2 * rng.normal();
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 8, "x", 0.0}};
    spec.params = {pt};
    ModelDesign dz = assemble(spec, t);

    Eigen::VectorXd lam(1);
    lam << 0.7;
    PenalizedFit fit = maximize_penalized(dz, y, lam, Eigen::VectorXd::Zero(dz.p));
    REQUIRE(fit.converged());

    const PenaltyBlock& b = dz.penalties[0];
    Eigen::MatrixXd S_full = Eigen::MatrixXd::Zero(dz.p, dz.p);
    S_full.block(b.offset, b.offset, b.size, b.size) = b.S;
    const auto seg = fit.beta.segment(b.offset, b.size);
    const double direct =
        seg.dot(b.S * seg) + (fit.Hp.inverse() * S_full).trace();
    CHECK(compute_c(dz, y, fit, 0) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("em_fit: matches the exact marginal-likelihood grid on a gaussian ridge") {
    Eigen::VectorXd y;
    ModelDesign dz = gauss_ridge(200, 10, 2024, &y);

    EmSettings st;
    FitResult res = em_fit(dz, y, st);
    REQUIRE(res.converged);
    const double lam_em = res.lambda[0];

    // exact log-marginal likelihood of y ~ N(0, I + X X'/lambda), reduced to
    // p x p solves
    const Eigen::MatrixXd A = dz.X[0].transpose() * dz.X[0];
    const Eigen::VectorXd bv = dz.X[0].transpose() * y;
    const double yy = y.squaredNorm();
    auto marginal = [&](double lam) {
        const Eigen::MatrixXd M = A + lam * Eigen::MatrixXd::Identity(10, 10);
        const Eigen::LLT<Eigen::MatrixXd> llt(M);
        double logdet = 0.0; // log det(I_p + A/lam) = log det(M) - p log lam
        for (int i = 0; i < 10; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        logdet -= 10.0 * std::log(lam);
        const double quad = yy - bv.dot(llt.solve(bv));
        return -0.5 * (logdet + quad);
    };

    double best_lam = 0.0, best_val = -1e300;
    for (double lg = -8.0; lg <= 8.0; lg += 0.002) {
        const double v = marginal(std::exp(lg));
        if (v > best_val) {
            best_val = v;
            best_lam = std::exp(lg);
        }
    }
    CHECK(std::abs(std::log(lam_em / best_lam)) < 0.01);
}

TEST_CASE("em_fit: truly linear signal is smoothed to a linear fit") {
    const int n = 60;
    Rng rng(4);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = 1000.0 * (i + 0.5) / n;
        y[i] = 0.5 + 0.2 * x[i] + 0.05 * rng.normal();
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 10, "x", 0.0}};
    spec.params = {pt};
    ModelDesign dz = assemble(spec, t);

    EmSettings st;
    st.max_outer = 500;
    FitResult res = em_fit(dz, y, st);
    CHECK(res.converged);
    CHECK(res.lambda[0] > 1e4);
    const PenaltyBlock& b = dz.penalties[0];
    const auto seg = res.beta.segment(b.offset, b.size);
    CHECK(seg.dot(b.S * seg) < 1e-6); // no curvature left
}

TEST_CASE("em_fit: laplace marginal surrogate rises along the trajectory") {
    DataTable t = poisson_wiggle(150, 8);
    const Eigen::VectorXd y = t.col("y");
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 8, "x", 0.0}};
    spec.params = {pt};
    ModelDesign dz = assemble(spec, t);

    EmSettings st;
    st.epsilon_rel = 1e-7; // drive the fixed point hard so the gradient vanishes
    st.pll_tol_rel = 1e-11;
    FitResult res = em_fit(dz, y, st);
    REQUIRE(res.converged);
    REQUIRE(res.trace.size() >= 2);

    Eigen::VectorXd warm = Eigen::VectorXd::Zero(dz.p);
    warm[0] = std::log(y.mean());
    double prev = laplace_marginal(dz, y, res.trace[0].lambda[0], warm);
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
        const double cur = laplace_marginal(dz, y, res.trace[k].lambda[0], warm);
        CHECK(cur >= prev - 1e-6 * std::abs(cur));
        prev = cur;
    }

    // finite-difference gradient is ~zero at the fixed point
    const double lam_hat = res.lambda[0];
    const double h = 1e-3 * lam_hat;
    const double g = (laplace_marginal(dz, y, lam_hat + h, warm) -
                      laplace_marginal(dz, y, lam_hat - h, warm)) /
                     (2.0 * h);
    CHECK(std::abs(g) < 1e-3);

    // away from the optimum the gradient is sizeable and matches the
    // half-difference form rank/lambda - c
    const double lam0 = 0.25 * lam_hat;
    NewtonSettings tight;
    tight.grad_tol_rel = 1e-10;
    Eigen::VectorXd lam0v(1);
    lam0v << lam0;
    const PenalizedFit pf0 = maximize_penalized(dz, y, lam0v, warm, tight);
    REQUIRE(pf0.converged());
    const double g_form = 0.5 * (dz.penalties[0].rank / lam0 - compute_c(dz, y, pf0, 0));
    const double h0 = 1e-4 * lam0;
    const double g0 = (laplace_marginal(dz, y, lam0 + h0, warm) -
                       laplace_marginal(dz, y, lam0 - h0, warm)) /
                      (2.0 * h0);
    CHECK(g0 == doctest::Approx(g_form).epsilon(5e-3));

    // every smoothing iterate stayed strictly positive
    for (const EmIterate& it : res.trace) CHECK(it.lambda[0] > 0.0);
}

TEST_CASE("em_fit: freezing changes nothing material; runs are deterministic") {
    const int n = 250;
    Rng rng(31);
    Eigen::VectorXd x(n), z(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i + 0.5) / n;
        z[i] = rng.uniform();
        const double th[1] = {0.3 + std::sin(2.0 * M_PI * x[i]) + 0.7 * std::sin(2.0 * M_PI * z[i])};
        y[i] = sample(FamilySpec{FamilyKind::Poisson}, th, rng);
    }
    DataTable t;
    t.add("x", x);
    t.add("z", z);
    t.add("y", y);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 8, "x", 0.0},
                  BasisSpec{BasisKind::CubicRegression, 8, "z", 0.0}};
    spec.params = {pt};
    ModelDesign dz = assemble(spec, t);
    REQUIRE(dz.q() == 2);

    EmSettings with;
    with.epsilon_rel = 1e-8; // both runs near the exact fixed point
    with.pll_tol_rel = 1e-12;
    FitResult a = em_fit(dz, y, with);
    REQUIRE(a.converged);

    EmSettings without = with;
    without.freeze = false;
    FitResult b = em_fit(dz, y, without);
    REQUIRE(b.converged);
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-6);
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(std::log(a.lambda[j] / b.lambda[j])) < 1e-3);

    // bit-identical repeat, parallel M-step included
    FitResult a2 = em_fit(dz, y, with);
    CHECK((a.beta - a2.beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.lambda - a2.lambda).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.trace.size() == a2.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k)
        CHECK(a.trace[k].loglik_pen == a2.trace[k].loglik_pen);

    // serial mode agrees bit for bit as well
    EmSettings serial = with;
    serial.parallel_mstep = false;
    FitResult s = em_fit(dz, y, serial);
    CHECK((a.beta - s.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("em_fit: no smooth terms means a single inner fit") {
    DataTable t;
    t.add("y", Eigen::Vector4d(2.0, 3.0, 1.0, 5.0));
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    spec.params = {ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    FitResult res = em_fit(dz, t.col("y"), EmSettings{});
    CHECK(res.converged);
    CHECK(res.outer_iterations == 1);
    CHECK(res.lambda.size() == 0);
    CHECK(res.beta[0] == doctest::Approx(std::log(t.col("y").mean())).epsilon(1e-8));
    CHECK(res.posterior_cov(0, 0) == doctest::Approx(1.0 / t.col("y").sum()).epsilon(1e-6));
}

TEST_CASE("em_fit: iteration cap reports non-convergence with the trajectory") {
    DataTable t = poisson_wiggle(100, 77);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 8, "x", 0.0}};
    spec.params = {pt};
    ModelDesign dz = assemble(spec, t);

    EmSettings st;
    st.max_outer = 1;
    FitResult res = em_fit(dz, t.col("y"), st);
    CHECK(!res.converged);
    CHECK(res.outer_iterations == 1);
    CHECK(res.trace.size() == 1);
    CHECK(res.message.find("did not converge") != std::string::npos);
    CHECK(std::isfinite(res.fit.loglik_pen));
    CHECK(res.lambda[0] > 0.0);
}
