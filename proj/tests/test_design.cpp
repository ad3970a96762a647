#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "mgam/design.hpp"
#include "mgam/rng.hpp"

using namespace mgam;

namespace {

DataTable grid_table(int n, unsigned long long seed) {
    Rng rng(seed);
    Eigen::VectorXd x(n), z(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i + 0.5) / n;
        z[i] = rng.uniform();
        y[i] = 1.0 + std::sin(6.0 * x[i]) + 0.3 * rng.normal();
    }
    DataTable t;
    t.add("x", x);
    t.add("z", z);
    t.add("y", y);
    return t;
}

ParamTerms smooth_only(std::initializer_list<BasisSpec> bs) {
    ParamTerms pt;
    pt.smooths = bs;
    return pt;
}

// Restrict a built design to a contiguous row range (accumulation tests).
ModelDesign slice_rows(const ModelDesign& dz, Eigen::Index lo, Eigen::Index len) {
    ModelDesign out = dz;
    out.n = len;
    for (auto& X : out.X) X = Eigen::MatrixXd(X.middleRows(lo, len));
    for (auto& o : out.offsets)
        if (o.size()) o = Eigen::VectorXd(o.segment(lo, len));
    return out;
}

// Bare penalized Newton, only strong enough for well-behaved oracle cases.
Eigen::VectorXd newton_fit(const ModelDesign& dz, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& lambda, Eigen::VectorXd beta) {
    for (int it = 0; it < 80; ++it) {
        const Accumulated acc = accumulate(dz, y, beta);
        const Eigen::MatrixXd Hp = acc.neg_hess + penalty_matrix(dz, lambda);
        const Eigen::VectorXd Up = acc.score - penalty_apply(dz, lambda, beta);
        const Eigen::VectorXd step = Hp.ldlt().solve(Up);
        beta += step;
        if (step.cwiseAbs().maxCoeff() < 1e-13) break;
    }
    return beta;
}

} // namespace

TEST_CASE("assemble: two-parameter gaussian, three smooths per parameter") {
    DataTable t = grid_table(200, 11);
    Eigen::VectorXd x2 = t.col("x"), x3 = t.col("z");
    DataTable td;
    td.add("x1", t.col("x"));
    td.add("x2", t.col("z"));
    td.add("x3", 0.5 * (t.col("x") + t.col("z")));
    td.add("y", t.col("y"));

    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gaussian};
    BasisSpec b1{BasisKind::CubicRegression, 10, "x1", 0.0};
    BasisSpec b2{BasisKind::CubicRegression, 10, "x2", 0.0};
    BasisSpec b3{BasisKind::CubicRegression, 10, "x3", 0.0};
    spec.params = {smooth_only({b1, b2, b3}), smooth_only({b1, b2, b3})};

    ModelDesign dz = assemble(spec, td);
    CHECK(dz.p == 56); // 2 * (1 + 3*9)
    CHECK(dz.q() == 6);
    CHECK(dz.n == 200);
    CHECK(dz.pcols(0) == 28);
    CHECK(dz.pcols(1) == 28);
    CHECK(dz.coef_names.size() == 56);
    CHECK(dz.coef_names[0] == "mean.intercept");
    CHECK(dz.coef_names[28] == "logvar.intercept");
    CHECK(dz.penalties[0].label == "mean:s(x1)");
    CHECK(dz.penalties[5].label == "logvar:s(x3)");

    // penalty ranges disjoint, 9 wide, rank 8 each
    int prev_end = 0;
    for (const PenaltyBlock& b : dz.penalties) {
        CHECK(b.size == 9);
        CHECK(b.rank == 8);
        CHECK(b.offset >= prev_end);
        prev_end = b.offset + b.size;
    }
    CHECK(dz.null_space_dim == 56 - 6 * 8); // intercepts + one linear direction per smooth
}

TEST_CASE("assemble: intercept-only model is purely parametric") {
    DataTable t = grid_table(10, 3);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    spec.params = {ParamTerms{}};
    ModelDesign dz = assemble(spec, t);
    CHECK(dz.p == 1);
    CHECK(dz.q() == 0);
    CHECK(dz.null_space_dim == 1);
    CHECK(dz.X[0].col(0).isOnes());
}

TEST_CASE("assemble: gev with cyclic terms and a thin-plate location term") {
    const int n = 300;
    Rng rng(17);
    Eigen::VectorXd day(n), lon(n), y(n);
    for (int i = 0; i < n; ++i) {
        day[i] = 365.0 * i / n;
        lon[i] = rng.uniform() * 10.0;
        y[i] = rng.normal();
    }
    DataTable t;
    t.add("day", day);
    t.add("lon", lon);
    t.add("y", y);

    BasisSpec cyc{BasisKind::CyclicCubic, 12, "day", 365.0};
    BasisSpec tp{BasisKind::ThinPlate, 10, "lon", 0.0};
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gev};
    spec.params = {smooth_only({cyc, tp}), smooth_only({cyc}), smooth_only({cyc})};

    ModelDesign dz = assemble(spec, t);
    CHECK(dz.q() == 4);
    CHECK(dz.p == 45); // 3 intercepts + 3*11 cyclic + 9 thin-plate
    CHECK(dz.penalties[0].label == "location:s(day)");
    CHECK(dz.penalties[1].label == "location:s(lon)");
    CHECK(dz.penalties[2].label == "logscale:s(day)");
    CHECK(dz.penalties[3].label == "shape:s(day)");
    // cyclic penalties lose only the constant to the constraint; thin-plate
    // keeps its linear null direction
    CHECK(dz.penalties[0].rank == 11);
    CHECK(dz.penalties[1].rank == 8);
    CHECK(dz.null_space_dim == 4);
}

TEST_CASE("assemble: missing column is an error") {
    DataTable t = grid_table(20, 5);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    ParamTerms pt;
    pt.linear = {"nope"};
    spec.params = {pt};
    CHECK_THROWS(assemble(spec, t));

    ParamTerms pt2;
    pt2.smooths = {BasisSpec{BasisKind::CubicRegression, 6, "missing", 0.0}};
    spec.params = {pt2};
    CHECK_THROWS(assemble(spec, t));
}

TEST_CASE("accumulate: unit-variance gaussian intercept oracle") {
    DataTable t;
    t.add("y", Eigen::Vector3d(1.0, 2.0, 3.0));
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    spec.params = {ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
    Accumulated acc = accumulate(dz, t.col("y"), beta);
    CHECK(acc.score[0] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(acc.neg_hess(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
    const double expect_ll = -0.5 * (1.0 + 4.0 + 9.0) - 1.5 * std::log(2.0 * M_PI);
    CHECK(acc.loglik == doctest::Approx(expect_ll).epsilon(1e-14));
    CHECK(loglik_sum(dz, t.col("y"), beta) == doctest::Approx(expect_ll).epsilon(1e-14));
}

TEST_CASE("accumulate: curvature matrix is exactly symmetric") {
    const int n = 120;
    Rng rng(29);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.uniform();
        const double th[3] = {2.0 * x[i], 0.1, 0.1};
        y[i] = sample(FamilySpec{FamilyKind::Gev}, th, rng);
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);

    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gev};
    BasisSpec b{BasisKind::CubicRegression, 6, "x", 0.0};
    spec.params = {smooth_only({b}), smooth_only({b}), ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(dz.p);
    beta[dz.beta_offset[2]] = 0.1;
    Accumulated acc = accumulate(dz, y, beta);
    CHECK((acc.neg_hess - acc.neg_hess.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::VectorXd v = Eigen::VectorXd::Ones(dz.p);
    Eigen::MatrixXd dH = hessian_lambda_derivative(dz, y, beta, v);
    CHECK((dH - dH.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("accumulate: score matches finite differences of the log-likelihood") {
    const int n = 60;
    for (FamilyKind kind : {FamilyKind::Gaussian, FamilyKind::Gamma, FamilyKind::Gev}) {
        const FamilySpec fam{kind};
        const int D = fam.dim();
        Rng rng(101 + static_cast<int>(kind));
        Eigen::VectorXd x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.uniform();
            const double th[3] = {0.5 + x[i], 0.2, 0.1};
            y[i] = sample(fam, th, rng);
        }
        DataTable t;
        t.add("x", x);
        t.add("y", y);

        ModelSpec spec;
        spec.family = fam;
        spec.params.assign(D, smooth_only({BasisSpec{BasisKind::CubicRegression, 5, "x", 0.0}}));
        ModelDesign dz = assemble(spec, t);

        Eigen::VectorXd beta(dz.p);
        for (int k = 0; k < dz.p; ++k) beta[k] = 0.05 * rng.normal();
        for (int d = 0; d < D; ++d) beta[dz.beta_offset[d]] = 0.5;
        if (kind == FamilyKind::Gev) beta[dz.beta_offset[2]] = 0.1;

        const Accumulated acc = accumulate(dz, y, beta);
        const double h = 1e-6;
        for (int rep = 0; rep < 6; ++rep) {
            Eigen::VectorXd u(dz.p);
            for (int k = 0; k < dz.p; ++k) u[k] = rng.normal();
            u.normalize();
            const double fd = (loglik_sum(dz, y, beta + h * u) - loglik_sum(dz, y, beta - h * u)) /
                              (2.0 * h);
            const double an = acc.score.dot(u);
            CHECK(fd == doctest::Approx(an).epsilon(1e-6));
        }
    }
}

TEST_CASE("accumulate: support violation reports the offending row") {
    DataTable t;
    t.add("y", Eigen::Vector3d(0.0, 0.5, -100.0));
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gev};
    spec.params = {ParamTerms{}, ParamTerms{}, ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    Eigen::VectorXd beta(3);
    beta << 0.0, 0.0, 0.5;
    CHECK(loglik_sum(dz, t.col("y"), beta) == -std::numeric_limits<double>::infinity());
    try {
        accumulate(dz, t.col("y"), beta);
        FAIL("expected SupportError");
    } catch (const SupportError& e) {
        CHECK(e.index == 2);
    }
}

TEST_CASE("accumulate: additive over row partitions") {
    DataTable t = grid_table(90, 41);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gaussian};
    BasisSpec b{BasisKind::CubicRegression, 7, "x", 0.0};
    spec.params = {smooth_only({b}), ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    Rng rng(7);
    Eigen::VectorXd beta(dz.p);
    for (int k = 0; k < dz.p; ++k) beta[k] = 0.1 * rng.normal();

    const Eigen::VectorXd y = t.col("y");
    Accumulated whole = accumulate(dz, y, beta);
    Accumulated a = accumulate(slice_rows(dz, 0, 40), y.head(40), beta);
    Accumulated c = accumulate(slice_rows(dz, 40, 50), y.tail(50), beta);

    CHECK(whole.loglik == doctest::Approx(a.loglik + c.loglik).epsilon(1e-12));
    CHECK((whole.score - a.score - c.score).cwiseAbs().maxCoeff() <=
          1e-12 * whole.score.cwiseAbs().maxCoeff());
    CHECK((whole.neg_hess - a.neg_hess - c.neg_hess).cwiseAbs().maxCoeff() <=
          1e-12 * whole.neg_hess.cwiseAbs().maxCoeff());
}

TEST_CASE("hessian_lambda_derivative: zero for a quadratic log-likelihood") {
    DataTable t = grid_table(40, 13);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    BasisSpec b{BasisKind::CubicRegression, 6, "x", 0.0};
    spec.params = {smooth_only({b})};
    ModelDesign dz = assemble(spec, t);

    Rng rng(5);
    Eigen::VectorXd beta(dz.p), v(dz.p);
    for (int k = 0; k < dz.p; ++k) {
        beta[k] = rng.normal();
        v[k] = rng.normal();
    }
    Eigen::MatrixXd dH = hessian_lambda_derivative(dz, t.col("y"), beta, v);
    CHECK(dH.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hessian_lambda_derivative: poisson single-observation oracle") {
    DataTable t;
    t.add("y", Eigen::VectorXd::Ones(1));
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    spec.params = {ParamTerms{}};
    ModelDesign dz = assemble(spec, t);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(1), v = Eigen::VectorXd::Ones(1);
    Eigen::MatrixXd dH = hessian_lambda_derivative(dz, t.col("y"), beta, v);
    REQUIRE(dH.rows() == 1);
    CHECK(dH(0, 0) == doctest::Approx(1.0).epsilon(1e-14)); // d/dv of e^eta at eta=0
}

TEST_CASE("hessian_lambda_derivative: matches refitted finite differences") {
    const int n = 80;
    const FamilySpec fam{FamilyKind::Poisson};
    Rng rng(71);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = (i + 0.5) / n;
        const double th[1] = {0.4 + std::sin(6.28 * x[i])};
        y[i] = sample(fam, th, rng);
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);

    ModelSpec spec;
    spec.family = fam;
    spec.params = {smooth_only({BasisSpec{BasisKind::CubicRegression, 6, "x", 0.0}})};
    ModelDesign dz = assemble(spec, t);
    REQUIRE(dz.q() == 1);

    const double lam = 0.7;
    Eigen::VectorXd lambda(1);
    lambda << lam;
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(dz.p);
    beta0[0] = std::log(y.mean());
    const Eigen::VectorXd bhat = newton_fit(dz, y, lambda, beta0);

    // analytic: direction v = dbeta/dlambda = -Hp^{-1} S_j bhat
    const Accumulated acc = accumulate(dz, y, bhat);
    const Eigen::MatrixXd Hp = acc.neg_hess + penalty_matrix(dz, lambda);
    Eigen::VectorXd one(1);
    one << 1.0;
    const Eigen::VectorXd Sb = penalty_apply(dz, one, bhat);
    const Eigen::VectorXd v = -Hp.ldlt().solve(Sb);
    const Eigen::MatrixXd dH = hessian_lambda_derivative(dz, y, bhat, v);

    const double h = 1e-4;
    Eigen::VectorXd lp(1), lm(1);
    lp << lam + h;
    lm << lam - h;
    const Eigen::MatrixXd Hplus = accumulate(dz, y, newton_fit(dz, y, lp, bhat)).neg_hess;
    const Eigen::MatrixXd Hminus = accumulate(dz, y, newton_fit(dz, y, lm, bhat)).neg_hess;
    const Eigen::MatrixXd fd = (Hplus - Hminus) / (2.0 * h);

    const double rel = (dH - fd).norm() / fd.norm();
    CHECK(rel < 1e-3);
}

TEST_CASE("penalty helpers agree with the assembled block-diagonal matrix") {
    DataTable t = grid_table(150, 23);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Gaussian};
    BasisSpec b1{BasisKind::CubicRegression, 8, "x", 0.0};
    BasisSpec b2{BasisKind::CubicRegression, 6, "z", 0.0};
    spec.params = {smooth_only({b1, b2}), smooth_only({b2})};
    ModelDesign dz = assemble(spec, t);
    REQUIRE(dz.q() == 3);

    Rng rng(61);
    Eigen::VectorXd beta(dz.p), lambda(3);
    for (int k = 0; k < dz.p; ++k) beta[k] = rng.normal();
    lambda << 0.3, 2.0, 11.0;

    const Eigen::MatrixXd S = penalty_matrix(dz, lambda);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const double direct = beta.dot(S * beta);
    CHECK(penalty_quadform(dz, lambda, beta) == doctest::Approx(direct).epsilon(1e-12));
    CHECK((penalty_apply(dz, lambda, beta) - S * beta).cwiseAbs().maxCoeff() <=
          1e-12 * (S * beta).cwiseAbs().maxCoeff());

    // intercepts unpenalized
    CHECK(S.row(dz.beta_offset[0]).cwiseAbs().sum() == 0.0);
    CHECK(S.row(dz.beta_offset[1]).cwiseAbs().sum() == 0.0);
}

TEST_CASE("model_matrices: offsets and extrapolation flags") {
    DataTable t = grid_table(50, 31);
    Eigen::VectorXd off = Eigen::VectorXd::LinSpaced(50, -1.0, 1.0);
    DataTable td;
    td.add("x", t.col("x"));
    td.add("y", t.col("y"));
    td.add("expo", off);

    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::Poisson};
    ParamTerms pt;
    pt.smooths = {BasisSpec{BasisKind::CubicRegression, 6, "x", 0.0}};
    pt.offset = "expo";
    spec.params = {pt};
    ModelDesign dz = assemble(spec, td);
    REQUIRE(dz.offsets[0].size() == 50);

    Rng rng(3);
    Eigen::VectorXd beta(dz.p);
    for (int k = 0; k < dz.p; ++k) beta[k] = rng.normal();
    const Eigen::MatrixXd theta = predictors(dz, beta);
    const Eigen::VectorXd direct = dz.X[0] * beta + off;
    CHECK((theta.col(0) - direct).cwiseAbs().maxCoeff() < 1e-14);

    DataTable nd;
    nd.add("x", Eigen::Vector2d(0.5, 1.5));
    nd.add("expo", Eigen::Vector2d(0.0, 0.0));
    std::vector<Eigen::VectorXd> offs;
    std::vector<unsigned char> extrap;
    auto Xn = model_matrices(dz, nd, &offs, &extrap);
    CHECK(Xn[0].rows() == 2);
    CHECK(extrap[0] == 0);
    CHECK(extrap[1] == 1);
}

TEST_CASE("model_matrices: cyclic terms wrap instead of extrapolating") {
    const int n = 60;
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = 10.0 * i / n;
        y[i] = std::cos(x[i]);
    }
    DataTable t;
    t.add("x", x);
    t.add("y", y);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    spec.params = {smooth_only({BasisSpec{BasisKind::CyclicCubic, 8, "x", 10.0}})};
    ModelDesign dz = assemble(spec, t);

    DataTable nd;
    nd.add("x", Eigen::Vector2d(3.0, 13.0)); // 13 wraps to 3
    std::vector<unsigned char> extrap;
    auto Xn = model_matrices(dz, nd, nullptr, &extrap);
    CHECK(extrap[0] == 0);
    CHECK(extrap[1] == 0);
    CHECK((Xn[0].row(0) - Xn[0].row(1)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("reduce: column subset keeps penalty structure aligned") {
    DataTable t = grid_table(80, 53);
    ModelSpec spec;
    spec.family = FamilySpec{FamilyKind::GaussFix};
    spec.params = {smooth_only({BasisSpec{BasisKind::CubicRegression, 6, "x", 0.0}})};
    ModelDesign dz = assemble(spec, t);
    REQUIRE(dz.p == 6);
    REQUIRE(dz.q() == 1);

    std::vector<int> kept = {0, 1, 2, 4, 5}; // drop smooth column 3 (global)
    ModelDesign rd = reduce(dz, kept);
    CHECK(rd.p == 5);
    CHECK(rd.q() == 1);
    CHECK(rd.penalties[0].offset == 1);
    CHECK(rd.penalties[0].size == 4);
    for (std::size_t k = 0; k < kept.size(); ++k)
        CHECK((rd.X[0].col(k) - dz.X[0].col(kept[k])).cwiseAbs().maxCoeff() == 0.0);
    // penalty sub-block is the corresponding rows/cols of the original
    const int local[4] = {0, 1, 3, 4};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(rd.penalties[0].S(i, j) == dz.penalties[0].S(local[i], local[j]));
    CHECK(rd.null_space_dim == rd.p - rd.penalties[0].rank);

    // dropping the whole smooth leaves a parametric design
    ModelDesign bare = reduce(dz, {0});
    CHECK(bare.p == 1);
    CHECK(bare.q() == 0);
    CHECK(bare.null_space_dim == 1);
}
