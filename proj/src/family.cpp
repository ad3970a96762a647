#include "mgam/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mgam/special.hpp"

namespace mgam {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kGevEps = std::pow(std::numeric_limits<double>::epsilon(), 0.3);

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
double logistic(double s) { return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }
} // namespace

double gev_branch_threshold() { return kGevEps; }

int FamilySpec::dim() const {
    switch (kind) {
        case FamilyKind::GaussFix:
        case FamilyKind::Poisson:
        case FamilyKind::Exponential:
        case FamilyKind::Binomial: return 1;
        case FamilyKind::Gaussian:
        case FamilyKind::Gamma: return 2;
        case FamilyKind::Gev: return 3;
    }
    return 0;
}

const char* FamilySpec::name() const {
    switch (kind) {
        case FamilyKind::GaussFix: return "gaussfix";
        case FamilyKind::Gaussian: return "gaussian";
        case FamilyKind::Poisson: return "poisson";
        case FamilyKind::Exponential: return "exponential";
        case FamilyKind::Gamma: return "gamma";
        case FamilyKind::Binomial: return "binomial";
        case FamilyKind::Gev: return "gev";
    }
    return "?";
}

std::vector<std::string> FamilySpec::parameter_names() const {
    switch (kind) {
        case FamilyKind::GaussFix: return {"mean"};
        case FamilyKind::Gaussian: return {"mean", "logvar"};
        case FamilyKind::Poisson:
        case FamilyKind::Exponential: return {"lograte"};
        case FamilyKind::Gamma: return {"logshape", "neglogscale"};
        case FamilyKind::Binomial: return {"mu"};
        case FamilyKind::Gev: return {"location", "logscale", "shape"};
    }
    return {};
}

FamilySpec FamilySpec::parse(const std::string& name) {
    for (FamilyKind k : {FamilyKind::GaussFix, FamilyKind::Gaussian, FamilyKind::Poisson,
                         FamilyKind::Exponential, FamilyKind::Gamma, FamilyKind::Binomial,
                         FamilyKind::Gev})
        if (name == FamilySpec{k}.name()) return FamilySpec{k};
    throw std::invalid_argument("unknown family: '" + name + "'");
}

// --- GEV core ----------------------------------------------------------------
//
// With sigma = exp(tau), w = (y - mu) exp(-tau) and L = log1p(xi w)/xi the
// log-likelihood is  l = -tau - (1 + xi) L - exp(-L),  which reduces smoothly
// to the Gumbel form l = -tau - w - exp(-w) as xi -> 0. All derivatives are
// assembled from partials of L in (w, xi). The pure-xi partials suffer
// cancellation when s = xi w is small, so they switch to their power series.

namespace {

struct GevL {
    double L, Lw, Lww, Lwww, Lwx, Lwwx, Lwxx, Lx, Lxx, Lxxx;
};

// Power series in s = xi w for the pure-xi partials, prefactors w^{j+1}.
void gev_L_xi_series(double w, double s, double& Lx, double& Lxx, double& Lxxx) {
    double g1 = 0.0, g2 = 0.0, g3 = 0.0, sp = 1.0;
    for (int r = 0; r < 9; ++r) {
        const double sign = (r % 2 == 0) ? 1.0 : -1.0;
        g1 += -sign * (r + 1.0) / (r + 2.0) * sp;
        g2 += sign * (r + 2.0) * (r + 1.0) / (r + 3.0) * sp;
        g3 += -sign * (r + 3.0) * (r + 2.0) * (r + 1.0) / (r + 4.0) * sp;
        sp *= s;
    }
    Lx = w * w * g1;
    Lxx = w * w * w * g2;
    Lxxx = w * w * w * w * g3;
}

GevL gev_L(double w, double xi) {
    GevL o;
    if (std::abs(xi) <= kGevEps) {
        // Exact xi -> 0 limits.
        o.L = w;
        o.Lw = 1.0; o.Lww = 0.0; o.Lwww = 0.0;
        o.Lwx = -w; o.Lwwx = -1.0; o.Lwxx = 2.0 * w * w;
        o.Lx = -0.5 * w * w;
        o.Lxx = (2.0 / 3.0) * w * w * w;
        o.Lxxx = -1.5 * w * w * w * w;
        return o;
    }
    const double s = xi * w;
    const double u = 1.0 + s; // caller guarantees u > 0
    const double iu = 1.0 / u;
    o.L = std::log1p(s) / xi;
    o.Lw = iu;
    o.Lww = -xi * iu * iu;
    o.Lwww = 2.0 * xi * xi * iu * iu * iu;
    o.Lwx = -w * iu * iu;
    o.Lwwx = (-1.0 + 2.0 * s * iu) * iu * iu;
    o.Lwxx = 2.0 * w * w * iu * iu * iu;
    if (std::abs(s) < 0.01) {
        gev_L_xi_series(w, s, o.Lx, o.Lxx, o.Lxxx);
    } else {
        const double wu = w * iu;
        o.Lx = (wu - o.L) / xi;
        o.Lxx = (-wu * wu - 2.0 * o.Lx) / xi;
        o.Lxxx = (2.0 * wu * wu * wu - 3.0 * o.Lxx) / xi;
    }
    return o;
}

// Support check shared by the value and derivative paths. Returns false when
// 1 + xi w <= 0 (impossible observation).
bool gev_ok(double w, double xi) {
    return std::abs(xi) <= kGevEps || 1.0 + xi * w > 0.0;
}

double gev_loglik(double y, const double* th) {
    const double tau = th[1];
    const double xi = std::abs(th[2]) <= kGevEps ? 0.0 : th[2];
    const double w = (y - th[0]) * std::exp(-tau);
    if (!gev_ok(w, xi)) return -kInf;
    const double L = xi == 0.0 ? w : std::log1p(xi * w) / xi;
    if (-L > 700.0) return -kInf; // exp(-L) overflows: vanishing density
    return -tau - (1.0 + xi) * L - std::exp(-L);
}

void gev_derivs(double y, const double* th, DerivBundle& b) {
    const double tau = th[1];
    double xi = th[2];
    const double a = std::exp(-tau);
    const double w = (y - th[0]) * a;
    if (!gev_ok(w, xi)) throw SupportError();
    if (std::abs(xi) <= kGevEps) xi = 0.0;

    const GevL d = gev_L(w, xi);
    if (-d.L > 700.0) throw std::runtime_error("gev: likelihood underflow");
    const double E = std::exp(-d.L);
    const double G = (1.0 + xi) - E;

    // l as a function of (w, xi)
    const double lw = -d.Lw * G;
    const double lww = -d.Lww * G - E * d.Lw * d.Lw;
    const double lwww = -d.Lwww * G - 3.0 * E * d.Lw * d.Lww + E * d.Lw * d.Lw * d.Lw;
    const double lwx = -d.Lwx * G - d.Lw * (1.0 + E * d.Lx);
    const double lwwx = -d.Lwwx * G - d.Lww * (1.0 + E * d.Lx) + E * d.Lx * d.Lw * d.Lw -
                        2.0 * E * d.Lw * d.Lwx;
    const double lwxx = -d.Lwxx * G - 2.0 * d.Lwx * (1.0 + E * d.Lx) -
                        d.Lw * E * (d.Lxx - d.Lx * d.Lx);
    const double lx = -d.L - G * d.Lx;
    const double lxx = -2.0 * d.Lx - E * d.Lx * d.Lx - G * d.Lxx;
    const double lxxx = -3.0 * d.Lxx + E * d.Lx * d.Lx * d.Lx - 3.0 * E * d.Lx * d.Lxx -
                        G * d.Lxxx;

    b.loglik = -tau - (1.0 + xi) * d.L - E;

    // chain rule through w(mu, tau): w_mu = -a, w_tau = -w, w_mutau = a,
    // w_tautau = w, w_mutautau = -a, w_tautautau = -w.
    b.grad[0] = -a * lw;
    b.grad[1] = -1.0 - w * lw;
    b.grad[2] = lx;

    const double l_mumu = a * a * lww;
    const double l_mutau = a * w * lww + a * lw;
    const double l_tautau = w * w * lww + w * lw;
    const double l_mux = -a * lwx;
    const double l_taux = -w * lwx;
    b.neg_hess(0, 0) = -l_mumu;
    b.neg_hess(0, 1) = b.neg_hess(1, 0) = -l_mutau;
    b.neg_hess(1, 1) = -l_tautau;
    b.neg_hess(0, 2) = b.neg_hess(2, 0) = -l_mux;
    b.neg_hess(1, 2) = b.neg_hess(2, 1) = -l_taux;
    b.neg_hess(2, 2) = -lxx;

    // third-order chain rule; v in {mu, tau} uses
    // l_v1v2v3 = lwww w1 w2 w3 + lww (w12 w3 + w13 w2 + w23 w1) + lw w123.
    const double wmu = -a, wtau = -w;
    const double w_mt = a, w_tt = w; // second partials (w_mm = 0)
    auto set3 = [&b](int i, int j, int k, double v) {
        int p[3] = {i, j, k};
        std::sort(p, p + 3);
        do b.third[(p[0] * 3 + p[1]) * 3 + p[2]] = v;
        while (std::next_permutation(p, p + 3));
        b.third[(i * 3 + j) * 3 + k] = v; // also covers the all-equal case
    };
    set3(0, 0, 0, lwww * wmu * wmu * wmu);
    set3(0, 0, 1, lwww * wmu * wmu * wtau + lww * (2.0 * w_mt * wmu));
    set3(0, 1, 1, lwww * wmu * wtau * wtau + lww * (2.0 * w_mt * wtau + w_tt * wmu) + lw * (-a));
    set3(1, 1, 1, lwww * wtau * wtau * wtau + lww * (3.0 * w_tt * wtau) + lw * (-w));
    set3(0, 0, 2, lwwx * wmu * wmu);
    set3(0, 1, 2, lwwx * wmu * wtau + lwx * w_mt);
    set3(1, 1, 2, lwwx * wtau * wtau + lwx * w_tt);
    set3(0, 2, 2, lwxx * wmu);
    set3(1, 2, 2, lwxx * wtau);
    set3(2, 2, 2, lxxx);
}

} // namespace

// --- value-only path ----------------------------------------------------------

double loglik(const FamilySpec& f, double y, const double* th) {
    switch (f.kind) {
        case FamilyKind::GaussFix: {
            const double r = y - th[0];
            return -0.5 * r * r - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        case FamilyKind::Gaussian: {
            const double r = y - th[0], v = std::exp(-th[1]);
            return -0.5 * th[1] - 0.5 * r * r * v - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        case FamilyKind::Poisson:
            return y * th[0] - std::exp(th[0]) - std::lgamma(y + 1.0);
        case FamilyKind::Exponential:
            return th[0] - y * std::exp(th[0]);
        case FamilyKind::Gamma: {
            const double alpha = std::exp(th[0]);
            return alpha * th[1] - std::lgamma(alpha) + (alpha - 1.0) * std::log(y) -
                   y * std::exp(th[1]);
        }
        case FamilyKind::Binomial: {
            const double s = (th[0] - 5.0) / 6.0;
            return y * s - softplus(s);
        }
        case FamilyKind::Gev:
            return gev_loglik(y, th);
    }
    return -kInf;
}

DerivBundle loglik_derivs(const FamilySpec& f, double y, const double* th) {
    DerivBundle b;
    b.dim = f.dim();
    auto sym2 = [&b](int i, int j, double v) { b.neg_hess(i, j) = b.neg_hess(j, i) = v; };
    auto set3 = [&b](int i, int j, int k, double v) {
        int p[3] = {i, j, k};
        std::sort(p, p + 3);
        do b.third[(p[0] * 3 + p[1]) * 3 + p[2]] = v;
        while (std::next_permutation(p, p + 3));
        b.third[(i * 3 + j) * 3 + k] = v;
    };

    switch (f.kind) {
        case FamilyKind::GaussFix: {
            const double r = y - th[0];
            b.loglik = -0.5 * r * r - 0.5 * std::log(2.0 * std::numbers::pi);
            b.grad[0] = r;
            b.neg_hess(0, 0) = 1.0;
            break;
        }
        case FamilyKind::Gaussian: {
            const double r = y - th[0], v = std::exp(-th[1]);
            b.loglik = -0.5 * th[1] - 0.5 * r * r * v - 0.5 * std::log(2.0 * std::numbers::pi);
            b.grad[0] = r * v;
            b.grad[1] = -0.5 + 0.5 * r * r * v;
            b.neg_hess(0, 0) = v;
            sym2(0, 1, r * v);
            b.neg_hess(1, 1) = 0.5 * r * r * v;
            set3(0, 0, 0, 0.0);
            set3(0, 0, 1, v);
            set3(0, 1, 1, r * v);
            set3(1, 1, 1, 0.5 * r * r * v);
            break;
        }
        case FamilyKind::Poisson: {
            const double mu = std::exp(th[0]);
            b.loglik = y * th[0] - mu - std::lgamma(y + 1.0);
            b.grad[0] = y - mu;
            b.neg_hess(0, 0) = mu;
            set3(0, 0, 0, -mu);
            break;
        }
        case FamilyKind::Exponential: {
            const double r = y * std::exp(th[0]);
            b.loglik = th[0] - r;
            b.grad[0] = 1.0 - r;
            b.neg_hess(0, 0) = r;
            set3(0, 0, 0, -r);
            break;
        }
        case FamilyKind::Gamma: {
            if (!(y > 0.0)) throw SupportError();
            const double alpha = std::exp(th[0]);
            const double rate_term = y * std::exp(th[1]);
            const double g1 = alpha * (th[1] - digamma(alpha) + std::log(y));
            b.loglik = alpha * th[1] - std::lgamma(alpha) + (alpha - 1.0) * std::log(y) - rate_term;
            b.grad[0] = g1;
            b.grad[1] = alpha - rate_term;
            const double a2t = alpha * alpha * trigamma(alpha);
            b.neg_hess(0, 0) = a2t - g1;
            sym2(0, 1, -alpha);
            b.neg_hess(1, 1) = rate_term;
            set3(0, 0, 0, g1 - 3.0 * a2t - alpha * alpha * alpha * tetragamma(alpha));
            set3(0, 0, 1, alpha);
            set3(0, 1, 1, 0.0);
            set3(1, 1, 1, -rate_term);
            break;
        }
        case FamilyKind::Binomial: {
            const double s = (th[0] - 5.0) / 6.0;
            const double p = logistic(s), q = 1.0 - p;
            b.loglik = y * s - softplus(s);
            b.grad[0] = (y - p) / 6.0;
            b.neg_hess(0, 0) = p * q / 36.0;
            set3(0, 0, 0, -p * q * (1.0 - 2.0 * p) / 216.0);
            break;
        }
        case FamilyKind::Gev:
            gev_derivs(y, th, b);
            break;
    }
    return b;
}

// --- sampling -----------------------------------------------------------------

namespace {

double sample_gamma_shape(double alpha, Rng& rng) {
    // Marsaglia & Tsang; unit scale.
    if (alpha < 1.0) {
        const double u = rng.uniform_open();
        return sample_gamma_shape(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

double sample_poisson(double rate, Rng& rng) {
    // Count unit-exponential arrivals inside [0, rate): robust for any rate.
    double t = 0.0;
    long k = -1;
    do {
        t += -std::log(rng.uniform_open());
        ++k;
    } while (t < rate);
    return static_cast<double>(k);
}

} // namespace

double sample(const FamilySpec& f, const double* th, Rng& rng) {
    switch (f.kind) {
        case FamilyKind::GaussFix: return th[0] + rng.normal();
        case FamilyKind::Gaussian: return th[0] + std::exp(0.5 * th[1]) * rng.normal();
        case FamilyKind::Poisson: return sample_poisson(std::exp(th[0]), rng);
        case FamilyKind::Exponential: return -std::log(rng.uniform_open()) / std::exp(th[0]);
        case FamilyKind::Gamma:
            return sample_gamma_shape(std::exp(th[0]), rng) * std::exp(-th[1]);
        case FamilyKind::Binomial: {
            const double p = logistic((th[0] - 5.0) / 6.0);
            return rng.uniform() < p ? 1.0 : 0.0;
        }
        case FamilyKind::Gev:
            return gev_quantile(th[0], th[1], th[2], rng.uniform_open());
    }
    return 0.0;
}

Eigen::Vector3d init_predictors(const FamilySpec& f, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(y.size());
    if (n < 2) throw std::invalid_argument("init_predictors: need at least 2 observations");
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / (n - 1.0);
    Eigen::Vector3d th = Eigen::Vector3d::Zero();
    switch (f.kind) {
        case FamilyKind::GaussFix: th[0] = mean; break;
        case FamilyKind::Gaussian:
            th[0] = mean;
            th[1] = std::log(std::max(var, 1e-12));
            break;
        case FamilyKind::Poisson: th[0] = std::log(std::max(mean, 0.1)); break;
        case FamilyKind::Exponential: th[0] = -std::log(std::max(mean, 1e-12)); break;
        case FamilyKind::Gamma: {
            const double v = std::max(var, 1e-12);
            const double alpha = std::max(mean * mean / v, 1e-6);
            const double scale = v / std::max(mean, 1e-12);
            th[0] = std::log(alpha);
            th[1] = -std::log(std::max(scale, 1e-12));
            break;
        }
        case FamilyKind::Binomial: {
            const double p = std::min(0.99, std::max(0.01, mean));
            th[0] = 5.0 + 6.0 * std::log(p / (1.0 - p));
            break;
        }
        case FamilyKind::Gev: {
            const double s = std::sqrt(std::max(6.0 * var, 1e-12) / (std::numbers::pi * std::numbers::pi));
            th[0] = mean - std::numbers::egamma * s;
            th[1] = std::log(s);
            th[2] = 0.0;
            break;
        }
    }
    return th;
}

void validate_response(const FamilySpec& f, const Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double v = y[i];
        bool ok = std::isfinite(v);
        if (ok) switch (f.kind) {
            case FamilyKind::Poisson:
                ok = v >= 0.0 && std::abs(v - std::round(v)) < 1e-8;
                break;
            case FamilyKind::Exponential:
            case FamilyKind::Gamma: ok = v > 0.0; break;
            case FamilyKind::Binomial: ok = v == 0.0 || v == 1.0; break;
            default: break;
        }
        if (!ok)
            throw std::invalid_argument("response value " + std::to_string(v) + " at row " +
                                        std::to_string(i) + " is invalid for family " +
                                        f.name());
    }
}

// --- GEV summaries -------------------------------------------------------------

double gev_mean(double mu, double tau, double xi) {
    const double sigma = std::exp(tau);
    if (std::abs(xi) <= kGevEps) return mu + std::numbers::egamma * sigma;
    if (xi >= 1.0) return kInf;
    return mu + sigma * (std::tgamma(1.0 - xi) - 1.0) / xi;
}

double gev_quantile(double mu, double tau, double xi, double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("gev_quantile: p must be in (0,1)");
    const double sigma = std::exp(tau);
    const double ll = -std::log(p);
    if (std::abs(xi) <= kGevEps) return mu - sigma * std::log(ll);
    return mu + sigma * (std::pow(ll, -xi) - 1.0) / xi;
}

} // namespace mgam
