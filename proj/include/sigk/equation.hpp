#pragma once

#include <sigk/cones.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace sigk {

/// Pointwise form F(lambda, z, x) = rhs(x) e^{2z} of the equation, with lambda
/// the spectrum of the augmented matrix W(D^2 w + L(x, Dw))W and z = w(x).
/// Subsolutions need residual >= 0, supersolutions residual <= 0.
struct Equation {
    ConeSpec cone;
    double tau = 1.0;
    std::function<double(const Spectrum&, double, const Vec&)> f;
    std::function<Vec(const Spectrum&, double, const Vec&)> df;   ///< dF/dlambda
    std::function<double(const Spectrum&, double, const Vec&)> dz;  ///< dF/dz
    std::function<double(const Vec&)> rhs;

    [[nodiscard]] bool admissible(const Spectrum& l) const { return in_gamma_k(l, cone); }

    [[nodiscard]] double residual(const Spectrum& l, double z, const Vec& x) const
    {
        return f(l, z, x) - rhs(x) * std::exp(2.0 * z);
    }

    /// d residual / dz.
    [[nodiscard]] double residual_dz(const Spectrum& l, double z, const Vec& x) const
    {
        const double fz = dz ? dz(l, z, x) : 0.0;
        return fz - 2.0 * rhs(x) * std::exp(2.0 * z);
    }
};

/// sigma_k^{1/k}(lambda) = R(x) e^{2z} on Gamma_k^+.
[[nodiscard]] inline Equation sigma_equation(int n, int k, std::function<double(const Vec&)> R, double tau = 1.0)
{
    Equation e;
    e.cone = ConeSpec{n, k, Strictness::open};
    e.cone.validate();
    e.tau = tau;
    e.f = [k](const Spectrum& l, double, const Vec&) { return f_sigma(l, k); };
    e.df = [k](const Spectrum& l, double, const Vec&) { return grad_f_sigma(l, k); };
    e.rhs = std::move(R);
    return e;
}

[[nodiscard]] inline Equation sigma_equation(int n, int k, double R = 1.0, double tau = 1.0)
{
    return sigma_equation(n, k, [R](const Vec&) { return R; }, tau);
}

/// Coefficient fields of the Krylov-type operator, as functions of position.
struct KrylovData {
    int k = 3;
    std::function<double(const Vec&)> alpha;
    std::vector<std::function<double(const Vec&)>> alphas;  ///< alpha_0 .. alpha_{k-2}

    void validate(const Vec& x) const
    {
        if (static_cast<int>(alphas.size()) != k - 1) throw domain_error("KrylovData: need k-1 coefficients");
        for (const auto& a : alphas)
            if (!(a(x) > 0.0)) throw domain_error("KrylovData: alpha_l must be positive");
    }

    static KrylovData constant(int k, double alpha, const std::vector<double>& alphas)
    {
        KrylovData d;
        d.k = k;
        d.alpha = [alpha](const Vec&) { return alpha; };
        for (double a : alphas) d.alphas.emplace_back([a](const Vec&) { return a; });
        return d;
    }
};

/// sigma_k/sigma_{k-1} - sum_l alpha_l e^{2(k-l)z} sigma_l/sigma_{k-1}; not
/// homogeneous in lambda.
[[nodiscard]] inline double krylov_f(const Spectrum& lambda, double z, const Vec& x, const KrylovData& d)
{
    const Vec e = all_sigma(lambda);
    const int k = d.k;
    if (k < 2 || k > lambda.size()) throw domain_error("krylov_f: need 2 <= k <= n");
    const double sk1 = e(k - 1);
    if (!(sk1 > 0.0)) throw domain_error("krylov_f: sigma_{k-1} <= 0");
    double v = e(k) / sk1;
    for (int l = 0; l <= k - 2; ++l) v -= d.alphas[static_cast<std::size_t>(l)](x) * std::exp(2.0 * (k - l) * z) * e(l) / sk1;
    return v;
}

[[nodiscard]] inline Vec krylov_grad(const Spectrum& lambda, double z, const Vec& x, const KrylovData& d)
{
    const int k = d.k;
    const double sk1 = sigma_k(lambda, k - 1);
    if (!(sk1 > 0.0)) throw domain_error("krylov_grad: sigma_{k-1} <= 0");
    const Vec gk1 = grad_sigma_k(lambda, k - 1);
    auto quotient_grad = [&](int l) -> Vec {
        const Vec gl = l == 0 ? Vec(Vec::Zero(lambda.size())) : grad_sigma_k(lambda, l);
        return (gl * sk1 - sigma_k(lambda, l) * gk1) / (sk1 * sk1);
    };
    Vec g = quotient_grad(k);
    for (int l = 0; l <= k - 2; ++l)
        g -= d.alphas[static_cast<std::size_t>(l)](x) * std::exp(2.0 * (k - l) * z) * quotient_grad(l);
    return g;
}

/// Krylov-type equation f~(lambda, z, x) = -alpha(x) e^{2z} on Gamma_{k-1}^+.
[[nodiscard]] inline Equation krylov_equation(int n, const KrylovData& data, double tau = 1.0)
{
    auto d = std::make_shared<KrylovData>(data);
    Equation e;
    e.cone = ConeSpec{n, data.k - 1, Strictness::open};
    e.cone.validate();
    e.tau = tau;
    e.f = [d](const Spectrum& l, double z, const Vec& x) { return krylov_f(l, z, x, *d); };
    e.df = [d](const Spectrum& l, double z, const Vec& x) { return krylov_grad(l, z, x, *d); };
    e.dz = [d](const Spectrum& l, double z, const Vec& x) {
        const Vec s = all_sigma(l);
        const int k = d->k;
        double v = 0.0;
        for (int q = 0; q <= k - 2; ++q)
            v -= 2.0 * (k - q) * d->alphas[static_cast<std::size_t>(q)](x) * std::exp(2.0 * (k - q) * z) * s(q) / s(k - 1);
        return v;
    };
    e.rhs = [d](const Vec& x) { return -d->alpha(x); };
    return e;
}

} // namespace sigk
