#pragma once

#include "qslab/core.hpp"
#include "qslab/cyclotomic.hpp"
#include "qslab/enumerate.hpp"
#include "qslab/localcount.hpp"
#include "qslab/numtheory.hpp"
#include "qslab/quadform.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace qslab {

using QuadFloat = boost::multiprecision::cpp_bin_float_quad;
using OctFloat = boost::multiprecision::cpp_bin_float_oct;

// ===========================================================================
// q/M factorization: q = u v1 v2 with (u, M) = 1, v1 v2 | M^inf, v1
// squarefree, v2 squarefull, pairwise coprime; M = M11 M12 M2 with
// M1i = (M, vi).  The lcm identity [q, M] = u v1 v2 M2 always holds; the
// three-way coprimality (M2, u v1 v2) = 1 additionally needs exponent 1 in
// M at every prime of v1, which `admissible` reports.
// ===========================================================================

struct QMFactorization {
    i64 q = 1, M = 1;
    i64 u = 1, v1 = 1, v2 = 1;
    i64 M11 = 1, M12 = 1, M2 = 1;
    i64 lcm = 1;

    bool admissible() const { return gcd64(M2, u * v1 * v2) == 1 && M11 == v1; }
};

inline QMFactorization factor_qm(i64 q, i64 M) {
    if (q < 1 || M < 1) throw ValidationError("factor_qm: q, M >= 1");
    QMFactorization f;
    f.q = q;
    f.M = M;
    for (auto& [p, e] : factorize(q)) {
        if (M % p != 0) f.u *= pow_i64(p, static_cast<unsigned>(e));
        else if (e == 1) f.v1 *= p;
        else f.v2 *= pow_i64(p, static_cast<unsigned>(e));
    }
    f.M11 = gcd64(M, f.v1);
    f.M12 = gcd64(M, f.v2);
    f.M2 = M / (f.M11 * f.M12);
    f.lcm = f.u * f.v1 * f.v2 * f.M2;
    if (f.lcm != q / gcd64(q, M) * M) throw Error("factor_qm: lcm identity failed");
    return f;
}

// ===========================================================================
// Composite local conditions Omega_M = prod of Omega_{p^m}
// ===========================================================================

class OmegaM {
public:
    OmegaM() = default;
    explicit OmegaM(std::vector<LocalCondition> parts) : parts_(std::move(parts)) {
        std::sort(parts_.begin(), parts_.end(),
                  [](const LocalCondition& a, const LocalCondition& b) { return a.prime() < b.prime(); });
        for (std::size_t i = 1; i < parts_.size(); ++i)
            if (parts_[i].prime() == parts_[i - 1].prime())
                throw ValidationError("OmegaM: duplicate prime");
    }

    static OmegaM one() { return OmegaM(); }

    // the full admissible set at every prime power of M
    static OmegaM full(const QuadraticForm& F, i64 M, const Budget& budget = {}) {
        std::vector<LocalCondition> parts;
        for (auto& [p, m] : factorize(M))
            parts.push_back(make_condition(F, p, m,
                                           [](const std::vector<i64>&, i64, int) { return true; }, budget));
        return OmegaM(std::move(parts));
    }

    const std::vector<LocalCondition>& parts() const { return parts_; }
    bool empty() const { return parts_.empty(); }

    i64 modulus() const {
        i64 m = 1;
        for (auto& c : parts_) m *= c.modulus();
        return m;
    }

    Int member_count_affine() const {
        Int n = 1;
        for (auto& c : parts_) n *= c.member_count_affine();
        return n;
    }

    // prod over p^m || M of #Omega_{p^m} / p^{m(N-1)}, N = number of variables
    Rat density_factor(int n_vars) const {
        Rat f = 1;
        for (auto& c : parts_)
            f *= Rat(c.member_count_affine(),
                     pow_int(c.prime(), static_cast<unsigned>(c.exponent() * (n_vars - 1))));
        return f;
    }

    bool contains(const std::vector<i64>& x) const {
        for (auto& c : parts_) {
            std::vector<i64> r(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) r[i] = mod_norm(x[i], c.modulus());
            if (!c.contains(r)) return false;
        }
        return true;
    }

    // sub-product at L | M; every prime of L must appear with its full part
    OmegaM restrict_to(i64 L) const {
        std::vector<LocalCondition> sub;
        i64 check = 1;
        for (auto& c : parts_)
            if (L % c.prime() == 0) {
                if (L % c.modulus() != 0)
                    throw ValidationError("OmegaM::restrict_to: L truncates a prime-power part");
                sub.push_back(c);
                check *= c.modulus();
            }
        if (check != L) throw ValidationError("OmegaM::restrict_to: L has primes outside M");
        return OmegaM(std::move(sub));
    }

    i64 prime_exponent(i64 p) const {
        for (auto& c : parts_)
            if (c.prime() == p) return c.exponent();
        return 0;
    }

private:
    std::vector<LocalCondition> parts_;
};

// Materialized affine member table of Omega_M mod M (CRT product).
struct OmegaTable {
    i64 M = 1;
    int n = 0;
    std::vector<std::vector<i64>> members;

    static OmegaTable from(const OmegaM& omega, int n_vars, const Budget& budget = {}) {
        OmegaTable t;
        t.M = omega.modulus();
        t.n = n_vars;
        double projected = 1;
        for (auto& c : omega.parts()) projected *= rat_to_double(Rat(c.member_count_affine()));
        budget.check_expsum(projected * n_vars, "OmegaTable");
        t.members.push_back(std::vector<i64>(static_cast<std::size_t>(n_vars), 0));
        i64 mod_so_far = 1;
        for (auto& c : omega.parts()) {
            auto local = c.affine_members();
            std::vector<std::vector<i64>> next;
            next.reserve(t.members.size() * local.size());
            const i64 q = c.modulus();
            for (auto& u : t.members)
                for (auto& v : local) {
                    std::vector<i64> w(static_cast<std::size_t>(n_vars));
                    for (int i = 0; i < n_vars; ++i)
                        w[static_cast<std::size_t>(i)] =
                            mod_so_far == 1 ? v[static_cast<std::size_t>(i)]
                                            : crt2(u[static_cast<std::size_t>(i)], mod_so_far, v[static_cast<std::size_t>(i)], q);
                    next.push_back(std::move(w));
                }
            t.members = std::move(next);
            mod_so_far *= q;
        }
        return t;
    }
};

// ===========================================================================
// Value backends
// ===========================================================================

template <class Real>
struct Cplx {
    Real re{}, im{};
    Cplx& operator+=(const Cplx& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
    Cplx& operator-=(const Cplx& o) {
        re -= o.re;
        im -= o.im;
        return *this;
    }
    friend Cplx operator+(Cplx a, const Cplx& b) { return a += b; }
    friend Cplx operator-(Cplx a, const Cplx& b) { return a -= b; }
    friend Cplx operator*(const Cplx& a, const Cplx& b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    Cplx conj() const { return {re, -im}; }
    Real abs2() const { return re * re + im * im; }
    double abs_double() const {
        return std::sqrt(static_cast<double>(abs2()));
    }
};

template <class Real>
struct FloatRoots {
    using value_type = Cplx<Real>;
    i64 L;
    std::vector<value_type> table;

    explicit FloatRoots(i64 order) : L(order), table(static_cast<std::size_t>(order)) {
        using std::cos;
        using std::sin;
        const Real two_pi = 2 * boost::math::constants::pi<Real>();
        for (i64 k = 0; k < order; ++k) {
            Real a = two_pi * static_cast<Real>(k) / static_cast<Real>(order);
            table[static_cast<std::size_t>(k)] = {cos(a), sin(a)};
        }
    }
    value_type zero() const { return {}; }
    value_type one() const { return {Real(1), Real(0)}; }
    void add_root(value_type& acc, i64 k) const { acc += table[static_cast<std::size_t>(mod_norm(k, L))]; }
};

struct CycRoots {
    using value_type = Cyc;
    i64 L;

    explicit CycRoots(i64 order) : L(order) {}
    value_type zero() const { return Cyc(L); }
    value_type one() const { return Cyc::from_int(L, 1); }
    void add_root(value_type& acc, i64 k) const { acc.add_root(k); }
    value_type from_int(const Int& v) const { return Cyc::from_int(L, v); }
};

// ===========================================================================
// The exponential sums
//   S_{q,M}(c) = sum*_{a mod q} sum_{y mod [q,M], [y]_M in Omega_M}
//                    e_q(a F(y)) e_{[q,M]}(c.y)
// computed in the root order of `roots` (any multiple of [q, M]).
//
// Diagonal fast path: writing y = u + M z splits the z-sum into one-variable
// sums when the form has no cross terms, cutting [q,M]^N to N [q,M]/M per
// (a, u).  The generic path is a verified odometer, budget-gated.
// ===========================================================================

namespace detail {

template <class RT>
typename RT::value_type sum_sqm_impl(const QuadraticForm& F, i64 q, const OmegaTable& omega,
                                     const std::vector<i64>& c, RT& roots, const Budget& budget,
                                     bool force_generic = false) {
    const int n = F.n_vars();
    if (static_cast<int>(c.size()) != n) throw DimensionMismatch("sum_SqM: wrong c length");
    const i64 M = omega.M;
    const i64 L = q / gcd64(q, M) * M;  // [q, M]
    if (roots.L % L != 0) throw ValidationError("sum_SqM: root order not a multiple of [q,M]");
    const i64 stretch = roots.L / L;
    const i64 zlen = L / M;

    std::vector<i64> units;
    for (i64 a = 0; a < q; ++a)
        if (gcd64(a, q) == 1) units.push_back(a);

    auto acc_total = roots.zero();

    if (F.is_diagonal() && !force_generic) {
        budget.check_expsum(static_cast<double>(units.size()) * static_cast<double>(omega.members.size()) *
                                n * static_cast<double>(zlen),
                            "sum_SqM (diagonal)");
        std::vector<i64> diag(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = mod_norm(F.coeff(i, i).convert_to<i64>(), q);
        const i64 Lq = L / q;
        for (i64 a : units) {
            for (const auto& u : omega.members) {
                // base phase e_q(a F(u)) e_L(c.u)
                i64 fu = F.evaluate_mod(u.data(), q);
                i64 k0 = mulmod(Lq, mulmod(a, fu, q), L);
                for (int i = 0; i < n; ++i)
                    k0 = (k0 + mulmod(mod_norm(c[static_cast<std::size_t>(i)], L), mod_norm(u[static_cast<std::size_t>(i)], L), L)) % L;
                auto term = roots.zero();
                roots.add_root(term, k0 * stretch);
                for (int i = 0; i < n; ++i) {
                    auto si = roots.zero();
                    const i64 di = diag[static_cast<std::size_t>(i)];
                    const i64 ui = mod_norm(u[static_cast<std::size_t>(i)], q);
                    const i64 ci = mod_norm(c[static_cast<std::size_t>(i)], L);
                    // exponent(z) = (L/q) a d_i M (2 u_i + M z) z + M c_i z mod L,
                    // stepped with second differences
                    const i64 adM = mulmod(mulmod(Lq, mulmod(a, di, q) * (M % q) % q, L), 1, L);
                    i64 e = 0;
                    i64 d1 = (mulmod(adM, mod_norm(2 * ui + M % q, q), L) + mulmod(mod_norm(M, L), ci, L)) % L;
                    const i64 d2 = mulmod(adM, mod_norm(2 * M, q), L);
                    for (i64 z = 0; z < zlen; ++z) {
                        roots.add_root(si, e * stretch);
                        e += d1;
                        if (e >= L) e -= L;
                        d1 += d2;
                        if (d1 >= L) d1 -= L;
                    }
                    term = term * si;
                }
                acc_total += term;
            }
        }
        return acc_total;
    }

    // generic verified odometer: y = u + M z, z over (Z/(L/M))^N
    double cost = static_cast<double>(omega.members.size()) * std::pow(static_cast<double>(zlen), n) *
                  (n * n + static_cast<double>(units.size()));
    budget.check_expsum(cost, "sum_SqM (generic)");
    const i64 Lq = L / q;
    std::vector<i64> z(static_cast<std::size_t>(n), 0), y(static_cast<std::size_t>(n));
    for (const auto& u : omega.members) {
        auto rec = [&](auto&& self, int i) -> void {
            if (i == n) {
                for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(j)] = mod_norm(u[static_cast<std::size_t>(j)] + M * z[static_cast<std::size_t>(j)], L);
                const i64 fy = F.evaluate_mod(y.data(), q);
                i64 cy = 0;
                for (int j = 0; j < n; ++j)
                    cy = (cy + mulmod(mod_norm(c[static_cast<std::size_t>(j)], L), y[static_cast<std::size_t>(j)], L)) % L;
                for (i64 a : units) {
                    i64 k = (mulmod(Lq, mulmod(a, fy, q), L) + cy) % L;
                    roots.add_root(acc_total, k * stretch);
                }
                return;
            }
            for (i64 v = 0; v < zlen; ++v) {
                z[static_cast<std::size_t>(i)] = v;
                self(self, i + 1);
            }
            z[static_cast<std::size_t>(i)] = 0;
        };
        rec(rec, 0);
    }
    return acc_total;
}

// single-a inner sum over y mod q with [y]_M in Omega_M (used for the
// Weyl-type bound measurements, which are stated per a)
template <class RT>
typename RT::value_type inner_sum_impl(const QuadraticForm& F, i64 q, i64 a, const OmegaTable& omega,
                                       const std::vector<i64>& c, RT& roots, const Budget& budget) {
    const int n = F.n_vars();
    const i64 M = omega.M;
    if (q % M != 0) throw ValidationError("inner_sum: needs M | q");
    if (roots.L % q != 0) throw ValidationError("inner_sum: root order");
    const i64 stretch = roots.L / q;
    const i64 zlen = q / M;
    auto acc = roots.zero();
    if (F.is_diagonal()) {
        budget.check_expsum(static_cast<double>(omega.members.size()) * n * static_cast<double>(zlen),
                            "inner_sum (diagonal)");
        for (const auto& u : omega.members) {
            i64 k0 = mulmod(a, F.evaluate_mod(u.data(), q), q);
            for (int i = 0; i < n; ++i)
                k0 = (k0 + mulmod(mod_norm(c[static_cast<std::size_t>(i)], q), mod_norm(u[static_cast<std::size_t>(i)], q), q)) % q;
            auto term = roots.zero();
            roots.add_root(term, k0 * stretch);
            for (int i = 0; i < n; ++i) {
                auto si = roots.zero();
                const i64 di = mod_norm(F.coeff(i, i).convert_to<i64>(), q);
                const i64 ui = mod_norm(u[static_cast<std::size_t>(i)], q);
                const i64 ci = mod_norm(c[static_cast<std::size_t>(i)], q);
                for (i64 z = 0; z < zlen; ++z) {
                    i64 inner = mulmod(mulmod(di, M % q, q), mulmod(z, mod_norm(2 * ui + M % q * z % q, q), q), q);
                    i64 k = (mulmod(a, inner, q) + mulmod(ci, mulmod(M % q, z % q, q), q)) % q;
                    roots.add_root(si, k * stretch);
                }
                term = term * si;
            }
            acc += term;
        }
        return acc;
    }
    double cost = static_cast<double>(omega.members.size()) * std::pow(static_cast<double>(zlen), n) * n * n;
    budget.check_expsum(cost, "inner_sum (generic)");
    std::vector<i64> z(static_cast<std::size_t>(n), 0), y(static_cast<std::size_t>(n));
    for (const auto& u : omega.members) {
        auto rec = [&](auto&& self, int i) -> void {
            if (i == n) {
                for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(j)] = mod_norm(u[static_cast<std::size_t>(j)] + M * z[static_cast<std::size_t>(j)], q);
                i64 k = mulmod(a, F.evaluate_mod(y.data(), q), q);
                for (int j = 0; j < n; ++j)
                    k = (k + mulmod(mod_norm(c[static_cast<std::size_t>(j)], q), y[static_cast<std::size_t>(j)], q)) % q;
                roots.add_root(acc, k * stretch);
                return;
            }
            for (i64 v = 0; v < zlen; ++v) {
                z[static_cast<std::size_t>(i)] = v;
                self(self, i + 1);
            }
            z[static_cast<std::size_t>(i)] = 0;
        };
        rec(rec, 0);
    }
    return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public entry points.  Float mode computes in the requested precision type;
// exact mode returns a cyclotomic integer.
// ---------------------------------------------------------------------------

template <class Real = QuadFloat>
Cplx<Real> sum_SqM(const QuadraticForm& F, i64 q, const OmegaM& omega, const std::vector<i64>& c,
                   const Budget& budget = {}, bool force_generic = false) {
    OmegaTable table = OmegaTable::from(omega, F.n_vars(), budget);
    const i64 L = q / gcd64(q, table.M) * table.M;
    FloatRoots<Real> roots(L);
    return detail::sum_sqm_impl(F, q, table, c, roots, budget, force_generic);
}

inline Cyc sum_SqM_exact(const QuadraticForm& F, i64 q, const OmegaM& omega, const std::vector<i64>& c,
                         const Budget& budget = {}, i64 root_order = 0, bool force_generic = false) {
    OmegaTable table = OmegaTable::from(omega, F.n_vars(), budget);
    const i64 L = q / gcd64(q, table.M) * table.M;
    CycRoots roots(root_order == 0 ? L : root_order);
    return detail::sum_sqm_impl(F, q, table, c, roots, budget, force_generic);
}

template <class Real = QuadFloat>
Cplx<Real> sum_Sq(const QuadraticForm& F, i64 q, const std::vector<i64>& c, const Budget& budget = {},
                  bool force_generic = false) {
    return sum_SqM<Real>(F, q, OmegaM::one(), c, budget, force_generic);
}

// K_L(c) = sum over Omega_L of e_L(c.y)
template <class Real = QuadFloat>
Cplx<Real> sum_K(const OmegaM& omega, i64 L, const std::vector<i64>& c, int n_vars,
                 const Budget& budget = {}) {
    OmegaTable table = OmegaTable::from(omega.restrict_to(L), n_vars, budget);
    FloatRoots<Real> roots(std::max<i64>(L, 1));
    auto acc = roots.zero();
    for (const auto& y : table.members) {
        i64 k = 0;
        for (int i = 0; i < n_vars; ++i)
            k = (k + mulmod(mod_norm(c[static_cast<std::size_t>(i)], L), mod_norm(y[static_cast<std::size_t>(i)], L), L)) % L;
        roots.add_root(acc, k);
    }
    return acc;
}

inline Cyc sum_K_exact(const OmegaM& omega, i64 L, const std::vector<i64>& c, int n_vars,
                       i64 root_order = 0, const Budget& budget = {}) {
    OmegaTable table = OmegaTable::from(omega.restrict_to(L), n_vars, budget);
    CycRoots roots(root_order == 0 ? std::max<i64>(L, 1) : root_order);
    const i64 stretch = roots.L / std::max<i64>(L, 1);
    auto acc = roots.zero();
    for (const auto& y : table.members) {
        i64 k = 0;
        for (int i = 0; i < n_vars; ++i)
            k = (k + mulmod(mod_norm(c[static_cast<std::size_t>(i)], L), mod_norm(y[static_cast<std::size_t>(i)], L), L)) % L;
        roots.add_root(acc, k * stretch);
    }
    return acc;
}

// ===========================================================================
// Factorization identities (Lemma-level checks)
// ===========================================================================

struct FactorizationCheck {
    bool ok = false;
    bool exact = false;
    double residual = 0.0;   // |LHS - RHS| in float mode; 0 when exact
    double magnitude = 0.0;  // scale of the compared values
};

// S_{q1 q2, M}(c) = S_{q1,M1}(t c) S_{q2,M2}(s c) for (q1 M1, q2 M2) = 1,
// [q1,M1] s + [q2,M2] t = 1.
inline FactorizationCheck verify_factorization_split(const QuadraticForm& F, i64 q1, i64 q2,
                                                     const OmegaM& omega, i64 M1, i64 M2,
                                                     const std::vector<i64>& c, bool exact_mode,
                                                     const Budget& budget = {}) {
    const i64 M = omega.modulus();
    if (M1 * M2 != M) throw ValidationError("verify_factorization_split: M1 M2 != M");
    if (gcd64(q1 * M1, q2 * M2) != 1)
        throw ValidationError("verify_factorization_split: blocks not coprime");
    const i64 l1 = q1 / gcd64(q1, M1) * M1, l2 = q2 / gcd64(q2, M2) * M2;
    i64 s, t;
    if (ext_gcd(l1, l2, s, t) != 1) throw ValidationError("verify_factorization_split: lcm blocks not coprime");
    // l1 s + l2 t = 1
    auto scale_c = [&](i64 f) {
        std::vector<i64> out(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i] * f;
        return out;
    };
    OmegaM o1 = omega.restrict_to(M1), o2 = omega.restrict_to(M2);
    FactorizationCheck chk;
    chk.exact = exact_mode;
    if (exact_mode) {
        const i64 Lg = l1 * l2;
        Cyc lhs = sum_SqM_exact(F, q1 * q2, omega, c, budget, Lg);
        Cyc r1 = sum_SqM_exact(F, q1, o1, scale_c(t), budget, Lg);
        Cyc r2 = sum_SqM_exact(F, q2, o2, scale_c(s), budget, Lg);
        chk.ok = (lhs - r1 * r2).is_zero();
        auto [re, im] = lhs.to_complex();
        chk.magnitude = std::hypot(re, im);
        return chk;
    }
    auto lhs = sum_SqM<QuadFloat>(F, q1 * q2, omega, c, budget);
    auto r1 = sum_SqM<QuadFloat>(F, q1, o1, scale_c(t), budget);
    auto r2 = sum_SqM<QuadFloat>(F, q2, o2, scale_c(s), budget);
    auto diff = lhs - r1 * r2;
    chk.residual = diff.abs_double();
    chk.magnitude = std::max(lhs.abs_double(), (r1 * r2).abs_double());
    chk.ok = chk.residual <= 1e-9 * std::max(chk.magnitude, 1.0);
    return chk;
}

// S_{q,M}(c) = phi(v1) S_u(c) S_{v2,M12}(inv{u v1 M2} c) K_{v1}(inv{u v2 M2} c)
//              K_{M2}(inv{u v1 v2} c)
inline FactorizationCheck verify_factorization_threeway(const QuadraticForm& F, i64 q,
                                                        const OmegaM& omega, const std::vector<i64>& c,
                                                        bool exact_mode, const Budget& budget = {}) {
    const i64 M = omega.modulus();
    QMFactorization f = factor_qm(q, M);
    if (!f.admissible())
        throw ValidationError("verify_factorization_threeway: inadmissible (q, M) pair");
    auto inv_of = [&](i64 value, i64 mod) { return mod == 1 ? 0 : inv_mod(mod_norm(value, mod), mod); };
    const i64 iv2 = inv_of(f.u % f.v2 * (f.v1 % f.v2) % f.v2 * (f.M2 % f.v2) % f.v2, f.v2);
    const i64 iv1 = inv_of(f.u % f.v1 * (f.v2 % f.v1) % f.v1 * (f.M2 % f.v1) % f.v1, f.v1);
    const i64 im2 = inv_of(f.u % f.M2 * (f.v1 % f.M2) % f.M2 * (f.v2 % f.M2) % f.M2, f.M2);
    auto scale_c = [&](i64 fct) {
        std::vector<i64> out(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i] * fct;
        return out;
    };
    OmegaM o12 = omega.restrict_to(f.M12);
    const Int phi_v1 = euler_phi(f.v1);
    FactorizationCheck chk;
    chk.exact = exact_mode;
    if (exact_mode) {
        const i64 Lg = f.lcm;
        Cyc lhs = sum_SqM_exact(F, q, omega, c, budget, Lg);
        Cyc rhs = sum_SqM_exact(F, f.u, OmegaM::one(), c, budget, Lg);
        rhs = rhs * sum_SqM_exact(F, f.v2, o12, scale_c(iv2), budget, Lg);
        rhs = rhs * sum_K_exact(omega, f.v1, scale_c(iv1), F.n_vars(), Lg, budget);
        rhs = rhs * sum_K_exact(omega, f.M2, scale_c(im2), F.n_vars(), Lg, budget);
        rhs *= phi_v1;
        chk.ok = (lhs - rhs).is_zero();
        auto [re, im] = lhs.to_complex();
        chk.magnitude = std::hypot(re, im);
        return chk;
    }
    auto lhs = sum_SqM<QuadFloat>(F, q, omega, c, budget);
    auto rhs = sum_SqM<QuadFloat>(F, f.u, OmegaM::one(), c, budget);
    rhs = rhs * sum_SqM<QuadFloat>(F, f.v2, o12, scale_c(iv2), budget);
    rhs = rhs * sum_K<QuadFloat>(omega, f.v1, scale_c(iv1), F.n_vars(), budget);
    rhs = rhs * sum_K<QuadFloat>(omega, f.M2, scale_c(im2), F.n_vars(), budget);
    const QuadFloat phi_real(phi_v1.str());
    rhs.re = rhs.re * phi_real;
    rhs.im = rhs.im * phi_real;
    auto diff = lhs - rhs;
    chk.residual = diff.abs_double();
    chk.magnitude = std::max(lhs.abs_double(), rhs.abs_double());
    chk.ok = chk.residual <= 1e-9 * std::max(chk.magnitude, 1.0);
    return chk;
}

// ===========================================================================
// Empirical bound measurements (regression tripwires, not theorem checks)
// ===========================================================================

struct BoundInstance {
    i64 q = 1;
    i64 M = 1;
    std::vector<i64> c;
};

struct BoundRow {
    std::string kind;
    i64 q, M;
    double magnitude;
    double shape;
    double ratio;
};

struct BoundReport {
    std::vector<BoundRow> rows;
    double max_ratio = 0.0;
    double ceiling;
    bool ok = true;
};

// Measures |sum| / bound-shape for the three bound lemmas:
//  - per-a inner sums with M | q against (qM)^{n/2}/(q/M, M)^{n/2},
//  - squarefull S_{v2,M12} against v2^{n/2+1} M12^{n/2},
//  - squarefree |S_q(c)|^2 against q^{n+1} (q, F*(c)).
inline BoundReport verify_bounds(const QuadraticForm& F, const std::vector<BoundInstance>& instances,
                                 double ceiling = 10.0, const Budget& budget = {}) {
    const int n = F.n_vars();
    BoundReport rep;
    rep.ceiling = ceiling;
    auto note = [&](std::string kind, i64 q, i64 M, double mag, double shape) {
        BoundRow row{std::move(kind), q, M, mag, shape, mag / shape};
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
        if (row.ratio > ceiling) rep.ok = false;
        rep.rows.push_back(std::move(row));
    };
    for (const auto& inst : instances) {
        if (inst.M > 1 && inst.q % inst.M == 0) {
            // Weyl-type per-a bound, M | q
            OmegaM omega = OmegaM::full(F, inst.M, budget);
            OmegaTable table = OmegaTable::from(omega, n, budget);
            FloatRoots<double> roots(inst.q);
            double worst = 0;
            for (i64 a = 1; a <= inst.q; ++a) {
                if (gcd64(a, inst.q) != 1) continue;
                auto v = detail::inner_sum_impl(F, inst.q, a % inst.q, table, inst.c, roots, budget);
                worst = std::max(worst, v.abs_double());
            }
            const double shape = std::pow(static_cast<double>(inst.q) * inst.M, n / 2.0) /
                                 std::pow(static_cast<double>(gcd64(inst.q / inst.M, inst.M)), n / 2.0);
            note("weyl_inner", inst.q, inst.M, worst, shape);
        } else if (inst.M > 1) {
            // squarefull block: S_{v2, M12}
            if (!is_squarefull(inst.q)) throw ValidationError("verify_bounds: expected squarefull q for M12 block");
            OmegaM omega = OmegaM::full(F, inst.M, budget);
            auto v = sum_SqM<double>(F, inst.q, omega, inst.c, budget);
            const double shape =
                std::pow(static_cast<double>(inst.q), n / 2.0 + 1.0) * std::pow(static_cast<double>(inst.M), n / 2.0);
            note("squarefull_block", inst.q, inst.M, v.abs_double(), shape);
        } else {
            // squarefree S_q(c) mean-square shape
            if (!is_squarefree(inst.q)) throw ValidationError("verify_bounds: expected squarefree q at M = 1");
            auto v = sum_Sq<double>(F, inst.q, inst.c, budget);
            Rat fstar = F.dual_value(inst.c);
            Int num = boost::multiprecision::numerator(fstar);
            if (num < 0) num = -num;
            Int g = num == 0 ? Int(inst.q) : boost::multiprecision::gcd(Int(inst.q), num);
            const double shape = std::pow(static_cast<double>(inst.q), n + 1.0) * rat_to_double(Rat(g));
            note("squarefree_meansq", inst.q, inst.M, v.abs2(), shape);
        }
    }
    return rep;
}

// ===========================================================================
// sigma_p at bad primes, by stabilization of the verified counts
// ===========================================================================

struct BadPrimeDensity {
    Rat sigma;
    int stable_from = 0;       // first level with uniform primitive lifting
    int levels_checked = 0;
    std::vector<Rat> partial;  // p^{-(N-1)k} A_k for the computed levels
};

inline BadPrimeDensity sigma_p_stabilized(const QuadraticForm& F, i64 p, const Budget& budget = {},
                                          int max_level = 12) {
    const int n = F.n_vars();
    const Int pn1 = pow_int(p, static_cast<unsigned>(n - 1));
    std::vector<Int> a_all, a_prim;
    int k = 0, k0 = -1;
    while (k < max_level &&
           detail::projected_lift_work(F, p, k + 1) <= static_cast<double>(budget.count_cells)) {
        ++k;
        Int total = 0, prim = 0;
        detail::for_each_solution_mod_pk(F, p, k, [&](const i64* x) {
            ++total;
            if (detail::is_primitive_mod_p(x, n, p)) ++prim;
        });
        a_all.push_back(total);
        a_prim.push_back(prim);
        // stop once the primitive counts have grown geometrically for three
        // consecutive levels
        for (int start = 1; start + 3 <= k; ++start) {
            bool uniform = true;
            for (int j = start; j < k; ++j)
                if (a_prim[static_cast<std::size_t>(j)] != pn1 * a_prim[static_cast<std::size_t>(j - 1)]) uniform = false;
            if (uniform) { k0 = start; break; }
        }
        if (k0 >= 0) break;
    }
    if (k0 < 0 || k - k0 < 3)
        throw NonConvergence("sigma_p_stabilized: primitive counts did not become geometric");
    BadPrimeDensity out;
    out.stable_from = k0;
    out.levels_checked = k;
    const Rat a(a_prim[static_cast<std::size_t>(k0 - 1)], pow_int(p, static_cast<unsigned>((n - 1) * k0)));
    const Rat contraction(1, pow_int(p, static_cast<unsigned>(n - 2)));
    out.sigma = a / (1 - contraction);
    for (int j = 1; j <= k; ++j)
        out.partial.emplace_back(a_all[static_cast<std::size_t>(j - 1)], pow_int(p, static_cast<unsigned>((n - 1) * j)));
    return out;
}

// sigma_p for any prime: recursion closed form at good primes, stabilized
// counts at bad ones.  Bad-prime values are memoized; they are pure in
// (form, p) and the stabilization pass is the expensive part.
inline Rat sigma_p_any(const QuadraticForm& F, i64 p, const Budget& budget = {}) {
    if (F.is_good_prime(p)) return local_density(F, p, 1, budget).sigma;
    static std::map<std::pair<std::string, i64>, Rat> cache;
    static std::mutex mtx;
    const auto key = std::make_pair(F.str(), p);
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    Rat s = sigma_p_stabilized(F, p, budget).sigma;
    std::lock_guard<std::mutex> lock(mtx);
    cache.emplace(key, s);
    return s;
}

// ===========================================================================
// Singular series S(M) = prod_{p !| M} sigma_p * prod_{p^m || M}
// #Omega_{p^m} / p^{m(N-1)}
// ===========================================================================

struct SingularSeries {
    Rat finite_product;
    double value = 0.0;
    double tail_low = 1.0, tail_high = 1.0;  // multiplicative tail interval
    Rat omega_factor;
    std::vector<std::pair<i64, Rat>> sigma_factors;
    double decay_exponent = 0.0;
};

inline SingularSeries singular_series(const QuadraticForm& F, const OmegaM& omega, i64 p_max,
                                      const Budget& budget = {}) {
    const int n = F.n_vars();
    if (n < 5) throw ValidationError("singular_series: needs at least 5 variables");
    const i64 M = omega.modulus();
    for (auto& c : omega.parts())
        if (!F.is_good_prime(c.prime())) throw BadPrime("singular_series: (M, 2*Delta_F) != 1");

    SingularSeries out;
    out.omega_factor = omega.density_factor(n);
    out.finite_product = out.omega_factor;
    std::vector<double> xs, ys;
    for (i64 p : sieve_primes(p_max)) {
        if (M % p == 0) continue;
        Rat s = sigma_p_any(F, p, budget);
        out.sigma_factors.emplace_back(p, s);
        out.finite_product *= s;
        Rat dev = s - 1;
        if (dev != 0 && F.is_good_prime(p)) {
            xs.push_back(std::log(static_cast<double>(p)));
            ys.push_back(std::log(std::abs(rat_to_double(dev))));
        }
    }
    out.value = rat_to_double(out.finite_product);
    if (xs.size() >= 4) {
        auto fit = least_squares(xs, ys);
        const double alpha = -fit.slope;
        out.decay_exponent = alpha;
        if (alpha > 1.0) {
            const double C = std::exp(fit.intercept);
            // sum_{p > p_max} C p^-alpha <= C integral_{p_max}^inf t^-alpha dt
            const double tail = 1.5 * C * std::pow(static_cast<double>(p_max), 1.0 - alpha) / (alpha - 1.0);
            out.tail_low = std::exp(-tail);
            out.tail_high = std::exp(tail);
        }
    }
    return out;
}

// prefix values of sum_{q <= R} [q,M]^{-N} S_{q,M}(0) at each requested R;
// the full sum converges to the singular series
inline std::vector<double> partial_singular_sums(const QuadraticForm& F, const OmegaM& omega,
                                                 std::vector<i64> checkpoints,
                                                 const Budget& budget = {}) {
    std::sort(checkpoints.begin(), checkpoints.end());
    const int n = F.n_vars();
    OmegaTable table = OmegaTable::from(omega, n, budget);
    const i64 M = table.M;
    const std::vector<i64> c0(static_cast<std::size_t>(n), 0);
    std::vector<double> out;
    double acc = 0.0;
    std::size_t next = 0;
    for (i64 q = 1; q <= checkpoints.back(); ++q) {
        const i64 L = q / gcd64(q, M) * M;
        FloatRoots<double> roots(L);
        auto v = detail::sum_sqm_impl(F, q, table, c0, roots, budget);
        acc += v.re / std::pow(static_cast<double>(L), n);
        while (next < checkpoints.size() && q == checkpoints[next]) {
            out.push_back(acc);
            ++next;
        }
    }
    return out;
}

inline double partial_singular_sum(const QuadraticForm& F, const OmegaM& omega, i64 R,
                                   const Budget& budget = {}) {
    return partial_singular_sums(F, omega, {R}, budget).front();
}

// ===========================================================================
// Theorem-level main term: sigma_inf(w) B^{N-2} S(M)
// ===========================================================================

struct MainTerm {
    double value = 0.0;
    double sigma_inf = 0.0;
    double sigma_inf_error = 0.0;
    double singular = 0.0;
    double tail_low = 1.0, tail_high = 1.0;
};

inline MainTerm main_term(const QuadraticForm& F, const WeightFn& w, i64 B, const OmegaM& omega,
                          i64 p_max, const Budget& budget = {}) {
    MainTerm mt;
    auto si = sigma_infinity(F, w);
    auto ss = singular_series(F, omega, p_max, budget);
    mt.sigma_inf = si.value;
    mt.sigma_inf_error = si.error;
    mt.singular = ss.value;
    mt.tail_low = ss.tail_low;
    mt.tail_high = ss.tail_high;
    mt.value = si.value * std::pow(static_cast<double>(B), F.n_vars() - 2) * ss.value;
    return mt;
}

}  // namespace qslab
