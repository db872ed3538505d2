#pragma once

#include "qslab/core.hpp"
#include "qslab/numtheory.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

namespace qslab {

// ===========================================================================
// Exact arithmetic in Z[zeta_L], elements stored as integer combinations of
// 1, zeta, ..., zeta^{L-1} (i.e. Z[x]/(x^L - 1)).  Equality of algebraic
// numbers is decided by reducing the difference modulo the L-th cyclotomic
// polynomial.  Meant for small L, where identity checks deserve exactness.
// ===========================================================================

namespace detail {

// quotient of exact division by a monic polynomial; remainder must vanish
inline std::vector<Int> poly_divide_exact(std::vector<Int> num, const std::vector<Int>& den) {
    const std::size_t dn = den.size() - 1;
    if (den.back() != 1) throw Error("poly_divide_exact: divisor not monic");
    if (num.size() < den.size()) throw Error("poly_divide_exact: degree underflow");
    std::vector<Int> q(num.size() - dn, 0);
    for (std::size_t i = num.size(); i-- > dn;) {
        Int f = num[i];
        if (f == 0) continue;
        q[i - dn] = f;
        for (std::size_t j = 0; j <= dn; ++j) num[i - dn + j] -= f * den[j];
    }
    for (const Int& r : num)
        if (r != 0) throw Error("poly_divide_exact: nonzero remainder");
    return q;
}

// remainder of division by a monic polynomial
inline std::vector<Int> poly_mod(std::vector<Int> num, const std::vector<Int>& den) {
    const std::size_t dn = den.size() - 1;
    if (num.size() <= dn) return num;
    for (std::size_t i = num.size(); i-- > dn;) {
        Int f = num[i];
        if (f == 0) continue;
        for (std::size_t j = 0; j <= dn; ++j) num[i - dn + j] -= f * den[j];
    }
    num.resize(dn);
    while (num.size() > 1 && num.back() == 0) num.pop_back();
    return num;
}

}  // namespace detail

// Phi_L as coefficient vector (ascending), via Phi_L = (x^L - 1) / prod_{d|L, d<L} Phi_d
inline const std::vector<Int>& cyclotomic_polynomial(i64 L) {
    static std::map<i64, std::vector<Int>> cache;
    auto it = cache.find(L);
    if (it != cache.end()) return it->second;
    std::vector<Int> num(static_cast<std::size_t>(L) + 1, 0);
    num[0] = -1;
    num[static_cast<std::size_t>(L)] = 1;
    for (i64 d = 1; d < L; ++d) {
        if (L % d != 0) continue;
        num = detail::poly_divide_exact(std::move(num), cyclotomic_polynomial(d));
    }
    return cache.emplace(L, std::move(num)).first->second;
}

class Cyc {
public:
    Cyc() = default;
    explicit Cyc(i64 L) : L_(L), c_(static_cast<std::size_t>(L), 0) {}

    static Cyc from_int(i64 L, const Int& n) {
        Cyc v(L);
        v.c_[0] = n;
        return v;
    }

    static Cyc root_power(i64 L, i64 k) {
        Cyc v(L);
        v.c_[static_cast<std::size_t>(mod_norm(k, L))] = 1;
        return v;
    }

    i64 order() const { return L_; }
    const std::vector<Int>& coeffs() const { return c_; }

    Cyc& operator+=(const Cyc& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    Cyc& operator-=(const Cyc& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    friend Cyc operator+(Cyc a, const Cyc& b) { return a += b; }
    friend Cyc operator-(Cyc a, const Cyc& b) { return a -= b; }

    friend Cyc operator*(const Cyc& a, const Cyc& b) {
        a.check(b);
        Cyc r(a.L_);
        for (std::size_t i = 0; i < a.c_.size(); ++i) {
            if (a.c_[i] == 0) continue;
            for (std::size_t j = 0; j < b.c_.size(); ++j) {
                if (b.c_[j] == 0) continue;
                std::size_t k = i + j;
                if (k >= static_cast<std::size_t>(a.L_)) k -= static_cast<std::size_t>(a.L_);
                r.c_[k] += a.c_[i] * b.c_[j];
            }
        }
        return r;
    }

    Cyc& operator*=(const Int& s) {
        for (auto& v : c_) v *= s;
        return *this;
    }
    friend Cyc operator*(Cyc a, const Int& s) { return a *= s; }

    // add s * zeta^k without building a temporary
    void add_root(i64 k, const Int& s = 1) { c_[static_cast<std::size_t>(mod_norm(k, L_))] += s; }

    Cyc conj() const {
        Cyc r(L_);
        for (std::size_t i = 0; i < c_.size(); ++i)
            r.c_[static_cast<std::size_t>(mod_norm(-static_cast<i64>(i), L_))] += c_[i];
        return r;
    }

    Cyc norm_squared() const { return *this * conj(); }

    // true equality as an algebraic number
    bool is_zero() const {
        auto rem = detail::poly_mod(c_, cyclotomic_polynomial(L_));
        for (const Int& v : rem)
            if (v != 0) return false;
        return true;
    }

    bool equals(const Cyc& o) const { return (*this - o).is_zero(); }

    // the rational integer this element equals, if it is one
    std::optional<Int> as_integer() const {
        auto rem = detail::poly_mod(c_, cyclotomic_polynomial(L_));
        for (std::size_t i = 1; i < rem.size(); ++i)
            if (rem[i] != 0) return std::nullopt;
        return rem.empty() ? Int(0) : rem[0];
    }

    // low-precision embedding (zeta -> exp(2 pi i / L)), for diagnostics
    std::pair<double, double> to_complex() const {
        double re = 0, im = 0;
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0) continue;
            double a = 2.0 * 3.14159265358979323846 * static_cast<double>(i) / static_cast<double>(L_);
            double coef = c_[i].convert_to<double>();
            re += coef * std::cos(a);
            im += coef * std::sin(a);
        }
        return {re, im};
    }

private:
    void check(const Cyc& o) const {
        if (L_ != o.L_) throw DimensionMismatch("Cyc: mixed root orders");
    }

    i64 L_ = 0;
    std::vector<Int> c_;
};

}  // namespace qslab
