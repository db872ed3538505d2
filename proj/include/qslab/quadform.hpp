#pragma once

#include "qslab/core.hpp"
#include "qslab/numtheory.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace qslab {

// ---------------------------------------------------------------------------
// ProjectivePoint: a primitive integer vector, first nonzero coordinate
// positive.  One representative per rational point.
// ---------------------------------------------------------------------------

struct ProjectivePoint {
    std::vector<i64> x;

    i64 height() const {
        i64 h = 0;
        for (i64 v : x) h = std::max(h, v < 0 ? -v : v);
        return h;
    }
    bool operator==(const ProjectivePoint& o) const { return x == o.x; }
    bool operator<(const ProjectivePoint& o) const { return x < o.x; }

    std::string str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) os << ' ';
            os << x[i];
        }
        return os.str();
    }
};

// gcd-reduce and sign-normalize; idempotent and scale-invariant
inline ProjectivePoint primitive_rep(const std::vector<i64>& v) {
    i64 g = 0;
    for (i64 c : v) g = gcd64(g, c);
    if (g == 0) throw ZeroVector("primitive_rep: zero vector");
    ProjectivePoint p;
    p.x.resize(v.size());
    i64 sign = 0;
    for (i64 c : v)
        if (c != 0) { sign = c > 0 ? 1 : -1; break; }
    for (std::size_t i = 0; i < v.size(); ++i) p.x[i] = sign * v[i] / g;
    return p;
}

inline ProjectivePoint primitive_rep_int(const std::vector<Int>& v) {
    Int g = 0;
    for (const Int& c : v) g = boost::multiprecision::gcd(g, c);
    if (g == 0) throw ZeroVector("primitive_rep: zero vector");
    Int sign = 0;
    for (const Int& c : v)
        if (c != 0) { sign = c > 0 ? 1 : -1; break; }
    ProjectivePoint p;
    p.x.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        Int red = sign * v[i] / g;
        if (red > std::numeric_limits<i64>::max() || red < std::numeric_limits<i64>::min())
            throw ResourceLimit("primitive_rep: coordinate exceeds 64 bits");
        p.x[i] = red.convert_to<i64>();
    }
    return p;
}

// ---------------------------------------------------------------------------
// Fraction-free determinant (Bareiss) of an integer matrix.
// ---------------------------------------------------------------------------

inline Int det_int(std::vector<std::vector<Int>> m) {
    const std::size_t n = m.size();
    Int prev = 1;
    int sign = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (m[k][k] == 0) {
            std::size_t piv = k + 1;
            while (piv < n && m[piv][k] == 0) ++piv;
            if (piv == n) return 0;
            std::swap(m[k], m[piv]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i)
            for (std::size_t j = k + 1; j < n; ++j)
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
        prev = m[k][k];
    }
    return sign * m[n - 1][n - 1];
}

inline std::vector<std::vector<Rat>> invert_rat_matrix(std::vector<std::vector<Rat>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<Rat>> inv(n, std::vector<Rat>(n, 0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        while (piv < n && a[piv][col] == 0) ++piv;
        if (piv == n) throw DegenerateForm("invert: singular matrix");
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        Rat d = a[col][col];
        for (std::size_t j = 0; j < n; ++j) { a[col][j] /= d; inv[col][j] /= d; }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0) continue;
            Rat f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

// ---------------------------------------------------------------------------
// A quadratic form with rational matrix; the codomain of dual_form.
// ---------------------------------------------------------------------------

struct RationalForm {
    int n = 0;
    std::vector<std::vector<Rat>> mat;  // symmetric n x n

    Rat evaluate(const std::vector<Rat>& v) const {
        if (static_cast<int>(v.size()) != n) throw DimensionMismatch("RationalForm::evaluate");
        Rat s = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
        return s;
    }

    Rat evaluate_i64(const std::vector<i64>& v) const {
        std::vector<Rat> r(v.begin(), v.end());
        return evaluate(r);
    }

    Rat determinant() const {
        // clear denominators, reduce to integer determinant
        Int den = 1;
        for (auto& row : mat)
            for (auto& e : row)
                den = boost::multiprecision::lcm(den, boost::multiprecision::denominator(e));
        std::vector<std::vector<Int>> im(static_cast<std::size_t>(n), std::vector<Int>(static_cast<std::size_t>(n)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Rat scaled = mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * den;
                im[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = boost::multiprecision::numerator(scaled);
            }
        return Rat(det_int(im), pow_int(den, static_cast<unsigned>(n)));
    }

    // dual of a rational form: det(M) * M^{-1}
    RationalForm dual_form() const {
        Rat det = determinant();
        if (det == 0) throw DegenerateForm("dual_form: determinant zero");
        auto inv = invert_rat_matrix(mat);
        RationalForm d;
        d.n = n;
        d.mat.assign(static_cast<std::size_t>(n), std::vector<Rat>(static_cast<std::size_t>(n)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                d.mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = det * inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return d;
    }
};

// ---------------------------------------------------------------------------
// QuadraticForm: integral form F(x) = sum_{i<=j} c_ij x_i x_j in N variables.
// The symmetric matrix A is half-integral; internally we keep 2A exactly.
// ---------------------------------------------------------------------------

class QuadraticForm {
public:
    QuadraticForm() = default;

    QuadraticForm(int n_vars, std::vector<std::tuple<Int, int, int>> terms) : n_(n_vars) {
        if (n_vars <= 0) throw ValidationError("QuadraticForm: need at least one variable");
        coeffs_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0);
        for (auto& [c, i, j] : terms) {
            if (i < 0 || j < 0 || i >= n_ || j >= n_)
                throw ValidationError("QuadraticForm: variable index out of range");
            int a = std::min(i, j), b = std::max(i, j);
            coeffs_[idx(a, b)] += c;
        }
        rebuild();
    }

    static QuadraticForm diagonal(const std::vector<Int>& d) {
        std::vector<std::tuple<Int, int, int>> terms;
        for (std::size_t i = 0; i < d.size(); ++i)
            terms.emplace_back(d[i], static_cast<int>(i), static_cast<int>(i));
        return QuadraticForm(static_cast<int>(d.size()), std::move(terms));
    }

    // Text grammar (documented in the README):
    //   "diag:1,1,1,1,-1"          diagonal form
    //   "1 0 0; 1 1 1; -3 2 2"     monomial terms "c i j", ';' or ',' separated
    static QuadraticForm parse(const std::string& text) {
        std::string s = text;
        if (s.rfind("diag:", 0) == 0) {
            std::vector<Int> d;
            std::string body = s.substr(5);
            std::replace(body.begin(), body.end(), ',', ' ');
            std::istringstream is(body);
            std::string tok;
            while (is >> tok) d.emplace_back(Int(tok));
            if (d.empty()) throw ValidationError("form parse: empty diagonal");
            return diagonal(d);
        }
        std::replace(s.begin(), s.end(), ';', '\n');
        std::replace(s.begin(), s.end(), ',', '\n');
        std::istringstream lines(s);
        std::string line;
        std::vector<std::tuple<Int, int, int>> terms;
        int maxvar = -1;
        while (std::getline(lines, line)) {
            std::istringstream ls(line);
            std::string c;
            int i, j;
            if (!(ls >> c >> i >> j)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                throw ValidationError("form parse: expected 'c i j' terms or diag: shorthand");
            }
            terms.emplace_back(Int(c), i, j);
            maxvar = std::max({maxvar, i, j});
        }
        if (terms.empty()) throw ValidationError("form parse: no terms");
        return QuadraticForm(maxvar + 1, std::move(terms));
    }

    int n_vars() const { return n_; }

    const Int& coeff(int i, int j) const { return coeffs_[idx(std::min(i, j), std::max(i, j))]; }

    // entry of 2A (integral)
    const Int& two_a(int i, int j) const { return twoA_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j)]; }
    i64 two_a_i64(int i, int j) const { return twoA64_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j)]; }

    bool fits_i64() const { return fits_i64_; }
    i64 max_abs_two_a() const { return max_abs_2a_; }
    bool is_diagonal() const { return diagonal_; }

    Int evaluate(const std::vector<Int>& x) const {
        if (static_cast<int>(x.size()) != n_) throw DimensionMismatch("evaluate: wrong length");
        Int s = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                const Int& c = coeffs_[idx(i, j)];
                if (c != 0) s += c * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
            }
        return s;
    }

    Int evaluate_at_i64(const std::vector<i64>& x) const {
        std::vector<Int> v(x.begin(), x.end());
        return evaluate(v);
    }

    // Overflow-safe iff n^2 * max|c| * maxcoord^2 < 2^63; callers check via
    // value_bound_ok first.
    i64 evaluate_i64(const i64* x) const {
        i64 s = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                i64 c = c64_[idx(i, j)];
                if (c != 0) s += c * x[i] * x[j];
            }
        return s;
    }

    __int128 evaluate_i128(const i64* x) const {
        __int128 s = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                i64 c = c64_[idx(i, j)];
                if (c != 0) s += static_cast<__int128>(c) * x[i] * x[j];
            }
        return s;
    }

    bool value_bound_ok(i64 maxcoord) const {
        if (!fits_i64_) return false;
        const double bound = static_cast<double>(n_) * n_ * static_cast<double>(max_abs_c_) *
                             static_cast<double>(maxcoord) * static_cast<double>(maxcoord);
        return bound < 4.0e18;
    }

    i64 evaluate_mod(const i64* x, i64 m) const {
        i64 s = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                i64 c = c64_[idx(i, j)] % m;
                if (c != 0) s = (s + mulmod(mulmod(c, x[i] % m, m), x[j] % m, m)) % m;
            }
        return mod_norm(s, m);
    }

    // gradient of F is 2A x (integral)
    std::vector<Int> gradient(const std::vector<Int>& x) const {
        if (static_cast<int>(x.size()) != n_) throw DimensionMismatch("gradient: wrong length");
        std::vector<Int> g(static_cast<std::size_t>(n_), 0);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) g[static_cast<std::size_t>(i)] += two_a(i, j) * x[static_cast<std::size_t>(j)];
        return g;
    }

    void gradient_mod(const i64* x, i64 m, i64* out) const {
        for (int i = 0; i < n_; ++i) {
            i64 s = 0;
            for (int j = 0; j < n_; ++j) {
                i64 c = twoA64_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j)] % m;
                if (c != 0) s = (s + mulmod(c, x[j] % m, m)) % m;
            }
            out[i] = mod_norm(s, m);
        }
    }

    // det(A) = det(2A) / 2^N as an exact rational; throws on zero
    Rat discriminant() const {
        std::vector<std::vector<Int>> m(static_cast<std::size_t>(n_), std::vector<Int>(static_cast<std::size_t>(n_)));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = two_a(i, j);
        Int d2 = det_int(m);
        if (d2 == 0) throw DegenerateForm("discriminant: det(A) = 0");
        return Rat(d2, pow_int(2, static_cast<unsigned>(n_)));
    }

    bool is_degenerate() const {
        std::vector<std::vector<Int>> m(static_cast<std::size_t>(n_), std::vector<Int>(static_cast<std::size_t>(n_)));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = two_a(i, j);
        return det_int(m) == 0;
    }

    // Dual form, with matrix Delta_F * A^{-1}.
    RationalForm dual_form() const {
        Rat delta = discriminant();
        std::vector<std::vector<Rat>> a(static_cast<std::size_t>(n_), std::vector<Rat>(static_cast<std::size_t>(n_)));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = Rat(two_a(i, j), 2);
        auto inv = invert_rat_matrix(a);
        RationalForm d;
        d.n = n_;
        d.mat.assign(static_cast<std::size_t>(n_), std::vector<Rat>(static_cast<std::size_t>(n_)));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) d.mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = delta * inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return d;
    }

    // value of the dual form at an integer vector
    Rat dual_value(const std::vector<i64>& c) const {
        return dual_form().evaluate_i64(c);
    }

    // Bad primes: divisors of the numerator of 2*Delta_F in lowest terms.
    // Operations that assume smooth reduction refuse them.
    bool is_good_prime(i64 p) const {
        Rat twodelta = 2 * discriminant();
        Int num = boost::multiprecision::numerator(twodelta);
        if (num < 0) num = -num;
        return num % p != 0;
    }

    std::vector<i64> bad_primes() const {
        Rat twodelta = 2 * discriminant();
        Int num = boost::multiprecision::numerator(twodelta);
        if (num < 0) num = -num;
        std::vector<i64> out;
        for (auto& [p, e] : factorize_int(num)) out.push_back(p);
        return out;
    }

    std::string str() const {
        std::ostringstream os;
        bool first = true;
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                const Int& c = coeffs_[idx(i, j)];
                if (c == 0) continue;
                if (!first) os << " + ";
                os << c.str() << "*x" << i;
                if (i == j) os << "^2";
                else os << "*x" << j;
                first = false;
            }
        if (first) os << "0";
        return os.str();
    }

private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    void rebuild() {
        twoA_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0);
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j) {
                const Int& c = coeffs_[idx(i, j)];
                if (i == j) {
                    twoA_[idx(i, i)] = 2 * c;
                } else {
                    twoA_[idx(i, j)] = c;
                    twoA_[idx(j, i)] = c;
                }
            }
        diagonal_ = true;
        for (int i = 0; i < n_ && diagonal_; ++i)
            for (int j = i + 1; j < n_; ++j)
                if (coeffs_[idx(i, j)] != 0) { diagonal_ = false; break; }
        fits_i64_ = true;
        c64_.assign(coeffs_.size(), 0);
        twoA64_.assign(twoA_.size(), 0);
        max_abs_c_ = 0;
        max_abs_2a_ = 0;
        const Int lim = Int(1) << 40;  // keeps evaluate_i64 provably overflow-free in hot loops
        for (std::size_t k = 0; k < coeffs_.size(); ++k) {
            if (boost::multiprecision::abs(coeffs_[k]) > lim) { fits_i64_ = false; break; }
            c64_[k] = coeffs_[k].convert_to<i64>();
            max_abs_c_ = std::max(max_abs_c_, c64_[k] < 0 ? -c64_[k] : c64_[k]);
        }
        if (fits_i64_) {
            for (std::size_t k = 0; k < twoA_.size(); ++k) {
                twoA64_[k] = twoA_[k].convert_to<i64>();
                max_abs_2a_ = std::max(max_abs_2a_, twoA64_[k] < 0 ? -twoA64_[k] : twoA64_[k]);
            }
        }
    }

    int n_ = 0;
    std::vector<Int> coeffs_;  // dense upper triangle (row-major, j >= i)
    std::vector<Int> twoA_;
    std::vector<i64> c64_;
    std::vector<i64> twoA64_;
    bool fits_i64_ = false;
    bool diagonal_ = false;
    i64 max_abs_c_ = 0;
    i64 max_abs_2a_ = 0;
};

// ---------------------------------------------------------------------------
// Isotropic vector search: a primitive zero of F with height <= bound, or
// nothing.  Box scan over the first N-1 coordinates, solving for the last.
// ---------------------------------------------------------------------------

inline std::optional<ProjectivePoint> find_isotropic_vector(const QuadraticForm& F, i64 bound,
                                                            const Budget& budget = {}) {
    const int n = F.n_vars();
    if (bound <= 0) return std::nullopt;
    if (!F.value_bound_ok(bound))
        throw ResourceLimit("find_isotropic_vector: coefficients too large for fast scan");
    double projected = 1;
    for (int i = 0; i + 1 < n; ++i) projected *= static_cast<double>(2 * bound + 1);
    budget.check_enum(projected, "find_isotropic_vector");

    std::vector<i64> x(static_cast<std::size_t>(n), 0);
    std::optional<ProjectivePoint> best;

    // coefficients of F as quadratic in x_{n-1} given the prefix
    auto try_candidate = [&](i64 last) {
        if (last < -bound || last > bound) return;
        x[static_cast<std::size_t>(n - 1)] = last;
        bool zero = true;
        for (i64 c : x)
            if (c != 0) { zero = false; break; }
        if (zero) return;
        ProjectivePoint p = primitive_rep(x);
        if (p.height() > bound) return;
        if (!best || p < *best) best = p;
    };

    std::function<void(int)> rec = [&](int i) {
        if (best) return;  // first hit in lexicographic scan is enough
        if (i == n - 1) {
            i64 a = F.coeff(n - 1, n - 1).convert_to<i64>();
            i64 b = 0, c = 0;
            for (int j = 0; j < n - 1; ++j) b += F.coeff(j, n - 1).convert_to<i64>() * x[static_cast<std::size_t>(j)];
            c = 0;
            for (int j = 0; j < n - 1; ++j)
                for (int k = j; k < n - 1; ++k)
                    c += F.coeff(j, k).convert_to<i64>() * x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(k)];
            auto roots = solve_quadratic_i64(a, b, c);
            if (roots.all_integers) {
                for (i64 t = -bound; t <= bound && !best; ++t) try_candidate(t);
            } else {
                for (int r = 0; r < roots.count && !best; ++r) try_candidate(roots.roots[static_cast<std::size_t>(r)]);
            }
            return;
        }
        for (i64 v = -bound; v <= bound && !best; ++v) {
            x[static_cast<std::size_t>(i)] = v;
            rec(i + 1);
        }
        x[static_cast<std::size_t>(i)] = 0;
    };
    rec(0);
    return best;
}

}  // namespace qslab
