#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qslab {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error { using Error::Error; };
struct DegenerateForm   : Error { using Error::Error; };
struct ZeroVector       : Error { using Error::Error; };
struct BadPrime         : Error { using Error::Error; };
struct ResourceLimit    : Error { using Error::Error; };
struct EmptyOmega       : Error { using Error::Error; };
struct OmegaOne         : Error { using Error::Error; };
struct InvalidAction    : Error { using Error::Error; };
struct SingularBasePoint: Error { using Error::Error; };
struct NonConvergence   : Error { using Error::Error; };
struct ValidationError  : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Budgets: hard caps on exhaustive work.  Exceeding one raises ResourceLimit
// instead of silently degrading.
// ---------------------------------------------------------------------------

struct Budget {
    std::uint64_t count_cells     = 1'000'000'000ULL;  // residue-space scans
    std::uint64_t enum_candidates = 8'000'000'000ULL;  // enumeration loop trips
    std::uint64_t expsum_terms    = 2'000'000'000ULL;  // exponential-sum terms

    void check_cells(double projected, const char* what) const {
        if (projected > static_cast<double>(count_cells))
            throw ResourceLimit(std::string(what) + ": projected cells exceed budget");
    }
    void check_enum(double projected, const char* what) const {
        if (projected > static_cast<double>(enum_candidates))
            throw ResourceLimit(std::string(what) + ": projected candidates exceed budget");
    }
    void check_expsum(double projected, const char* what) const {
        if (projected > static_cast<double>(expsum_terms))
            throw ResourceLimit(std::string(what) + ": projected terms exceed budget");
    }
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline std::int64_t isqrt64(std::int64_t v) {
    if (v < 0) return -1;
    auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
    while (r > 0 && r * r > v) --r;
    while ((r + 1) * (r + 1) <= v) ++r;
    return r;
}

inline bool is_square64(std::int64_t v, std::int64_t* root = nullptr) {
    if (v < 0) return false;
    std::int64_t r = isqrt64(v);
    if (root) *root = r;
    return r * r == v;
}

inline Int isqrt_int(const Int& v) {
    if (v < 0) throw Error("isqrt of negative");
    return boost::multiprecision::sqrt(v);
}

inline bool is_square_int(const Int& v, Int* root = nullptr) {
    if (v < 0) return false;
    Int r = boost::multiprecision::sqrt(v);
    if (root) *root = r;
    return r * r == v;
}

inline std::int64_t gcd64(std::int64_t a, std::int64_t b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) { std::int64_t t = a % b; a = b; b = t; }
    return a;
}

inline Int pow_int(Int base, unsigned e) {
    Int r = 1;
    while (e) { if (e & 1) r *= base; base *= base; e >>= 1; }
    return r;
}

inline std::int64_t pow_i64(std::int64_t base, unsigned e) {
    std::int64_t r = 1;
    while (e--) r *= base;
    return r;
}

// natural log of a positive rational, safe for values far outside double range
inline double log_rat(const Rat& r) {
    if (r <= 0) throw Error("log_rat: non-positive");
    const Int num = boost::multiprecision::numerator(r);
    const Int den = boost::multiprecision::denominator(r);
    auto log_int = [](const Int& v) {
        const std::size_t bits = boost::multiprecision::msb(v);
        if (bits <= 960) return std::log(v.convert_to<double>());
        Int top = v >> (bits - 64);
        return std::log(top.convert_to<double>()) + static_cast<double>(bits - 64) * std::log(2.0);
    };
    return log_int(num) - log_int(den);
}

inline double rat_to_double(const Rat& r) {
    const Int num = boost::multiprecision::numerator(r);
    const Int den = boost::multiprecision::denominator(r);
    if (num == 0) return 0.0;
    double sign = num < 0 ? -1.0 : 1.0;
    return sign * std::exp(log_rat(num < 0 ? Rat(-num, den) : r));
}

// CSV form: canonical "num/den", or plain integer when den == 1
inline std::string rat_to_string(const Rat& r) {
    const Int num = boost::multiprecision::numerator(r);
    const Int den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

// ---------------------------------------------------------------------------
// Ordinary least squares y = slope*x + intercept, with residual diagnostics.
// Fits refuse to run on fewer than two points; callers enforce their own
// minimum checkpoint counts.
// ---------------------------------------------------------------------------

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
    double residual_max = 0.0;
    std::size_t n_points = 0;
};

inline LineFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ValidationError("least_squares: need at least two points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i]; sy += ys[i];
        sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0) throw ValidationError("least_squares: degenerate abscissae");
    LineFit fit;
    fit.slope = (n * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.n_points = xs.size();
    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
        ss += r * r;
        fit.residual_max = std::max(fit.residual_max, std::abs(r));
    }
    fit.residual_rms = std::sqrt(ss / n);
    return fit;
}

}  // namespace qslab
