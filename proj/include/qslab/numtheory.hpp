#pragma once

#include "qslab/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace qslab {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// ---------------------------------------------------------------------------
// Modular arithmetic on machine words
// ---------------------------------------------------------------------------

inline i64 mod_norm(i64 a, i64 m) {
    a %= m;
    return a < 0 ? a + m : a;
}

inline i64 mulmod(i64 a, i64 b, i64 m) {
    return static_cast<i64>(static_cast<__int128>(a) * b % m);
}

inline i64 powmod(i64 base, i64 e, i64 m) {
    base = mod_norm(base, m);
    i64 r = 1 % m;
    while (e > 0) {
        if (e & 1) r = mulmod(r, base, m);
        base = mulmod(base, base, m);
        e >>= 1;
    }
    return r;
}

// g = ax + by
inline i64 ext_gcd(i64 a, i64 b, i64& x, i64& y) {
    if (b == 0) { x = a >= 0 ? 1 : -1; y = 0; return a >= 0 ? a : -a; }
    i64 x1, y1;
    i64 g = ext_gcd(b, a % b, x1, y1);
    x = y1;
    y = x1 - (a / b) * y1;
    return g;
}

inline i64 inv_mod(i64 a, i64 m) {
    i64 x, y;
    i64 g = ext_gcd(mod_norm(a, m), m, x, y);
    if (g != 1) throw Error("inv_mod: not invertible");
    return mod_norm(x, m);
}

inline int v_p_i64(i64 v, i64 p) {
    if (v == 0) throw Error("v_p of zero");
    int k = 0;
    while (v % p == 0) { v /= p; ++k; }
    return k;
}

inline int v_p_int(Int v, i64 p) {
    if (v == 0) throw Error("v_p of zero");
    int k = 0;
    while (v % p == 0) { v /= p; ++k; }
    return k;
}

// Legendre symbol (a|p), p an odd prime
inline int legendre(i64 a, i64 p) {
    a = mod_norm(a, p);
    if (a == 0) return 0;
    i64 t = powmod(a, (p - 1) / 2, p);
    return t == 1 ? 1 : -1;
}

// ---------------------------------------------------------------------------
// Prime tables
// ---------------------------------------------------------------------------

inline std::vector<i64> sieve_primes(i64 limit) {
    std::vector<bool> comp(static_cast<std::size_t>(limit) + 1, false);
    std::vector<i64> primes;
    for (i64 i = 2; i <= limit; ++i) {
        if (!comp[static_cast<std::size_t>(i)]) {
            primes.push_back(i);
            for (i64 j = i * i; j <= limit; j += i) comp[static_cast<std::size_t>(j)] = true;
        }
    }
    return primes;
}

// smallest prime factor table, spf[0] = spf[1] = 0
inline std::vector<std::int32_t> spf_sieve(i64 limit) {
    std::vector<std::int32_t> spf(static_cast<std::size_t>(limit) + 1, 0);
    for (i64 i = 2; i <= limit; ++i) {
        if (spf[static_cast<std::size_t>(i)] == 0) {
            for (i64 j = i; j <= limit; j += i)
                if (spf[static_cast<std::size_t>(j)] == 0)
                    spf[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(i);
        }
    }
    return spf;
}

inline bool is_prime_i64(i64 n) {
    if (n < 2) return false;
    for (i64 d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

// trial-division factorization; fine at artifact scale
inline std::vector<std::pair<i64, int>> factorize(i64 n) {
    if (n <= 0) throw Error("factorize: need positive");
    std::vector<std::pair<i64, int>> f;
    for (i64 d = 2; d * d <= n; ++d) {
        if (n % d == 0) {
            int e = 0;
            while (n % d == 0) { n /= d; ++e; }
            f.emplace_back(d, e);
        }
    }
    if (n > 1) f.emplace_back(n, 1);
    return f;
}

inline std::vector<std::pair<i64, int>> factorize_int(Int n) {
    if (n <= 0) throw Error("factorize_int: need positive");
    std::vector<std::pair<i64, int>> f;
    for (i64 d = 2; Int(d) * d <= n; ++d) {
        if (n % d == 0) {
            int e = 0;
            while (n % d == 0) { n /= d; ++e; }
            f.emplace_back(d, e);
        }
    }
    if (n > 1) {
        if (n > std::numeric_limits<i64>::max())
            throw ResourceLimit("factorize_int: cofactor too large");
        f.emplace_back(n.convert_to<i64>(), 1);
    }
    return f;
}

inline i64 squarefree_kernel(i64 n) {
    i64 k = 1;
    for (auto& [p, e] : factorize(n)) k *= p;
    return k;
}

inline bool is_squarefree(i64 n) {
    for (auto& [p, e] : factorize(n))
        if (e > 1) return false;
    return true;
}

inline bool is_squarefull(i64 n) {
    for (auto& [p, e] : factorize(n))
        if (e < 2) return false;
    return true;
}

inline i64 euler_phi(i64 n) {
    i64 r = n;
    for (auto& [p, e] : factorize(n)) r -= r / p;
    return r;
}

inline int mobius(i64 n) {
    int m = 1;
    for (auto& [p, e] : factorize(n)) {
        if (e > 1) return 0;
        m = -m;
    }
    return m;
}

// CRT for two coprime moduli
inline i64 crt2(i64 r1, i64 m1, i64 r2, i64 m2) {
    i64 inv = inv_mod(m1 % m2, m2);
    i64 d = mod_norm(r2 - r1, m2);
    return r1 + m1 * mulmod(d, inv, m2);
}

// ---------------------------------------------------------------------------
// Integer roots of a*t^2 + b*t + c = 0, including the degenerate cases.
// `all_of_range` signals that every integer is a root (a = b = c = 0).
// ---------------------------------------------------------------------------

struct QuadraticRoots {
    std::array<i64, 2> roots{};
    int count = 0;
    bool all_integers = false;
};

inline QuadraticRoots solve_quadratic_i64(i64 a, i64 b, i64 c) {
    QuadraticRoots out;
    if (a == 0) {
        if (b == 0) {
            if (c == 0) out.all_integers = true;
            return out;
        }
        if (c % b == 0) { out.roots[0] = -c / b; out.count = 1; }
        return out;
    }
    const __int128 disc = static_cast<__int128>(b) * b - static_cast<__int128>(4) * a * c;
    if (disc < 0) return out;
    if (disc > static_cast<__int128>(std::numeric_limits<i64>::max()))
        throw ResourceLimit("solve_quadratic_i64: discriminant overflow");
    i64 d64 = static_cast<i64>(disc);
    i64 r;
    if (!is_square64(d64, &r)) return out;
    const i64 den = 2 * a;
    for (i64 s : {r, -r}) {
        const i64 num = -b + s;
        if (num % den == 0) {
            i64 t = num / den;
            if (out.count == 1 && out.roots[0] == t) continue;
            out.roots[static_cast<std::size_t>(out.count++)] = t;
        }
        if (r == 0) break;
    }
    if (out.count == 2 && out.roots[0] > out.roots[1]) std::swap(out.roots[0], out.roots[1]);
    return out;
}

}  // namespace qslab
