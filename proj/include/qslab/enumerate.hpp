#pragma once

#include "qslab/core.hpp"
#include "qslab/localcount.hpp"
#include "qslab/numtheory.hpp"
#include "qslab/quadform.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

namespace qslab {

// ===========================================================================
// Enumeration of integer zeros of F in a height box.
//
// Canonical mode emits exactly one representative per rational point:
// primitive, first nonzero coordinate positive, ascending lexicographic
// order.  Cone mode emits every integer solution in the box (including 0
// and imprimitive vectors), also in lexicographic order.
//
// Strategy: iterate the first N-1 coordinates and solve the quadratic in
// the last one.  For diagonal forms in >= 4 variables the last two
// coordinates are bucketed by their value instead, which drops the scan
// from (2B+1)^{N-1} to (2B+1)^{N-2} candidates.
// ===========================================================================

enum class EnumMode { CanonicalPrimitive, Cone };

namespace detail {

inline bool canonical_primitive(const i64* x, int n) {
    int first = -1;
    for (int i = 0; i < n; ++i)
        if (x[i] != 0) { first = i; break; }
    if (first < 0 || x[first] < 0) return false;
    i64 g = 0;
    for (int i = 0; i < n; ++i) g = gcd64(g, x[i]);
    return g == 1;
}

}  // namespace detail

class PointScanner {
public:
    PointScanner(const QuadraticForm& F, i64 bound, EnumMode mode, const Budget& budget = {})
        : F_(&F), B_(bound), mode_(mode) {
        const int n = F.n_vars();
        if (bound < 0) throw ValidationError("PointScanner: negative bound");
        if (n > localcount_max_vars()) throw ResourceLimit("PointScanner: too many variables");
        if (bound > 0 && !F.value_bound_ok(bound))
            throw ResourceLimit("PointScanner: coefficient/bound combination overflows the fast kernels");
        mitm_ = F.is_diagonal() && n >= 4 && bound >= 1;
        const double width = static_cast<double>(2 * bound + 1);
        double candidates = 1;
        for (int i = 0; i < (mitm_ ? n - 2 : n - 1); ++i) candidates *= width;
        if (mode_ == EnumMode::CanonicalPrimitive) candidates = candidates / 2 + 1;
        budget.check_enum(candidates, "PointScanner");
        if (mitm_) build_buckets();
    }

    i64 outer_min() const { return mode_ == EnumMode::CanonicalPrimitive ? 0 : -B_; }
    i64 outer_max() const { return B_; }

    // scan x0 in [lo, hi]; sink(const i64* coords) in lexicographic order
    template <class Sink>
    void run(i64 lo, i64 hi, Sink&& sink) const {
        if (B_ == 0 || F_->n_vars() == 0) {
            if (mode_ == EnumMode::Cone && lo <= 0 && 0 <= hi) {
                std::vector<i64> zero(static_cast<std::size_t>(F_->n_vars()), 0);
                sink(zero.data());
            }
            return;
        }
        lo = std::max(lo, outer_min());
        hi = std::min(hi, outer_max());
        if (lo > hi) return;
        if (mitm_) run_mitm(lo, hi, sink);
        else run_generic(lo, hi, sink);
    }

    template <class Sink>
    void run_all(Sink&& sink) const { run(outer_min(), outer_max(), std::forward<Sink>(sink)); }

private:
    static constexpr int localcount_max_vars() { return detail::kMaxVars; }

    template <class Sink>
    void emit(const i64* x, Sink& sink) const {
        if (mode_ == EnumMode::CanonicalPrimitive && !detail::canonical_primitive(x, F_->n_vars())) return;
        sink(x);
    }

    // ---- generic path -----------------------------------------------------

    template <class Sink>
    void run_generic(i64 lo, i64 hi, Sink& sink) const {
        const int n = F_->n_vars();
        i64 x[12] = {0};
        if (n == 1) {
            if (F_->coeff(0, 0) == 0) {
                for (i64 t = std::max(lo, static_cast<i64>(1)); t <= hi; ++t) { x[0] = t; emit(x, sink); }
                if (mode_ == EnumMode::Cone)
                    for (i64 t = lo; t <= std::min(hi, static_cast<i64>(-1)); ++t) { x[0] = t; emit(x, sink); }
            }
            return;
        }
        auto rec = [&](auto&& self, int i) -> void {
            if (i == n - 1) {
                i64 a = F_->coeff(n - 1, n - 1).convert_to<i64>();
                i64 b = 0;
                for (int j = 0; j < n - 1; ++j) b += F_->coeff(j, n - 1).convert_to<i64>() * x[j];
                x[n - 1] = 0;
                i64 c = F_->evaluate_i64(x);
                auto roots = solve_quadratic_i64(a, b, c);
                if (roots.all_integers) {
                    for (i64 t = -B_; t <= B_; ++t) { x[n - 1] = t; emit(x, sink); }
                } else {
                    for (int r = 0; r < roots.count; ++r) {
                        i64 t = roots.roots[static_cast<std::size_t>(r)];
                        if (t >= -B_ && t <= B_) { x[n - 1] = t; emit(x, sink); }
                    }
                }
                x[n - 1] = 0;
                return;
            }
            const i64 from = i == 0 ? lo : -B_;
            const i64 to = i == 0 ? hi : B_;
            for (i64 v = from; v <= to; ++v) {
                x[i] = v;
                self(self, i + 1);
            }
            x[i] = 0;
        };
        rec(rec, 0);
    }

    // ---- split-value path for diagonal forms ------------------------------

    void build_buckets() {
        const int n = F_->n_vars();
        const i64 a = F_->coeff(n - 2, n - 2).convert_to<i64>();
        const i64 b = F_->coeff(n - 1, n - 1).convert_to<i64>();
        const i64 W = 2 * B_ + 1;
        if (W > 65535) throw ResourceLimit("PointScanner: bound too large for pair packing");
        vmin_ = 0; vmax_ = 0;
        for (i64 coef : {a, b}) {
            const i64 extreme = coef * B_ * B_;
            vmin_ += std::min<i64>(0, extreme);
            vmax_ += std::max<i64>(0, extreme);
        }
        const i64 span = vmax_ - vmin_ + 1;
        if (span > (1LL << 28)) throw ResourceLimit("PointScanner: bucket table too large");
        offsets_.assign(static_cast<std::size_t>(span) + 1, 0);
        for (i64 xv = -B_; xv <= B_; ++xv)
            for (i64 yv = -B_; yv <= B_; ++yv)
                ++offsets_[static_cast<std::size_t>(a * xv * xv + b * yv * yv - vmin_) + 1];
        for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
        pairs_.resize(static_cast<std::size_t>(W) * static_cast<std::size_t>(W));
        std::vector<u64> cursor(offsets_.begin(), offsets_.end() - 1);
        for (i64 xv = -B_; xv <= B_; ++xv)          // lexicographic fill keeps each
            for (i64 yv = -B_; yv <= B_; ++yv) {    // bucket sorted by (x, y)
                const i64 v = a * xv * xv + b * yv * yv - vmin_;
                pairs_[cursor[static_cast<std::size_t>(v)]++] =
                    static_cast<u64>((xv + B_) * W + (yv + B_));
            }
    }

    template <class Sink>
    void run_mitm(i64 lo, i64 hi, Sink& sink) const {
        const int n = F_->n_vars();
        const i64 W = 2 * B_ + 1;
        i64 x[12] = {0};
        i64 diag[12];
        for (int i = 0; i < n; ++i) diag[i] = F_->coeff(i, i).convert_to<i64>();
        auto rec = [&](auto&& self, int i, i64 partial) -> void {
            if (i == n - 2) {
                const i64 target = -partial;
                if (target < vmin_ || target > vmax_) return;
                const std::size_t slot = static_cast<std::size_t>(target - vmin_);
                for (u64 k = offsets_[slot]; k < offsets_[slot + 1]; ++k) {
                    const u64 packed = pairs_[k];
                    x[n - 2] = static_cast<i64>(packed / static_cast<u64>(W)) - B_;
                    x[n - 1] = static_cast<i64>(packed % static_cast<u64>(W)) - B_;
                    emit(x, sink);
                }
                x[n - 2] = x[n - 1] = 0;
                return;
            }
            const i64 from = i == 0 ? lo : -B_;
            const i64 to = i == 0 ? hi : B_;
            for (i64 v = from; v <= to; ++v) {
                x[i] = v;
                self(self, i + 1, partial + diag[i] * v * v);
            }
            x[i] = 0;
        };
        rec(rec, 0, 0);
    }

    const QuadraticForm* F_;
    i64 B_;
    EnumMode mode_;
    bool mitm_ = false;
    i64 vmin_ = 0, vmax_ = 0;
    std::vector<u64> offsets_;
    std::vector<u64> pairs_;
};

// single-threaded full scan
template <class Sink>
void scan_points(const QuadraticForm& F, i64 B, EnumMode mode, Sink&& sink, const Budget& budget = {}) {
    PointScanner sc(F, B, mode, budget);
    sc.run_all(sink);
}

// Partition the outer coordinate range over worker threads.  Each worker
// gets its own sink from the factory (called with thread index up front);
// results merge deterministically because partitions are contiguous.
template <class SinkFactory>
void scan_points_parallel(const QuadraticForm& F, i64 B, EnumMode mode, int threads,
                          SinkFactory&& factory, const Budget& budget = {}) {
    PointScanner sc(F, B, mode, budget);
    const i64 lo = sc.outer_min(), hi = sc.outer_max();
    if (threads <= 1) {
        auto sink = factory(0);
        sc.run(lo, hi, sink);
        return;
    }
    const i64 span = hi - lo + 1;
    const int nt = static_cast<int>(std::min<i64>(threads, span));
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        const i64 a = lo + span * t / nt;
        const i64 b = lo + span * (t + 1) / nt - 1;
        pool.emplace_back([&sc, a, b, t, &factory]() {
            auto sink = factory(t);
            sc.run(a, b, sink);
        });
    }
    for (auto& th : pool) th.join();
}

// ===========================================================================
// enumerate_points / count_points
// ===========================================================================

inline std::vector<ProjectivePoint> enumerate_points(const QuadraticForm& F, i64 B,
                                                     const Budget& budget = {}) {
    std::vector<ProjectivePoint> out;
    scan_points(F, B, EnumMode::CanonicalPrimitive, [&](const i64* x) {
        out.push_back(ProjectivePoint{std::vector<i64>(x, x + F.n_vars())});
    }, budget);
    return out;
}

struct CountRequest {
    const QuadraticForm* form = nullptr;
    i64 bound = 0;
    std::vector<const LocalCondition*> conditions;

    void validate() const {
        if (!form) throw ValidationError("CountRequest: missing form");
        std::vector<i64> primes;
        for (auto* c : conditions) {
            if (!c) throw ValidationError("CountRequest: null condition");
            if (!form->is_good_prime(c->prime()))
                throw BadPrime("CountRequest: condition prime divides 2*Delta_F");
            primes.push_back(c->prime());
        }
        std::sort(primes.begin(), primes.end());
        if (std::adjacent_find(primes.begin(), primes.end()) != primes.end())
            throw ValidationError("CountRequest: condition primes must be distinct");
    }
};

inline bool point_satisfies(const LocalCondition& cond, const i64* x, int n) {
    std::vector<i64> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = mod_norm(x[i], cond.modulus());
    return cond.contains(r);
}

inline Int count_points(const CountRequest& req, const Budget& budget = {}, int threads = 1) {
    req.validate();
    const int n = req.form->n_vars();
    std::vector<Int> partial(static_cast<std::size_t>(std::max(threads, 1)), 0);
    auto factory = [&](int tid) {
        Int* slot = &partial[static_cast<std::size_t>(tid)];
        return [slot, &req, n](const i64* x) {
            for (auto* c : req.conditions)
                if (!point_satisfies(*c, x, n)) return;
            ++*slot;
        };
    };
    scan_points_parallel(*req.form, req.bound, EnumMode::CanonicalPrimitive, threads, factory, budget);
    Int total = 0;
    for (auto& p : partial) total += p;
    return total;
}

// ===========================================================================
// Weights
// ===========================================================================

inline double weight_omega0(double x) {
    if (x <= -1.0 || x >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - x * x));
}

// |A x|_inf for the real matrix A = (2A)/2
inline double sup_norm_ax(const QuadraticForm& F, const std::vector<double>& x) {
    const int n = F.n_vars();
    if (static_cast<int>(x.size()) != n) throw DimensionMismatch("sup_norm_ax");
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j)
            s += 0.5 * static_cast<double>(F.two_a_i64(i, j)) * x[static_cast<std::size_t>(j)];
        best = std::max(best, std::abs(s));
    }
    return best;
}

// w(x) = omega0(5/2 |Ax| - 2); vanishes unless 2/5 <= |Ax| <= 6/5
inline double weight_w(const QuadraticForm& F, const std::vector<double>& x) {
    return weight_omega0(2.5 * sup_norm_ax(F, x) - 2.0);
}

// radius R with supp(w) contained in |x|_inf <= R: (6/5) * ||A^{-1}||_inf
inline double support_radius(const QuadraticForm& F) {
    const int n = F.n_vars();
    std::vector<std::vector<Rat>> a(static_cast<std::size_t>(n), std::vector<Rat>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = Rat(F.two_a(i, j), 2);
    auto inv = invert_rat_matrix(a);
    Rat norm = 0;
    for (int i = 0; i < n; ++i) {
        Rat row = 0;
        for (int j = 0; j < n; ++j) row += boost::multiprecision::abs(inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        norm = std::max(norm, row);
    }
    return 1.2 * rat_to_double(norm);
}

using WeightFn = std::function<double(const std::vector<double>&)>;

// sum of w(x/B) over all integer solutions with residue in Omega_M
// (conditions at pairwise distinct primes; empty list means M = 1)
inline double weighted_count(const QuadraticForm& F, i64 B,
                             const std::vector<const LocalCondition*>& omega_m, const WeightFn& w,
                             double radius, int threads = 1, const Budget& budget = {}) {
    for (auto* c : omega_m)
        if (!F.is_good_prime(c->prime()))
            throw BadPrime("weighted_count: (M, 2*Delta_F) != 1");
    const i64 box = static_cast<i64>(std::ceil(radius * static_cast<double>(B))) + 1;
    const int n = F.n_vars();
    std::vector<double> partial(static_cast<std::size_t>(std::max(threads, 1)), 0.0);
    auto factory = [&](int tid) {
        double* slot = &partial[static_cast<std::size_t>(tid)];
        return [slot, &omega_m, &w, n, B](const i64* x) {
            for (auto* c : omega_m)
                if (!point_satisfies(*c, x, n)) return;
            std::vector<double> real(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) real[static_cast<std::size_t>(i)] = static_cast<double>(x[i]) / static_cast<double>(B);
            *slot += w(real);
        };
    };
    scan_points_parallel(F, box, EnumMode::Cone, threads, factory, budget);
    double total = 0;
    for (double p : partial) total += p;
    return total;
}

// ===========================================================================
// sigma_infinity: slab-limit real density
//   sigma_inf = lim_{eps->0} (2 eps)^{-1} vol{ |F(x)| < eps } weighted by w.
// Midpoint grid over the first N-1 coordinates; in the last coordinate the
// slab is a union of intervals found from the quadratic, integrated with
// Gauss-Legendre nodes.  Richardson extrapolation over a halving epsilon
// schedule; the spread of the extrapolants is the error estimate.
// ===========================================================================

struct SigmaInfinityResult {
    double value = 0.0;
    double error = 0.0;
    std::vector<std::pair<double, double>> raw;  // (eps, slab average)
    std::vector<double> extrapolated;
    i64 min_slab_cells = 0;
    int grid_per_dim = 0;
};

namespace detail {

struct IntervalSet {
    // at most 2 disjoint intervals for a quadratic slab section
    double a1 = 0, b1 = -1, a2 = 0, b2 = -1;
    void add(double a, double b) {
        if (b <= a) return;
        if (b1 < a1) { a1 = a; b1 = b; }
        else { a2 = a; b2 = b; }
    }
};

// {t : |q(t)| < eps} for q(t) = alpha t^2 + beta t + gamma, clipped to [-R, R]
inline IntervalSet slab_sections(double alpha, double beta, double gamma, double eps, double R) {
    IntervalSet out;
    auto clip_add = [&](double a, double b) {
        a = std::max(a, -R);
        b = std::min(b, R);
        out.add(a, b);
    };
    if (alpha == 0.0) {
        if (beta == 0.0) {
            if (std::abs(gamma) < eps) clip_add(-R, R);
            return out;
        }
        double t1 = (-eps - gamma) / beta, t2 = (eps - gamma) / beta;
        clip_add(std::min(t1, t2), std::max(t1, t2));
        return out;
    }
    const double s = alpha > 0 ? 1.0 : -1.0;
    const double A = s * alpha, Bc = s * beta, G1 = s * gamma - eps, G2 = s * gamma + eps;
    // now solve A t^2 + Bc t + G1 < 0 < A t^2 + Bc t + G2 with A > 0
    const double d1 = Bc * Bc - 4 * A * G1;
    if (d1 <= 0) return out;
    const double r1lo = (-Bc - std::sqrt(d1)) / (2 * A), r1hi = (-Bc + std::sqrt(d1)) / (2 * A);
    const double d2 = Bc * Bc - 4 * A * G2;
    if (d2 <= 0) {
        clip_add(r1lo, r1hi);
        return out;
    }
    const double r2lo = (-Bc - std::sqrt(d2)) / (2 * A), r2hi = (-Bc + std::sqrt(d2)) / (2 * A);
    clip_add(r1lo, r2lo);
    clip_add(r2hi, r1hi);
    return out;
}

}  // namespace detail

inline SigmaInfinityResult sigma_infinity(const QuadraticForm& F, const WeightFn& w,
                                          std::vector<double> eps_schedule = {0.1, 0.05, 0.025, 0.0125},
                                          double radius = -1.0, int grid_per_dim = 0,
                                          double tolerance = 0.02, i64 min_cells = 10000) {
    const int n = F.n_vars();
    if (n < 2) throw ValidationError("sigma_infinity: need at least two variables");
    if (eps_schedule.size() < 2) throw ValidationError("sigma_infinity: need an epsilon schedule");
    for (std::size_t i = 1; i < eps_schedule.size(); ++i)
        if (std::abs(eps_schedule[i] * 2 - eps_schedule[i - 1]) > 1e-12 * eps_schedule[0])
            throw ValidationError("sigma_infinity: schedule must halve");
    if (radius <= 0) radius = support_radius(F);

    // 5-point Gauss-Legendre on [-1, 1]
    static const double gl_x[5] = {-0.906179845938664, -0.538469310105683, 0.0,
                                   0.538469310105683, 0.906179845938664};
    static const double gl_w[5] = {0.236926885056189, 0.478628670499366, 0.568888888888889,
                                   0.478628670499366, 0.236926885056189};

    SigmaInfinityResult res;
    int cells = grid_per_dim > 0 ? grid_per_dim : 32;
    const double alpha = static_cast<double>(F.coeff(n - 1, n - 1).convert_to<i64>());
    for (;;) {
        res.raw.clear();
        res.raw.resize(eps_schedule.size());
        for (std::size_t e = 0; e < eps_schedule.size(); ++e) res.raw[e] = {eps_schedule[e], 0.0};
        std::vector<i64> slab_cells(eps_schedule.size(), 0);
        const double h = 2.0 * radius / cells;
        std::vector<double> x(static_cast<std::size_t>(n), 0.0);
        std::vector<i64> idxv(static_cast<std::size_t>(n - 1), 0);
        const double cell_measure = std::pow(h, n - 1);
        // odometer over the first n-1 coordinates (midpoints)
        for (;;) {
            for (int i = 0; i < n - 1; ++i)
                x[static_cast<std::size_t>(i)] = -radius + (static_cast<double>(idxv[static_cast<std::size_t>(i)]) + 0.5) * h;
            double beta = 0.0;
            for (int j = 0; j < n - 1; ++j)
                beta += static_cast<double>(F.coeff(j, n - 1).convert_to<i64>()) * x[static_cast<std::size_t>(j)];
            x[static_cast<std::size_t>(n - 1)] = 0.0;
            double gamma = 0.0;
            for (int i = 0; i < n - 1; ++i)
                for (int j = i; j < n - 1; ++j)
                    gamma += static_cast<double>(F.coeff(i, j).convert_to<i64>()) * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
            for (std::size_t e = 0; e < eps_schedule.size(); ++e) {
                auto iv = detail::slab_sections(alpha, beta, gamma, eps_schedule[e], radius);
                double acc = 0.0;
                bool nonempty = false;
                const std::pair<double, double> sections[2] = {{iv.a1, iv.b1}, {iv.a2, iv.b2}};
                for (auto [a, b] : sections) {
                    if (b <= a) continue;
                    nonempty = true;
                    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
                    for (int g = 0; g < 5; ++g) {
                        x[static_cast<std::size_t>(n - 1)] = mid + half * gl_x[g];
                        acc += gl_w[g] * half * w(x);
                    }
                }
                if (nonempty) ++slab_cells[e];
                res.raw[e].second += acc * cell_measure;
            }
            // advance odometer
            int d = n - 2;
            while (d >= 0) {
                if (++idxv[static_cast<std::size_t>(d)] < cells) break;
                idxv[static_cast<std::size_t>(d)] = 0;
                --d;
            }
            if (d < 0) break;
        }
        res.min_slab_cells = *std::min_element(slab_cells.begin(), slab_cells.end());
        res.grid_per_dim = cells;
        bool all_zero = true;
        for (auto& [eps, v] : res.raw) {
            v /= 2.0 * eps;
            if (v != 0.0) all_zero = false;
        }
        if (all_zero) {  // zero weight: nothing to resolve
            res.value = 0.0;
            res.error = 0.0;
            res.extrapolated.assign(eps_schedule.size() - 1, 0.0);
            return res;
        }
        if (res.min_slab_cells >= min_cells || grid_per_dim > 0 || cells >= 256) break;
        cells *= 2;  // refine until each slab holds enough cells
    }

    res.extrapolated.clear();
    for (std::size_t e = 0; e + 1 < res.raw.size(); ++e)
        res.extrapolated.push_back((4.0 * res.raw[e + 1].second - res.raw[e].second) / 3.0);
    res.value = res.extrapolated.back();
    double spread = 0.0;
    for (double v : res.extrapolated) spread = std::max(spread, std::abs(v - res.value));
    res.error = spread;
    if (spread > tolerance * std::max(std::abs(res.value), 1e-12))
        throw NonConvergence("sigma_infinity: epsilon estimates disagree beyond tolerance");
    return res;
}

}  // namespace qslab
