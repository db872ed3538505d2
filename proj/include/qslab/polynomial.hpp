#pragma once

#include "qslab/core.hpp"
#include "qslab/numtheory.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qslab {

// ---------------------------------------------------------------------------
// Homogeneous integer polynomials, used for divisor components on a quadric.
// Grammar:
//   "x0"            a single coordinate
//   "x0*x1"         monomial product (exponents via repetition or ^)
//   "2 1,0,0,1,0; -1 0,2,0,0,0"   general "coef e0,e1,..." terms
// ---------------------------------------------------------------------------

struct Monomial {
    Int coef;
    std::vector<int> exps;

    int degree() const {
        int d = 0;
        for (int e : exps) d += e;
        return d;
    }
};

struct HomPoly {
    int n_vars = 0;
    std::vector<Monomial> terms;

    int degree() const {
        return terms.empty() ? 0 : terms.front().degree();
    }

    void validate() const {
        if (terms.empty()) throw ValidationError("HomPoly: no terms");
        int d = terms.front().degree();
        for (auto& t : terms) {
            if (static_cast<int>(t.exps.size()) != n_vars)
                throw ValidationError("HomPoly: exponent length mismatch");
            if (t.degree() != d) throw ValidationError("HomPoly: not homogeneous");
        }
    }

    Int evaluate(const std::vector<Int>& x) const {
        Int s = 0;
        for (auto& t : terms) {
            Int m = t.coef;
            for (int i = 0; i < n_vars; ++i)
                for (int e = 0; e < t.exps[static_cast<std::size_t>(i)]; ++e) m *= x[static_cast<std::size_t>(i)];
            s += m;
        }
        return s;
    }

    Int evaluate_i64(const std::vector<i64>& x) const {
        std::vector<Int> v(x.begin(), x.end());
        return evaluate(v);
    }

    i64 evaluate_mod(const i64* x, i64 m) const {
        i64 s = 0;
        for (auto& t : terms) {
            i64 term = mod_norm((t.coef % m).convert_to<i64>(), m);
            for (int i = 0; i < n_vars; ++i)
                for (int e = 0; e < t.exps[static_cast<std::size_t>(i)]; ++e)
                    term = mulmod(term, mod_norm(x[i], m), m);
            s = (s + term) % m;
        }
        return s;
    }

    // gradient entry d/dx_i, reduced mod m
    i64 partial_mod(const i64* x, int var, i64 m) const {
        i64 s = 0;
        for (auto& t : terms) {
            int e = t.exps[static_cast<std::size_t>(var)];
            if (e == 0) continue;
            i64 term = mod_norm(((t.coef * e) % m).convert_to<i64>(), m);
            for (int i = 0; i < n_vars; ++i) {
                int rep = t.exps[static_cast<std::size_t>(i)] - (i == var ? 1 : 0);
                for (int k = 0; k < rep; ++k) term = mulmod(term, mod_norm(x[i], m), m);
            }
            s = (s + term) % m;
        }
        return mod_norm(s, m);
    }

    // x_i for a lone coordinate, otherwise empty
    std::optional<int> single_variable() const {
        if (terms.size() != 1 || terms[0].coef != 1 || terms[0].degree() != 1) return std::nullopt;
        for (int i = 0; i < n_vars; ++i)
            if (terms[0].exps[static_cast<std::size_t>(i)] == 1) return i;
        return std::nullopt;
    }

    static HomPoly coordinate(int n_vars, int i) {
        HomPoly p;
        p.n_vars = n_vars;
        Monomial m;
        m.coef = 1;
        m.exps.assign(static_cast<std::size_t>(n_vars), 0);
        m.exps[static_cast<std::size_t>(i)] = 1;
        p.terms.push_back(std::move(m));
        return p;
    }

    static HomPoly parse(const std::string& text, int n_vars) {
        HomPoly p;
        p.n_vars = n_vars;
        std::string s = text;
        s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; }), s.end());
        if (!s.empty() && s[0] == 'x') {
            // product-of-coordinates shorthand: x0, x0*x1, x2^2*x3 ...
            Monomial m;
            m.coef = 1;
            m.exps.assign(static_cast<std::size_t>(n_vars), 0);
            std::size_t i = 0;
            while (i < s.size()) {
                if (s[i] != 'x') throw ValidationError("HomPoly parse: expected x<i>");
                ++i;
                std::size_t j = i;
                while (j < s.size() && std::isdigit(s[j])) ++j;
                int var = std::stoi(s.substr(i, j - i));
                if (var < 0 || var >= n_vars) throw ValidationError("HomPoly parse: variable index out of range");
                int e = 1;
                i = j;
                if (i < s.size() && s[i] == '^') {
                    ++i;
                    j = i;
                    while (j < s.size() && std::isdigit(s[j])) ++j;
                    e = std::stoi(s.substr(i, j - i));
                    i = j;
                }
                m.exps[static_cast<std::size_t>(var)] += e;
                if (i < s.size()) {
                    if (s[i] != '*') throw ValidationError("HomPoly parse: expected '*'");
                    ++i;
                }
            }
            p.terms.push_back(std::move(m));
            p.validate();
            return p;
        }
        // general term list: "coef e0,e1,...;coef e0,e1,..."
        std::istringstream groups(text);
        std::string grp;
        while (std::getline(groups, grp, ';')) {
            if (grp.find_first_not_of(" \t") == std::string::npos) continue;
            std::istringstream gs(grp);
            std::string coef, rest;
            gs >> coef >> rest;
            Monomial m;
            m.coef = Int(coef);
            std::replace(rest.begin(), rest.end(), ',', ' ');
            std::istringstream es(rest);
            int e;
            while (es >> e) m.exps.push_back(e);
            if (static_cast<int>(m.exps.size()) != n_vars)
                throw ValidationError("HomPoly parse: need one exponent per variable");
            p.terms.push_back(std::move(m));
        }
        p.validate();
        return p;
    }

    std::string str() const {
        std::ostringstream os;
        for (std::size_t t = 0; t < terms.size(); ++t) {
            if (t) os << " + ";
            os << terms[t].coef.str();
            for (int i = 0; i < n_vars; ++i) {
                int e = terms[t].exps[static_cast<std::size_t>(i)];
                if (e > 0) {
                    os << "*x" << i;
                    if (e > 1) os << "^" << e;
                }
            }
        }
        return os.str();
    }
};

}  // namespace qslab
