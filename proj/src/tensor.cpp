#include "gradhom/tensor.hpp"

#include "gradhom/errors.hpp"

#include <sstream>

namespace gradhom {

Lame lame_parameters(double youngs, double poisson) {
    const double a = 1.0 + poisson;
    const double b = 1.0 - 2.0 * poisson;
    if (a == 0.0 || b == 0.0) {
        std::ostringstream msg;
        msg << "isotropic stiffness undefined for Poisson ratio " << poisson << " (division by zero)";
        throw MaterialError(msg.str());
    }
    return {youngs * poisson / (a * b), youngs / (2.0 * a)};
}

Tensor4 isotropic_stiffness(double youngs, double poisson) {
    const auto [lambda, mu] = lame_parameters(youngs, poisson);
    Tensor4 c;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l)
                    c(i, j, k, l) = lambda * kronecker(i, j) * kronecker(k, l) +
                                    mu * (kronecker(i, k) * kronecker(j, l) + kronecker(i, l) * kronecker(j, k));
    return c;
}

std::string index_label(std::initializer_list<int> zero_based) {
    std::string s;
    for (int i : zero_based) s += static_cast<char>('1' + i);
    return s;
}

namespace {

// Index tuples for rank 4 and rank 6 as flat offsets.
int flat4(int i, int j, int k, int l) { return (i << 3) | (j << 2) | (k << 1) | l; }
int flat6(int a, int b, int c, int d, int e, int f) {
    return (a << 5) | (b << 4) | (c << 3) | (d << 2) | (e << 1) | f;
}

struct Worst {
    double value = 0.0;
    int first = 0;
    int second = 0;
    void offer(double v, int a, int b) {
        if (v > value) {
            value = v;
            first = a;
            second = b;
        }
    }
};

std::string label4(int k) {
    return index_label({(k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1});
}
std::string label6(int k) {
    return index_label({(k >> 5) & 1, (k >> 4) & 1, (k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1});
}

Worst worst4(const Tensor4& c) {
    Worst w;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) {
                    const int self = flat4(i, j, k, l);
                    for (int other : {flat4(k, l, i, j), flat4(j, i, k, l), flat4(i, j, l, k)})
                        w.offer(std::abs(c[self] - c[other]), self, other);
                }
    return w;
}

Worst worst6(const Tensor6& d) {
    Worst w;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int e1 = 0; e1 < 2; ++e1)
                    for (int e2 = 0; e2 < 2; ++e2)
                        for (int e3 = 0; e3 < 2; ++e3) {
                            const int self = flat6(a, b, c, e1, e2, e3);
                            for (int other : {flat6(e1, e2, e3, a, b, c), flat6(b, a, c, e1, e2, e3),
                                              flat6(a, b, c, e2, e1, e3)})
                                w.offer(std::abs(d[self] - d[other]), self, other);
                        }
    return w;
}

} // namespace

double symmetry_defect(const Tensor4& c) {
    const double scale = c.max_abs();
    return scale > 0.0 ? worst4(c).value / scale : 0.0;
}

double symmetry_defect(const Tensor6& d) {
    const double scale = d.max_abs();
    return scale > 0.0 ? worst6(d).value / scale : 0.0;
}

Tensor4 symmetrized(const Tensor4& c) {
    Tensor4 s;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l)
                    s(i, j, k, l) = (c(i, j, k, l) + c(j, i, k, l) + c(i, j, l, k) + c(j, i, l, k) + c(k, l, i, j) +
                                     c(l, k, i, j) + c(k, l, j, i) + c(l, k, j, i)) /
                                    8.0;
    return s;
}

Tensor6 symmetrized(const Tensor6& d) {
    Tensor6 s;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int e = 0; e < 2; ++e)
                    for (int f = 0; f < 2; ++f)
                        for (int g = 0; g < 2; ++g)
                            s(a, b, c, e, f, g) = (d(a, b, c, e, f, g) + d(b, a, c, e, f, g) + d(a, b, c, f, e, g) +
                                                   d(b, a, c, f, e, g) + d(e, f, g, a, b, c) + d(f, e, g, a, b, c) +
                                                   d(e, f, g, b, a, c) + d(f, e, g, b, a, c)) /
                                                  8.0;
    return s;
}

Voigt3 voigt_pack(const Tensor4& c, double rel_tol) {
    const double scale = c.max_abs();
    const Worst w = worst4(c);
    if (scale > 0.0 && w.value > rel_tol * scale) {
        std::ostringstream msg;
        msg << "rank-4 tensor lacks symmetry: C_" << label4(w.first) << " and C_" << label4(w.second)
            << " differ by " << w.value << " (relative " << w.value / scale << ")";
        throw PackingError(msg.str());
    }
    Voigt3 v;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
            v(p, q) = c(kVoigtStrain[p][0], kVoigtStrain[p][1], kVoigtStrain[q][0], kVoigtStrain[q][1]);
    return v;
}

Voigt6 voigt_pack(const Tensor6& d, double rel_tol) {
    const double scale = d.max_abs();
    const Worst w = worst6(d);
    if (scale > 0.0 && w.value > rel_tol * scale) {
        std::ostringstream msg;
        msg << "rank-6 tensor lacks symmetry: D_" << label6(w.first) << " and D_" << label6(w.second)
            << " differ by " << w.value << " (relative " << w.value / scale << ")";
        throw PackingError(msg.str());
    }
    Voigt6 v;
    for (int p = 0; p < 6; ++p) {
        const auto& r = kVoigtGradient[p];
        for (int q = 0; q < 6; ++q) {
            const auto& s = kVoigtGradient[q];
            v(p, q) = d(r[0], r[1], r[2], s[0], s[1], s[2]);
        }
    }
    return v;
}

Tensor4 voigt_unpack(const Voigt3& v) {
    Tensor4 c;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) {
            const auto [i, j] = kVoigtStrain[p];
            const auto [k, l] = kVoigtStrain[q];
            c(i, j, k, l) = c(j, i, k, l) = c(i, j, l, k) = c(j, i, l, k) = v(p, q);
        }
    return c;
}

Tensor6 voigt_unpack(const Voigt6& v) {
    Tensor6 d;
    for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q) {
            const auto [a, b, c] = kVoigtGradient[p];
            const auto [e, f, g] = kVoigtGradient[q];
            d(a, b, c, e, f, g) = d(b, a, c, e, f, g) = d(a, b, c, f, e, g) = d(b, a, c, f, e, g) = v(p, q);
        }
    return d;
}

} // namespace gradhom
