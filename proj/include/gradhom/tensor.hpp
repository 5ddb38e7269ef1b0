#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

namespace gradhom {

/// Dense Cartesian tensor in two dimensions, all indices in {0, 1}.
/// Storage is row-major over the index tuple.
template <int Rank>
class Tensor {
public:
    static constexpr std::size_t size = std::size_t{1} << Rank;

    Tensor() { data_.fill(0.0); }

    template <typename... I>
    double& operator()(I... idx) {
        static_assert(sizeof...(I) == Rank);
        return data_[flat(static_cast<std::size_t>(idx)...)];
    }
    template <typename... I>
    double operator()(I... idx) const {
        static_assert(sizeof...(I) == Rank);
        return data_[flat(static_cast<std::size_t>(idx)...)];
    }

    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    Tensor& operator+=(const Tensor& o) {
        for (std::size_t k = 0; k < size; ++k) data_[k] += o.data_[k];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (std::size_t k = 0; k < size; ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }
    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    /// Frobenius norm.
    double norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    const std::array<double, size>& data() const { return data_; }

private:
    template <typename... I>
    static constexpr std::size_t flat(I... idx) {
        std::size_t k = 0;
        ((k = (k << 1) | (idx & 1u)), ...);
        return k;
    }

    std::array<double, size> data_;
};

using Tensor2 = Tensor<2>;
using Tensor4 = Tensor<4>;
using Tensor5 = Tensor<5>;
using Tensor6 = Tensor<6>;

inline double kronecker(int i, int j) { return i == j ? 1.0 : 0.0; }

/// Lamé parameters of the plane-strain (3D) isotropic law.
struct Lame {
    double lambda;
    double mu;
};

/// lambda = E nu / ((1+nu)(1-2nu)), mu = E / (2(1+nu)).
/// Throws MaterialError when nu makes either denominator vanish.
Lame lame_parameters(double youngs, double poisson);

/// C_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk).
Tensor4 isotropic_stiffness(double youngs, double poisson);

// Voigt maps. Strain: 11 -> 1, 22 -> 2, 12 -> 3.
// Strain gradient (a, b, c): 111, 221, 122, 222, 112, 121 -> 1..6.
inline constexpr std::array<std::array<int, 2>, 3> kVoigtStrain{{{0, 0}, {1, 1}, {0, 1}}};
inline constexpr std::array<std::array<int, 3>, 6> kVoigtGradient{
    {{0, 0, 0}, {1, 1, 0}, {0, 1, 1}, {1, 1, 1}, {0, 0, 1}, {0, 1, 0}}};

/// Component label in the one-based index notation, e.g. "221" for (1, 1, 0).
std::string index_label(std::initializer_list<int> zero_based);

using Voigt3 = Eigen::Matrix3d;
using Voigt6 = Eigen::Matrix<double, 6, 6>;

/// Packs C (needs major and minor symmetry) and D (needs major symmetry and
/// symmetry in its first index pair). Throws PackingError naming the worst
/// violated pair if any violation exceeds rel_tol times the largest entry.
Voigt3 voigt_pack(const Tensor4& c, double rel_tol = 1e-6);
Voigt6 voigt_pack(const Tensor6& d, double rel_tol = 1e-6);

/// Inverse of voigt_pack; fills every index tuple implied by the symmetries.
Tensor4 voigt_unpack(const Voigt3& c);
Tensor6 voigt_unpack(const Voigt6& d);

/// Largest deviation from major/minor symmetry relative to the largest entry.
double symmetry_defect(const Tensor4& c);
double symmetry_defect(const Tensor6& d);

/// Averages over the symmetry group used by voigt_pack.
Tensor4 symmetrized(const Tensor4& c);
Tensor6 symmetrized(const Tensor6& d);

} // namespace gradhom
