#ifndef TLDA_TENSOR_HPP
#define TLDA_TENSOR_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "tlda/error.hpp"

namespace tlda {

/// Dense cubic tensor of side n, stored with the last index fastest.
/// Only meant for small oracle computations.
class Tensor3 {
public:
    Tensor3() = default;
    explicit Tensor3(Eigen::Index n) : n_(n), data_(static_cast<std::size_t>(n * n * n), 0.0) {}

    Eigen::Index dim() const { return n_; }

    double& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) { return data_[offset(i, j, k)]; }
    double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const { return data_[offset(i, j, k)]; }

    /// this += scale * a (x) b (x) c
    void add_outer(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                   double scale = 1.0) {
        require_dims(a.size() == n_ && b.size() == n_ && c.size() == n_, "outer product size");
        std::size_t p = 0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            double ai = scale * a(i);
            for (Eigen::Index j = 0; j < n_; ++j) {
                double aij = ai * b(j);
                for (Eigen::Index k = 0; k < n_; ++k) data_[p++] += aij * c(k);
            }
        }
    }

    void add_cube(const Eigen::VectorXd& a, double scale = 1.0) { add_outer(a, a, a, scale); }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    double inner(const Tensor3& other) const {
        require_dims(other.n_ == n_, "tensor inner product size");
        double s = 0.0;
        for (std::size_t p = 0; p < data_.size(); ++p) s += data_[p] * other.data_[p];
        return s;
    }

    Tensor3& operator-=(const Tensor3& other) {
        require_dims(other.n_ == n_, "tensor difference size");
        for (std::size_t p = 0; p < data_.size(); ++p) data_[p] -= other.data_[p];
        return *this;
    }

    friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }

    double max_abs_diff(const Tensor3& other) const {
        require_dims(other.n_ == n_, "tensor difference size");
        double m = 0.0;
        for (std::size_t p = 0; p < data_.size(); ++p) m = std::max(m, std::abs(data_[p] - other.data_[p]));
        return m;
    }

    /// Elementwise equality, used by the exact symmetry checks.
    bool operator==(const Tensor3& other) const = default;

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t offset(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
        return static_cast<std::size_t>((i * n_ + j) * n_ + k);
    }

    Eigen::Index n_ = 0;
    std::vector<double> data_;
};

} // namespace tlda

#endif
