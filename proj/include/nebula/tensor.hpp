#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace nebula {

// Dense row-major tensor of doubles. All model math runs in double so the
// analytic gradients can be validated against finite differences.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::initializer_list<std::size_t> shape)
        : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-d accessors (row-major).
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// C[m x n] += or = A[m x k] * B[k x n]; raw-pointer kernels shared by the
// model forward and backward passes.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
// C[k x n] = A[m x k]^T * B[m x n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

}  // namespace nebula
