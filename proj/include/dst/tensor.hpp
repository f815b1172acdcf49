#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dst {

/**
 * Dense row-major array of doubles with an optional gradient buffer.
 *
 * Most of the code treats tensors as matrices: rank-2 tensors are used
 * directly, rank-1 tensors of length n behave as n x 1 columns, and
 * rank-0 tensors as 1 x 1.
 */
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor column(std::vector<double> values);
    static Tensor scalar(double value);

    [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

    // matrix view
    [[nodiscard]] std::size_t rows() const noexcept;
    [[nodiscard]] std::size_t cols() const noexcept;

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const;
    [[nodiscard]] std::span<double> row(std::size_t r);
    [[nodiscard]] std::vector<double>& storage() noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& storage() const noexcept { return values_; }

    [[nodiscard]] bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

    [[nodiscard]] bool has_grad() const noexcept { return grad_.has_value(); }
    /// Gradient buffer, allocated (zero-filled) on first access.
    std::vector<double>& grad();
    [[nodiscard]] const std::vector<double>& grad() const;
    void zero_grad();
    void clear_grad() noexcept { grad_.reset(); }

    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] Tensor transposed() const;

    /// Value equality (shape and bitwise-equal values); gradients ignored.
    friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

    [[nodiscard]] std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_;
};

[[nodiscard]] std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept;

}  // namespace dst
