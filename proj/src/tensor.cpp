#include "dst/tensor.hpp"

#include "dst/error.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace dst {

std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_product(shape_) != values_.size()) {
        throw DimensionError("tensor: shape " + shape_string() + " does not match " +
                             std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("from_rows: ragged rows");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

std::size_t Tensor::rows() const noexcept {
    return shape_.empty() ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
    if (shape_.size() < 2) return 1;
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
    return c;
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(values_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t c = cols();
    return std::span<double>(values_).subspan(r * c, c);
}

std::vector<double>& Tensor::grad() {
    if (!grad_) grad_.emplace(values_.size(), 0.0);
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw ContractError("tensor " + shape_string() + " has no gradient");
    return *grad_;
}

void Tensor::zero_grad() { grad().assign(values_.size(), 0.0); }

bool Tensor::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::transposed() const {
    const std::size_t r = rows();
    const std::size_t c = cols();
    Tensor out = matrix(c, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
    }
    return out;
}

bool operator==(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape_ != b.shape_) return false;
    return a.values_.empty() ||
           std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

}  // namespace dst
