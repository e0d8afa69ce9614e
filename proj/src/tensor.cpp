#include "featshield/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace featshield {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto extent : shape_) {
        if (extent == 0) throw Error("Tensor: zero extent in shape " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto extent : shape_) {
        if (extent == 0) throw Error("Tensor: zero extent in shape " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw Error("Tensor: shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                    " values");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

double Tensor::item() const {
    if (data_.size() != 1) throw Error("Tensor::item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw Error("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) throw Error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape("max_abs_diff", a.shape(), b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace featshield
