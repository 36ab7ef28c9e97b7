#include "melfill/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "melfill/error.hpp"

namespace melfill::nn {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  require(data_.size() == shape_.numel(), ErrorCode::kShapeMismatch,
          "tensor: " + std::to_string(data_.size()) +
              " values do not fill shape " + shape_.str());
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace melfill::nn
