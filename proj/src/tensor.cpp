#include "depgraph/tensor.hpp"

#include <sstream>

#include "depgraph/errors.hpp"

namespace depgraph {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw DomainError("tensor " + shape_to_string(shape) + " given " + std::to_string(data.size()) + " values");
  }
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

std::vector<double> Matrix::row(std::size_t r) const {
  return {data.begin() + static_cast<std::ptrdiff_t>(r * cols),
          data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
}

}  // namespace depgraph
