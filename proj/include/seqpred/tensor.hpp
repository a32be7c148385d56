#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqpred {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
// models need; the data length always matches the shape product.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shp) {
    Tensor t;
    t.shape = std::move(shp);
    t.data.assign(static_cast<std::size_t>(count(t.shape)), 0.0);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
  }

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
  }

  static Tensor from_matrix(int rows, int cols, std::vector<double> v) {
    if (static_cast<std::size_t>(rows) * cols != v.size())
      throw std::invalid_argument("Tensor::from_matrix: data length does not match " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    Tensor t;
    t.shape = {rows, cols};
    t.data = std::move(v);
    return t;
  }

  static std::int64_t count(const std::vector<int>& shp) {
    std::int64_t n = 1;
    for (int d : shp) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return shp.empty() ? 0 : n;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return ndim() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return ndim() == 1 && shape[0] == 1; }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_string(const Tensor& t) {
  std::string s = "{";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "}";
}

} // namespace seqpred
