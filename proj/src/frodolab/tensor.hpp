#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace frodolab {

// Library-wide error type. Shape mismatches, bad configs and invalid
// arguments all surface as Error; numeric non-finiteness does not throw.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 and 2 are the
// only ranks the op set produces. Value semantics; cheap to move.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from_vector(std::vector<double> v);
  // Contents are unspecified (recycled buffers); every element must be
  // written before the tensor is read. Only for kernels that fully
  // overwrite their output.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }

  // Rank-2 accessors; dim(i) works for any rank. Kept inline with only the
  // failure path out of line: these sit in the innermost loops of every
  // tape kernel.
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t rows() const {
    if (shape_.size() != 2) throw_not_rank2("rows()");
    return shape_[0];
  }
  int64_t cols() const {
    if (shape_.size() != 2) throw_not_rank2("cols()");
    return shape_[1];
  }
  double& at(int64_t r, int64_t c) {
    if (shape_.size() != 2) throw_not_rank2("at()");
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }
  double at(int64_t r, int64_t c) const {
    if (shape_.size() != 2) throw_not_rank2("at()");
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }

  double item() const;
  bool all_finite() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  [[noreturn]] void throw_not_rank2(const char* what) const;

  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

// Thread-local buffer pool backing Tensor::uninitialized. Reusing an
// already-sized vector is the only way to hand out storage without the
// value-initialization pass a fresh std::vector<double> always performs.
// Tapes donate their node buffers back when they are destroyed, so the
// repeated identically-shaped graphs of a training loop hit the pool on
// every step after the first.
std::vector<double> acquire_buffer(int64_t n);
void release_buffer(std::vector<double>&& v);

}  // namespace detail

}  // namespace frodolab
