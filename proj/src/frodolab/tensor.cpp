#include "frodolab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace frodolab {

namespace detail {
namespace {

// One pool per thread so parallel seed workers never contend.
struct BufferPool {
  std::unordered_map<int64_t, std::vector<std::vector<double>>> by_size;
  int64_t held_bytes = 0;
  // Bound what an idle pool can pin; beyond this, donations are freed.
  static constexpr int64_t kMaxHeldBytes = int64_t{512} << 20;
};

BufferPool& pool() {
  thread_local BufferPool p;
  return p;
}

}  // namespace

std::vector<double> acquire_buffer(int64_t n) {
  if (n > 0) {
    auto& p = pool();
    auto it = p.by_size.find(n);
    if (it != p.by_size.end() && !it->second.empty()) {
      std::vector<double> v = std::move(it->second.back());
      it->second.pop_back();
      p.held_bytes -= n * static_cast<int64_t>(sizeof(double));
      return v;
    }
  }
  return std::vector<double>(static_cast<size_t>(n));
}

void release_buffer(std::vector<double>&& v) {
  const int64_t n = static_cast<int64_t>(v.size());
  if (n == 0) return;
  auto& p = pool();
  auto& bucket = p.by_size[n];
  const int64_t bytes = n * static_cast<int64_t>(sizeof(double));
  if (bucket.size() >= BufferPool::kMaxPerSize ||
      p.held_bytes + bytes > BufferPool::kMaxHeldBytes) {
    return;  // let it free
  }
  bucket.push_back(std::move(v));
  p.held_bytes += bytes;
}

}  // namespace detail

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (int64_t d : shape_) {
    if (d < 0) throw Error("negative dimension in shape " + shape_str(shape_));
  }
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw Error("shape " + shape_str(shape_) + " does not match data size " +
                std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::from_vector(std::vector<double> v) {
  Shape shape{static_cast<int64_t>(v.size())};
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::uninitialized(Shape shape) {
  for (int64_t d : shape) {
    if (d < 0) throw Error("negative dimension in shape " + shape_str(shape));
  }
  auto n = shape_numel(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = detail::acquire_buffer(n);
  return t;
}

void Tensor::throw_not_rank2(const char* what) const {
  throw Error(std::string(what) + " on tensor of shape " + shape_str(shape_));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace frodolab
