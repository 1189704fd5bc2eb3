#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dbm::nn {

/// 5-D activation shape [N, C, T, H, W]. 2D models use T = 1; vectors use T = H = W = 1.
struct Shape {
  int n = 1;
  int c = 1;
  int t = 1;
  int h = 1;
  int w = 1;

  std::size_t spatial() const { return static_cast<std::size_t>(t) * h * w; }
  std::size_t per_sample() const { return static_cast<std::size_t>(c) * spatial(); }
  std::size_t numel() const { return static_cast<std::size_t>(n) * per_sample(); }
  std::string str() const;

  bool operator==(const Shape&) const = default;
};

struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(s), data(s.numel(), fill) {}

  std::size_t size() const { return data.size(); }
  float* sample(int i) { return data.data() + i * shape.per_sample(); }
  const float* sample(int i) const { return data.data() + i * shape.per_sample(); }
};

// Row-major single-precision products; every variant accumulates into C.
// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c);
// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c);
// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c);

}  // namespace dbm::nn
