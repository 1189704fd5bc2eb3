#include "dbm/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dbm::nn {

double MultiStepSchedule::lr(int epoch) const {
  const auto k = std::count_if(decay_epochs.begin(), decay_epochs.end(), [&](int d) { return d < epoch; });
  return base_lr * std::pow(factor, static_cast<double>(k));
}

namespace {

template <typename T>
void update(T* w, const T* g, T* v, std::size_t n, double lr, double wd, double momentum, double dampening,
            bool first) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(g[i]) + wd * static_cast<double>(w[i]);
    double vel = d;
    if (momentum != 0.0) {
      vel = first ? d : momentum * static_cast<double>(v[i]) + (1.0 - dampening) * d;
      v[i] = static_cast<T>(vel);
    }
    w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * vel);
  }
}

}  // namespace

void Sgd::step(const std::vector<Param*>& params, const std::vector<DParam*>& head, double lr) {
  const bool first = steps_ == 0;
  for (Param* p : params) {
    if (!p->trainable) continue;
    if (p->velocity.size() != p->value.size()) p->velocity = Tensor(p->value.shape);
    update(p->value.data.data(), p->grad.data.data(), p->velocity.data.data(), p->value.data.size(), lr,
           p->decay ? weight_decay_ : 0.0, momentum_, dampening_, first);
  }
  for (DParam* p : head) {
    if (p->velocity.size() != p->value.size()) p->velocity.assign(p->value.size(), 0.0);
    update(p->value.data(), p->grad.data(), p->velocity.data(), p->value.size(), lr, p->decay ? weight_decay_ : 0.0,
           momentum_, dampening_, first);
  }
  ++steps_;
}

void zero_grad(const std::vector<Param*>& params, const std::vector<DParam*>& head) {
  for (Param* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
  for (DParam* p : head) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

}  // namespace dbm::nn
