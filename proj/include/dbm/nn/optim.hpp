#pragma once

#include <vector>

#include "dbm/nn/head.hpp"
#include "dbm/nn/layers.hpp"

namespace dbm::nn {

/// Step-wise learning-rate decay. Epochs are 1-based: lr(e) = base * factor^k
/// where k counts the decay epochs strictly below e.
struct MultiStepSchedule {
  double base_lr = 0.001;
  double factor = 0.1;
  std::vector<int> decay_epochs{15, 30};

  double lr(int epoch) const;
};

/// SGD with momentum and dampening, matching the usual framework update:
///   d = g + wd * w;  v = d on the first step, else momentum * v + (1 - dampening) * d;  w -= lr * v
class Sgd {
 public:
  Sgd(double momentum, double dampening, double weight_decay)
      : momentum_(momentum), dampening_(dampening), weight_decay_(weight_decay) {}

  void step(const std::vector<Param*>& params, const std::vector<DParam*>& head, double lr);
  int steps() const { return steps_; }

 private:
  double momentum_, dampening_, weight_decay_;
  int steps_ = 0;
};

void zero_grad(const std::vector<Param*>& params, const std::vector<DParam*>& head);

}  // namespace dbm::nn
