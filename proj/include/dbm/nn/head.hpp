#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbm/rng.hpp"

namespace dbm::nn {

using Vec = std::vector<double>;

/// N_f x N_s block of per-segment features; column j belongs to segment j.
struct FeatureMatrix {
  int n_f = 0;
  int n_s = 0;
  std::vector<double> x;  // row-major: x[i * n_s + j]

  FeatureMatrix() = default;
  FeatureMatrix(int features, int segments, double fill = 0.0)
      : n_f(features), n_s(segments), x(static_cast<std::size_t>(features) * segments, fill) {}

  double& at(int i, int j) { return x[static_cast<std::size_t>(i) * n_s + j]; }
  double at(int i, int j) const { return x[static_cast<std::size_t>(i) * n_s + j]; }
  Vec column(int j) const;
  bool operator==(const FeatureMatrix&) const = default;
};

/// Trainable double-precision tensor owned by a head.
struct DParam {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> velocity;
  bool decay = true;
};

Vec softmax(const Vec& logits);
/// Lowest index wins ties.
int argmax(const Vec& v);

/// Arithmetic mean of per-segment score vectors.
Vec consensus_average(const std::vector<Vec>& per_segment_scores);

enum class Consensus { Average, Mlp, MaxP };
std::string to_string(Consensus c);
Consensus parse_consensus(const std::string& s);

/// Segment-level classifier that turns a FeatureMatrix into class scores.
///   Average: dropout -> shared fc per segment -> softmax -> mean.
///   Mlp:     flatten (segment-major) -> fc(64) -> ReLU -> dropout -> fc(C) -> softmax.
///   MaxP:    max over segments -> same perceptron as Mlp.
/// With pool_kernel k in (0, N_s), MaxP pools non-overlapping groups of k
/// segments and flattens the result instead of reducing fully.
class ConsensusHead {
 public:
  ConsensusHead() = default;
  ConsensusHead(Consensus kind, int n_f, int n_s, int n_classes, double dropout = 0.5, int hidden = 64,
                int pool_kernel = 0);

  Consensus kind() const { return kind_; }
  int n_features() const { return n_f_; }
  int n_segments() const { return n_s_; }
  int n_classes() const { return n_c_; }
  double dropout() const { return dropout_; }
  int pool_kernel() const { return pool_k_; }

  void initialize(Rng& rng);

  /// Class scores on the simplex. `rng` is needed only when train is true and dropout > 0.
  Vec forward(const FeatureMatrix& x, bool train = false, Rng* rng = nullptr);
  /// Gradient of -log p[label] for the last forward, scaled by `scale`.
  /// Accumulates parameter gradients and returns dLoss/dX.
  FeatureMatrix backward(int label, double scale = 1.0);
  /// -log p[label] of the last forward.
  double loss(int label) const;

  std::vector<DParam*> params();
  nlohmann::json config() const;
  static ConsensusHead from_config(const nlohmann::json& cfg);

  /// Pooled perceptron input for the last forward (MaxP only).
  const Vec& pooled() const { return in_; }

 private:
  int pooled_width() const;
  Vec pool(const FeatureMatrix& x);

  Consensus kind_ = Consensus::MaxP;
  int n_f_ = 0, n_s_ = 0, n_c_ = 0, hidden_ = 64, pool_k_ = 0;
  double dropout_ = 0.5;
  // Average: fc = (w1, b1) of shape C x N_f. Mlp/MaxP: w1 hidden x in, w2 C x hidden.
  DParam w1_, b1_, w2_, b2_;

  // forward cache
  FeatureMatrix x_;
  std::vector<int> arg_;      // MaxP: source column for each pooled entry
  Vec in_, h_, mask_, probs_;
  std::vector<Vec> seg_in_;
  std::vector<Vec> seg_probs_;
};

}  // namespace dbm::nn
