#include "dbm/nn/head.hpp"

#include <algorithm>
#include <cmath>

#include "dbm/error.hpp"

namespace dbm::nn {

using nlohmann::json;

Vec FeatureMatrix::column(int j) const {
  Vec c(n_f);
  for (int i = 0; i < n_f; ++i) c[i] = at(i, j);
  return c;
}

Vec softmax(const Vec& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= s;
  return p;
}

int argmax(const Vec& v) {
  if (v.empty()) throw ContractError("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Vec consensus_average(const std::vector<Vec>& per_segment_scores) {
  if (per_segment_scores.empty()) throw ContractError("consensus needs at least one segment");
  const std::size_t c = per_segment_scores.front().size();
  for (const auto& s : per_segment_scores)
    if (s.size() != c) throw ContractError("segment score vectors differ in length");
  // Each class is summed in sorted order so that segment order cannot change
  // the rounding, and equal inputs come back unchanged.
  const std::size_t n = per_segment_scores.size();
  Vec out(c, 0.0), column(n);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < n; ++j) column[j] = per_segment_scores[j][i];
    std::sort(column.begin(), column.end());
    if (column.front() == column.back()) {
      out[i] = column.front();
      continue;
    }
    double sum = 0.0;
    for (double v : column) sum += v;
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

std::string to_string(Consensus c) {
  switch (c) {
    case Consensus::Average: return "avg";
    case Consensus::Mlp: return "mlp";
    case Consensus::MaxP: return "maxp";
  }
  return "?";
}

Consensus parse_consensus(const std::string& s) {
  if (s == "avg" || s == "average") return Consensus::Average;
  if (s == "mlp") return Consensus::Mlp;
  if (s == "maxp" || s == "maxp-mlp") return Consensus::MaxP;
  throw SchemaError("unknown consensus '" + s + "' (expected avg, mlp or maxp)");
}

namespace {

DParam make(const std::string& name, std::size_t n, bool decay) {
  return DParam{name, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), decay};
}

void fill_normal(DParam& p, double stddev, Rng& rng) {
  for (auto& v : p.value) v = normal(rng, 0.0, stddev);
}

// y = W x + b for W of shape rows x cols
Vec affine(const DParam& w, const DParam& b, const Vec& x) {
  const std::size_t rows = b.value.size();
  const std::size_t cols = x.size();
  Vec y(b.value);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.value.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] += s;
  }
  return y;
}

// Accumulates dW += dy x^T, db += dy and returns W^T dy.
Vec affine_backward(DParam& w, DParam& b, const Vec& x, const Vec& dy) {
  const std::size_t cols = x.size();
  Vec dx(cols, 0.0);
  for (std::size_t r = 0; r < dy.size(); ++r) {
    if (dy[r] == 0.0) continue;
    double* gr = w.grad.data() + r * cols;
    const double* wr = w.value.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      gr[c] += dy[r] * x[c];
      dx[c] += wr[c] * dy[r];
    }
    b.grad[r] += dy[r];
  }
  return dx;
}

}  // namespace

ConsensusHead::ConsensusHead(Consensus kind, int n_f, int n_s, int n_classes, double dropout, int hidden,
                             int pool_kernel)
    : kind_(kind), n_f_(n_f), n_s_(n_s), n_c_(n_classes), hidden_(hidden), pool_k_(pool_kernel), dropout_(dropout) {
  if (n_f < 1 || n_s < 1 || n_classes < 1 || hidden < 1) throw ContractError("head dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout probability must be in [0, 1)");
  if (kind == Consensus::MaxP && pool_k_ > 0 && pool_k_ < n_s && n_s % pool_k_ != 0) {
    throw ContractError("pool kernel must divide the segment count");
  }
  if (kind == Consensus::Average) {
    w1_ = make("fc.weight", static_cast<std::size_t>(n_c_) * n_f_, true);
    b1_ = make("fc.bias", n_c_, false);
  } else {
    w1_ = make("fc1.weight", static_cast<std::size_t>(hidden_) * pooled_width(), true);
    b1_ = make("fc1.bias", hidden_, false);
    w2_ = make("fc2.weight", static_cast<std::size_t>(n_c_) * hidden_, true);
    b2_ = make("fc2.bias", n_c_, false);
  }
}

int ConsensusHead::pooled_width() const {
  switch (kind_) {
    case Consensus::Average: return n_f_;
    case Consensus::Mlp: return n_f_ * n_s_;
    case Consensus::MaxP:
      if (pool_k_ > 0 && pool_k_ < n_s_) return n_f_ * (n_s_ / pool_k_);
      return n_f_;
  }
  return n_f_;
}

void ConsensusHead::initialize(Rng& rng) {
  if (kind_ == Consensus::Average) {
    fill_normal(w1_, std::sqrt(1.0 / n_f_), rng);
    std::fill(b1_.value.begin(), b1_.value.end(), 0.0);
    return;
  }
  fill_normal(w1_, std::sqrt(2.0 / pooled_width()), rng);
  fill_normal(w2_, std::sqrt(1.0 / hidden_), rng);
  std::fill(b1_.value.begin(), b1_.value.end(), 0.0);
  std::fill(b2_.value.begin(), b2_.value.end(), 0.0);
}

Vec ConsensusHead::pool(const FeatureMatrix& x) {
  if (kind_ == Consensus::Mlp) {
    Vec v(static_cast<std::size_t>(n_f_) * n_s_);
    for (int j = 0; j < n_s_; ++j)
      for (int i = 0; i < n_f_; ++i) v[static_cast<std::size_t>(j) * n_f_ + i] = x.at(i, j);
    return v;
  }
  const int k = (pool_k_ > 0 && pool_k_ < n_s_) ? pool_k_ : n_s_;
  const int groups = n_s_ / k;
  Vec v(static_cast<std::size_t>(n_f_) * groups);
  arg_.assign(v.size(), 0);
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < n_f_; ++i) {
      int best = g * k;
      for (int j = g * k + 1; j < (g + 1) * k; ++j)
        if (x.at(i, j) > x.at(i, best)) best = j;
      v[static_cast<std::size_t>(g) * n_f_ + i] = x.at(i, best);
      arg_[static_cast<std::size_t>(g) * n_f_ + i] = best;
    }
  }
  return v;
}

Vec ConsensusHead::forward(const FeatureMatrix& x, bool train, Rng* rng) {
  if (x.n_f != n_f_) {
    throw ContractError("head expects " + std::to_string(n_f_) + " features, got " + std::to_string(x.n_f));
  }
  if (x.n_s != n_s_) {
    throw ContractError("head was built for " + std::to_string(n_s_) + " segments, got " + std::to_string(x.n_s));
  }
  for (double v : x.x)
    if (!std::isfinite(v)) throw ContractError("feature matrix has non-finite entries");
  const bool drop = train && dropout_ > 0.0;
  if (drop && rng == nullptr) throw ContractError("head dropout in train mode needs a random generator");
  const double keep = 1.0 / (1.0 - dropout_);
  x_ = x;

  if (kind_ == Consensus::Average) {
    seg_in_.assign(n_s_, Vec{});
    seg_probs_.assign(n_s_, Vec{});
    mask_.assign(drop ? static_cast<std::size_t>(n_f_) * n_s_ : 0, keep);
    for (int j = 0; j < n_s_; ++j) {
      Vec v = x.column(j);
      if (drop) {
        for (int i = 0; i < n_f_; ++i) {
          double& m = mask_[static_cast<std::size_t>(j) * n_f_ + i];
          m = uniform01(*rng) < dropout_ ? 0.0 : keep;
          v[i] *= m;
        }
      }
      seg_probs_[j] = softmax(affine(w1_, b1_, v));
      seg_in_[j] = std::move(v);
    }
    probs_ = consensus_average(seg_probs_);
    return probs_;
  }

  in_ = pool(x);
  h_ = affine(w1_, b1_, in_);
  for (auto& v : h_) v = v > 0.0 ? v : 0.0;
  Vec hd = h_;
  mask_.assign(drop ? h_.size() : 0, keep);
  if (drop) {
    for (std::size_t i = 0; i < hd.size(); ++i) {
      mask_[i] = uniform01(*rng) < dropout_ ? 0.0 : keep;
      hd[i] *= mask_[i];
    }
  }
  probs_ = softmax(affine(w2_, b2_, hd));
  return probs_;
}

double ConsensusHead::loss(int label) const {
  if (label < 0 || label >= n_c_) throw ContractError("label out of range");
  return -std::log(std::max(probs_[label], 1e-300));
}

FeatureMatrix ConsensusHead::backward(int label, double scale) {
  if (label < 0 || label >= n_c_) throw ContractError("label out of range");
  if (probs_.empty()) throw ContractError("head backward without forward");
  FeatureMatrix dx(n_f_, n_s_);

  if (kind_ == Consensus::Average) {
    const double py = std::max(probs_[label], 1e-300);
    for (int j = 0; j < n_s_; ++j) {
      const Vec& p = seg_probs_[j];
      Vec dz(n_c_);
      const double g = -scale / (n_s_ * py);
      for (int c = 0; c < n_c_; ++c) dz[c] = g * p[c] * ((c == label ? 1.0 : 0.0) - p[label]);
      Vec dv = affine_backward(w1_, b1_, seg_in_[j], dz);
      for (int i = 0; i < n_f_; ++i) {
        const double m = mask_.empty() ? 1.0 : mask_[static_cast<std::size_t>(j) * n_f_ + i];
        dx.at(i, j) = dv[i] * m;
      }
    }
    return dx;
  }

  Vec dz(probs_);
  dz[label] -= 1.0;
  for (auto& v : dz) v *= scale;
  Vec hd = h_;
  if (!mask_.empty())
    for (std::size_t i = 0; i < hd.size(); ++i) hd[i] *= mask_[i];
  Vec dh = affine_backward(w2_, b2_, hd, dz);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (!mask_.empty()) dh[i] *= mask_[i];
    if (h_[i] <= 0.0) dh[i] = 0.0;
  }
  Vec din = affine_backward(w1_, b1_, in_, dh);

  if (kind_ == Consensus::Mlp) {
    for (int j = 0; j < n_s_; ++j)
      for (int i = 0; i < n_f_; ++i) dx.at(i, j) = din[static_cast<std::size_t>(j) * n_f_ + i];
  } else {
    for (std::size_t e = 0; e < din.size(); ++e) {
      const int i = static_cast<int>(e % n_f_);
      dx.at(i, arg_[e]) += din[e];
    }
  }
  return dx;
}

std::vector<DParam*> ConsensusHead::params() {
  if (kind_ == Consensus::Average) return {&w1_, &b1_};
  return {&w1_, &b1_, &w2_, &b2_};
}

json ConsensusHead::config() const {
  return {{"consensus", to_string(kind_)}, {"n_f", n_f_},         {"n_s", n_s_},
          {"classes", n_c_},               {"dropout", dropout_}, {"hidden", hidden_},
          {"pool_kernel", pool_k_}};
}

ConsensusHead ConsensusHead::from_config(const json& cfg) {
  return ConsensusHead(parse_consensus(cfg.at("consensus").get<std::string>()), cfg.at("n_f").get<int>(),
                       cfg.at("n_s").get<int>(), cfg.at("classes").get<int>(), cfg.at("dropout").get<double>(),
                       cfg.at("hidden").get<int>(), cfg.value("pool_kernel", 0));
}

}  // namespace dbm::nn
