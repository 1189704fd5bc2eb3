#include "dbm/fusion.hpp"

#include <cmath>

#include "dbm/error.hpp"

namespace dbm::fusion {

using nlohmann::json;

double ValidationStats::recall(int c) const {
  std::int64_t row = 0;
  for (auto v : confusion.at(c)) row += v;
  return row > 0 ? static_cast<double>(confusion[c][c]) / static_cast<double>(row) : 0.0;
}

double ValidationStats::precision(int c) const {
  std::int64_t col = 0;
  for (const auto& r : confusion) col += r.at(c);
  return col > 0 ? static_cast<double>(confusion[c][c]) / static_cast<double>(col) : 0.0;
}

double ValidationStats::accuracy() const {
  std::int64_t total = 0, diag = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    for (auto v : confusion[i]) total += v;
    diag += confusion[i][i];
  }
  return total > 0 ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
}

void ValidationStats::validate() const {
  if (confusion.empty()) throw ContractError("validation stats have no classes");
  for (const auto& r : confusion) {
    if (r.size() != confusion.size()) throw ContractError("confusion matrix is not square");
    for (auto v : r)
      if (v < 0) throw ContractError("negative confusion count");
  }
}

json ValidationStats::to_json() const { return {{"confusion", confusion}}; }

ValidationStats ValidationStats::from_json(const json& j) {
  ValidationStats s{j.at("confusion").get<std::vector<std::vector<std::int64_t>>>()};
  s.validate();
  return s;
}

double MassAssignment::total() const {
  double t = theta;
  for (double v : singleton) t += v;
  return t;
}

namespace {

std::size_t common_length(const std::vector<Scores>& scores) {
  if (scores.empty()) throw ContractError("fusion needs at least one score vector");
  const std::size_t c = scores.front().size();
  if (c == 0) throw ContractError("empty score vector");
  for (const auto& s : scores)
    if (s.size() != c) throw ContractError("score vectors differ in length");
  return c;
}

void check_stats(const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats, std::size_t c) {
  if (stats.size() != scores.size()) throw ContractError("need one stats record per classifier");
  for (const auto& s : stats) {
    s.validate();
    if (static_cast<std::size_t>(s.num_classes()) != c) throw ContractError("stats and scores differ in class count");
  }
}

void renormalize(Scores& s) {
  double sum = 0.0;
  for (double v : s) sum += v;
  if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12)
    for (auto& v : s) v /= sum;
}

}  // namespace

Scores fuse_average(const std::vector<Scores>& scores) {
  const std::size_t c = common_length(scores);
  Scores out(c, 0.0);
  for (const auto& s : scores)
    for (std::size_t i = 0; i < c; ++i) out[i] += s[i];
  for (auto& v : out) v /= static_cast<double>(scores.size());
  return out;
}

FusionResult fuse_bayesian(const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats) {
  const std::size_t c = common_length(scores);
  check_stats(scores, stats, c);
  const std::size_t k = scores.size();
  FusionResult r;
  r.scores.assign(c, 0.0);
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::vector<double> w(k);
    double total = 0.0;
    bool equal = true;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] = stats[i].recall(static_cast<int>(cls));
      total += w[i];
      equal = equal && w[i] == w[0];
    }
    if (total <= 0.0) {
      r.uniform_weight_classes.push_back(static_cast<int>(cls));
      r.warnings.push_back("class " + std::to_string(cls) + " has zero recall in every stream; using uniform weights");
      equal = true;
    }
    double v = 0.0;
    if (equal) {
      // Equal weights cancel; summing the same way as fuse_average keeps the two identical.
      for (std::size_t i = 0; i < k; ++i) v += scores[i][cls];
      v /= static_cast<double>(k);
    } else {
      for (std::size_t i = 0; i < k; ++i) v += w[i] * scores[i][cls];
      v /= total;
    }
    r.scores[cls] = v;
  }
  renormalize(r.scores);
  return r;
}

MassAssignment scores_to_bpa(const Scores& s, const ValidationStats& stat) {
  const double acc = stat.accuracy();
  MassAssignment m;
  m.singleton.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) m.singleton[i] = acc * s[i];
  m.theta = 1.0 - acc;
  return m;
}

Combination dempster_combine(const MassAssignment& a, const MassAssignment& b) {
  if (a.singleton.size() != b.singleton.size()) throw ContractError("mass assignments differ in frame size");
  const std::size_t c = a.singleton.size();
  Combination out;
  out.mass.singleton.resize(c);
  double norm = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    // {i} results from {i}&{i}, {i}&theta and theta&{i}
    const double v = a.singleton[i] * b.singleton[i] + a.singleton[i] * b.theta + a.theta * b.singleton[i];
    out.mass.singleton[i] = v;
    norm += v;
  }
  out.mass.theta = a.theta * b.theta;
  norm += out.mass.theta;
  if (!(norm > 0.0)) throw TotalConflictError("total conflict between mass assignments (K = 1)");
  for (auto& v : out.mass.singleton) v /= norm;
  out.mass.theta /= norm;
  out.conflict = 1.0 - norm;
  return out;
}

Scores pignistic(const MassAssignment& m) {
  const double share = m.singleton.empty() ? 0.0 : m.theta / static_cast<double>(m.singleton.size());
  Scores p(m.singleton.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = m.singleton[i] + share;
  if (sum > 0.0)
    for (auto& v : p) v /= sum;
  return p;
}

FusionResult fuse_dst(const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats) {
  const std::size_t c = common_length(scores);
  check_stats(scores, stats, c);
  FusionResult r;
  try {
    MassAssignment acc = scores_to_bpa(scores[0], stats[0]);
    for (std::size_t i = 1; i < scores.size(); ++i) acc = dempster_combine(acc, scores_to_bpa(scores[i], stats[i])).mass;
    r.scores = pignistic(acc);
  } catch (const TotalConflictError& e) {
    r.scores = fuse_average(scores);
    r.averaged_fallback = true;
    r.warnings.push_back(std::string(e.what()) + "; falling back to averaging");
  }
  return r;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Average: return "avg";
    case Method::Bayesian: return "bayes";
    case Method::Dst: return "dst";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "avg" || s == "average") return Method::Average;
  if (s == "bayes" || s == "bayesian") return Method::Bayesian;
  if (s == "dst") return Method::Dst;
  throw SchemaError("unknown fusion method '" + s + "' (expected avg, bayes or dst)");
}

FusionResult fuse(Method method, const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats) {
  switch (method) {
    case Method::Average: return FusionResult{fuse_average(scores), {}, false, {}};
    case Method::Bayesian: return fuse_bayesian(scores, stats);
    case Method::Dst: return fuse_dst(scores, stats);
  }
  throw ContractError("unknown fusion method");
}

}  // namespace dbm::fusion
