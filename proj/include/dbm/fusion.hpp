#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dbm::fusion {

using Scores = std::vector<double>;

/// Validation-set behaviour of one classifier.
struct ValidationStats {
  /// confusion[true][predicted]
  std::vector<std::vector<std::int64_t>> confusion;

  int num_classes() const { return static_cast<int>(confusion.size()); }
  /// Row-normalized diagonal; 0 for classes absent from validation.
  double recall(int c) const;
  double precision(int c) const;
  double accuracy() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ValidationStats from_json(const nlohmann::json& j);
};

/// Masses on the class singletons plus the whole frame (theta).
struct MassAssignment {
  std::vector<double> singleton;
  double theta = 0.0;

  double total() const;
};

struct Combination {
  MassAssignment mass;
  double conflict = 0.0;
};

struct FusionResult {
  Scores scores;
  /// Classes whose Bayesian weights were all zero and fell back to uniform.
  std::vector<int> uniform_weight_classes;
  /// DST hit total conflict and averaged instead.
  bool averaged_fallback = false;
  std::vector<std::string> warnings;
};

Scores fuse_average(const std::vector<Scores>& scores);

/// fused(c) proportional to sum_k recall_k(c) * s_k(c).
FusionResult fuse_bayesian(const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats);

/// m({c}) = r * s(c), m(theta) = 1 - r with r the validation accuracy.
MassAssignment scores_to_bpa(const Scores& s, const ValidationStats& stat);

/// Dempster's rule over singleton + theta focal sets. Throws TotalConflictError when K = 1.
Combination dempster_combine(const MassAssignment& a, const MassAssignment& b);

/// m({c}) + m(theta) / C, renormalized.
Scores pignistic(const MassAssignment& m);

FusionResult fuse_dst(const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats);

enum class Method { Average, Bayesian, Dst };
std::string to_string(Method m);
Method parse_method(const std::string& s);

FusionResult fuse(Method method, const std::vector<Scores>& scores, const std::vector<ValidationStats>& stats);

}  // namespace dbm::fusion
