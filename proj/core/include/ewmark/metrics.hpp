#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ewmark/types.hpp"

namespace ewmark {
namespace metrics {

enum class Group { kPositive, kNegative };

struct ScoredSample {
  std::string id;
  double score = 0.0;  // cosine similarity
  Group group = Group::kPositive;
};

// Scores plus the summary metrics for one scheme/attack scenario.
// delta_cos and auc are in percent points.
struct VerificationReport {
  double delta_cos = 0.0;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<ScoredSample> scores;
};

struct UtilityReport {
  double acc = 0.0;  // percent
  double f1 = 0.0;   // percent; macro for multi-class, standard for binary
};

// (mean positive score - mean negative score) x 100.
double delta_cos(const std::vector<ScoredSample>& scores);

// Mann-Whitney AUC x 100: probability a random positive outranks a random
// negative, ties counted 1/2. Computed from average ranks.
double auc(const std::vector<ScoredSample>& scores);

VerificationReport make_report(std::vector<ScoredSample> scores);

// Closed-form ridge one-vs-rest linear probe:
//   W = (X^T X + lambda I)^-1 X^T Y   on one-hot labels,
// prediction is the argmax row. Deterministic, dependency-light stand-in
// for a trained MLP classifier.
struct LabeledEmbedding {
  std::vector<double> values;
  int label = 0;
};

class LinearProbe {
 public:
  // Throws SingularSystemError when lambda == 0 and the features are
  // collinear; UnseenClassError if test-time labels exceed the fitted range.
  static LinearProbe fit(const std::vector<LabeledEmbedding>& train,
                         double ridge_lambda);

  int predict(std::span<const double> x) const;
  int num_classes() const { return num_classes_; }

  UtilityReport evaluate(const std::vector<LabeledEmbedding>& test) const;

 private:
  std::vector<double> weights_;  // row-major num_classes x dim
  std::size_t dim_ = 0;
  int num_classes_ = 0;
};

UtilityReport utility_probe(const std::vector<LabeledEmbedding>& train,
                            const std::vector<LabeledEmbedding>& test,
                            double ridge_lambda);

}  // namespace metrics
}  // namespace ewmark
