#include "ewmark/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <limits>

#include <Eigen/Dense>

#include "ewmark/errors.hpp"

namespace ewmark {
namespace metrics {

double delta_cos(const std::vector<ScoredSample>& scores) {
  double pos_sum = 0.0, neg_sum = 0.0;
  std::size_t pos_n = 0, neg_n = 0;
  for (const ScoredSample& s : scores) {
    if (s.group == Group::kPositive) {
      pos_sum += s.score;
      ++pos_n;
    } else {
      neg_sum += s.score;
      ++neg_n;
    }
  }
  if (pos_n == 0 || neg_n == 0) {
    throw EmptyGroupError("delta_cos needs at least one sample per group");
  }
  return (pos_sum / static_cast<double>(pos_n) -
          neg_sum / static_cast<double>(neg_n)) * 100.0;
}

double auc(const std::vector<ScoredSample>& scores) {
  std::size_t pos_n = 0, neg_n = 0;
  for (const ScoredSample& s : scores) {
    (s.group == Group::kPositive ? pos_n : neg_n)++;
  }
  if (pos_n == 0 || neg_n == 0) {
    throw EmptyGroupError("auc needs at least one sample per group");
  }
  // Average ranks with ties shared; the rank sum of the positive group
  // gives the Mann-Whitney U. Rank arithmetic stays in halves, so the
  // result matches brute-force pair counting exactly.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].score < scores[b].score;
  });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           scores[order[j]].score == scores[order[i]].score) {
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (scores[order[t]].group == Group::kPositive) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double u = pos_rank_sum -
                   static_cast<double>(pos_n) * (static_cast<double>(pos_n) + 1.0) / 2.0;
  return u / (static_cast<double>(pos_n) * static_cast<double>(neg_n)) * 100.0;
}

VerificationReport make_report(std::vector<ScoredSample> scores) {
  VerificationReport report;
  report.delta_cos = delta_cos(scores);
  report.auc = auc(scores);
  for (const ScoredSample& s : scores) {
    (s.group == Group::kPositive ? report.positives : report.negatives)++;
  }
  report.scores = std::move(scores);
  return report;
}

LinearProbe LinearProbe::fit(const std::vector<LabeledEmbedding>& train,
                             double ridge_lambda) {
  if (train.empty()) throw InvalidParamsError("empty training set");
  const std::size_t dim = train[0].values.size();
  int num_classes = 0;
  for (const LabeledEmbedding& e : train) {
    if (e.values.size() != dim) throw DimMismatchError("probe feature dims differ");
    if (e.label < 0) throw InvalidParamsError("negative class label");
    num_classes = std::max(num_classes, e.label + 1);
  }
  if (num_classes < 2) {
    throw InvalidParamsError("probe needs at least two classes in train");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  const Eigen::Index d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd x(n, d);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = train[i].values[k];
    y(i, train[i].label) = 1.0;
  }

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge_lambda;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) {
    throw SingularSystemError("normal equations are singular");
  }
  const Eigen::MatrixXd w = solver.solve(x.transpose() * y);  // d x classes
  if (ridge_lambda == 0.0) {
    const double residual = (gram * w - x.transpose() * y).norm();
    if (!(residual < 1e-6 * std::max(1.0, (x.transpose() * y).norm()))) {
      throw SingularSystemError(
          "lambda = 0 with collinear features; solution unreliable");
    }
  }

  LinearProbe probe;
  probe.dim_ = dim;
  probe.num_classes_ = num_classes;
  probe.weights_.resize(static_cast<std::size_t>(num_classes) * dim);
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < dim; ++k) {
      probe.weights_[static_cast<std::size_t>(c) * dim + k] =
          w(static_cast<Eigen::Index>(k), c);
    }
  }
  return probe;
}

int LinearProbe::predict(std::span<const double> x) const {
  if (x.size() != dim_) throw DimMismatchError("probe predict dim mismatch");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < num_classes_; ++c) {
    double s = 0.0;
    const double* row = weights_.data() + static_cast<std::size_t>(c) * dim_;
    for (std::size_t k = 0; k < dim_; ++k) s += row[k] * x[k];
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

UtilityReport LinearProbe::evaluate(const std::vector<LabeledEmbedding>& test) const {
  if (test.empty()) throw InvalidParamsError("empty test set");
  for (const LabeledEmbedding& e : test) {
    if (e.label >= num_classes_) {
      throw UnseenClassError("test label " + std::to_string(e.label) +
                             " unseen in training");
    }
  }
  std::vector<std::size_t> tp(num_classes_, 0), fp(num_classes_, 0),
      fn(num_classes_, 0);
  std::size_t correct = 0;
  for (const LabeledEmbedding& e : test) {
    const int pred = predict(e.values);
    if (pred == e.label) {
      ++correct;
      ++tp[pred];
    } else {
      ++fp[pred];
      ++fn[e.label];
    }
  }
  UtilityReport report;
  report.acc = static_cast<double>(correct) / static_cast<double>(test.size()) * 100.0;

  auto f1_of = [&](int c) {
    const double precision_den = static_cast<double>(tp[c] + fp[c]);
    const double recall_den = static_cast<double>(tp[c] + fn[c]);
    const double precision = precision_den > 0 ? tp[c] / precision_den : 0.0;
    const double recall = recall_den > 0 ? tp[c] / recall_den : 0.0;
    return (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall)
                                    : 0.0;
  };
  if (num_classes_ == 2) {
    report.f1 = f1_of(1) * 100.0;  // standard binary F1, class 1 positive
  } else {
    double sum = 0.0;
    for (int c = 0; c < num_classes_; ++c) sum += f1_of(c);
    report.f1 = sum / num_classes_ * 100.0;
  }
  return report;
}

UtilityReport utility_probe(const std::vector<LabeledEmbedding>& train,
                            const std::vector<LabeledEmbedding>& test,
                            double ridge_lambda) {
  return LinearProbe::fit(train, ridge_lambda).evaluate(test);
}

}  // namespace metrics
}  // namespace ewmark
