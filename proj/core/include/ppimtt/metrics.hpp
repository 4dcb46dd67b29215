#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppimtt {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
};

// Throws InvalidArgument on length mismatch, empty sets or labels outside {0,1}.
void validate(const ScoredSet& set);

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half. Throws DegenerateLabels.
double auc(const ScoredSet& set);

/// Un-interpolated AP over the ranking by descending score; equal scores keep
/// their input order. Throws DegenerateLabels when there is no positive.
double average_precision(const ScoredSet& set);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Prf1 {
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  double f1 = 0.0;         // percent
  ConfusionCounts counts;
};

/// Predicts positive iff score >= threshold.
Prf1 prf1(const ScoredSet& set, double threshold);

/// Precision within the top-#positives ranked items; precision, recall and F1
/// coincide by construction. Ties at the cut are broken by input order.
Prf1 r_precision(const ScoredSet& set);

Prf1 prf1_from_counts(const ConfusionCounts& counts);

enum class ThresholdMode { Threshold, RPrecision };

std::string_view to_string(ThresholdMode mode);

inline constexpr std::size_t kTopK = 10;

struct ExperimentReport {
  std::optional<double> auc;  // absent when a class is missing
  std::optional<double> ap;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  ConfusionCounts counts;
  std::vector<bool> topk;  // empty unless produced by a ranking
  ThresholdMode mode = ThresholdMode::Threshold;
};

ExperimentReport make_report(const ScoredSet& set, double threshold,
                             ThresholdMode mode = ThresholdMode::Threshold);

struct Candidate {
  std::string id;
  double score = 0.0;
};

/// 1-based rank of `true_id`; every other candidate scoring at least as high
/// counts against it. Throws UnknownProtein when absent.
std::size_t pessimistic_rank(std::span<const Candidate> candidates, std::string_view true_id);

/// hits[K-1] is true iff rank(true_id) <= K, for K = 1..max_k.
std::vector<bool> topk_hits(std::span<const Candidate> candidates, std::string_view true_id,
                            std::size_t max_k = kTopK);

/// Candidates ordered by descending score, then id.
std::vector<Candidate> rank_candidates(std::vector<Candidate> candidates);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
};

/// Welch's unequal-variance t-test. Throws DegenerateSample when a sample
/// has fewer than two values or both variances are zero.
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

struct SampleSummary {
  double mean = 0.0;
  double stddev = 0.0;  // n-1 denominator; 0 for a single value
};

SampleSummary summarize(std::span<const double> values);

}  // namespace ppimtt
