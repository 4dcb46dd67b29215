#include "ppimtt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "ppimtt/error.hpp"

namespace ppimtt {
namespace {

std::vector<std::size_t> descending_order(const ScoredSet& set) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return set.scores[i] > set.scores[j]; });
  return order;
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void validate(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) {
    fail(ErrorKind::InvalidArgument, "scores and labels differ in length");
  }
  if (set.scores.empty()) fail(ErrorKind::InvalidArgument, "empty scored set");
  for (int l : set.labels) {
    if (l != 0 && l != 1) fail(ErrorKind::InvalidArgument, "labels must be 0 or 1");
  }
  for (double s : set.scores) {
    if (std::isnan(s)) fail(ErrorKind::InvalidArgument, "NaN score");
  }
}

double auc(const ScoredSet& set) {
  validate(set);
  const std::size_t pos = set.positives();
  const std::size_t neg = set.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorKind::DegenerateLabels, "AUC needs both classes");

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return set.scores[i] < set.scores[j]; });

  // Twice the Mann-Whitney U, kept integral so ties are exact.
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_group = 0;
    std::uint64_t neg_group = 0;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
      set.labels[order[j]] == 1 ? ++pos_group : ++neg_group;
      ++j;
    }
    twice_u += 2 * pos_group * neg_below + pos_group * neg_group;
    neg_below += neg_group;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(const ScoredSet& set) {
  validate(set);
  const std::size_t pos = set.positives();
  if (pos == 0) fail(ErrorKind::DegenerateLabels, "AP needs at least one positive");
  const auto order = descending_order(set);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (set.labels[order[r]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(pos);
}

Prf1 prf1_from_counts(const ConfusionCounts& c) {
  Prf1 out;
  out.counts = c;
  out.precision = c.tp + c.fp == 0 ? 0.0 : 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  out.recall = c.tp + c.fn == 0 ? 0.0 : 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

Prf1 prf1(const ScoredSet& set, double threshold) {
  validate(set);
  ConfusionCounts c;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool predicted = set.scores[i] >= threshold;
    const bool actual = set.labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return prf1_from_counts(c);
}

Prf1 r_precision(const ScoredSet& set) {
  validate(set);
  const std::size_t k = set.positives();
  const auto order = descending_order(set);
  ConfusionCounts c;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const bool predicted = r < k;
    const bool actual = set.labels[order[r]] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return prf1_from_counts(c);
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::RPrecision ? "r_precision" : "threshold";
}

ExperimentReport make_report(const ScoredSet& set, double threshold, ThresholdMode mode) {
  validate(set);
  ExperimentReport r;
  r.mode = mode;
  const std::size_t pos = set.positives();
  if (pos > 0 && pos < set.size()) {
    r.auc = auc(set);
    r.ap = average_precision(set);
  } else if (pos > 0) {
    r.ap = average_precision(set);
  }
  Prf1 m;
  if (mode == ThresholdMode::RPrecision) {
    m = r_precision(set);
    const auto order = descending_order(set);
    r.threshold = pos > 0 ? set.scores[order[pos - 1]] : std::numeric_limits<double>::infinity();
  } else {
    m = prf1(set, threshold);
    r.threshold = threshold;
  }
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.counts = m.counts;
  return r;
}

std::size_t pessimistic_rank(std::span<const Candidate> candidates, std::string_view true_id) {
  const auto it = std::find_if(candidates.begin(), candidates.end(),
                               [&](const Candidate& c) { return c.id == true_id; });
  if (it == candidates.end()) {
    fail(ErrorKind::UnknownProtein, "true id '" + std::string(true_id) + "' is not a candidate");
  }
  std::size_t rank = 1;
  for (const auto& c : candidates) {
    if (&c != &*it && c.score >= it->score) ++rank;
  }
  return rank;
}

std::vector<bool> topk_hits(std::span<const Candidate> candidates, std::string_view true_id,
                            std::size_t max_k) {
  const std::size_t rank = pessimistic_rank(candidates, true_id);
  std::vector<bool> hits(max_k);
  for (std::size_t k = 1; k <= max_k; ++k) hits[k - 1] = rank <= k;
  return hits;
}

std::vector<Candidate> rank_candidates(std::vector<Candidate> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.id < y.id;
  });
  return candidates;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) fail(ErrorKind::InvalidArgument, "incomplete_beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::InvalidArgument, "incomplete_beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) fail(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

SampleSummary summarize(std::span<const double> values) {
  SampleSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    fail(ErrorKind::DegenerateSample, "each sample needs at least two values");
  }
  const auto sa = summarize(a);
  const auto sb = summarize(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double qa = sa.stddev * sa.stddev / na;
  const double qb = sb.stddev * sb.stddev / nb;
  const double se2 = qa + qb;
  if (!(se2 > 0.0)) fail(ErrorKind::DegenerateSample, "both samples have zero variance");

  TTestResult r;
  r.t = (sa.mean - sb.mean) / std::sqrt(se2);
  r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  r.p = student_t_two_tailed(r.t, r.df);
  return r;
}

}  // namespace ppimtt
