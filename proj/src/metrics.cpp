#include "ehrsig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ehrsig/common.hpp"

namespace ehrsig {

namespace {

void require_both_classes(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size())
    throw std::invalid_argument("scores and labels differ in length");
  if (s.size() == 0) throw std::invalid_argument("empty scored set");
  int pos = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s.labels[i] != 0 && s.labels[i] != 1)
      throw std::invalid_argument("labels must be 0/1");
    pos += s.labels[i];
  }
  if (pos == 0 || pos == s.size())
    throw std::invalid_argument("both classes must be present");
}

// 1-based midranks of v.
std::vector<double> midranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double r = 0.5 * (i + j) + 1.0;  // average of 1-based positions
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

// DeLong placement values: V10 per positive, V01 per negative.
void placements(const ScoredSet& s, std::vector<double>& v10, std::vector<double>& v01) {
  std::vector<double> pos, neg, all;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    all.push_back(s.scores[i]);
    if (s.labels[i] == 1)
      pos.push_back(s.scores[i]);
    else
      neg.push_back(s.scores[i]);
  }
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  auto rank_all = midranks(all);
  auto rank_pos = midranks(pos);
  auto rank_neg = midranks(neg);

  v10.clear();
  v01.clear();
  size_t ip = 0, in = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s.labels[i] == 1) {
      v10.push_back((rank_all[static_cast<size_t>(i)] - rank_pos[ip++]) / n);
    } else {
      v01.push_back(1.0 - (rank_all[static_cast<size_t>(i)] - rank_neg[in++]) / m);
    }
  }
}

double sample_variance(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n < 2) return 0.0;
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n - 1);
}

double sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) ss += (a[i] - ma) * (b[i] - mb);
  return ss / static_cast<double>(n - 1);
}

}  // namespace

double auroc(const ScoredSet& scored) {
  require_both_classes(scored);
  std::vector<double> all(scored.scores.data(), scored.scores.data() + scored.size());
  auto ranks = midranks(all);
  double rank_sum = 0.0;
  long m = 0;
  for (Eigen::Index i = 0; i < scored.size(); ++i) {
    if (scored.labels[i] == 1) {
      rank_sum += ranks[static_cast<size_t>(i)];
      ++m;
    }
  }
  const long n = scored.size() - m;
  double u = rank_sum - static_cast<double>(m) * (m + 1) / 2.0;
  return u / (static_cast<double>(m) * static_cast<double>(n));
}

DelongVariance delong_variance(const ScoredSet& scored) {
  require_both_classes(scored);
  std::vector<double> v10, v01;
  placements(scored, v10, v01);
  if (v10.size() < 2 || v01.size() < 2)
    throw std::invalid_argument("delong_variance needs at least two per class");

  DelongVariance out;
  out.auc = std::accumulate(v10.begin(), v10.end(), 0.0) / static_cast<double>(v10.size());
  out.variance = sample_variance(v10) / static_cast<double>(v10.size()) +
                 sample_variance(v01) / static_cast<double>(v01.size());
  if (out.variance <= 0.0) {
    out.variance = 0.0;
    out.degenerate = true;
  }
  return out;
}

MetricCI delong_ci_logistic(const ScoredSet& scored, double level) {
  if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("level must be in (0,1)");
  DelongVariance dv = delong_variance(scored);
  const double se = std::sqrt(dv.variance);
  const double z = normal_quantile(0.5 + level / 2.0);

  MetricCI ci;
  ci.point = dv.auc;
  ci.level = level;
  if (dv.auc <= 0.0 || dv.auc >= 1.0) {
    ci.method = CIMethod::Wald;
    ci.degenerate = true;
    ci.lower = std::clamp(dv.auc - z * se, 0.0, 1.0);
    ci.upper = std::clamp(dv.auc + z * se, 0.0, 1.0);
    return ci;
  }
  ci.method = CIMethod::DelongLogistic;
  ci.degenerate = dv.degenerate;
  const double logit = std::log(dv.auc / (1.0 - dv.auc));
  const double se_logit = se / (dv.auc * (1.0 - dv.auc));
  const double lo = logit - z * se_logit;
  const double hi = logit + z * se_logit;
  ci.lower = 1.0 / (1.0 + std::exp(-lo));
  ci.upper = 1.0 / (1.0 + std::exp(-hi));
  return ci;
}

PairedTestResult delong_paired_test(const ScoredSet& a, const ScoredSet& b) {
  require_both_classes(a);
  require_both_classes(b);
  if (a.size() != b.size() || (a.labels.array() != b.labels.array()).any())
    throw std::invalid_argument("paired test requires identical instances and labels");

  std::vector<double> v10a, v01a, v10b, v01b;
  placements(a, v10a, v01a);
  placements(b, v10b, v01b);
  const double m = static_cast<double>(v10a.size());
  const double n = static_cast<double>(v01a.size());

  PairedTestResult out;
  out.auc_a = std::accumulate(v10a.begin(), v10a.end(), 0.0) / m;
  out.auc_b = std::accumulate(v10b.begin(), v10b.end(), 0.0) / m;

  double var_diff = (sample_variance(v10a) + sample_variance(v10b) -
                     2.0 * sample_covariance(v10a, v10b)) / m +
                    (sample_variance(v01a) + sample_variance(v01b) -
                     2.0 * sample_covariance(v01a, v01b)) / n;
  const double diff = out.auc_a - out.auc_b;
  if (var_diff <= 1e-300) {
    out.degenerate = true;
    out.z = 0.0;
    out.p_value = std::abs(diff) <= 1e-12 ? 1.0 : 0.0;
    return out;
  }
  out.z = diff / std::sqrt(var_diff);
  out.p_value = 2.0 * (1.0 - normal_cdf(std::abs(out.z)));
  return out;
}

double ici(const Eigen::Ref<const Eigen::VectorXd>& probs,
           const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Eigen::Index n = probs.size();
  if (labels.size() != n) throw std::invalid_argument("length mismatch");
  if (n < 10) throw std::invalid_argument("ici requires at least 10 instances");
  for (Eigen::Index i = 0; i < n; ++i)
    if (probs[i] < 0.0 || probs[i] > 1.0)
      throw std::invalid_argument("probabilities must lie in [0,1]");

  const double span = 0.75;
  const auto r = static_cast<Eigen::Index>(
      std::min<double>(static_cast<double>(n), std::max(2.0, std::ceil(span * static_cast<double>(n)))));

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return probs[a] < probs[b]; });
  Eigen::VectorXd x(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = probs[order[static_cast<size_t>(i)]];
    y[i] = labels[order[static_cast<size_t>(i)]];
  }

  double total = 0.0;
  Eigen::Index lo = 0;  // window [lo, lo + r)
  for (Eigen::Index i = 0; i < n; ++i) {
    // Slide the window of the r nearest neighbours in x around point i.
    while (lo + r < n && x[lo + r] - x[i] < x[i] - x[lo]) ++lo;
    const double dmax = std::max(x[i] - x[lo], x[lo + r - 1] - x[i]);

    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (Eigen::Index j = lo; j < lo + r; ++j) {
      double w;
      if (dmax <= 0.0) {
        w = 1.0;
      } else {
        double u = std::abs(x[j] - x[i]) / dmax;
        if (u > 1.0) continue;
        double c = 1.0 - u * u * u;
        w = c * c * c;
      }
      const double dx = x[j] - x[i];  // centered for stability
      sw += w;
      swx += w * dx;
      swy += w * y[j];
      swxx += w * dx * dx;
      swxy += w * dx * y[j];
    }
    double fitted;
    const double det = sw * swxx - swx * swx;
    if (std::abs(det) < 1e-14 * std::max(1.0, sw * swxx)) {
      fitted = swy / sw;  // degenerate window: weighted mean
    } else {
      const double intercept = (swxx * swy - swx * swxy) / det;
      fitted = intercept;  // local line evaluated at dx = 0
    }
    total += std::abs(fitted - x[i]);
  }
  return total / static_cast<double>(n);
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs,
                     const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Eigen::Index n = probs.size();
  if (labels.size() != n) throw std::invalid_argument("length mismatch");
  if (n == 0) throw std::invalid_argument("empty input");
  constexpr double eps = 1e-15;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(n);
}

MetricCI bootstrap_pivot_ci(const std::function<double(const ScoredSet&)>& metric,
                            const ScoredSet& scored, const BootstrapOptions& opts) {
  if (opts.replicates < 100)
    throw std::invalid_argument("bootstrap_pivot_ci requires at least 100 replicates");
  if (opts.level <= 0.0 || opts.level >= 1.0)
    throw std::invalid_argument("level must be in (0,1)");
  const Eigen::Index n = scored.size();
  if (n == 0) throw std::invalid_argument("empty scored set");

  const double point = metric(scored);
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

  std::vector<double> stats;
  stats.reserve(static_cast<size_t>(opts.replicates));
  long redraws = 0;
  const long redraw_cap = 10L * opts.replicates;
  ScoredSet resampled;
  resampled.scores.resize(n);
  resampled.labels.resize(n);
  while (stats.size() < static_cast<size_t>(opts.replicates)) {
    int pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = pick(rng);
      resampled.scores[i] = scored.scores[j];
      resampled.labels[i] = scored.labels[j];
      pos += resampled.labels[i];
    }
    if (opts.needs_both_classes && (pos == 0 || pos == n)) {
      if (++redraws > redraw_cap)
        throw NumericalError("bootstrap redraw cap exceeded; classes too imbalanced");
      continue;
    }
    stats.push_back(metric(resampled));
  }

  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double q) {
    const double h = q * (static_cast<double>(stats.size()) - 1.0);
    const auto i = static_cast<size_t>(std::floor(h));
    if (i + 1 >= stats.size()) return stats.back();
    return stats[i] + (h - static_cast<double>(i)) * (stats[i + 1] - stats[i]);
  };
  const double alpha = 1.0 - opts.level;

  MetricCI ci;
  ci.point = point;
  ci.level = opts.level;
  ci.method = CIMethod::BootstrapPivot;
  ci.lower = 2.0 * point - quantile(1.0 - alpha / 2.0);
  ci.upper = 2.0 * point - quantile(alpha / 2.0);
  ci.lower = std::clamp(ci.lower, opts.domain_lo, opts.domain_hi);
  ci.upper = std::clamp(ci.upper, opts.domain_lo, opts.domain_hi);
  if (ci.lower > point) {
    ci.lower = point;
    ci.degenerate = true;
  }
  if (ci.upper < point) {
    ci.upper = point;
    ci.degenerate = true;
  }
  return ci;
}

PointMetrics point_metrics(const ScoredSet& scored, double threshold) {
  if (scored.scores.size() != scored.labels.size())
    throw std::invalid_argument("length mismatch");
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (Eigen::Index i = 0; i < scored.size(); ++i) {
    const bool predicted = scored.scores[i] >= threshold;
    if (scored.labels[i] == 1) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
  }
  PointMetrics pm;
  pm.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  pm.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  if (tp + fp > 0) {
    pm.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    pm.precision = std::numeric_limits<double>::quiet_NaN();
    pm.precision_defined = false;
  }
  return pm;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double prob) {
  if (prob <= 0.0 || prob >= 1.0) throw std::invalid_argument("quantile prob in (0,1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - plow) {
    double q = prob - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Newton step against the exact CDF.
  const double e = normal_cdf(x) - prob;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return x - e / pdf;
}

}  // namespace ehrsig
