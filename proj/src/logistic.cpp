#include "ehrsig/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ehrsig/common.hpp"
#include "ehrsig/io.hpp"
#include "ehrsig/parallel.hpp"

namespace ehrsig {

namespace {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double log1pexp(double t) {
  if (t > 35.0) return t;
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

void validate_inputs(const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXi>& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("X rows must match y length");
  if (X.rows() == 0) throw std::invalid_argument("empty training set");
  if (!X.allFinite()) throw std::invalid_argument("non-finite feature matrix");
  int pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw std::invalid_argument("labels must be 0/1");
    pos += y[i];
  }
  if (pos == 0 || pos == y.size())
    throw std::invalid_argument("training labels are all one class");
}

}  // namespace

double enet_objective(const Eigen::Ref<const Eigen::MatrixXd>& X,
                      const Eigen::Ref<const Eigen::VectorXi>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& weights, double intercept,
                      double l1, double l2,
                      const Eigen::Ref<const Eigen::VectorXd>& l1_feature_weights) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd eta = X * weights;
  eta.array() += intercept;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += log1pexp(eta[i]) - y[i] * eta[i];
  loss /= static_cast<double>(n);
  double pen1 = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    const double pi = l1_feature_weights.size() ? l1_feature_weights[j] : 1.0;
    pen1 += pi * std::abs(weights[j]);
  }
  return loss + l1 * pen1 + 0.5 * l2 * weights.squaredNorm();
}

LogisticModel fit_enet_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::VectorXi>& y,
                                double l1, double l2, const EnetOptions& opts) {
  validate_inputs(X, y);
  if (l1 < 0 || l2 < 0) throw std::invalid_argument("penalties must be non-negative");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (opts.l1_feature_weights.size() && opts.l1_feature_weights.size() != d)
    throw std::invalid_argument("l1_feature_weights length mismatch");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd yd = y.cast<double>();

  Eigen::VectorXd col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = X.col(j).squaredNorm();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_4n = 0.25 * inv_n;

  Eigen::VectorXd u(n);  // linear-predictor change within a sweep
  std::vector<Eigen::Index> active;

  // Each sweep re-linearizes the loss at the current point and minimizes the
  // quadratic bound (curvature 1/4) coordinate by coordinate, so the true
  // penalized objective cannot increase across a sweep.
  auto run_sweep = [&](const std::vector<Eigen::Index>& coords) {
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(eta[i]);
    Eigen::VectorXd r0 = p - yd;
    u.setZero();
    double max_step = 0.0;

    // Intercept (unpenalized, curvature 1/4).
    {
      const double g = (r0.sum() + 0.25 * u.sum()) * inv_n;
      const double step = -4.0 * g;
      if (step != 0.0) {
        b += step;
        u.array() += step;
        max_step = std::max(max_step, std::abs(step));
      }
    }
    for (Eigen::Index j : coords) {
      if (col_sq[j] == 0.0) {  // constant-zero column: penalty says zero
        if (w[j] != 0.0) {
          max_step = std::max(max_step, std::abs(w[j]));
          w[j] = 0.0;
        }
        continue;
      }
      const double pi = opts.l1_feature_weights.size() ? opts.l1_feature_weights[j] : 1.0;
      const double a = inv_4n * col_sq[j] + l2;
      const double g_smooth = inv_n * X.col(j).dot(r0) + inv_4n * X.col(j).dot(u) + l2 * w[j];
      const double z = a * w[j] - g_smooth;
      const double v_new = soft_threshold(z, l1 * pi) / a;
      const double step = v_new - w[j];
      if (step != 0.0) {
        u += X.col(j) * step;
        w[j] = v_new;
        max_step = std::max(max_step, std::abs(step));
      }
    }
    eta += u;
    return max_step;
  };

  std::vector<Eigen::Index> all_coords(static_cast<size_t>(d));
  std::iota(all_coords.begin(), all_coords.end(), Eigen::Index{0});

  LogisticModel model;
  int sweeps = 0;
  bool converged = false;
  while (sweeps < opts.max_sweeps) {
    double step = run_sweep(all_coords);
    ++sweeps;
    if (opts.objective_trace)
      opts.objective_trace->push_back(
          enet_objective(X, y, w, b, l1, l2, opts.l1_feature_weights));
    if (step < opts.tol) {
      converged = true;
      break;
    }
    // Iterate on the active set before paying for the next full sweep.
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (w[j] != 0.0) active.push_back(j);
    while (sweeps < opts.max_sweeps && active.size() + 4 < static_cast<size_t>(d)) {
      double inner = run_sweep(active);
      ++sweeps;
      if (opts.objective_trace)
        opts.objective_trace->push_back(
            enet_objective(X, y, w, b, l1, l2, opts.l1_feature_weights));
      if (inner < opts.tol) break;
    }
  }
  if (!converged && sweeps >= opts.max_sweeps)
    log_warn("elastic-net solver hit the sweep cap (" + std::to_string(sweeps) + ")");

  model.weights = std::move(w);
  model.intercept = b;
  model.l1 = l1;
  model.l2 = l2;
  model.converged = converged;
  model.sweeps = sweeps;
  model.feature_ids.resize(static_cast<size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j)
    model.feature_ids[static_cast<size_t>(j)] = "f" + std::to_string(j);
  return model;
}

std::vector<int> sis_screen(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const Eigen::Ref<const Eigen::VectorXi>& y, int d) {
  if (d < 1) throw std::invalid_argument("screen size must be >= 1");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n != y.size()) throw std::invalid_argument("X rows must match y length");

  Eigen::VectorXd yc = y.cast<double>();
  yc.array() -= yc.mean();
  const double sy = yc.norm();

  std::vector<std::pair<double, int>> ranked(static_cast<size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd xc = X.col(j);
    xc.array() -= xc.mean();
    const double sx = xc.norm();
    double corr = 0.0;
    if (sx > 0 && sy > 0) corr = std::abs(xc.dot(yc) / (sx * sy));
    ranked[static_cast<size_t>(j)] = {corr, static_cast<int>(j)};
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const auto keep = static_cast<size_t>(std::min<Eigen::Index>(d, p));
  std::vector<int> out(keep);
  for (size_t i = 0; i < keep; ++i) out[i] = ranked[i].second;
  return out;
}

LogisticModel fit_adanet(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXi>& y,
                         const AdanetParams& params) {
  validate_inputs(X, y);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const int d = params.screen_size > 0 ? params.screen_size : default_screen_size(n);

  std::vector<int> screened = sis_screen(X, y, d);
  std::sort(screened.begin(), screened.end());
  Eigen::MatrixXd Xs(n, static_cast<Eigen::Index>(screened.size()));
  for (size_t j = 0; j < screened.size(); ++j) Xs.col(static_cast<Eigen::Index>(j)) = X.col(screened[j]);

  EnetOptions pilot_opts = params.enet;
  pilot_opts.l1_feature_weights.resize(0);
  pilot_opts.objective_trace = nullptr;
  LogisticModel pilot = fit_enet_logistic(Xs, y, params.pilot_l1, params.pilot_l2, pilot_opts);

  Eigen::VectorXd adaptive(Xs.cols());
  if (pilot.weights.cwiseAbs().maxCoeff() == 0.0) {
    log_warn("adaptive elastic net: pilot fit is all-zero; using uniform weights");
    adaptive.setOnes();
  } else {
    const double stabilizer = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < Xs.cols(); ++j)
      adaptive[j] = std::pow(std::abs(pilot.weights[j]) + stabilizer, -params.gamma);
  }

  EnetOptions final_opts = params.enet;
  final_opts.l1_feature_weights = adaptive;
  LogisticModel inner = fit_enet_logistic(Xs, y, params.l1, params.l2, final_opts);

  LogisticModel model;
  model.weights = Eigen::VectorXd::Zero(p);
  for (size_t j = 0; j < screened.size(); ++j)
    model.weights[screened[j]] = inner.weights[static_cast<Eigen::Index>(j)];
  model.intercept = inner.intercept;
  model.l1 = params.l1;
  model.l2 = params.l2;
  model.gamma = params.gamma;
  model.adaptive = true;
  model.screened = std::move(screened);
  model.converged = inner.converged;
  model.sweeps = inner.sweeps;
  model.feature_ids.resize(static_cast<size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j)
    model.feature_ids[static_cast<size_t>(j)] = "f" + std::to_string(j);
  return model;
}

double predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.weights.size())
    throw std::invalid_argument("predict_proba: dimension mismatch");
  return sigmoid(model.intercept + model.weights.dot(x));
}

Eigen::VectorXd predict_proba(const LogisticModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != model.weights.size())
    throw std::invalid_argument("predict_proba: dimension mismatch");
  Eigen::VectorXd eta = X * model.weights;
  eta.array() += model.intercept;
  return eta.unaryExpr([](double t) { return sigmoid(t); });
}

namespace {

// Stratified fold ids; every fold must keep both classes on both sides.
std::vector<int> stratified_folds(const Eigen::Ref<const Eigen::VectorXi>& y, int folds,
                                  std::uint64_t seed) {
  const Eigen::Index n = y.size();
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < n; ++i) (y[i] == 1 ? pos : neg).push_back(i);

  for (int attempt = 0; attempt < 20; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<int> fold(static_cast<size_t>(n));
    for (size_t i = 0; i < pos.size(); ++i) fold[static_cast<size_t>(pos[i])] = static_cast<int>(i % folds);
    for (size_t i = 0; i < neg.size(); ++i) fold[static_cast<size_t>(neg[i])] = static_cast<int>(i % folds);

    std::vector<int> fp(folds, 0), fn_(folds, 0);
    for (Eigen::Index i = 0; i < n; ++i) (y[i] == 1 ? fp : fn_)[static_cast<size_t>(fold[static_cast<size_t>(i)])]++;
    bool ok = true;
    for (int f = 0; f < folds; ++f) {
      const long tp = static_cast<long>(pos.size()) - fp[f];
      const long tn = static_cast<long>(neg.size()) - fn_[f];
      if (fp[f] == 0 || fn_[f] == 0 || tp == 0 || tn == 0) ok = false;
    }
    if (ok) return fold;
  }
  throw NumericalError("cannot build stratified folds with both classes everywhere");
}

}  // namespace

CvResult cv_auroc(const FitFunction& fit, const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXi>& y, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  validate_inputs(X, y);
  const Eigen::Index n = X.rows();
  std::vector<int> fold = stratified_folds(y, folds, seed);

  CvResult result;
  result.oof_scores.resize(n);
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train_idx, test_idx;
    for (Eigen::Index i = 0; i < n; ++i)
      (fold[static_cast<size_t>(i)] == f ? test_idx : train_idx).push_back(i);

    Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_idx.size()), X.cols());
    Eigen::VectorXi ytr(static_cast<Eigen::Index>(train_idx.size()));
    for (size_t i = 0; i < train_idx.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train_idx[i]];
    }
    LogisticModel model = fit(Xtr, ytr);

    ScoredSet held;
    held.scores.resize(static_cast<Eigen::Index>(test_idx.size()));
    held.labels.resize(static_cast<Eigen::Index>(test_idx.size()));
    for (size_t i = 0; i < test_idx.size(); ++i) {
      const double s = predict_proba(model, Eigen::VectorXd(X.row(test_idx[i])));
      held.scores[static_cast<Eigen::Index>(i)] = s;
      held.labels[static_cast<Eigen::Index>(i)] = y[test_idx[i]];
      result.oof_scores[test_idx[i]] = s;
    }
    result.fold_aurocs.push_back(auroc(held));
  }
  result.mean_auroc =
      std::accumulate(result.fold_aurocs.begin(), result.fold_aurocs.end(), 0.0) /
      static_cast<double>(folds);
  return result;
}

TrialParams SearchSpace::sample(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + unif(rng) * (std::log(hi) - std::log(lo)));
  };
  TrialParams p;
  p.l1 = log_uniform(l1_lo, l1_hi);
  p.l2 = log_uniform(l2_lo, l2_hi);
  p.adaptive = adaptive;
  if (adaptive) {
    p.gamma = gamma_lo + unif(rng) * (gamma_hi - gamma_lo);
    p.screen_size = screen_size;
  }
  return p;
}

FitFunction SearchSpace::make_fit(const TrialParams& params) const {
  if (!params.adaptive) {
    return [params](const Eigen::Ref<const Eigen::MatrixXd>& X,
                    const Eigen::Ref<const Eigen::VectorXi>& y) {
      return fit_enet_logistic(X, y, params.l1, params.l2);
    };
  }
  return [params](const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXi>& y) {
    AdanetParams ap;
    ap.screen_size = params.screen_size;
    ap.pilot_l1 = params.l1;
    ap.pilot_l2 = params.l2;
    ap.l1 = params.l1;
    ap.l2 = params.l2;
    ap.gamma = params.gamma;
    return fit_adanet(X, y, ap);
  };
}

TuningReport tune(const SearchSpace& space, const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXi>& y, int budget,
                  double alpha_filter, int b_oob, std::uint64_t seed, int folds, int jobs) {
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (alpha_filter <= 0.0 || alpha_filter >= 1.0)
    throw std::invalid_argument("alpha_filter must be in (0,1)");
  validate_inputs(X, y);

  TuningReport report;
  report.folds = folds;
  report.alpha_filter = alpha_filter;
  report.b_oob = b_oob;
  report.seed = seed;
  report.trials.resize(static_cast<size_t>(budget));

  const std::uint64_t fold_seed = derive_seed(seed, 0xF01D5EEDULL);

  // Step 1: seeded random search scored by k-fold CV AUROC, shared folds.
  parallel_for(budget, jobs, [&](int t) {
    Trial& trial = report.trials[static_cast<size_t>(t)];
    trial.params = space.sample(derive_seed(seed, static_cast<std::uint64_t>(t)));
    try {
      CvResult cv = cv_auroc(space.make_fit(trial.params), X, y, folds, fold_seed);
      trial.cv_auroc = cv.mean_auroc;
      trial.oof_scores = std::move(cv.oof_scores);
      trial.ok = true;
    } catch (const std::exception& e) {
      trial.ok = false;
      trial.error = e.what();
    }
  });

  std::vector<int> ok_trials;
  for (int t = 0; t < budget; ++t)
    if (report.trials[static_cast<size_t>(t)].ok) ok_trials.push_back(t);
  if (ok_trials.empty()) {
    std::string msg = "tuning failed: no trial converged;";
    for (const auto& trial : report.trials) msg += " [" + trial.error + "]";
    throw NumericalError(msg);
  }

  report.best_trial = *std::max_element(ok_trials.begin(), ok_trials.end(), [&](int a, int b) {
    return report.trials[static_cast<size_t>(a)].cv_auroc <
           report.trials[static_cast<size_t>(b)].cv_auroc;
  });

  // Step 2: keep candidates whose DeLong logistic CIs on pooled out-of-fold
  // scores overlap the best candidate's CI.
  const double level = 1.0 - alpha_filter;
  auto trial_ci = [&](int t) {
    ScoredSet s{report.trials[static_cast<size_t>(t)].oof_scores, y};
    return delong_ci_logistic(s, level);
  };
  MetricCI best_ci = trial_ci(report.best_trial);
  for (int t : ok_trials) {
    MetricCI ci = trial_ci(t);
    if (ci.lower <= best_ci.upper && best_ci.lower <= ci.upper)
      report.comparable.push_back(t);
  }

  // Step 3: mean out-of-bag AUROC over shared bootstrap refits.
  const Eigen::Index n = X.rows();
  struct Resample {
    std::vector<Eigen::Index> in_bag;
    std::vector<Eigen::Index> oob;
  };
  std::vector<Resample> resamples;
  resamples.reserve(static_cast<size_t>(b_oob));
  for (int b = 0; b < b_oob; ++b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 200)
        throw NumericalError("cannot draw a usable bootstrap resample");
      std::mt19937_64 rng(derive_seed(seed, 0x00B0000ULL + static_cast<std::uint64_t>(b) * 211 +
                                                static_cast<std::uint64_t>(attempt)));
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      std::vector<char> chosen(static_cast<size_t>(n), 0);
      Resample rs;
      rs.in_bag.resize(static_cast<size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index j = pick(rng);
        rs.in_bag[static_cast<size_t>(i)] = j;
        chosen[static_cast<size_t>(j)] = 1;
      }
      int in_pos = 0, oob_pos = 0, oob_neg = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[static_cast<size_t>(i)]) continue;
        rs.oob.push_back(i);
        (y[i] == 1 ? oob_pos : oob_neg)++;
      }
      for (Eigen::Index i : rs.in_bag) in_pos += y[i] == 1;
      if (in_pos == 0 || in_pos == n || oob_pos == 0 || oob_neg == 0) {
        continue;
      }
      resamples.push_back(std::move(rs));
      break;
    }
  }

  report.oob_mean.assign(report.comparable.size(), 0.0);
  parallel_for(static_cast<int>(report.comparable.size()), jobs, [&](int c) {
    const int t = report.comparable[static_cast<size_t>(c)];
    FitFunction fit = space.make_fit(report.trials[static_cast<size_t>(t)].params);
    double total = 0.0;
    int used = 0;
    for (const auto& rs : resamples) {
      Eigen::MatrixXd Xb(static_cast<Eigen::Index>(rs.in_bag.size()), X.cols());
      Eigen::VectorXi yb(static_cast<Eigen::Index>(rs.in_bag.size()));
      for (size_t i = 0; i < rs.in_bag.size(); ++i) {
        Xb.row(static_cast<Eigen::Index>(i)) = X.row(rs.in_bag[i]);
        yb[static_cast<Eigen::Index>(i)] = y[rs.in_bag[i]];
      }
      LogisticModel m;
      try {
        m = fit(Xb, yb);
      } catch (const std::exception&) {
        continue;  // skipped refit; counted via `used`
      }
      ScoredSet oob;
      oob.scores.resize(static_cast<Eigen::Index>(rs.oob.size()));
      oob.labels.resize(static_cast<Eigen::Index>(rs.oob.size()));
      for (size_t i = 0; i < rs.oob.size(); ++i) {
        oob.scores[static_cast<Eigen::Index>(i)] =
            predict_proba(m, Eigen::VectorXd(X.row(rs.oob[i])));
        oob.labels[static_cast<Eigen::Index>(i)] = y[rs.oob[i]];
      }
      total += auroc(oob);
      ++used;
    }
    if (used < (b_oob + 1) / 2)
      throw NumericalError("too many failed out-of-bag refits for a tuning candidate");
    report.oob_mean[static_cast<size_t>(c)] = total / static_cast<double>(used);
  });

  int winner_c = 0;
  for (size_t c = 1; c < report.comparable.size(); ++c)
    if (report.oob_mean[c] > report.oob_mean[static_cast<size_t>(winner_c)])
      winner_c = static_cast<int>(c);
  report.winner = report.comparable[static_cast<size_t>(winner_c)];

  report.final_model =
      space.make_fit(report.trials[static_cast<size_t>(report.winner)].params)(X, y);

  ScoredSet train_scored{predict_proba(report.final_model, X), y};
  DelongVariance dv = delong_variance(train_scored);
  report.train_auroc = dv.auc;
  const double z = normal_quantile(0.975);
  const double se = std::sqrt(dv.variance);
  report.train_auroc_wald = MetricCI{dv.auc, std::clamp(dv.auc - z * se, 0.0, 1.0),
                                     std::clamp(dv.auc + z * se, 0.0, 1.0), 0.95,
                                     CIMethod::Wald, dv.degenerate};
  return report;
}

void write_model(const LogisticModel& model, const std::string& path) {
  nlohmann::json j;
  j["weights"] = std::vector<double>(model.weights.data(),
                                     model.weights.data() + model.weights.size());
  j["intercept"] = model.intercept;
  j["feature_ids"] = model.feature_ids;
  j["hyperparameters"] = {{"l1", model.l1}, {"l2", model.l2}, {"gamma", model.gamma}};
  j["representation"] = model.representation;
  j["adaptive"] = model.adaptive;
  j["screened"] = model.screened;
  j["converged"] = model.converged;
  j["sweeps"] = model.sweeps;
  io::write_json_atomic(path, j);
}

LogisticModel read_model(const std::string& path) {
  nlohmann::json j = io::read_json(path);
  LogisticModel model;
  auto w = j.at("weights").get<std::vector<double>>();
  model.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  model.intercept = j.at("intercept").get<double>();
  model.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
  model.l1 = j.at("hyperparameters").at("l1").get<double>();
  model.l2 = j.at("hyperparameters").at("l2").get<double>();
  model.gamma = j.at("hyperparameters").at("gamma").get<double>();
  model.representation = j.at("representation").get<std::string>();
  model.adaptive = j.at("adaptive").get<bool>();
  model.screened = j.at("screened").get<std::vector<int>>();
  model.converged = j.at("converged").get<bool>();
  model.sweeps = j.at("sweeps").get<int>();
  return model;
}

void write_tuning_report(const TuningReport& report, const std::string& path) {
  nlohmann::json j;
  j["folds"] = report.folds;
  j["alpha_filter"] = report.alpha_filter;
  j["b_oob"] = report.b_oob;
  j["seed"] = report.seed;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : report.trials) {
    nlohmann::json e = {{"l1", t.params.l1},
                        {"l2", t.params.l2},
                        {"ok", t.ok},
                        {"cv_auroc", t.cv_auroc}};
    if (t.params.adaptive) {
      e["gamma"] = t.params.gamma;
      e["screen_size"] = t.params.screen_size;
    }
    if (!t.ok) e["error"] = t.error;
    j["trials"].push_back(e);
  }
  j["best_trial"] = report.best_trial;
  j["comparable"] = report.comparable;
  j["oob_mean"] = report.oob_mean;
  j["winner"] = report.winner;
  j["train_auroc"] = report.train_auroc;
  j["train_auroc_wald"] = {{"lower", report.train_auroc_wald.lower},
                           {"upper", report.train_auroc_wald.upper},
                           {"level", report.train_auroc_wald.level}};
  io::write_json_atomic(path, j);
}

}  // namespace ehrsig
