#pragma once

// Self-training against fixed pseudo-labels with free per-view, per-column
// log-depth parameters standing in for the layout network. The objective is
// the mean over views of the weighted-distance loss; weights depend on the
// labels only and stay constant during optimization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "mlc/error.hpp"
#include "mlc/geometry.hpp"
#include "mlc/metrics.hpp"
#include "mlc/parallel.hpp"
#include "mlc/raycast.hpp"

namespace mlc {

struct ToyModelParams {
  double learning_rate = 1e-4;
  int steps = 100;
  double lr_decay = 0.9;
  int steps_per_epoch = 10;  // lr *= lr_decay after every epoch
  int max_backtracks = 40;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
            "learning_rate must be > 0");
    require(steps >= 0 && steps_per_epoch >= 1 && max_backtracks >= 0, ErrorKind::InvalidArgument,
            "steps, steps_per_epoch and max_backtracks must be non-negative (epoch >= 1)");
    require(lr_decay > 0.0 && lr_decay <= 1.0, ErrorKind::InvalidArgument, "lr_decay must be in (0, 1]");
  }
};

/// Per-view log-depths; depths are exp(params) and therefore always > 0.
using LogDepths = std::vector<std::vector<double>>;

class SelfTrainObjective {
 public:
  SelfTrainObjective(const Scene& scene, std::span<const PseudoLabel> labels, const LossParams& loss,
                     unsigned threads = 0)
      : labels_(labels.begin(), labels.end()), loss_(loss), threads_(threads) {
    loss.validate();
    require(!scene.views.empty(), ErrorKind::EmptyScene, "self-training needs at least one view");
    require(labels.size() == scene.views.size(), ErrorKind::InvalidArgument,
            "expected one label per view");
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      const auto& v = scene.views[i].layout;
      require(labels_[i].width() == v.width(), ErrorKind::InvalidWidth,
              "label '" + labels_[i].view_id + "' width differs from its view");
      const std::size_t valid = labels_[i].valid_count();
      require(valid > 0, ErrorKind::DegenerateLabel, "label '" + labels_[i].view_id + "' has no valid columns");
      require(2 * valid >= v.width(), ErrorKind::InvalidArgument,
              "label '" + labels_[i].view_id + "' is valid on fewer than half of its columns");
      heights_.push_back(v.camera_height);
      bearings_.push_back(columns_to_longitudes(v.width()));
      // Weights are a function of the labels alone.
      weights_.push_back(weighted_distance_loss(camera_points(v), labels_[i], loss_).weights);
    }
  }

  std::size_t views() const { return labels_.size(); }

  std::vector<Vec3> predictions(std::size_t i, std::span<const double> log_depth) const {
    std::vector<Vec3> pts(log_depth.size());
    for (std::size_t j = 0; j < pts.size(); ++j) {
      pts[j] = floor_point(std::exp(log_depth[j]), bearings_[i][j], heights_[i]);
    }
    return pts;
  }

  /// (1/n) * sum_i L_WD(view i).
  double value(const LogDepths& u) const {
    std::vector<double> per_view(views());
    parallel_for(views(), threads_, [&](std::size_t i) {
      per_view[i] = weighted_distance_loss(predictions(i, u[i]), labels_[i], loss_).value;
    });
    double total = 0.0;
    for (double v : per_view) total += v;
    return total / static_cast<double>(views());
  }

  /// Analytic (sub)gradient of value() with respect to the log-depths.
  LogDepths gradient(const LogDepths& u) const {
    LogDepths g(views());
    const double n = static_cast<double>(views());
    parallel_for(views(), threads_, [&](std::size_t i) {
      const auto pts = predictions(i, u[i]);
      const double count = static_cast<double>(labels_[i].valid_count());
      g[i].assign(u[i].size(), 0.0);
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (!labels_[i].valid(j)) continue;
        const Vec3 r = pts[j] - *labels_[i].points[j];
        const double d = std::exp(u[i][j]);
        // dy/du = d * (sin theta, 0, cos theta)
        const double dr = residual_slope(r.x(), loss_.huber_eps) * d * std::sin(bearings_[i][j]) +
                          residual_slope(r.z(), loss_.huber_eps) * d * std::cos(bearings_[i][j]);
        g[i][j] = weights_[i][j] * dr / (count * n);
      }
    });
    return g;
  }

  /// w_j * ||y_j - label_j||_1 for one column at log-depth u; 0 when invalid.
  /// value() is the mean of these per view, averaged over views.
  double column_term(std::size_t i, std::size_t j, double u) const {
    if (!labels_[i].valid(j)) return 0.0;
    const Vec3 r = floor_point(std::exp(u), bearings_[i][j], heights_[i]) - *labels_[i].points[j];
    const double eps = loss_.huber_eps;
    return weights_[i][j] *
           (residual_penalty(r.x(), eps) + residual_penalty(r.y(), eps) + residual_penalty(r.z(), eps));
  }

  const std::vector<double>& weights(std::size_t i) const { return weights_[i]; }
  unsigned threads() const { return threads_; }

 private:
  std::vector<PseudoLabel> labels_;
  LossParams loss_;
  unsigned threads_;
  std::vector<double> heights_;
  std::vector<std::vector<double>> bearings_;
  std::vector<std::vector<double>> weights_;
};

inline LogDepths log_depths_of(const Scene& scene) {
  LogDepths u;
  for (const auto& v : scene.views) {
    std::vector<double> row(v.layout.width());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::log(column_distance(v.layout, j));
    u.push_back(std::move(row));
  }
  return u;
}

struct SelfTrainResult {
  std::vector<LayoutView> views;
  std::vector<double> loss_trace;  // trace[0] is the starting loss
};

/// Full-batch subgradient descent with a backtracking line search. Every
/// parameter enters exactly one column term, so the search runs per column:
/// the trial step starts at the scheduled learning rate and is halved until
/// that column's term does not increase, otherwise the parameter stays put.
/// The total loss is a sum of these terms and therefore never increases.
inline SelfTrainResult selftrain(const Scene& scene, std::span<const PseudoLabel> labels,
                                 const ToyModelParams& params, const LossParams& loss,
                                 unsigned threads = 0) {
  params.validate();
  for (const auto& v : scene.views) v.layout.validate();
  const SelfTrainObjective objective(scene, labels, loss, threads);
  LogDepths u = log_depths_of(scene);
  SelfTrainResult result;
  result.loss_trace.push_back(objective.value(u));

  double lr = params.learning_rate;
  for (int step = 0; step < params.steps; ++step) {
    const LogDepths g = objective.gradient(u);
    parallel_for(u.size(), threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < u[i].size(); ++j) {
        if (g[i][j] == 0.0) continue;
        const double current = objective.column_term(i, j, u[i][j]);
        double trial_lr = lr;
        for (int attempt = 0; attempt <= params.max_backtracks; ++attempt, trial_lr /= 2.0) {
          const double trial = u[i][j] - trial_lr * g[i][j];
          if (objective.column_term(i, j, trial) <= current) {
            u[i][j] = trial;
            break;
          }
        }
      }
    });
    result.loss_trace.push_back(objective.value(u));
    if ((step + 1) % params.steps_per_epoch == 0) lr *= params.lr_decay;
  }

  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    LayoutView v = scene.views[i].layout;
    for (std::size_t j = 0; j < v.width(); ++j) {
      const double d = std::exp(u[i][j]);
      v.values[j] = v.repr == Representation::SphericalBoundary ? std::atan2(v.camera_height, d) : d;
    }
    result.views.push_back(std::move(v));
  }
  return result;
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences (step 1e-6 relative to each parameter). Each
/// parameter enters exactly one column term, so the difference is taken on
/// that term scaled by its share of value(); differencing the full sum
/// would bury small partials under rounding of the large total. The part of
/// a discrepancy within the quotient's own rounding error is not counted,
/// which matters where two L1 slopes cancel and the exact partial is zero.
inline double gradient_check(const Scene& scene, std::span<const PseudoLabel> labels, const LossParams& loss) {
  require(loss.huber_eps > 0.0, ErrorKind::InvalidArgument, "gradient check needs huber_eps > 0");
  const SelfTrainObjective objective(scene, labels, loss, 1);
  const LogDepths u = log_depths_of(scene);
  const LogDepths g = objective.gradient(u);
  double scale = 0.0;
  for (const auto& row : g) {
    for (double x : row) scale = std::max(scale, std::abs(x));
  }
  const double floor = std::max(1e-10 * scale, 1e-300);
  const double n = static_cast<double>(objective.views());
  double worst = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double share = 1.0 / (static_cast<double>(labels[i].valid_count()) * n);
    for (std::size_t j = 0; j < u[i].size(); ++j) {
      const double x = u[i][j];
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      const double up = objective.column_term(i, j, x + h), down = objective.column_term(i, j, x - h);
      const double fd = share * (up - down) / (2.0 * h);
      const double rounding = share * 8.0 * std::numeric_limits<double>::epsilon() * (std::abs(up) + std::abs(down)) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g[i][j]), floor});
      worst = std::max(worst, std::max(0.0, std::abs(fd - g[i][j]) - rounding) / denom);
    }
  }
  return worst;
}

}  // namespace mlc
