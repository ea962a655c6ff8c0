#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/kdtree.hpp"
#include "arttrack/model.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

enum class GeoResidual {
  // Mean over points of the squared residual |T^-1 p - p_c|^2.
  Pointwise,
  // Squared norm of the mean residual: |mean(T^-1 p - p_c)|^2. Only pins the
  // part centroid; rotations are left to the kinematic term.
  Centroid,
};

inline const char* to_string(GeoResidual g) { return g == GeoResidual::Pointwise ? "pointwise" : "centroid"; }

inline GeoResidual geo_residual_from_string(const std::string& s) {
  if (s == "pointwise") return GeoResidual::Pointwise;
  if (s == "centroid") return GeoResidual::Centroid;
  throw ParseError("unknown geometric residual '" + s + "'");
}

struct KinOptConfig {
  int max_iterations = 50;
  double energy_tol = 1e-10;
  double step_tol = 1e-8;
  double kin_weight = 1.0;
  GeoResidual geo = GeoResidual::Pointwise;
  double fd_step = 1e-6;
  int max_halvings = 30;
  // Use nearest canonical points when a part cloud carries no correspondences.
  bool nearest_neighbor_fallback = true;
};

struct KinOptResult {
  std::vector<Pose> poses;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  int iterations = 0;
  bool stalled = false;  // no step reduced the energy on the first iteration
};

// Geometric + kinematic least-squares problem over per-part poses. Part k's
// pose is perturbed on the left: T_k <- exp(x_k) T_k.
class KinematicProblem {
 public:
  KinematicProblem(const std::vector<PointCloud>& observed, const ArticulatedModel& model, const KinOptConfig& cfg)
      : observed_(observed), model_(model), cfg_(cfg) {
    if (observed.size() != model.num_parts())
      throw LengthMismatch("need one observed cloud per part (" + std::to_string(model.num_parts()) + ")");
    targets_.resize(observed.size());
    trees_.resize(observed.size());
    for (std::size_t k = 0; k < observed.size(); ++k) {
      const PointCloud& obs = observed[k];
      const PointCloud& can = model.parts[k].canonical;
      if (obs.empty()) continue;
      if (obs.has_correspondence()) {
        targets_[k].reserve(obs.size());
        for (int c : obs.canonical_index) {
          if (c < 0 || static_cast<std::size_t>(c) >= can.size())
            throw MissingCorrespondence("canonical index out of range for part " + std::to_string(k));
          targets_[k].push_back(can.points[static_cast<std::size_t>(c)]);
        }
      } else if (cfg.nearest_neighbor_fallback) {
        trees_[k] = std::make_unique<KdTree>(can.points);
        needs_matching_ = true;
      } else {
        throw MissingCorrespondence("part " + std::to_string(k) + " has no canonical correspondences");
      }
    }
  }

  std::size_t num_parts() const { return observed_.size(); }
  std::size_t num_params() const { return 6 * num_parts(); }

  // Re-pairs every point with its nearest canonical point (fallback parts).
  void match(const std::vector<Pose>& poses) {
    if (!needs_matching_) return;
    for (std::size_t k = 0; k < observed_.size(); ++k) {
      if (!trees_[k]) continue;
      const Pose inv = inverse(poses[k]);
      const auto& can = model_.parts[k].canonical.points;
      targets_[k].resize(observed_[k].size());
      for (std::size_t n = 0; n < observed_[k].size(); ++n)
        targets_[k][n] = can[trees_[k]->nearest(apply(inv, observed_[k].points[n])).index];
    }
  }

  std::size_t geo_rows(std::size_t k) const {
    if (observed_[k].empty()) return 0;
    return cfg_.geo == GeoResidual::Pointwise ? 3 * observed_[k].size() : 3;
  }

  std::size_t num_residuals() const {
    std::size_t m = 3 * model_.joints.size();
    for (std::size_t k = 0; k < num_parts(); ++k) m += geo_rows(k);
    return m;
  }

  void geo_block(std::size_t k, const Pose& pose, Eigen::Ref<Eigen::VectorXd> out) const {
    const PointCloud& obs = observed_[k];
    if (obs.empty()) return;
    const Pose inv = inverse(pose);
    const double n = static_cast<double>(obs.size());
    if (cfg_.geo == GeoResidual::Pointwise) {
      const double s = 1.0 / std::sqrt(n);
      for (std::size_t i = 0; i < obs.size(); ++i)
        out.segment<3>(static_cast<Eigen::Index>(3 * i)) = s * (apply(inv, obs.points[i]) - targets_[k][i]);
    } else {
      Vec3 mean = Vec3::Zero();
      for (std::size_t i = 0; i < obs.size(); ++i) mean += apply(inv, obs.points[i]) - targets_[k][i];
      out.head<3>() = mean / n;
    }
  }

  Vec3 joint_residual(const Joint& j, const std::vector<Pose>& poses) const {
    const Pose& tp = poses[static_cast<std::size_t>(j.parent)];
    const Pose& tc = poses[static_cast<std::size_t>(j.child)];
    const double s = std::sqrt(cfg_.kin_weight);
    if (j.type == JointType::Revolute) return s * (apply(tp, j.axis_point) - apply(tc, j.axis_point));
    return s * (tp.rotation * j.axis_dir - tc.rotation * j.axis_dir);
  }

  Eigen::VectorXd residuals(const std::vector<Pose>& poses) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(num_residuals()));
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < num_parts(); ++k) {
      const auto m = static_cast<Eigen::Index>(geo_rows(k));
      geo_block(k, poses[k], r.segment(row, m));
      row += m;
    }
    for (const Joint& j : model_.joints) {
      r.segment<3>(row) = joint_residual(j, poses);
      row += 3;
    }
    return r;
  }

  double energy(const std::vector<Pose>& poses) const { return residuals(poses).squaredNorm(); }

  static std::vector<Pose> retract(const std::vector<Pose>& poses, const Eigen::VectorXd& x) {
    std::vector<Pose> out(poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k)
      out[k] = exp_map(Twist::from_vector(x.segment<6>(static_cast<Eigen::Index>(6 * k)))) * poses[k];
    return out;
  }

  // Central-difference Jacobian of residuals() with respect to the left
  // perturbation of every part.
  Eigen::MatrixXd jacobian(const std::vector<Pose>& poses) const {
    const auto m = static_cast<Eigen::Index>(num_residuals());
    const auto n = static_cast<Eigen::Index>(num_params());
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, n);
    const double h = cfg_.fd_step;
    std::vector<Eigen::Index> offset(num_parts());
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < num_parts(); ++k) {
      offset[k] = row;
      row += static_cast<Eigen::Index>(geo_rows(k));
    }
    const Eigen::Index joint_row = row;
    for (std::size_t k = 0; k < num_parts(); ++k) {
      const auto rows = static_cast<Eigen::Index>(geo_rows(k));
      Eigen::VectorXd plus(rows), minus(rows);
      for (int a = 0; a < 6; ++a) {
        Vec6 e = Vec6::Zero();
        e[a] = h;
        std::vector<Pose> pp = poses, pm = poses;
        pp[k] = exp_map(Twist::from_vector(e)) * poses[k];
        pm[k] = exp_map(Twist::from_vector(-e)) * poses[k];
        const auto col = static_cast<Eigen::Index>(6 * k + static_cast<std::size_t>(a));
        if (rows > 0) {
          geo_block(k, pp[k], plus);
          geo_block(k, pm[k], minus);
          jac.block(offset[k], col, rows, 1) = (plus - minus) / (2.0 * h);
        }
        Eigen::Index jr = joint_row;
        for (const Joint& j : model_.joints) {
          if (static_cast<std::size_t>(j.parent) == k || static_cast<std::size_t>(j.child) == k)
            jac.block<3, 1>(jr, col) = (joint_residual(j, pp) - joint_residual(j, pm)) / (2.0 * h);
          jr += 3;
        }
      }
    }
    return jac;
  }

 private:
  const std::vector<PointCloud>& observed_;
  const ArticulatedModel& model_;
  KinOptConfig cfg_;
  std::vector<std::vector<Vec3>> targets_;
  std::vector<std::unique_ptr<KdTree>> trees_;
  bool needs_matching_ = false;
};

inline double e_geo(const std::vector<Pose>& poses, const std::vector<PointCloud>& observed,
                    const ArticulatedModel& model, GeoResidual mode = GeoResidual::Pointwise) {
  KinOptConfig cfg;
  cfg.geo = mode;
  cfg.nearest_neighbor_fallback = false;
  cfg.kin_weight = 0.0;
  KinematicProblem prob(observed, model, cfg);
  return prob.energy(poses);
}

inline double e_kin(const std::vector<Pose>& poses, const ArticulatedModel& model) {
  double e = 0.0;
  for (const Joint& j : model.joints) {
    const Pose& tp = poses.at(static_cast<std::size_t>(j.parent));
    const Pose& tc = poses.at(static_cast<std::size_t>(j.child));
    if (j.type == JointType::Revolute)
      e += (apply(tp, j.axis_point) - apply(tc, j.axis_point)).squaredNorm();
    else
      e += (tp.rotation * j.axis_dir - tc.rotation * j.axis_dir).squaredNorm();
  }
  return e;
}

// Damped Gauss-Newton on E_geo + w * E_kin with backtracking; only steps that
// lower the energy are taken, so the result never scores worse than `coarse`.
inline KinOptResult optimize(const std::vector<Pose>& coarse, const std::vector<PointCloud>& observed,
                             const ArticulatedModel& model, const KinOptConfig& cfg = {}) {
  if (coarse.size() != model.num_parts()) throw LengthMismatch("need one coarse pose per part");
  KinematicProblem prob(observed, model, cfg);
  KinOptResult res;
  res.poses = coarse;
  prob.match(res.poses);
  double energy = prob.energy(res.poses);
  res.initial_energy = energy;
  const auto n = static_cast<Eigen::Index>(prob.num_params());

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const Eigen::VectorXd r = prob.residuals(res.poses);
    const Eigen::MatrixXd jac = prob.jacobian(res.poses);
    const Eigen::VectorXd g = jac.transpose() * r;
    Eigen::MatrixXd h = jac.transpose() * jac;
    const double damping = 1e-9 * (h.trace() / static_cast<double>(n)) + 1e-15;
    h.diagonal().array() += damping;
    const Eigen::VectorXd step = -h.ldlt().solve(g);
    if (!step.allFinite() || step.norm() < cfg.step_tol) break;

    bool accepted = false;
    double scale = 1.0;
    std::vector<Pose> candidate;
    double cand_energy = energy;
    for (int half = 0; half <= cfg.max_halvings; ++half, scale *= 0.5) {
      candidate = KinematicProblem::retract(res.poses, scale * step);
      cand_energy = prob.energy(candidate);
      if (cand_energy < energy) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (iter == 0) res.stalled = true;
      break;
    }
    const double drop = energy - cand_energy;
    res.poses = std::move(candidate);
    energy = cand_energy;
    ++res.iterations;
    prob.match(res.poses);
    energy = prob.energy(res.poses);
    if (drop < cfg.energy_tol || scale * step.norm() < cfg.step_tol) break;
  }
  res.final_energy = energy;
  return res;
}

}  // namespace arttrack
