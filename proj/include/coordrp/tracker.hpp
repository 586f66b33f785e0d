#pragma once

// Linear-Gaussian target model and per-radar Kalman trackers.  The probe
// drives the state-noise covariance (Q_n = diag(alpha_n)) and each radar's
// allocation drives its measurement-noise covariance (R_n^i has eigenvalues
// 1/beta_n^i), so the allocation directly controls tracking accuracy.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "coordrp/dataset.hpp"

namespace coordrp::sim {

struct TargetModel {
  Eigen::MatrixXd A;       // state transition
  Eigen::MatrixXd C_obs;   // observation matrix
  Eigen::VectorXd x0;      // initial state mean
  Eigen::MatrixXd Sigma0;  // initial state covariance (positive definite)
};

// A = I, C_obs = I, x0 = 0, Sigma0 = I: isolates the covariance channels the
// probes and allocations actually modulate.
TargetModel default_target_model(int dim);

struct RadarTrack {
  std::vector<Eigen::VectorXd> measurements;    // y_n, n = 1..T
  std::vector<Eigen::VectorXd> innovations;     // y_n - C A xhat_{n-1}
  std::vector<Eigen::VectorXd> posterior_mean;  // xhat_n after the update
  std::vector<Eigen::MatrixXd> posterior_cov;   // P_n after the update
};

struct TrackResult {
  std::vector<Eigen::VectorXd> states;  // x_0 .. x_T (T + 1 entries)
  std::vector<RadarTrack> radars;       // one per agent
};

// Simulates x_{n+1} = A x_n + w_n with w_n ~ N(0, diag(alpha_n)), generates
// per-radar measurements y_n^i = C_obs x_n + v_n^i with v_n^i ~
// N(0, diag(1/beta_n^i)), and runs a standard Kalman predict/update per
// radar.  Deterministic given the seed.  Throws std::invalid_argument on
// shape mismatches, non-positive-definite covariance input (negative probe
// components, non-positive allocations, or Sigma0 without a Cholesky
// factor).  Zero probe components are allowed: they make the state noise
// singular but keep every filter step well posed.
TrackResult track(const TargetModel& model,
                  const std::vector<core::Probe>& probes,
                  const core::PersonalizedAllocation& allocations,
                  std::uint64_t seed);

}  // namespace coordrp::sim
