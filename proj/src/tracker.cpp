#include "coordrp/tracker.hpp"

#include <stdexcept>
#include <string>

#include "coordrp/rng.hpp"

namespace coordrp::sim {

namespace {

Eigen::VectorXd standard_normal(Rng& rng, int dim) {
  Eigen::VectorXd z(dim);
  for (int k = 0; k < dim; ++k) z(k) = rng.normal();
  return z;
}

}  // namespace

TargetModel default_target_model(int dim) {
  if (dim < 1) throw std::invalid_argument("default_target_model: dim must be >= 1");
  TargetModel model;
  model.A = Eigen::MatrixXd::Identity(dim, dim);
  model.C_obs = Eigen::MatrixXd::Identity(dim, dim);
  model.x0 = Eigen::VectorXd::Zero(dim);
  model.Sigma0 = Eigen::MatrixXd::Identity(dim, dim);
  return model;
}

TrackResult track(const TargetModel& model,
                  const std::vector<core::Probe>& probes,
                  const core::PersonalizedAllocation& allocations,
                  std::uint64_t seed) {
  const int N = static_cast<int>(model.A.rows());
  if (model.A.cols() != N || model.C_obs.rows() != N || model.C_obs.cols() != N ||
      model.x0.size() != N || model.Sigma0.rows() != N || model.Sigma0.cols() != N)
    throw std::invalid_argument("track: model matrices must all be N x N");
  const int T = static_cast<int>(probes.size());
  if (T < 1) throw std::invalid_argument("track: at least one probe required");
  if (allocations.horizon != T)
    throw std::invalid_argument("track: allocations horizon disagrees with probes");
  if (allocations.num_goods != N)
    throw std::invalid_argument("track: allocations dimension disagrees with model");
  const int M = allocations.num_agents;
  if (M < 1) throw std::invalid_argument("track: at least one radar required");

  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(probes[t].alpha.size()) != N)
      throw std::invalid_argument("track: probe dimension disagrees with model");
    for (double a : probes[t].alpha)
      if (!(a >= 0.0))
        throw std::invalid_argument(
            "track: state-noise covariance is not positive semidefinite");
    for (int i = 0; i < M; ++i)
      for (int k = 0; k < N; ++k)
        if (!(allocations.at(t, i, k) > 0.0))
          throw std::invalid_argument(
              "track: measurement-noise covariance is not positive definite");
  }

  const Eigen::LLT<Eigen::MatrixXd> sigma0_llt(model.Sigma0);
  if (sigma0_llt.info() != Eigen::Success)
    throw std::invalid_argument(
        "track: initial covariance is not positive definite");

  Rng rng(seed);
  TrackResult out;
  out.states.reserve(T + 1);
  out.states.push_back(model.x0 +
                       sigma0_llt.matrixL() * standard_normal(rng, N));

  out.radars.resize(M);
  std::vector<Eigen::VectorXd> xhat(M, model.x0);
  std::vector<Eigen::MatrixXd> P(M, model.Sigma0);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(N, N);

  for (int n = 0; n < T; ++n) {
    Eigen::VectorXd q_std(N);
    for (int k = 0; k < N; ++k) q_std(k) = std::sqrt(probes[n].alpha[k]);
    const Eigen::VectorXd x_next =
        model.A * out.states.back() +
        q_std.cwiseProduct(standard_normal(rng, N));
    out.states.push_back(x_next);

    const Eigen::MatrixXd Q = q_std.cwiseProduct(q_std).asDiagonal();
    for (int i = 0; i < M; ++i) {
      Eigen::VectorXd r_diag(N);
      for (int k = 0; k < N; ++k) r_diag(k) = 1.0 / allocations.at(n, i, k);
      const Eigen::VectorXd y =
          model.C_obs * x_next +
          r_diag.cwiseSqrt().cwiseProduct(standard_normal(rng, N));

      const Eigen::VectorXd x_pred = model.A * xhat[i];
      const Eigen::MatrixXd p_pred =
          model.A * P[i] * model.A.transpose() + Q;
      const Eigen::VectorXd innovation = y - model.C_obs * x_pred;
      const Eigen::MatrixXd R = r_diag.asDiagonal();
      const Eigen::MatrixXd S =
          model.C_obs * p_pred * model.C_obs.transpose() + R;
      const Eigen::LLT<Eigen::MatrixXd> s_llt(S);
      if (s_llt.info() != Eigen::Success)
        throw std::invalid_argument(
            "track: innovation covariance is not positive definite");
      // K = P C' S^{-1}, computed through the Cholesky factor of S.
      const Eigen::MatrixXd gain =
          s_llt.solve(model.C_obs * p_pred.transpose()).transpose();
      xhat[i] = x_pred + gain * innovation;
      // Joseph form keeps the posterior covariance symmetric positive
      // semidefinite under roundoff.
      const Eigen::MatrixXd closed = identity - gain * model.C_obs;
      P[i] = closed * p_pred * closed.transpose() +
             gain * R * gain.transpose();

      out.radars[i].measurements.push_back(y);
      out.radars[i].innovations.push_back(innovation);
      out.radars[i].posterior_mean.push_back(xhat[i]);
      out.radars[i].posterior_cov.push_back(P[i]);
    }
  }
  return out;
}

}  // namespace coordrp::sim
