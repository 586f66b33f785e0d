#pragma once

// Utility reconstruction from a coordination witness.  For each agent the
// revealed-preference inequalities
//
//    u_s - u_t <= lambda_t * alpha_t' (q_s - q_t)        for all s != t
//
// are solved by LP for positive numbers (u_t, lambda_t), and the concave,
// monotone, piecewise-linear utility
//
//    U(beta) = min_t { u_t + lambda_t * alpha_t' (beta - q_t) }
//
// is materialized from them.  The certificate is normalized (u, lambda >= 1,
// minimal total lambda) so reconstruction is deterministic, and the
// intercepts are polished to the exact fixpoint of the min-of-pieces
// recursion so that U(q_t) == u_t holds bitwise.

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coordrp/dataset.hpp"

namespace coordrp::afriat {

// Positivity floor used to normalize certificates.
inline constexpr double kPositivityFloor = 1.0;

// The witness does not admit a certificate (its revealed preferences are
// cyclic with a strict leg), or the polish failed to stabilize.
class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Afriat numbers for one agent: piece intercepts u_t and marginal utilities
// of expenditure lambda_t, both >= kPositivityFloor up to polish roundoff.
struct AfriatCertificate {
  std::vector<double> u;
  std::vector<double> lambda;
};

// Reconstructed utility: min over T affine pieces anchored at the agent's
// personalized bundles.  Immutable after construction; evaluation is pure.
class PiecewiseLinearUtility {
 public:
  PiecewiseLinearUtility(const core::Dataset& data,
                         const core::PersonalizedAllocation& witness,
                         int agent, const AfriatCertificate& certificate);

  // Value of piece t at beta: u_t + lambda_t * alpha_t' (beta - q_t).
  double piece_value(int t, std::span<const double> beta) const;

  // min_t piece_value(t, beta); beta must have one entry per good and be
  // componentwise nonnegative (up to the dataset feasibility tolerance, so
  // witness bundles straight out of the LP are valid inputs).
  double evaluate(std::span<const double> beta) const;

  int num_pieces() const { return static_cast<int>(u_.size()); }
  int num_goods() const { return num_goods_; }
  // Anchor bundle of piece t (the agent's personalized quantity).
  std::span<const double> anchor(int t) const;
  const std::vector<double>& intercepts() const { return u_; }
  const std::vector<double>& slopes() const { return lambda_; }

 private:
  friend AfriatCertificate solve_certificate(
      const core::Dataset& data, const core::PersonalizedAllocation& witness,
      int agent);

  int num_goods_ = 0;
  std::vector<double> u_;       // [T]
  std::vector<double> lambda_;  // [T]
  std::vector<double> alpha_;   // [T][N] anchor prices
  std::vector<double> anchor_;  // [T][N] anchor bundles
};

// Solves the revealed-preference inequalities for one agent of the witness
// and returns the normalized certificate (u, lambda >= 1, minimal total
// lambda, intercepts polished to the exact min-of-pieces fixpoint).  Throws
// CertificateError when no certificate exists and std::invalid_argument when
// the witness does not match the dataset.
AfriatCertificate solve_certificate(const core::Dataset& data,
                                    const core::PersonalizedAllocation& witness,
                                    int agent);

// Result of spot-checking that the witness maximizes the reconstructed
// group objective at every observation over sampled feasible alternatives.
struct RationalizationReport {
  long samples = 0;          // alternatives tested across all observations
  double max_violation = 0;  // worst improvement found over the witness
  int worst_observation = -1;
};

// For each observation t, compares the witness against K random feasible
// bundle profiles plus deterministic extremes (full budget on a single good
// for a single agent, and the witness itself).  Each agent's utility enters
// the observation-t objective scaled by 1 / lambda_t (the certificate's
// marginal utility of expenditure), which is the normalization that makes
// every agent's Pareto weight equal to one.
RationalizationReport rationalization_check(
    const core::Dataset& data, const core::PersonalizedAllocation& witness,
    std::span<const AfriatCertificate> certificates, int samples_per_obs,
    std::uint64_t seed);

// Rectangular evaluation grid for contour export (two goods only).
struct GridSpec {
  double b1_min = 0.0, b1_max = 1.0;
  double b2_min = 0.0, b2_max = 1.0;
  int n1 = 100, n2 = 100;
};

// Grid covering the utility's anchor bundles with a 10% margin on each side
// (clamped at zero), 100x100.
GridSpec default_grid(const PiecewiseLinearUtility& utility);

// Writes "beta1,beta2,utility" rows, beta1 varying slowest, beta1 and beta2
// ascending.  Throws std::invalid_argument unless the utility has two goods
// and the grid has positive resolution.
void export_contour(const PiecewiseLinearUtility& utility, const GridSpec& grid,
                    std::ostream& out);
void write_contour_csv(const PiecewiseLinearUtility& utility,
                       const GridSpec& grid, const std::string& path);

// Certificate serialization: {"agent": <display index>, "u": [...],
// "lambda": [...]}.
std::string certificate_to_json(const AfriatCertificate& certificate,
                                int display_agent);
AfriatCertificate certificate_from_json(const std::string& text);
void write_certificate_json(const AfriatCertificate& certificate,
                            int display_agent, const std::string& path);

}  // namespace coordrp::afriat
