#pragma once

// Wind generation cost model: a Gaussian mixture fitted to historical output,
// closed-form shortage/surplus expectations via the mixture's truncated first
// moment, and a convex piecewise-linear under-approximation for the optimizer.

#include <cstdint>
#include <string>
#include <vector>

namespace soca {

struct GmmModel {
    std::vector<double> weights;   // sum to 1, positive
    std::vector<double> means;     // MW
    std::vector<double> stddevs;   // MW, > 0
    double support_max = 0.0;      // installed capacity P_max, MW

    int component_count() const { return static_cast<int>(weights.size()); }
    void validate() const;         // throws ValidationError

    double pdf(double x) const;
    double cdf(double x) const;    // Pr(X < x), monotone, in [0,1]
    double mean() const;
};

// E[X * 1{dn <= X <= up}] of a GMM:
//   sum_k w_k { s_k^2 [N_k(dn) - N_k(up)] + mu_k [Phi_k(up) - Phi_k(dn)] }.
// dn/up may be +-infinity.
double truncated_first_moment(const GmmModel& model, double dn, double up);

struct WindCost {
    double F_L = 0.0;    // expected shortage cost, $/h
    double F_H = 0.0;    // expected surplus cost, $/h
    double total = 0.0;
};

// Shortage cost k_L * Pr(X < Ps) * (Ps - E[X | X in [0, Ps]]) and surplus
// cost k_H * Pr(X > Ps) * (E[X | X in [Ps, Pmax]] - Ps). Probabilities below
// 1e-12 zero the corresponding term instead of dividing.
WindCost shortage_surplus_cost(const GmmModel& model, double P_schedule,
                               double k_L, double k_H, double P_max);

struct WindCostCurve {
    std::vector<double> P_schedule;  // MW grid
    std::vector<double> F_L, F_H, total;
    double k_L = 0.0, k_H = 0.0;
};

WindCostCurve wind_cost_curve(const GmmModel& model, double k_L, double k_H,
                              double lo, double hi, int points);

struct EmOptions {
    int max_iter = 500;
    double tol = 1e-9;          // relative log-likelihood improvement
    std::uint64_t seed = 1;
    double variance_floor_scale = 1e-6;  // floor = scale * range^2
};

struct EmFitResult {
    GmmModel model;
    std::vector<double> log_likelihood;  // one entry per EM iteration
    bool converged = false;
    int iterations = 0;
};

// EM fit with k-means++ initialization. Requires at least 10*K samples
// unless the sample set is degenerate (all identical), which falls back to a
// single floored-variance component.
EmFitResult fit_gmm_em(const std::vector<double>& samples, int K,
                       const EmOptions& opts = {});

struct PwlCost {
    std::vector<double> slopes;      // eta_l, nondecreasing
    std::vector<double> intercepts;  // chi_l
    double range_lo = 0.0, range_hi = 0.0;
    double max_gap = 0.0;            // max (curve - envelope) on the grid
    double convexify_deviation = 0.0;  // max (curve - convex hull) observed

    double evaluate(double x) const;  // max_l slopes[l]*x + intercepts[l]
};

// Convex PWL under-approximation of sampled curve values: tangents of the
// lower convex hull, end tangents always included, then greedy insertion at
// the worst gap until `segments` lines are used or `target_gap` is reached.
PwlCost build_pwl_from_samples(const std::vector<double>& xs,
                               const std::vector<double>& ys, int segments,
                               double target_gap = 0.0);

PwlCost build_pwl_cost(const GmmModel& model, double k_L, double k_H,
                       double lo, double hi, int segments,
                       int grid_points = 2001, double target_gap = 0.0);

// one column of MW values, optional header line
std::vector<double> load_wind_csv(const std::string& path);

std::string gmm_to_json(const GmmModel& model);
GmmModel gmm_from_json(const std::string& text);
GmmModel load_gmm_file(const std::string& path);

}  // namespace soca
