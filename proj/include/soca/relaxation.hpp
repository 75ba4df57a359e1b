#pragma once

// Second-order Taylor expansion of the AC flow equations around an operating
// point, the SOC-relaxed wind-integrated OPF assembly in the (v^2, theta)
// state space, polygonal branch-limit rows, rolling cutting planes, and the
// dual-value exactness diagnostic.

#include "soca/conic.hpp"
#include "soca/netmodel.hpp"
#include "soca/windcost.hpp"

#include <optional>
#include <string>
#include <vector>

namespace soca {

struct OperatingPoint {
    std::vector<double> v;      // per-bus magnitude, p.u.
    std::vector<double> theta;  // per-bus angle, rad; slack at 0

    double theta_diff(const PowerNetwork& net, std::size_t branch) const;
    static OperatingPoint flat(const PowerNetwork& net);
    // clamp magnitudes into [v_min, v_max]
    void project_into_bounds(const PowerNetwork& net);
};

// sin t ~ alpha1 t + alpha0; cos t ~ beta2 t^2 + beta1 t + beta0 around t_k
struct TaylorCoefficients {
    double alpha1 = 1.0, alpha0 = 0.0;
    double beta2 = -0.5, beta1 = 0.0, beta0 = 1.0;
    double approx_sin(double t) const { return alpha1 * t + alpha0; }
    double approx_cos(double t) const { return (beta2 * t + beta1) * t + beta0; }
};

TaylorCoefficients taylor_coefficients(double theta_k);

// per-direction constants of the expanded flow equations
struct FlowCoefficients {
    double gP = 0, bP = 0;        // active flow
    double bQ = 0, gQ = 0;        // reactive flow
    double bPloss = 0, gQloss = 0;  // quadratic-angle (loss) terms
};

struct BranchExpansion {
    FlowCoefficients ij, ji;
    double theta_k = 0.0;   // theta_i - theta_j at the expansion point
    double v_ik = 1.0, v_jk = 1.0;
};

// direction ji uses theta_ji,k = -theta_ij,k and its own coupling terms
BranchExpansion flow_coefficients(const BranchCoefficients& coeffs, double theta_k,
                                  double v_ik, double v_jk);

// relaxed flow value of Eq-style expansion given candidate variable values
struct ApproxFlowArgs {
    double u_self = 1.0;      // v^2 at the direction's own bus
    double phi_v = 1.0;
    double theta_dir = 0.0;   // theta_ij for direction ij (theta_ji for ji)
    double phi_theta = 0.0;
    double theta_k_dir = 0.0; // expansion angle in this direction's sense
};
double approx_branch_P(const FlowCoefficients& fc, double g_self, const ApproxFlowArgs& a);
double approx_branch_Q(const FlowCoefficients& fc, double b_self, const ApproxFlowArgs& a);

// tangent rows cos(psi_m) P + sin(psi_m) Q <= S_max, psi uniform over the arc
struct FlowLimitRow {
    double cos_psi = 1.0, sin_psi = 0.0, rhs = 0.0;
};
std::vector<FlowLimitRow> linearize_flow_limits(double S_max, int segments,
                                                double arc_start = 0.0,
                                                double arc_len = 6.283185307179586);

// rolling cutting planes: per-branch upper cut on phi_theta and lower cut on
// phi_v, tangent at the generation point with slack Delta
struct BranchCut {
    bool active = false;
    double delta_theta = 0.0, delta_v = 0.0;
    double theta_k = 0.0;     // tangent point (angle difference)
    double v_ik = 1.0, v_jk = 1.0;
};

struct CutSet {
    std::vector<BranchCut> cuts;  // one slot per branch
    double initial_delta = 1e-2;
    int active_count() const;
    void ensure_size(std::size_t n_branch);
    // halve this branch's deltas (first call arms them at initial_delta) and
    // re-tangent at the supplied point
    void tighten(std::size_t branch, const PowerNetwork& net, const OperatingPoint& point);
    // re-tangent all active cuts at a new point, keeping their deltas
    void roll(const PowerNetwork& net, const OperatingPoint& point);
};

struct SocaOptions {
    int flow_limit_segments = 16;
    double flow_limit_arc_start = 0.0;
    double flow_limit_arc_len = 6.283185307179586;
    double phi_theta_cap_scale = 1.0;  // cap = scale * (theta_max - theta_min)^2
};

// variable/row bookkeeping for one assembled problem
struct SocaIndex {
    int pg0 = 0, qg0 = 0;            // per generator
    int u0 = 0, th0 = 0;             // per bus
    int phiv0 = 0, phith0 = 0;       // per branch
    int pij0 = 0, qij0 = 0, pji0 = 0, qji0 = 0;  // per branch
    int wind_p0 = -1, wind_q0 = -1, wind_gamma0 = -1;  // per wind farm
    int n_gen = 0, n_bus = 0, n_branch = 0, n_wind = 0;

    int pg(int g) const { return pg0 + g; }
    int qg(int g) const { return qg0 + g; }
    int u(int b) const { return u0 + b; }
    int th(int b) const { return th0 + b; }
    int phi_v(int e) const { return phiv0 + e; }
    int phi_th(int e) const { return phith0 + e; }
    int p_ij(int e) const { return pij0 + e; }
    int q_ij(int e) const { return qij0 + e; }
    int p_ji(int e) const { return pji0 + e; }
    int q_ji(int e) const { return qji0 + e; }
    int wind_p(int w) const { return wind_p0 + w; }
    int wind_q(int w) const { return wind_q0 + w; }
    int wind_gamma(int w) const { return wind_gamma0 + w; }
};

struct SocaAudit {
    int n_vars = 0;
    int n_equalities = 0;      // balance + flow definitions + wind Q ties
    int n_balance_rows = 0;
    int n_flow_def_rows = 0;
    int n_wind_tie_rows = 0;
    int n_inequalities = 0;    // angle bounds + flow limits + PWL + cuts + caps
    int n_flow_limit_rows = 0;
    int n_cut_rows = 0;
    int n_pwl_rows = 0;
    int n_soc_blocks = 0;
};

struct SocaProblem {
    ConicProgram program;
    SocaIndex index;
    SocaAudit audit;
    std::vector<BranchExpansion> expansions;       // per branch
    std::vector<BranchCoefficients> coefficients;  // per branch
    // row ids for dual extraction
    std::vector<int> p_balance_row, q_balance_row;             // per bus
    std::vector<std::vector<int>> flow_limit_rows_ij, flow_limit_rows_ji;  // per branch
    std::vector<int> soc_v_block, soc_th_block;                // per branch
    OperatingPoint point;
};

// Assembles the full conic SOCA-OPF (wind terms included when farms are
// present; each farm needs a fitted GMM for its PWL cost).
SocaProblem assemble_soca_problem(const PowerNetwork& network, const OperatingPoint& point,
                                  const CutSet& cuts, const SocaOptions& options = {});

// per-branch relaxation gaps at a candidate primal point
struct RelaxationGap {
    double gap_theta = 0.0;  // phi_theta - theta_ij^2  (>= 0 at a cone point)
    double gap_v = 0.0;      // phi_v - sqrt(u_i u_j)   (<= 0 at a cone point)
    double combined() const { return gap_theta - gap_v; }
};
std::vector<RelaxationGap> relaxation_gaps(const SocaProblem& problem,
                                           const std::vector<double>& x,
                                           const PowerNetwork& network);

// Dual-value exactness test per branch. `lambda_p`/`lambda_q` are the
// marginal-price-oriented balance duals; flow-limit duals come from the
// polygon rows of the assembled problem.
struct ExactnessDiagnostic {
    double value = 0.0;
    bool positive = false;
    bool conclusive = false;
};
std::vector<ExactnessDiagnostic> exactness_condition(const SocaProblem& problem,
                                                     const ConicSolution& solution,
                                                     const PowerNetwork& network);

// classical lossless B-theta OPF; returns v = 1, theta = DC angles
struct DcOpfResult {
    OperatingPoint point;
    bool solved = false;
    std::string note;
};
DcOpfResult dc_opf_initializer(const PowerNetwork& network);

}  // namespace soca
