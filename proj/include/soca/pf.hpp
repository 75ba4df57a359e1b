#pragma once

// Exact AC power flow: branch flow evaluation, Newton-Raphson solution,
// AC feasibility restoration of approximate solutions, and error reports.

#include "soca/netmodel.hpp"

#include <string>
#include <vector>

namespace soca {

struct VoltageState {
    std::vector<double> v;      // per-bus magnitude, p.u.
    std::vector<double> theta;  // per-bus angle, rad; slack fixed at 0
};

struct BranchFlow {
    double P_ij = 0, Q_ij = 0;  // from -> to
    double P_ji = 0, Q_ji = 0;  // to -> from
    double P_loss() const { return P_ij + P_ji; }
    double Q_loss() const { return Q_ij + Q_ji; }
};

// Four flow values per branch from Eq.-exact trigonometric expressions.
std::vector<BranchFlow> exact_branch_flows(const PowerNetwork& network,
                                           const VoltageState& state);

struct GenOutput {
    double P = 0, Q = 0;  // p.u.
};

enum class PfStatus { Converged, Diverged, SingularJacobian };

struct PowerFlowSolution {
    VoltageState state;
    std::vector<BranchFlow> branch_flows;
    std::vector<GenOutput> gen_outputs;
    PfStatus status = PfStatus::Diverged;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;  // p.u.
    std::vector<std::string> notes;
};

struct NewtonOptions {
    double tol = 1e-8;   // infinity-norm mismatch, p.u.
    int max_iter = 30;
};

// Per-bus scheduled injections for a power-flow problem. Positive injection
// means power flowing into the network at that bus.
struct PfSpec {
    std::vector<BusType> bus_type;   // effective types for this solve
    std::vector<double> P_inject;    // net scheduled P at PQ and PV buses
    std::vector<double> Q_inject;    // net scheduled Q at PQ buses
    std::vector<double> v_set;       // magnitude at PV and slack buses
    std::vector<double> P_fixed;     // non-dispatchable part (wind - load)
    std::vector<double> Q_fixed;
    std::vector<double> gen_P_sched; // per generator, p.u.
    double slack_angle = 0.0;
};

// Classic polar Newton-Raphson against the exact flow equations. `start`
// seeds the iteration; PV magnitudes and slack voltage are taken from spec.
PowerFlowSolution newton_raphson(const PowerNetwork& network, const PfSpec& spec,
                                 const VoltageState& start, const NewtonOptions& opts = {});

// Default dispatch spec from the case data (gen setpoints, loads, wind at 0).
PfSpec case_dispatch_spec(const PowerNetwork& network);
VoltageState flat_start(const PowerNetwork& network);

// Inputs the restoration retains from the approximate solution.
struct RestorationInput {
    VoltageState approx_state;            // recovered (sqrt(u), theta)
    std::vector<double> gen_P;            // per generator, p.u.
    std::vector<double> wind_P;           // per wind farm, p.u.
    std::vector<double> wind_Q;           // per wind farm, p.u.
};

struct RestorationResult {
    PowerFlowSolution solution;
    bool restored = false;
    int q_limit_rounds = 0;               // PV->PQ conversion passes
    std::vector<int> converted_buses;     // original ids
};

// Retains PQ-bus P/Q, PV-bus P/v and slack v from the approximate solution,
// runs Newton-Raphson, then pins any generator whose Q leaves its range at
// the violated limit (bus converted PV->PQ, worst violation first) until no
// violations remain.
RestorationResult restore_ac_feasibility(const PowerNetwork& network,
                                         const RestorationInput& input,
                                         const NewtonOptions& opts = {});

struct ErrorReport {
    // per-branch
    std::vector<double> loss_P_err, loss_Q_err;   // |approx - exact| of losses
    std::vector<double> flow_P_err, flow_Q_err;   // max of both directions
    std::vector<double> gamma;                    // normalized flow error per branch
    // per-bus
    std::vector<double> v_err, theta_err;
    double objective_approx = 0.0;
    double objective_exact = 0.0;   // restored-AC objective (the reference)
    double objective_err_pct = 0.0;

    double max_v_err() const;
    double max_theta_err() const;
    double max_flow_P_err() const;
    double max_flow_Q_err() const;
};

// Compares approximate flows/state/objective against an exact AC solution.
ErrorReport solution_error_report(const PowerNetwork& network,
                                  const VoltageState& approx_state,
                                  const std::vector<BranchFlow>& approx_flows,
                                  double approx_objective,
                                  const PowerFlowSolution& exact,
                                  double exact_objective);

std::string error_report_csv(const PowerNetwork& network, const ErrorReport& report);
std::string error_report_json_summary(const ErrorReport& report);

}  // namespace soca
