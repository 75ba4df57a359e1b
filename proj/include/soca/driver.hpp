#pragma once

// Full solution process: initialize an operating point, assemble and solve
// the relaxed problem, tighten with rolling cuts, re-expand at the new point,
// test the normalized flow-error criterion, and restore AC feasibility.

#include "soca/conic.hpp"
#include "soca/netmodel.hpp"
#include "soca/pf.hpp"
#include "soca/relaxation.hpp"

#include <string>
#include <vector>

namespace soca {

enum class InitMode { Flat, DcOpf, User };

struct SolveOptions {
    InitMode init_mode = InitMode::Flat;
    OperatingPoint user_point;      // used when init_mode == User
    double gap_tolerance = 1e-4;    // relaxation-gap limit per branch
    double gamma_tolerance = 1e-3;  // normalized flow-error limit
    int max_outer_iterations = 10;
    int max_cut_rounds = 8;
    int flow_limit_segments = 16;
    double solver_tol = 1e-8;
    double initial_cut_delta = 1e-2;
    double delta_floor = 1e-12;     // stop halving below this
    double damping = 1.0;           // 1 = full replacement of the point
    bool dump_programs = false;     // keep triplet dumps in the trace
};

struct OuterIterationRecord {
    int outer = 0;
    int cut_rounds = 0;
    double objective = 0.0;
    double max_combined_gap = 0.0;
    double max_abs_gamma = 0.0;
    double min_active_delta = 0.0;   // smallest live cut slack, 0 if none
    int active_cut_branches = 0;
    double solve_seconds = 0.0;
    OperatingPoint solved_point;
    std::vector<BranchFlow> approx_flows;
    std::vector<double> round_objectives;  // one entry per conic solve
    std::string program_dump;              // only with dump_programs
};

struct IterationTrace {
    std::vector<OuterIterationRecord> outer;
    std::string to_json() const;
};

enum class SocaStatus { Converged, NotConverged, Infeasible, SolverFailure };

std::string to_string(SocaStatus s);

struct SocaSolution {
    SocaStatus status = SocaStatus::SolverFailure;
    // final primal
    std::vector<double> gen_P, gen_Q;        // p.u.
    std::vector<double> wind_schedule_MW;    // per farm
    std::vector<double> wind_Q;              // p.u.
    std::vector<double> wind_gamma;          // $/h epigraph values
    OperatingPoint point;                    // recovered (sqrt(u), theta)
    std::vector<BranchFlow> approx_flows;
    std::vector<RelaxationGap> gaps;
    std::vector<ExactnessDiagnostic> exactness;
    ConicSolution conic;                     // duals and residuals of last solve
    double objective = 0.0;                  // fossil + wind, $/h
    double fossil_cost = 0.0;
    double wind_cost = 0.0;
    int outer_iterations = 0;
    IterationTrace trace;
    std::vector<int> irreducible_gap_branches;  // delta underflowed
    std::vector<std::string> notes;

    // AC restoration
    RestorationResult restoration;
    ErrorReport error_report;
    double restored_objective = 0.0;
    std::string failure_dump;   // program dump when the conic solve fails
};

// normalized flow error per branch (from-direction), Eq-style:
// (|S_approx| - |S_exact|) / max_e |S_exact|
std::vector<double> convergence_metric(const std::vector<BranchFlow>& approx,
                                       const std::vector<BranchFlow>& exact);

SocaSolution solve_wind_opf(const PowerNetwork& network, const SolveOptions& options = {});

}  // namespace soca
