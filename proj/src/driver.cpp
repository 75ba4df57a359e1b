#include "soca/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

namespace soca {

std::string to_string(SocaStatus s) {
    switch (s) {
        case SocaStatus::Converged: return "converged";
        case SocaStatus::NotConverged: return "not_converged";
        case SocaStatus::Infeasible: return "infeasible";
        case SocaStatus::SolverFailure: return "solver_failure";
    }
    return "?";
}

std::vector<double> convergence_metric(const std::vector<BranchFlow>& approx,
                                       const std::vector<BranchFlow>& exact) {
    if (approx.size() != exact.size())
        throw ValidationError("convergence metric needs matching flow sets");
    double max_exact = 0.0;
    for (auto& f : exact) max_exact = std::max(max_exact, std::hypot(f.P_ij, f.Q_ij));
    std::vector<double> gamma(approx.size(), 0.0);
    if (max_exact <= 0.0) return gamma;  // no-load network: treated as converged
    for (std::size_t e = 0; e < approx.size(); ++e)
        gamma[e] = (std::hypot(approx[e].P_ij, approx[e].Q_ij) -
                    std::hypot(exact[e].P_ij, exact[e].Q_ij)) /
                   max_exact;
    return gamma;
}

namespace {

struct Extracted {
    OperatingPoint point;
    std::vector<BranchFlow> flows;
};

Extracted extract_state(const PowerNetwork& net, const SocaProblem& sp,
                        const std::vector<double>& x, std::vector<std::string>& notes) {
    Extracted out;
    const auto& ix = sp.index;
    out.point.v.resize(net.n_bus());
    out.point.theta.resize(net.n_bus());
    for (int b = 0; b < ix.n_bus; ++b) {
        const auto sb = static_cast<std::size_t>(b);
        const double u = x[static_cast<std::size_t>(ix.u(b))];
        const double vmin = net.buses[sb].v_min;
        if (u < vmin * vmin - 1e-6)
            notes.push_back("bus " + std::to_string(net.buses[sb].id) +
                            ": u recovered below v_min^2 (" + std::to_string(u) + ")");
        out.point.v[sb] = std::sqrt(std::max(u, 0.0));
        out.point.theta[sb] = x[static_cast<std::size_t>(ix.th(b))];
    }
    out.flows.resize(net.n_branch());
    for (int e = 0; e < ix.n_branch; ++e) {
        auto& f = out.flows[static_cast<std::size_t>(e)];
        f.P_ij = x[static_cast<std::size_t>(ix.p_ij(e))];
        f.Q_ij = x[static_cast<std::size_t>(ix.q_ij(e))];
        f.P_ji = x[static_cast<std::size_t>(ix.p_ji(e))];
        f.Q_ji = x[static_cast<std::size_t>(ix.q_ji(e))];
    }
    return out;
}

}  // namespace

std::string IterationTrace::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (auto& r : outer) {
        nlohmann::json rec;
        rec["outer"] = r.outer;
        rec["cut_rounds"] = r.cut_rounds;
        rec["objective"] = r.objective;
        rec["max_combined_gap"] = r.max_combined_gap;
        rec["max_abs_gamma"] = r.max_abs_gamma;
        rec["min_active_delta"] = r.min_active_delta;
        rec["active_cut_branches"] = r.active_cut_branches;
        rec["solve_seconds"] = r.solve_seconds;
        rec["round_objectives"] = r.round_objectives;
        if (!r.program_dump.empty()) rec["program_dump"] = r.program_dump;
        j.push_back(rec);
    }
    return j.dump(2);
}

SocaSolution solve_wind_opf(const PowerNetwork& net, const SolveOptions& options) {
    using clock = std::chrono::steady_clock;
    SocaSolution sol;

    if (!(options.gap_tolerance > 0.0) || !(options.gamma_tolerance > 0.0) ||
        !(options.solver_tol > 0.0))
        throw ValidationError("solve options: tolerances must be positive");

    // ---- initial operating point
    OperatingPoint point;
    switch (options.init_mode) {
        case InitMode::Flat: point = OperatingPoint::flat(net); break;
        case InitMode::DcOpf: {
            auto dc = dc_opf_initializer(net);
            if (!dc.solved) sol.notes.push_back(dc.note);
            point = dc.point;
            break;
        }
        case InitMode::User:
            point = options.user_point;
            if (point.v.size() != net.n_bus())
                throw ValidationError("user operating point does not match network");
            break;
    }
    point.project_into_bounds(net);

    CutSet cuts;
    cuts.initial_delta = options.initial_cut_delta;
    cuts.ensure_size(net.n_branch());

    SocaOptions soca_opts;
    soca_opts.flow_limit_segments = options.flow_limit_segments;

    SolverOptions conic_opts;
    conic_opts.tol = options.solver_tol;

    bool converged = false;
    SocaIndex saved_index;

    for (int outer = 1; outer <= options.max_outer_iterations; ++outer) {
        OuterIterationRecord rec;
        rec.outer = outer;
        const auto t0 = clock::now();

        // re-tangent carried cuts at the new expansion point
        cuts.roll(net, point);

        SocaProblem sp = assemble_soca_problem(net, point, cuts, soca_opts);
        ConicSolution cs = solve(sp.program, conic_opts);
        if (cs.status != SolveStatus::Optimal) {
            sol.status = cs.status == SolveStatus::Infeasible ? SocaStatus::Infeasible
                                                              : SocaStatus::SolverFailure;
            sol.failure_dump = sp.program.dump_triplet();
            sol.notes.push_back("conic solve failed at outer iteration " +
                                std::to_string(outer) + ": " + to_string(cs.status));
            sol.conic = std::move(cs);
            sol.outer_iterations = outer;
            sol.trace.outer.push_back(rec);
            return sol;
        }
        rec.round_objectives.push_back(cs.objective);

        Extracted ex = extract_state(net, sp, cs.x, sol.notes);
        auto gaps = relaxation_gaps(sp, cs.x, net);

        // ---- inner rolling-cut rounds
        int rounds = 0;
        while (rounds < options.max_cut_rounds) {
            std::vector<std::size_t> violating;
            for (std::size_t e = 0; e < gaps.size(); ++e) {
                if (gaps[e].combined() < options.gap_tolerance) continue;
                const auto& c = cuts.cuts[e];
                if (c.active && (c.delta_theta <= options.delta_floor ||
                                 c.delta_v <= options.delta_floor)) {
                    if (std::find(sol.irreducible_gap_branches.begin(),
                                  sol.irreducible_gap_branches.end(),
                                  static_cast<int>(e)) ==
                        sol.irreducible_gap_branches.end())
                        sol.irreducible_gap_branches.push_back(static_cast<int>(e));
                    continue;
                }
                violating.push_back(e);
            }
            if (violating.empty()) break;

            // halve the slack and re-tangent at the just-solved point
            for (auto e : violating) cuts.tighten(e, net, ex.point);
            ++rounds;

            sp = assemble_soca_problem(net, point, cuts, soca_opts);
            cs = solve(sp.program, conic_opts);
            if (cs.status != SolveStatus::Optimal) {
                sol.status = cs.status == SolveStatus::Infeasible
                                 ? SocaStatus::Infeasible
                                 : SocaStatus::SolverFailure;
                sol.failure_dump = sp.program.dump_triplet();
                sol.notes.push_back("conic solve failed in cut round " +
                                    std::to_string(rounds) + " of outer iteration " +
                                    std::to_string(outer) + ": " + to_string(cs.status));
                sol.conic = std::move(cs);
                sol.outer_iterations = outer;
                sol.trace.outer.push_back(rec);
                return sol;
            }
            rec.round_objectives.push_back(cs.objective);
            ex = extract_state(net, sp, cs.x, sol.notes);
            gaps = relaxation_gaps(sp, cs.x, net);
        }
        rec.cut_rounds = rounds;

        // ---- new operating point (optionally damped) and convergence test
        OperatingPoint new_point = ex.point;
        if (options.damping < 1.0) {
            for (std::size_t i = 0; i < net.n_bus(); ++i) {
                new_point.v[i] =
                    options.damping * ex.point.v[i] + (1.0 - options.damping) * point.v[i];
                new_point.theta[i] = options.damping * ex.point.theta[i] +
                                     (1.0 - options.damping) * point.theta[i];
            }
        }

        VoltageState recovered{new_point.v, new_point.theta};
        auto exact = exact_branch_flows(net, recovered);
        auto gamma = convergence_metric(ex.flows, exact);

        double max_gap = 0.0, max_abs_gap = 0.0, max_gamma = 0.0;
        for (auto& g : gaps) {
            max_gap = std::max(max_gap, g.combined());
            max_abs_gap = std::max({max_abs_gap, std::abs(g.gap_theta), std::abs(g.gap_v)});
        }
        for (double g : gamma) max_gamma = std::max(max_gamma, std::abs(g));

        rec.objective = cs.objective;
        rec.max_combined_gap = max_gap;
        rec.max_abs_gamma = max_gamma;
        rec.active_cut_branches = cuts.active_count();
        double min_delta = 0.0;
        for (auto& c : cuts.cuts)
            if (c.active)
                min_delta = min_delta == 0.0 ? c.delta_theta
                                             : std::min(min_delta, c.delta_theta);
        rec.min_active_delta = min_delta;
        rec.solved_point = new_point;
        rec.approx_flows = ex.flows;
        if (options.dump_programs) rec.program_dump = sp.program.dump_triplet();
        rec.solve_seconds =
            std::chrono::duration<double>(clock::now() - t0).count();
        sol.trace.outer.push_back(rec);

        // ---- keep the latest physical solution
        sol.conic = std::move(cs);
        sol.exactness = exactness_condition(sp, sol.conic, net);
        saved_index = sp.index;
        sol.point = new_point;
        sol.approx_flows = ex.flows;
        sol.gaps = gaps;
        sol.outer_iterations = outer;

        point = new_point;
        point.project_into_bounds(net);

        if (max_gamma <= options.gamma_tolerance && max_abs_gap <= options.gap_tolerance) {
            converged = true;
            break;
        }
    }

    sol.status = converged ? SocaStatus::Converged : SocaStatus::NotConverged;

    // ---- unpack primal values
    {
        const auto& x = sol.conic.x;
        const SocaIndex& ix = saved_index;

        for (int g = 0; g < ix.n_gen; ++g) {
            sol.gen_P.push_back(x[static_cast<std::size_t>(ix.pg(g))]);
            sol.gen_Q.push_back(x[static_cast<std::size_t>(ix.qg(g))]);
        }
        for (int w = 0; w < ix.n_wind; ++w) {
            sol.wind_schedule_MW.push_back(x[static_cast<std::size_t>(ix.wind_p(w))] *
                                           net.base_MVA);
            sol.wind_Q.push_back(x[static_cast<std::size_t>(ix.wind_q(w))]);
            sol.wind_gamma.push_back(x[static_cast<std::size_t>(ix.wind_gamma(w))]);
        }
        sol.objective = sol.conic.objective;
        for (int g = 0; g < ix.n_gen; ++g)
            sol.fossil_cost +=
                net.generators[static_cast<std::size_t>(g)].cost(sol.gen_P[static_cast<std::size_t>(g)]);
        for (double gmm : sol.wind_gamma) sol.wind_cost += gmm;
    }

    // ---- AC feasibility restoration and error report
    RestorationInput rin;
    rin.approx_state = VoltageState{sol.point.v, sol.point.theta};
    rin.gen_P = sol.gen_P;
    for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
        rin.wind_P.push_back(sol.wind_schedule_MW[w] / net.base_MVA);
        rin.wind_Q.push_back(sol.wind_Q[w]);
    }
    NewtonOptions nr_opts;
    sol.restoration = restore_ac_feasibility(net, rin, nr_opts);
    if (sol.restoration.restored) {
        sol.restored_objective = sol.wind_cost;
        for (std::size_t g = 0; g < net.n_gen(); ++g)
            sol.restored_objective +=
                net.generators[g].cost(sol.restoration.solution.gen_outputs[g].P);
        sol.error_report = solution_error_report(
            net, rin.approx_state, sol.approx_flows, sol.objective,
            sol.restoration.solution, sol.restored_objective);
    } else {
        sol.notes.push_back("AC restoration failed; approximate solution returned as-is");
    }
    return sol;
}

}  // namespace soca
