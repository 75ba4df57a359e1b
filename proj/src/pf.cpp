#include "soca/pf.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

namespace soca {

namespace {

Eigen::SparseMatrix<std::complex<double>> build_ybus(const PowerNetwork& net) {
    const auto n = static_cast<int>(net.n_bus());
    std::vector<Eigen::Triplet<std::complex<double>>> trips;
    trips.reserve(net.n_branch() * 4 + net.n_bus());
    for (auto& br : net.branches) {
        const int f = net.bus_index(br.from);
        const int t = net.bus_index(br.to);
        const auto c = derive_branch_coefficients(br);
        // Y blocks from the flow coefficients (the conjugate in their
        // definition flips the sign of the imaginary parts):
        // Yff = g_f + j b_f, Yft = -g_c_ij - j b_c_ij, and likewise to-side.
        trips.emplace_back(f, f, std::complex<double>(c.g_f, c.b_f));
        trips.emplace_back(t, t, std::complex<double>(c.g_t, c.b_t));
        trips.emplace_back(f, t, std::complex<double>(-c.g_c_ij, -c.b_c_ij));
        trips.emplace_back(t, f, std::complex<double>(-c.g_c_ji, -c.b_c_ji));
    }
    for (std::size_t i = 0; i < net.n_bus(); ++i)
        trips.emplace_back(static_cast<int>(i), static_cast<int>(i),
                           std::complex<double>(net.buses[i].gsh, net.buses[i].bsh));
    Eigen::SparseMatrix<std::complex<double>> Y(n, n);
    Y.setFromTriplets(trips.begin(), trips.end());
    return Y;
}

// Splits a bus-level reactive total across its generators in proportion to
// their Q ranges; degenerate ranges get an equal share of the residual.
void share_q(const PowerNetwork& net, const std::vector<std::size_t>& gens, double Q_total,
             std::vector<GenOutput>& out) {
    double qmin = 0.0, qmax = 0.0;
    for (auto g : gens) {
        qmin += net.generators[g].Q_min;
        qmax += net.generators[g].Q_max;
    }
    const double span = qmax - qmin;
    if (span > 1e-12) {
        const double t = (Q_total - qmin) / span;
        for (auto g : gens)
            out[g].Q = net.generators[g].Q_min +
                       t * (net.generators[g].Q_max - net.generators[g].Q_min);
    } else {
        const double each = (Q_total - qmin) / static_cast<double>(gens.size());
        for (auto g : gens) out[g].Q = net.generators[g].Q_min + each;
    }
}

}  // namespace

std::vector<BranchFlow> exact_branch_flows(const PowerNetwork& net, const VoltageState& st) {
    if (st.v.size() != net.n_bus() || st.theta.size() != net.n_bus())
        throw ValidationError("state dimensions do not match network");
    std::vector<BranchFlow> flows(net.n_branch());
    for (std::size_t e = 0; e < net.n_branch(); ++e) {
        const auto& br = net.branches[e];
        const auto c = derive_branch_coefficients(br);
        const auto i = static_cast<std::size_t>(net.bus_index(br.from));
        const auto k = static_cast<std::size_t>(net.bus_index(br.to));
        const double vi = st.v[i], vj = st.v[k];
        const double th = st.theta[i] - st.theta[k];
        const double vv = vi * vj;
        BranchFlow f;
        f.P_ij = c.g_f * vi * vi - c.g_c_ij * vv * std::cos(th) - c.b_c_ij * vv * std::sin(th);
        f.Q_ij = -c.b_f * vi * vi + c.b_c_ij * vv * std::cos(th) - c.g_c_ij * vv * std::sin(th);
        f.P_ji = c.g_t * vj * vj - c.g_c_ji * vv * std::cos(th) + c.b_c_ji * vv * std::sin(th);
        f.Q_ji = -c.b_t * vj * vj + c.b_c_ji * vv * std::cos(th) + c.g_c_ji * vv * std::sin(th);
        flows[e] = f;
    }
    return flows;
}

PfSpec case_dispatch_spec(const PowerNetwork& net) {
    PfSpec spec;
    const std::size_t n = net.n_bus();
    spec.bus_type.resize(n);
    spec.P_inject.assign(n, 0.0);
    spec.Q_inject.assign(n, 0.0);
    spec.v_set.assign(n, 1.0);
    spec.P_fixed.assign(n, 0.0);
    spec.Q_fixed.assign(n, 0.0);
    spec.gen_P_sched.assign(net.n_gen(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        spec.bus_type[i] = b.bus_type;
        spec.P_fixed[i] = -b.Pd;
        spec.Q_fixed[i] = -b.Qd;
        spec.P_inject[i] = -b.Pd;
        spec.Q_inject[i] = -b.Qd;
        spec.v_set[i] = b.vm_set;
    }
    for (std::size_t g = 0; g < net.n_gen(); ++g) {
        const auto& gen = net.generators[g];
        const auto i = static_cast<std::size_t>(net.bus_index(gen.bus));
        spec.gen_P_sched[g] = gen.Pg_set;
        spec.P_inject[i] += gen.Pg_set;
        if (net.buses[i].bus_type != BusType::PQ) spec.v_set[i] = gen.vg;
    }
    return spec;
}

VoltageState flat_start(const PowerNetwork& net) {
    VoltageState st;
    st.v.assign(net.n_bus(), 1.0);
    st.theta.assign(net.n_bus(), 0.0);
    return st;
}

PowerFlowSolution newton_raphson(const PowerNetwork& net, const PfSpec& spec,
                                 const VoltageState& start, const NewtonOptions& opts) {
    const std::size_t n = net.n_bus();
    if (spec.bus_type.size() != n) throw ValidationError("spec dimensions do not match network");
    if (!(opts.tol > 0)) throw ValidationError("tolerance must be positive");

    PowerFlowSolution sol;
    sol.state = start.v.size() == n ? start : flat_start(net);

    int slack = -1;
    std::vector<int> pq;
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.bus_type[i] == BusType::Slack) {
            if (slack >= 0) throw ValidationError("multiple slack buses in spec");
            slack = static_cast<int>(i);
        } else if (spec.bus_type[i] == BusType::PQ) {
            pq.push_back(static_cast<int>(i));
        }
    }
    if (slack < 0) throw ValidationError("no slack bus in spec");

    sol.state.v[static_cast<std::size_t>(slack)] = spec.v_set[static_cast<std::size_t>(slack)];
    sol.state.theta[static_cast<std::size_t>(slack)] = spec.slack_angle;
    for (std::size_t i = 0; i < n; ++i)
        if (spec.bus_type[i] == BusType::PV) sol.state.v[i] = spec.v_set[i];

    const auto Y = build_ybus(net);

    std::vector<int> ang_pos(n, -1), mag_pos(n, -1);
    int nu = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (static_cast<int>(i) != slack) ang_pos[i] = nu++;
    for (int i : pq) mag_pos[static_cast<std::size_t>(i)] = nu++;

    auto calc_injections = [&](const VoltageState& st, std::vector<double>& P,
                               std::vector<double>& Q) {
        P.assign(n, 0.0);
        Q.assign(n, 0.0);
        for (int col = 0; col < Y.outerSize(); ++col)
            for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(Y, col); it; ++it) {
                const auto i = static_cast<std::size_t>(it.row());
                const auto j = static_cast<std::size_t>(col);
                const double G = it.value().real(), B = it.value().imag();
                const double th = st.theta[i] - st.theta[j];
                const double c = std::cos(th), s = std::sin(th);
                P[i] += st.v[i] * st.v[j] * (G * c + B * s);
                Q[i] += st.v[i] * st.v[j] * (G * s - B * c);
            }
    };

    std::vector<double> Pc, Qc;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;

    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        calc_injections(sol.state, Pc, Qc);
        Eigen::VectorXd mis(nu);
        double maxmis = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (ang_pos[i] >= 0) {
                const double dP = spec.P_inject[i] - Pc[i];
                mis(ang_pos[i]) = dP;
                maxmis = std::max(maxmis, std::abs(dP));
            }
            if (mag_pos[i] >= 0) {
                const double dQ = spec.Q_inject[i] - Qc[i];
                mis(mag_pos[i]) = dQ;
                maxmis = std::max(maxmis, std::abs(dQ));
            }
        }
        sol.max_mismatch = maxmis;
        sol.iterations = iter;
        if (maxmis <= opts.tol) {
            sol.converged = true;
            sol.status = PfStatus::Converged;
            break;
        }
        if (iter == opts.max_iter) break;

        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(Y.nonZeros()) * 4);
        for (int col = 0; col < Y.outerSize(); ++col)
            for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(Y, col); it; ++it) {
                const auto i = static_cast<std::size_t>(it.row());
                const auto j = static_cast<std::size_t>(col);
                if (i == j) continue;
                const double G = it.value().real(), B = it.value().imag();
                const double vi = sol.state.v[i], vj = sol.state.v[j];
                const double th = sol.state.theta[i] - sol.state.theta[j];
                const double c = std::cos(th), s = std::sin(th);
                const double dP_dth = vi * vj * (G * s - B * c);
                const double dQ_dth = -vi * vj * (G * c + B * s);
                const double dP_dv = vi * (G * c + B * s);
                const double dQ_dv = vi * (G * s - B * c);
                if (ang_pos[i] >= 0 && ang_pos[j] >= 0)
                    trips.emplace_back(ang_pos[i], ang_pos[j], dP_dth);
                if (mag_pos[i] >= 0 && ang_pos[j] >= 0)
                    trips.emplace_back(mag_pos[i], ang_pos[j], dQ_dth);
                if (ang_pos[i] >= 0 && mag_pos[j] >= 0)
                    trips.emplace_back(ang_pos[i], mag_pos[j], dP_dv);
                if (mag_pos[i] >= 0 && mag_pos[j] >= 0)
                    trips.emplace_back(mag_pos[i], mag_pos[j], dQ_dv);
            }
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = sol.state.v[i];
            double Gii = 0.0, Bii = 0.0;
            for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(
                     Y, static_cast<int>(i));
                 it; ++it)
                if (it.row() == static_cast<int>(i)) {
                    Gii = it.value().real();
                    Bii = it.value().imag();
                    break;
                }
            if (ang_pos[i] >= 0)
                trips.emplace_back(ang_pos[i], ang_pos[i], -Qc[i] - Bii * vi * vi);
            if (mag_pos[i] >= 0 && ang_pos[i] >= 0) {
                trips.emplace_back(mag_pos[i], ang_pos[i], Pc[i] - Gii * vi * vi);
                trips.emplace_back(ang_pos[i], mag_pos[i], Pc[i] / vi + Gii * vi);
            }
            if (mag_pos[i] >= 0)
                trips.emplace_back(mag_pos[i], mag_pos[i], Qc[i] / vi - Bii * vi);
        }

        Eigen::SparseMatrix<double> J(nu, nu);
        J.setFromTriplets(trips.begin(), trips.end());
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success) {
            sol.status = PfStatus::SingularJacobian;
            sol.notes.push_back("Jacobian factorization failed at iteration " +
                                std::to_string(iter));
            return sol;
        }
        Eigen::VectorXd dx = lu.solve(mis);
        for (std::size_t i = 0; i < n; ++i) {
            if (ang_pos[i] >= 0) sol.state.theta[i] += dx(ang_pos[i]);
            if (mag_pos[i] >= 0) sol.state.v[i] += dx(mag_pos[i]);
        }
    }

    if (!sol.converged) sol.status = PfStatus::Diverged;

    sol.branch_flows = exact_branch_flows(net, sol.state);

    calc_injections(sol.state, Pc, Qc);
    sol.gen_outputs.assign(net.n_gen(), {});
    for (std::size_t i = 0; i < n; ++i) {
        const auto gens = net.gens_at(i);
        if (gens.empty()) continue;
        double Pg_total, Qg_total;
        if (spec.bus_type[i] == BusType::Slack) {
            Pg_total = Pc[i] - spec.P_fixed[i];
            Qg_total = Qc[i] - spec.Q_fixed[i];
        } else if (spec.bus_type[i] == BusType::PV) {
            Pg_total = spec.P_inject[i] - spec.P_fixed[i];
            Qg_total = Qc[i] - spec.Q_fixed[i];
        } else {
            Pg_total = spec.P_inject[i] - spec.P_fixed[i];
            Qg_total = spec.Q_inject[i] - spec.Q_fixed[i];
        }
        // scheduled P per generator, slack-bus residual shared by P range
        double sched = 0.0, span = 0.0;
        for (auto g : gens) {
            sched += spec.gen_P_sched[g];
            span += net.generators[g].P_max - net.generators[g].P_min;
        }
        const double resid = Pg_total - sched;
        for (auto g : gens) {
            const double w =
                span > 1e-12
                    ? (net.generators[g].P_max - net.generators[g].P_min) / span
                    : 1.0 / static_cast<double>(gens.size());
            sol.gen_outputs[g].P = spec.gen_P_sched[g] + resid * w;
        }
        share_q(net, gens, Qg_total, sol.gen_outputs);
    }
    return sol;
}

RestorationResult restore_ac_feasibility(const PowerNetwork& net,
                                         const RestorationInput& input,
                                         const NewtonOptions& opts) {
    RestorationResult res;
    const std::size_t n = net.n_bus();

    PfSpec spec;
    spec.bus_type.resize(n);
    spec.P_inject.assign(n, 0.0);
    spec.Q_inject.assign(n, 0.0);
    spec.v_set.assign(n, 1.0);
    spec.P_fixed.assign(n, 0.0);
    spec.Q_fixed.assign(n, 0.0);
    spec.gen_P_sched = input.gen_P;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        spec.bus_type[i] = b.bus_type;
        spec.P_fixed[i] = -b.Pd;
        spec.Q_fixed[i] = -b.Qd;
    }
    for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
        const auto i = static_cast<std::size_t>(net.bus_index(net.wind_farms[w].bus));
        spec.P_fixed[i] += w < input.wind_P.size() ? input.wind_P[w] : 0.0;
        spec.Q_fixed[i] += w < input.wind_Q.size() ? input.wind_Q[w] : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        spec.P_inject[i] = spec.P_fixed[i];
        spec.Q_inject[i] = spec.Q_fixed[i];
    }
    for (std::size_t g = 0; g < net.n_gen(); ++g) {
        const auto i = static_cast<std::size_t>(net.bus_index(net.generators[g].bus));
        spec.P_inject[i] += g < input.gen_P.size() ? input.gen_P[g] : 0.0;
    }
    // the approximate solution supplies PV and slack voltage targets
    const bool have_state = input.approx_state.v.size() == n;
    for (std::size_t i = 0; i < n; ++i)
        if (spec.bus_type[i] != BusType::PQ)
            spec.v_set[i] = have_state ? input.approx_state.v[i] : 1.0;

    VoltageState start = have_state ? input.approx_state : flat_start(net);

    const int max_rounds = static_cast<int>(net.n_gen()) + 1;
    for (int round = 0; round < max_rounds; ++round) {
        res.solution = newton_raphson(net, spec, start, opts);
        if (!res.solution.converged) {
            res.restored = false;
            res.solution.notes.push_back("restoration power flow did not converge");
            return res;
        }
        res.q_limit_rounds = round;

        // worst bus-level Q violation among PV buses, one conversion per round
        double worst = 0.0;
        int worst_bus = -1;
        double pin_Q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (spec.bus_type[i] != BusType::PV) continue;
            const auto gens = net.gens_at(i);
            if (gens.empty()) continue;
            double qg = 0.0, qmin = 0.0, qmax = 0.0;
            for (auto g : gens) {
                qg += res.solution.gen_outputs[g].Q;
                qmin += net.generators[g].Q_min;
                qmax += net.generators[g].Q_max;
            }
            double viol = 0.0, pin = qg;
            if (qg > qmax + 1e-9) {
                viol = qg - qmax;
                pin = qmax;
            } else if (qg < qmin - 1e-9) {
                viol = qmin - qg;
                pin = qmin;
            }
            if (viol > worst) {
                worst = viol;
                worst_bus = static_cast<int>(i);
                pin_Q = pin;
            }
        }
        if (worst_bus < 0) {
            res.restored = true;
            return res;
        }
        const auto wb = static_cast<std::size_t>(worst_bus);
        spec.bus_type[wb] = BusType::PQ;
        spec.Q_inject[wb] = spec.Q_fixed[wb] + pin_Q;
        res.converted_buses.push_back(net.buses[wb].id);
        start = res.solution.state;  // warm start the re-solve
    }
    res.solution.notes.push_back("Q-limit enforcement did not settle");
    res.restored = false;
    return res;
}

double ErrorReport::max_v_err() const {
    return v_err.empty() ? 0.0 : *std::max_element(v_err.begin(), v_err.end());
}
double ErrorReport::max_theta_err() const {
    return theta_err.empty() ? 0.0 : *std::max_element(theta_err.begin(), theta_err.end());
}
double ErrorReport::max_flow_P_err() const {
    return flow_P_err.empty() ? 0.0 : *std::max_element(flow_P_err.begin(), flow_P_err.end());
}
double ErrorReport::max_flow_Q_err() const {
    return flow_Q_err.empty() ? 0.0 : *std::max_element(flow_Q_err.begin(), flow_Q_err.end());
}

ErrorReport solution_error_report(const PowerNetwork& net, const VoltageState& approx_state,
                                  const std::vector<BranchFlow>& approx_flows,
                                  double approx_objective, const PowerFlowSolution& exact,
                                  double exact_objective) {
    if (approx_flows.size() != net.n_branch() || exact.branch_flows.size() != net.n_branch())
        throw ValidationError("error report: flow vectors do not match network");
    ErrorReport rep;
    const std::size_t m = net.n_branch();
    rep.loss_P_err.resize(m);
    rep.loss_Q_err.resize(m);
    rep.flow_P_err.resize(m);
    rep.flow_Q_err.resize(m);
    rep.gamma.resize(m);

    double max_apparent = 0.0;
    for (std::size_t e = 0; e < m; ++e)
        max_apparent = std::max(max_apparent, std::hypot(exact.branch_flows[e].P_ij,
                                                         exact.branch_flows[e].Q_ij));
    for (std::size_t e = 0; e < m; ++e) {
        const auto& a = approx_flows[e];
        const auto& x = exact.branch_flows[e];
        rep.loss_P_err[e] = std::abs(a.P_loss() - x.P_loss());
        rep.loss_Q_err[e] = std::abs(a.Q_loss() - x.Q_loss());
        rep.flow_P_err[e] = std::max(std::abs(a.P_ij - x.P_ij), std::abs(a.P_ji - x.P_ji));
        rep.flow_Q_err[e] = std::max(std::abs(a.Q_ij - x.Q_ij), std::abs(a.Q_ji - x.Q_ji));
        rep.gamma[e] = max_apparent > 0.0
                           ? (std::hypot(a.P_ij, a.Q_ij) - std::hypot(x.P_ij, x.Q_ij)) /
                                 max_apparent
                           : 0.0;
    }
    rep.v_err.resize(net.n_bus());
    rep.theta_err.resize(net.n_bus());
    for (std::size_t i = 0; i < net.n_bus(); ++i) {
        rep.v_err[i] = std::abs(approx_state.v[i] - exact.state.v[i]);
        rep.theta_err[i] = std::abs(approx_state.theta[i] - exact.state.theta[i]);
    }
    rep.objective_approx = approx_objective;
    rep.objective_exact = exact_objective;
    rep.objective_err_pct = exact_objective != 0.0
                                ? std::abs(approx_objective - exact_objective) /
                                      std::abs(exact_objective) * 100.0
                                : 0.0;
    return rep;
}

std::string error_report_csv(const PowerNetwork& net, const ErrorReport& rep) {
    std::ostringstream os;
    os.precision(12);
    os << "kind,id_or_from,to,loss_P_err,loss_Q_err,flow_P_err,flow_Q_err,gamma,v_err,theta_err\n";
    for (std::size_t e = 0; e < net.n_branch(); ++e)
        os << "branch," << net.branches[e].from << ',' << net.branches[e].to << ','
           << rep.loss_P_err[e] << ',' << rep.loss_Q_err[e] << ',' << rep.flow_P_err[e] << ','
           << rep.flow_Q_err[e] << ',' << rep.gamma[e] << ",,\n";
    for (std::size_t i = 0; i < net.n_bus(); ++i)
        os << "bus," << net.buses[i].id << ",,,,,,," << rep.v_err[i] << ',' << rep.theta_err[i]
           << "\n";
    return os.str();
}

std::string error_report_json_summary(const ErrorReport& rep) {
    nlohmann::json j;
    j["objective_approx"] = rep.objective_approx;
    j["objective_exact"] = rep.objective_exact;
    j["objective_err_pct"] = rep.objective_err_pct;
    j["max_v_err"] = rep.max_v_err();
    j["max_theta_err"] = rep.max_theta_err();
    j["max_flow_P_err"] = rep.max_flow_P_err();
    j["max_flow_Q_err"] = rep.max_flow_Q_err();
    double mg = 0.0;
    for (double g : rep.gamma) mg = std::max(mg, std::abs(g));
    j["max_abs_gamma"] = mg;
    return j.dump(2);
}

}  // namespace soca
