#include "soca/relaxation.hpp"

#include <algorithm>
#include <cmath>

namespace soca {

namespace {
constexpr double kTwoPi = 6.283185307179586476925;
}

double OperatingPoint::theta_diff(const PowerNetwork& net, std::size_t branch) const {
    const auto& br = net.branches[branch];
    return theta[static_cast<std::size_t>(net.bus_index(br.from))] -
           theta[static_cast<std::size_t>(net.bus_index(br.to))];
}

OperatingPoint OperatingPoint::flat(const PowerNetwork& net) {
    OperatingPoint p;
    p.v.assign(net.n_bus(), 1.0);
    p.theta.assign(net.n_bus(), 0.0);
    for (std::size_t i = 0; i < net.n_bus(); ++i)
        p.v[i] = std::clamp(1.0, net.buses[i].v_min, net.buses[i].v_max);
    return p;
}

void OperatingPoint::project_into_bounds(const PowerNetwork& net) {
    for (std::size_t i = 0; i < net.n_bus(); ++i)
        v[i] = std::clamp(v[i], net.buses[i].v_min, net.buses[i].v_max);
}

TaylorCoefficients taylor_coefficients(double theta_k) {
    const double c = std::cos(theta_k), s = std::sin(theta_k);
    TaylorCoefficients t;
    t.alpha1 = c;
    t.alpha0 = s - theta_k * c;
    t.beta2 = -0.5 * c;
    t.beta1 = -s + theta_k * c;
    t.beta0 = c + theta_k * s - 0.5 * theta_k * theta_k * c;
    return t;
}

namespace {

FlowCoefficients direction_coefficients(double g_c, double b_c, double theta_k_dir,
                                        double vv) {
    const double c = std::cos(theta_k_dir), s = std::sin(theta_k_dir);
    FlowCoefficients fc;
    fc.gP = g_c * c + b_c * s;
    fc.bP = (-g_c * s + b_c * c + g_c * theta_k_dir * c) * vv;
    fc.bQ = -g_c * s + b_c * c;
    fc.gQ = (g_c * c + b_c * s - b_c * theta_k_dir * c) * vv;
    fc.bPloss = -0.5 * g_c * c * vv;
    fc.gQloss = 0.5 * b_c * c * vv;
    return fc;
}

}  // namespace

BranchExpansion flow_coefficients(const BranchCoefficients& coeffs, double theta_k,
                                  double v_ik, double v_jk) {
    if (!(v_ik > 0.0) || !(v_jk > 0.0))
        throw ValidationError("flow coefficients need positive point voltages");
    BranchExpansion e;
    e.theta_k = theta_k;
    e.v_ik = v_ik;
    e.v_jk = v_jk;
    const double vv = v_ik * v_jk;
    e.ij = direction_coefficients(coeffs.g_c_ij, coeffs.b_c_ij, theta_k, vv);
    e.ji = direction_coefficients(coeffs.g_c_ji, coeffs.b_c_ji, -theta_k, vv);
    return e;
}

double approx_branch_P(const FlowCoefficients& fc, double g_self, const ApproxFlowArgs& a) {
    return g_self * a.u_self - fc.gP * a.phi_v - fc.bP * (a.theta_dir - a.theta_k_dir) -
           fc.bPloss * (a.phi_theta - a.theta_k_dir * a.theta_k_dir);
}

double approx_branch_Q(const FlowCoefficients& fc, double b_self, const ApproxFlowArgs& a) {
    return -b_self * a.u_self + fc.bQ * a.phi_v - fc.gQ * (a.theta_dir - a.theta_k_dir) -
           fc.gQloss * (a.phi_theta - a.theta_k_dir * a.theta_k_dir);
}

std::vector<FlowLimitRow> linearize_flow_limits(double S_max, int segments, double arc_start,
                                                double arc_len) {
    std::vector<FlowLimitRow> rows;
    if (!(S_max > 0.0)) return rows;  // unlimited branch
    if (segments < 4) throw ValidationError("flow-limit linearization needs >= 4 segments");
    rows.reserve(static_cast<std::size_t>(segments));
    const bool full_circle = std::abs(arc_len - kTwoPi) < 1e-12;
    for (int m = 0; m < segments; ++m) {
        // tangent angles uniform over the arc; the full circle avoids the
        // duplicate tangent at the wrap point
        const double psi = arc_start + (full_circle ? arc_len * m / segments
                                                    : arc_len * (m + 0.5) / segments);
        rows.push_back({std::cos(psi), std::sin(psi), S_max});
    }
    return rows;
}

int CutSet::active_count() const {
    int n = 0;
    for (auto& c : cuts) n += c.active ? 1 : 0;
    return n;
}

void CutSet::ensure_size(std::size_t n_branch) {
    if (cuts.size() < n_branch) cuts.resize(n_branch);
}

void CutSet::tighten(std::size_t branch, const PowerNetwork& net, const OperatingPoint& point) {
    ensure_size(net.n_branch());
    auto& c = cuts[branch];
    const auto i = static_cast<std::size_t>(net.bus_index(net.branches[branch].from));
    const auto j = static_cast<std::size_t>(net.bus_index(net.branches[branch].to));
    if (!(point.v[i] > 0.0) || !(point.v[j] > 0.0))
        throw ValidationError("cut generation needs positive point voltages");
    if (!c.active) {
        c.active = true;
        c.delta_theta = initial_delta;
        c.delta_v = initial_delta;
    }
    c.delta_theta *= 0.5;
    c.delta_v *= 0.5;
    c.theta_k = point.theta[i] - point.theta[j];
    c.v_ik = point.v[i];
    c.v_jk = point.v[j];
}

void CutSet::roll(const PowerNetwork& net, const OperatingPoint& point) {
    ensure_size(net.n_branch());
    for (std::size_t e = 0; e < cuts.size(); ++e) {
        if (!cuts[e].active) continue;
        const auto i = static_cast<std::size_t>(net.bus_index(net.branches[e].from));
        const auto j = static_cast<std::size_t>(net.bus_index(net.branches[e].to));
        cuts[e].theta_k = point.theta[i] - point.theta[j];
        cuts[e].v_ik = point.v[i];
        cuts[e].v_jk = point.v[j];
    }
}

SocaProblem assemble_soca_problem(const PowerNetwork& net, const OperatingPoint& point,
                                  const CutSet& cuts, const SocaOptions& options) {
    const auto n_bus = static_cast<int>(net.n_bus());
    const auto n_gen = static_cast<int>(net.n_gen());
    const auto n_br = static_cast<int>(net.n_branch());
    const auto n_w = static_cast<int>(net.wind_farms.size());
    if (point.v.size() != net.n_bus() || point.theta.size() != net.n_bus())
        throw ValidationError("operating point does not match network dimensions");

    SocaProblem sp;
    sp.point = point;
    auto& p = sp.program;
    auto& ix = sp.index;
    ix.n_gen = n_gen;
    ix.n_bus = n_bus;
    ix.n_branch = n_br;
    ix.n_wind = n_w;

    // ---- variables
    ix.pg0 = p.add_variables(n_gen);
    ix.qg0 = p.add_variables(n_gen);
    for (int g = 0; g < n_gen; ++g) {
        const auto& gen = net.generators[static_cast<std::size_t>(g)];
        p.set_bounds(ix.pg(g), gen.P_min, gen.P_max);
        p.set_bounds(ix.qg(g), gen.Q_min, gen.Q_max);
    }
    ix.u0 = p.add_variables(n_bus);
    ix.th0 = p.add_variables(n_bus);
    for (int b = 0; b < n_bus; ++b) {
        const auto& bus = net.buses[static_cast<std::size_t>(b)];
        p.set_bounds(ix.u(b), bus.v_min * bus.v_min, bus.v_max * bus.v_max);
    }
    ix.phiv0 = p.add_variables(n_br);
    ix.phith0 = p.add_variables(n_br);
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const double span = br.theta_max - br.theta_min;
        p.set_bounds(ix.phi_v(e), 0.0, ConicProgram::kInf);
        p.set_bounds(ix.phi_th(e), 0.0, options.phi_theta_cap_scale * span * span);
    }
    ix.pij0 = p.add_variables(n_br);
    ix.qij0 = p.add_variables(n_br);
    ix.pji0 = p.add_variables(n_br);
    ix.qji0 = p.add_variables(n_br);
    if (n_w > 0) {
        ix.wind_p0 = p.add_variables(n_w);
        ix.wind_q0 = p.add_variables(n_w);
        ix.wind_gamma0 = p.add_variables(n_w);
        for (int w = 0; w < n_w; ++w) {
            const auto& farm = net.wind_farms[static_cast<std::size_t>(w)];
            p.set_bounds(ix.wind_p(w), farm.P_wind_min / net.base_MVA,
                         farm.P_wind_max / net.base_MVA);
        }
    }
    sp.audit.n_vars = p.n_vars();

    // ---- objective: quadratic fossil cost plus wind epigraph variables
    for (int g = 0; g < n_gen; ++g) {
        const auto& gen = net.generators[static_cast<std::size_t>(g)];
        if (gen.c2 != 0.0) p.add_quadratic_cost(ix.pg(g), ix.pg(g), gen.c2);
        if (gen.c1 != 0.0) p.add_linear_cost(ix.pg(g), gen.c1);
        p.add_constant_cost(gen.c0);
    }
    for (int w = 0; w < n_w; ++w) p.add_linear_cost(ix.wind_gamma(w), 1.0);

    // ---- expansions and flow-definition equalities
    sp.coefficients.reserve(static_cast<std::size_t>(n_br));
    sp.expansions.reserve(static_cast<std::size_t>(n_br));
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from);
        const int bj = net.bus_index(br.to);
        const auto c = derive_branch_coefficients(br);
        const double th_k = point.theta[static_cast<std::size_t>(bi)] -
                            point.theta[static_cast<std::size_t>(bj)];
        const auto ex = flow_coefficients(c, th_k, point.v[static_cast<std::size_t>(bi)],
                                          point.v[static_cast<std::size_t>(bj)]);
        sp.coefficients.push_back(c);
        sp.expansions.push_back(ex);
        const double thk2 = th_k * th_k;

        // P_ij = g_f u_i - gP phi_v - bP (th_i - th_j - th_k) - bPloss (phi_th - th_k^2)
        p.add_equality({{ix.p_ij(e), 1.0},
                        {ix.u(bi), -c.g_f},
                        {ix.phi_v(e), ex.ij.gP},
                        {ix.th(bi), ex.ij.bP},
                        {ix.th(bj), -ex.ij.bP},
                        {ix.phi_th(e), ex.ij.bPloss}},
                       ex.ij.bP * th_k + ex.ij.bPloss * thk2);
        // P_ji with theta_ji = th_j - th_i and theta_ji,k = -th_k
        p.add_equality({{ix.p_ji(e), 1.0},
                        {ix.u(bj), -c.g_t},
                        {ix.phi_v(e), ex.ji.gP},
                        {ix.th(bj), ex.ji.bP},
                        {ix.th(bi), -ex.ji.bP},
                        {ix.phi_th(e), ex.ji.bPloss}},
                       -ex.ji.bP * th_k + ex.ji.bPloss * thk2);
        // Q_ij = -b_f u_i + bQ phi_v - gQ (th_i - th_j - th_k) - gQloss (phi_th - th_k^2)
        p.add_equality({{ix.q_ij(e), 1.0},
                        {ix.u(bi), c.b_f},
                        {ix.phi_v(e), -ex.ij.bQ},
                        {ix.th(bi), ex.ij.gQ},
                        {ix.th(bj), -ex.ij.gQ},
                        {ix.phi_th(e), ex.ij.gQloss}},
                       ex.ij.gQ * th_k + ex.ij.gQloss * thk2);
        p.add_equality({{ix.q_ji(e), 1.0},
                        {ix.u(bj), c.b_t},
                        {ix.phi_v(e), -ex.ji.bQ},
                        {ix.th(bj), ex.ji.gQ},
                        {ix.th(bi), -ex.ji.gQ},
                        {ix.phi_th(e), ex.ji.gQloss}},
                       -ex.ji.gQ * th_k + ex.ji.gQloss * thk2);
        sp.audit.n_flow_def_rows += 4;
    }

    // ---- nodal balance (generation-positive orientation)
    sp.p_balance_row.resize(static_cast<std::size_t>(n_bus));
    sp.q_balance_row.resize(static_cast<std::size_t>(n_bus));
    std::vector<std::vector<LinTerm>> pterms(static_cast<std::size_t>(n_bus));
    std::vector<std::vector<LinTerm>> qterms(static_cast<std::size_t>(n_bus));
    for (int b = 0; b < n_bus; ++b) {
        const auto& bus = net.buses[static_cast<std::size_t>(b)];
        const auto sb = static_cast<std::size_t>(b);
        for (auto g : net.gens_at(sb)) {
            pterms[sb].push_back({ix.pg(static_cast<int>(g)), 1.0});
            qterms[sb].push_back({ix.qg(static_cast<int>(g)), 1.0});
        }
        for (auto w : net.wind_at(sb)) {
            pterms[sb].push_back({ix.wind_p(static_cast<int>(w)), 1.0});
            qterms[sb].push_back({ix.wind_q(static_cast<int>(w)), 1.0});
        }
        if (bus.gsh != 0.0) pterms[sb].push_back({ix.u(b), -bus.gsh});
        if (bus.bsh != 0.0) qterms[sb].push_back({ix.u(b), bus.bsh});
    }
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const auto fi = static_cast<std::size_t>(net.bus_index(br.from));
        const auto ti = static_cast<std::size_t>(net.bus_index(br.to));
        pterms[fi].push_back({ix.p_ij(e), -1.0});
        qterms[fi].push_back({ix.q_ij(e), -1.0});
        pterms[ti].push_back({ix.p_ji(e), -1.0});
        qterms[ti].push_back({ix.q_ji(e), -1.0});
    }
    for (int b = 0; b < n_bus; ++b) {
        const auto sb = static_cast<std::size_t>(b);
        sp.p_balance_row[sb] = p.add_equality(pterms[sb], net.buses[sb].Pd);
        sp.q_balance_row[sb] = p.add_equality(qterms[sb], net.buses[sb].Qd);
        sp.audit.n_balance_rows += 2;
    }

    // reference angle
    p.add_equality({{ix.th(net.bus_index(net.slack_bus)), 1.0}}, 0.0);

    // ---- wind reactive ties and PWL cost rows
    for (int w = 0; w < n_w; ++w) {
        const auto& farm = net.wind_farms[static_cast<std::size_t>(w)];
        const double tan_phi =
            std::sqrt(1.0 - farm.power_factor * farm.power_factor) / farm.power_factor;
        p.add_equality({{ix.wind_q(w), 1.0}, {ix.wind_p(w), -tan_phi}}, 0.0);
        sp.audit.n_wind_tie_rows += 1;

        if (!farm.gmm)
            throw ValidationError("wind farm at bus " + std::to_string(farm.bus) +
                                  " has no fitted model (configuration error)");
        PwlCost pwl = build_pwl_cost(*farm.gmm, farm.k_L, farm.k_H, farm.P_wind_min,
                                     farm.P_wind_max, farm.pwl_segments);
        for (std::size_t l = 0; l < pwl.slopes.size(); ++l) {
            // gamma >= eta * P_MW + chi, with the schedule variable in p.u.
            p.add_inequality({{ix.wind_gamma(w), -1.0},
                              {ix.wind_p(w), pwl.slopes[l] * net.base_MVA}},
                             -pwl.intercepts[l]);
            sp.audit.n_pwl_rows += 1;
        }
    }

    // ---- angle-difference bounds
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from), bj = net.bus_index(br.to);
        p.add_inequality({{ix.th(bi), 1.0}, {ix.th(bj), -1.0}}, br.theta_max);
        p.add_inequality({{ix.th(bi), -1.0}, {ix.th(bj), 1.0}}, -br.theta_min);
    }

    // ---- polygonal branch flow limits
    sp.flow_limit_rows_ij.assign(static_cast<std::size_t>(n_br), {});
    sp.flow_limit_rows_ji.assign(static_cast<std::size_t>(n_br), {});
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        auto rows = linearize_flow_limits(br.S_max, options.flow_limit_segments,
                                          options.flow_limit_arc_start,
                                          options.flow_limit_arc_len);
        for (auto& r : rows) {
            sp.flow_limit_rows_ij[static_cast<std::size_t>(e)].push_back(p.add_inequality(
                {{ix.p_ij(e), r.cos_psi}, {ix.q_ij(e), r.sin_psi}}, r.rhs));
            sp.flow_limit_rows_ji[static_cast<std::size_t>(e)].push_back(p.add_inequality(
                {{ix.p_ji(e), r.cos_psi}, {ix.q_ji(e), r.sin_psi}}, r.rhs));
            sp.audit.n_flow_limit_rows += 2;
        }
    }

    // ---- rolling cutting planes
    for (int e = 0; e < n_br && static_cast<std::size_t>(e) < cuts.cuts.size(); ++e) {
        const auto& c = cuts.cuts[static_cast<std::size_t>(e)];
        if (!c.active) continue;
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from), bj = net.bus_index(br.to);
        // phi_th <= 2 th_k (th_i - th_j) - th_k^2 + delta
        p.add_inequality({{ix.phi_th(e), 1.0},
                          {ix.th(bi), -2.0 * c.theta_k},
                          {ix.th(bj), 2.0 * c.theta_k}},
                         c.delta_theta - c.theta_k * c.theta_k);
        // phi_v >= (v_jk/2v_ik) u_i + (v_ik/2v_jk) u_j - delta
        p.add_inequality({{ix.phi_v(e), -1.0},
                          {ix.u(bi), c.v_jk / (2.0 * c.v_ik)},
                          {ix.u(bj), c.v_ik / (2.0 * c.v_jk)}},
                         c.delta_v);
        sp.audit.n_cut_rows += 2;
    }

    // ---- SOC blocks: voltage-product cone and angle-square epigraph
    sp.soc_v_block.resize(static_cast<std::size_t>(n_br));
    sp.soc_th_block.resize(static_cast<std::size_t>(n_br));
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from), bj = net.bus_index(br.to);
        sp.soc_v_block[static_cast<std::size_t>(e)] =
            p.add_soc({AffineExpr{{{ix.u(bi), 1.0}, {ix.u(bj), 1.0}}, 0.0},
                       AffineExpr{{{ix.phi_v(e), 2.0}}, 0.0},
                       AffineExpr{{{ix.u(bi), 1.0}, {ix.u(bj), -1.0}}, 0.0}});
        // theta_ij^2 <= phi_th as ||(2 theta_ij, phi_th - 1)|| <= phi_th + 1
        sp.soc_th_block[static_cast<std::size_t>(e)] =
            p.add_soc({AffineExpr{{{ix.phi_th(e), 1.0}}, 1.0},
                       AffineExpr{{{ix.th(bi), 2.0}, {ix.th(bj), -2.0}}, 0.0},
                       AffineExpr{{{ix.phi_th(e), 1.0}}, -1.0}});
        sp.audit.n_soc_blocks += 2;
    }

    sp.audit.n_equalities = p.n_eq();
    sp.audit.n_inequalities = p.n_ineq();
    return sp;
}

std::vector<RelaxationGap> relaxation_gaps(const SocaProblem& sp, const std::vector<double>& x,
                                           const PowerNetwork& net) {
    const auto& ix = sp.index;
    std::vector<RelaxationGap> gaps(static_cast<std::size_t>(ix.n_branch));
    for (int e = 0; e < ix.n_branch; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from);
        const int bj = net.bus_index(br.to);
        const double th = x[static_cast<std::size_t>(ix.th(bi))] -
                          x[static_cast<std::size_t>(ix.th(bj))];
        const double ui = x[static_cast<std::size_t>(ix.u(bi))];
        const double uj = x[static_cast<std::size_t>(ix.u(bj))];
        auto& g = gaps[static_cast<std::size_t>(e)];
        g.gap_theta = x[static_cast<std::size_t>(ix.phi_th(e))] - th * th;
        g.gap_v = x[static_cast<std::size_t>(ix.phi_v(e))] -
                  std::sqrt(std::max(ui * uj, 0.0));
    }
    return gaps;
}

std::vector<ExactnessDiagnostic> exactness_condition(const SocaProblem& sp,
                                                     const ConicSolution& sol,
                                                     const PowerNetwork& net) {
    const auto& ix = sp.index;
    std::vector<ExactnessDiagnostic> out(static_cast<std::size_t>(ix.n_branch));
    if (sol.eq_duals.empty() || sol.x.empty()) return out;  // diagnostic unavailable

    // balance rows are generation-positive, so the marginal price is the
    // negated equality dual
    auto lambda_p = [&](std::size_t b) {
        return -sol.eq_duals[static_cast<std::size_t>(sp.p_balance_row[b])];
    };
    auto lambda_q = [&](std::size_t b) {
        return -sol.eq_duals[static_cast<std::size_t>(sp.q_balance_row[b])];
    };

    for (int e = 0; e < ix.n_branch; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const auto bi = static_cast<std::size_t>(net.bus_index(br.from));
        const auto bj = static_cast<std::size_t>(net.bus_index(br.to));
        const auto& ex = sp.expansions[static_cast<std::size_t>(e)];

        // effective quadratic-limit duals recovered from the polygon rows
        double gamma_f = 0.0, gamma_t = 0.0;
        if (br.S_max > 0.0) {
            double zsum_f = 0.0, zsum_t = 0.0;
            for (int r : sp.flow_limit_rows_ij[static_cast<std::size_t>(e)])
                zsum_f += sol.ineq_duals[static_cast<std::size_t>(r)];
            for (int r : sp.flow_limit_rows_ji[static_cast<std::size_t>(e)])
                zsum_t += sol.ineq_duals[static_cast<std::size_t>(r)];
            gamma_f = zsum_f / (2.0 * br.S_max);
            gamma_t = zsum_t / (2.0 * br.S_max);
        }

        const double P_ij = sol.x[static_cast<std::size_t>(ix.p_ij(e))];
        const double Q_ij = sol.x[static_cast<std::size_t>(ix.q_ij(e))];
        const double P_ji = sol.x[static_cast<std::size_t>(ix.p_ji(e))];
        const double Q_ji = sol.x[static_cast<std::size_t>(ix.q_ji(e))];

        const double lp = lambda_p(bi) + lambda_p(bj);
        const double lq = lambda_q(bi) + lambda_q(bj);

        auto& d = out[static_cast<std::size_t>(e)];
        d.value = -ex.ij.bPloss * lp - ex.ij.gQloss * lq +
                  gamma_f * (2.0 * P_ij * ex.ij.bPloss + 2.0 * Q_ij * ex.ij.gQloss) +
                  gamma_t * (2.0 * P_ji * ex.ji.bPloss + 2.0 * Q_ji * ex.ji.gQloss);
        d.conclusive = std::abs(lp) + std::abs(lq) + gamma_f + gamma_t > 1e-9;
        d.positive = d.conclusive && d.value > 0.0;
    }
    return out;
}

DcOpfResult dc_opf_initializer(const PowerNetwork& net) {
    DcOpfResult res;
    res.point = OperatingPoint::flat(net);

    const auto n_bus = static_cast<int>(net.n_bus());
    const auto n_gen = static_cast<int>(net.n_gen());
    const auto n_br = static_cast<int>(net.n_branch());

    ConicProgram p;
    const int th0 = p.add_variables(n_bus);
    const int pg0 = p.add_variables(n_gen);
    for (int g = 0; g < n_gen; ++g) {
        const auto& gen = net.generators[static_cast<std::size_t>(g)];
        p.set_bounds(pg0 + g, gen.P_min, gen.P_max);
        if (gen.c2 != 0.0) p.add_quadratic_cost(pg0 + g, pg0 + g, gen.c2);
        p.add_linear_cost(pg0 + g, gen.c1);
    }
    p.add_equality({{th0 + net.bus_index(net.slack_bus), 1.0}}, 0.0);

    std::vector<std::vector<LinTerm>> balance(static_cast<std::size_t>(n_bus));
    for (int g = 0; g < n_gen; ++g)
        balance[static_cast<std::size_t>(
                    net.bus_index(net.generators[static_cast<std::size_t>(g)].bus))]
            .push_back({pg0 + g, 1.0});
    for (int e = 0; e < n_br; ++e) {
        const auto& br = net.branches[static_cast<std::size_t>(e)];
        const int bi = net.bus_index(br.from), bj = net.bus_index(br.to);
        const double bp = 1.0 / (br.x * br.tau);
        balance[static_cast<std::size_t>(bi)].push_back({th0 + bi, -bp});
        balance[static_cast<std::size_t>(bi)].push_back({th0 + bj, bp});
        balance[static_cast<std::size_t>(bj)].push_back({th0 + bj, -bp});
        balance[static_cast<std::size_t>(bj)].push_back({th0 + bi, bp});
        // angle and thermal limits on the DC flow
        p.add_inequality({{th0 + bi, 1.0}, {th0 + bj, -1.0}}, br.theta_max);
        p.add_inequality({{th0 + bi, -1.0}, {th0 + bj, 1.0}}, -br.theta_min);
        if (br.S_max > 0.0) {
            p.add_inequality({{th0 + bi, bp}, {th0 + bj, -bp}}, br.S_max);
            p.add_inequality({{th0 + bi, -bp}, {th0 + bj, bp}}, br.S_max);
        }
    }
    for (int b = 0; b < n_bus; ++b) {
        double pd = net.buses[static_cast<std::size_t>(b)].Pd;
        for (auto w : net.wind_at(static_cast<std::size_t>(b)))
            pd -= net.wind_farms[w].P_wind_min / net.base_MVA;  // firm part only
        p.add_equality(balance[static_cast<std::size_t>(b)], pd);
    }

    auto sol = solve(p);
    if (sol.status != SolveStatus::Optimal) {
        res.solved = false;
        res.note = "DC OPF " + to_string(sol.status) + "; falling back to flat start";
        return res;
    }
    for (int b = 0; b < n_bus; ++b)
        res.point.theta[static_cast<std::size_t>(b)] =
            sol.x[static_cast<std::size_t>(th0 + b)];
    res.solved = true;
    return res;
}

}  // namespace soca
