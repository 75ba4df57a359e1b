#include <doctest.h>

#include "soca/netmodel.hpp"
#include "soca/pf.hpp"

#include <cmath>
#include <random>

using namespace soca;

namespace {

std::string data_path(const char* f) { return std::string(SOCA_DATA_DIR) + "/" + f; }

// straight-line re-implementation of the four flow expressions, kept separate
// from the library path on purpose
BranchFlow reference_flow(const BranchCoefficients& c, double vi, double vj, double thi,
                          double thj) {
    BranchFlow f;
    const double tij = thi - thj, tji = thj - thi;
    f.P_ij = c.g_f * vi * vi - c.g_c_ij * vi * vj * std::cos(tij) -
             c.b_c_ij * vi * vj * std::sin(tij);
    f.Q_ij = -c.b_f * vi * vi + c.b_c_ij * vi * vj * std::cos(tij) -
             c.g_c_ij * vi * vj * std::sin(tij);
    f.P_ji = c.g_t * vj * vj - c.g_c_ji * vj * vi * std::cos(tji) -
             c.b_c_ji * vj * vi * std::sin(tji);
    f.Q_ji = -c.b_t * vj * vj + c.b_c_ji * vj * vi * std::cos(tji) -
             c.g_c_ji * vj * vi * std::sin(tji);
    return f;
}

}  // namespace

TEST_CASE("flat-state flows on a plain line reduce to constant terms") {
    auto net = load_matpower_file(data_path("case30.m"));
    VoltageState st = flat_start(net);
    auto flows = exact_branch_flows(net, st);
    for (std::size_t e = 0; e < net.n_branch(); ++e) {
        auto c = derive_branch_coefficients(net.branches[e]);
        CHECK(flows[e].P_ij == doctest::Approx(c.g_f - c.g_c_ij).epsilon(1e-12));
        CHECK(flows[e].Q_ij == doctest::Approx(-c.b_f + c.b_c_ij).epsilon(1e-12));
    }
}

TEST_CASE("near-lossless line at equal voltage has O(r) active loss") {
    BranchRecord br;
    br.r = 1e-4;
    br.x = 0.1;
    PowerNetwork net;
    net.base_MVA = 100;
    BusRecord b1, b2;
    b1.id = 1;
    b1.bus_type = BusType::Slack;
    b2.id = 2;
    net.buses = {b1, b2};
    br.from = 1;
    br.to = 2;
    br.theta_min = -1.0;
    br.theta_max = 1.0;
    net.branches = {br};
    GeneratorRecord g;
    g.bus = 1;
    g.P_max = 1;
    g.Q_max = 1;
    g.Q_min = -1;
    net.generators = {g};
    net.rebuild_index();
    net.validate();
    VoltageState st{{1.0, 1.0}, {0.0, 0.0}};
    auto flows = exact_branch_flows(net, st);
    CHECK(std::abs(flows[0].P_loss()) < 1e-3);
}

TEST_CASE("random states match the independent flow oracle on case14") {
    auto net = load_matpower_file(data_path("case14.m"));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uv(0.95, 1.05), ut(-0.3, 0.3);
    for (int trial = 0; trial < 5; ++trial) {
        VoltageState st;
        for (std::size_t i = 0; i < net.n_bus(); ++i) {
            st.v.push_back(uv(rng));
            st.theta.push_back(ut(rng));
        }
        auto flows = exact_branch_flows(net, st);
        for (std::size_t e = 0; e < net.n_branch(); ++e) {
            auto c = derive_branch_coefficients(net.branches[e]);
            const auto i = static_cast<std::size_t>(net.bus_index(net.branches[e].from));
            const auto j = static_cast<std::size_t>(net.bus_index(net.branches[e].to));
            auto ref = reference_flow(c, st.v[i], st.v[j], st.theta[i], st.theta[j]);
            CHECK(flows[e].P_ij == doctest::Approx(ref.P_ij).epsilon(1e-13));
            CHECK(flows[e].Q_ij == doctest::Approx(ref.Q_ij).epsilon(1e-13));
            CHECK(flows[e].P_ji == doctest::Approx(ref.P_ji).epsilon(1e-13));
            CHECK(flows[e].Q_ji == doctest::Approx(ref.Q_ji).epsilon(1e-13));
        }
    }
}

TEST_CASE("newton_raphson converges on case14 from flat start") {
    auto net = load_matpower_file(data_path("case14.m"));
    auto sol = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(sol.converged);
    CHECK(sol.max_mismatch < 1e-8);
    CHECK(sol.iterations <= 10);

    // nodal balance from the exact flows at the solved state
    std::vector<double> P(net.n_bus(), 0.0), Q(net.n_bus(), 0.0);
    for (std::size_t e = 0; e < net.n_branch(); ++e) {
        const auto i = static_cast<std::size_t>(net.bus_index(net.branches[e].from));
        const auto j = static_cast<std::size_t>(net.bus_index(net.branches[e].to));
        P[i] += sol.branch_flows[e].P_ij;
        Q[i] += sol.branch_flows[e].Q_ij;
        P[j] += sol.branch_flows[e].P_ji;
        Q[j] += sol.branch_flows[e].Q_ji;
    }
    for (std::size_t i = 0; i < net.n_bus(); ++i) {
        double Pg = 0, Qg = 0;
        for (auto g : net.gens_at(i)) {
            Pg += sol.gen_outputs[g].P;
            Qg += sol.gen_outputs[g].Q;
        }
        const auto& b = net.buses[i];
        const double vi = sol.state.v[i];
        CHECK(Pg - b.Pd - b.gsh * vi * vi == doctest::Approx(P[i]).epsilon(1e-6).scale(1.0));
        CHECK(Qg - b.Qd + b.bsh * vi * vi == doctest::Approx(Q[i]).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("no-load two-bus network needs no correction") {
    const char* text = R"(
function mpc = noload
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	0	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	150	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.02	30	0;
];
)";
    auto net = parse_matpower_case(text);
    auto sol = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(sol.converged);
    CHECK(sol.iterations == 0);
    CHECK(sol.state.v[1] == doctest::Approx(1.0));
    CHECK(sol.state.theta[1] == doctest::Approx(0.0));
}

TEST_CASE("newton_raphson converges on case118 from flat start") {
    auto net = load_matpower_file(data_path("case118.m"));
    patch_zero_resistance(net);
    auto sol = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 10);
    CHECK(sol.max_mismatch < 1e-8);
}

TEST_CASE("newton_raphson converges on the distribution feeders") {
    for (const char* f : {"case33bw.m", "case69.m"}) {
        auto net = load_matpower_file(data_path(f));
        auto sol = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
        REQUIRE(sol.converged);
        CHECK(sol.max_mismatch < 1e-8);
        // feeders sag: all voltages below the source, above 0.90
        for (std::size_t i = 1; i < net.n_bus(); ++i) {
            CHECK(sol.state.v[i] < 1.0);
            CHECK(sol.state.v[i] > 0.90);
        }
    }
}

TEST_CASE("restoration returns an already-exact solution unchanged") {
    auto net = load_matpower_file(data_path("case14.m"));
    auto exact = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(exact.converged);

    RestorationInput in;
    in.approx_state = exact.state;
    for (auto& g : exact.gen_outputs) in.gen_P.push_back(g.P);
    auto res = restore_ac_feasibility(net, in);
    REQUIRE(res.restored);
    for (std::size_t i = 0; i < net.n_bus(); ++i) {
        CHECK(res.solution.state.v[i] == doctest::Approx(exact.state.v[i]).epsilon(1e-7));
        CHECK(res.solution.state.theta[i] ==
              doctest::Approx(exact.state.theta[i]).epsilon(1e-7).scale(1.0));
    }
}

TEST_CASE("restoration pins a Q-limited generator and converts its bus") {
    // PV unit with Qmax = 0 feeding an inductive load must end up at the limit
    const char* text = R"(
function mpc = qlim
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	80	40	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
	2	40	0	0	0	1.02	100	1	150	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.02	0.1	0	0	0	0	0	0	1	-360	360;
	1	3	0.02	0.1	0	0	0	0	0	0	1	-360	360;
	2	3	0.02	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.02	30	0;
	2	0	0	3	0.02	30	0;
];
)";
    auto net = parse_matpower_case(text);
    RestorationInput in;
    in.approx_state.v = {1.0, 1.02, 0.98};
    in.approx_state.theta = {0.0, 0.0, -0.05};
    in.gen_P = {0.4, 0.4};
    auto res = restore_ac_feasibility(net, in);
    REQUIRE(res.restored);
    REQUIRE(res.converted_buses.size() == 1);
    CHECK(res.converted_buses[0] == 2);
    CHECK(res.solution.gen_outputs[1].Q == doctest::Approx(0.0).scale(1.0).epsilon(1e-7));
}

TEST_CASE("error report: identical solutions give an all-zero report") {
    auto net = load_matpower_file(data_path("case14.m"));
    auto exact = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(exact.converged);
    auto rep = solution_error_report(net, exact.state, exact.branch_flows, 1234.5, exact,
                                     1234.5);
    CHECK(rep.max_v_err() == 0.0);
    CHECK(rep.max_theta_err() == 0.0);
    CHECK(rep.max_flow_P_err() == 0.0);
    CHECK(rep.objective_err_pct == 0.0);
}

TEST_CASE("error report matches hand arithmetic on a perturbed state") {
    auto net = load_matpower_file(data_path("case14.m"));
    auto exact = newton_raphson(net, case_dispatch_spec(net), flat_start(net));
    REQUIRE(exact.converged);
    VoltageState bumped = exact.state;
    bumped.v[3] += 0.02;
    bumped.theta[5] -= 0.01;
    auto flows = exact_branch_flows(net, bumped);
    auto rep = solution_error_report(net, bumped, flows, 1010.0, exact, 1000.0);
    CHECK(rep.v_err[3] == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(rep.theta_err[5] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(rep.objective_err_pct == doctest::Approx(1.0).epsilon(1e-12));
    // flow errors must be consistent with recomputing flows directly
    for (std::size_t e = 0; e < net.n_branch(); ++e) {
        const double dp = std::max(std::abs(flows[e].P_ij - exact.branch_flows[e].P_ij),
                                   std::abs(flows[e].P_ji - exact.branch_flows[e].P_ji));
        CHECK(rep.flow_P_err[e] == doctest::Approx(dp).epsilon(1e-12));
    }
    // CSV and JSON exports carry the headline numbers
    auto csv = error_report_csv(net, rep);
    CHECK(csv.find("branch,") != std::string::npos);
    CHECK(csv.find("bus,") != std::string::npos);
    auto js = error_report_json_summary(rep);
    CHECK(js.find("objective_err_pct") != std::string::npos);
}

TEST_CASE("loss nonnegativity across random physical states") {
    auto net = load_matpower_file(data_path("case30.m"));
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uv(0.95, 1.05), ut(-0.2, 0.2);
    for (int trial = 0; trial < 20; ++trial) {
        VoltageState st;
        for (std::size_t i = 0; i < net.n_bus(); ++i) {
            st.v.push_back(uv(rng));
            st.theta.push_back(ut(rng));
        }
        auto flows = exact_branch_flows(net, st);
        for (std::size_t e = 0; e < net.n_branch(); ++e)
            if (net.branches[e].r > 0)
                CHECK(flows[e].P_loss() >= -1e-12);
    }
}
