#include <doctest.h>

#include "soca/netmodel.hpp"

#include <cmath>
#include <complex>

using namespace soca;

namespace {

const char* kTwoBusCase = R"(
function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	50	0	100	-100	1	100	1	150	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.02	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.02	30	0;
];
)";

}  // namespace

TEST_CASE("two-bus case parses with exact series admittance") {
    auto net = parse_matpower_case(kTwoBusCase);
    REQUIRE(net.n_bus() == 2);
    REQUIRE(net.n_branch() == 1);
    CHECK(net.slack_bus == 1);
    CHECK(net.buses[1].Pd == doctest::Approx(0.5));

    // y = 1/(0.01 + j0.1) = 0.990099 - j9.90099
    std::complex<double> y = 1.0 / std::complex<double>(net.branches[0].r, net.branches[0].x);
    CHECK(y.real() == doctest::Approx(0.99009900990099).epsilon(1e-12));
    CHECK(y.imag() == doctest::Approx(-9.9009900990099).epsilon(1e-12));
}

TEST_CASE("case14 has the expected structure") {
    auto net = load_matpower_file(std::string(SOCA_DATA_DIR) + "/case14.m");
    CHECK(net.n_bus() == 14);
    CHECK(net.n_branch() == 20);
    CHECK(net.n_gen() == 5);
    CHECK(net.slack_bus == 1);
    // per-unit conversion against raw MW entries
    CHECK(net.buses[static_cast<std::size_t>(net.bus_index(3))].Pd ==
          doctest::Approx(0.942).epsilon(1e-14));
    CHECK(net.buses[static_cast<std::size_t>(net.bus_index(9))].bsh ==
          doctest::Approx(0.19).epsilon(1e-14));
    // tap 0 in the file means nominal
    bool saw_unity = false, saw_offnominal = false;
    for (auto& br : net.branches) {
        if (br.tau == 1.0) saw_unity = true;
        if (br.tau == 0.978) saw_offnominal = true;
    }
    CHECK(saw_unity);
    CHECK(saw_offnominal);
    // unbounded angle limits fall back to +-pi/3
    CHECK(net.branches[0].theta_max == doctest::Approx(M_PI / 3.0));
    // cost conversion to p.u.: c1 [$/MWh] * base
    const auto& g0 = net.generators[0];
    CHECK(g0.c1 == doctest::Approx(20.0 * 100.0));
    CHECK(g0.c2 == doctest::Approx(0.0430292599 * 1e4));
}

TEST_CASE("branch coefficients: plain line symmetry") {
    BranchRecord br;
    br.r = 1e-4;
    br.x = 0.1;
    br.b_ch = 0.0;
    br.tau = 1.0;
    br.phi_shift = 0.0;
    auto c = derive_branch_coefficients(br);
    CHECK(c.g_c_ij == doctest::Approx(c.g_c_ji).epsilon(1e-15));
    CHECK(c.b_c_ij == doctest::Approx(c.b_c_ji).epsilon(1e-15));
    CHECK(c.g_f == doctest::Approx(c.g_t).epsilon(1e-15));
    CHECK(c.b_f == doctest::Approx(c.b_t).epsilon(1e-15));
}

TEST_CASE("branch coefficients: tap ratio scaling") {
    BranchRecord br;
    br.r = 0.02;
    br.x = 0.2;
    br.b_ch = 0.04;
    br.tau = 1.05;
    br.phi_shift = 0.0;
    auto c = derive_branch_coefficients(br);
    CHECK(c.g_f == doctest::Approx(c.g_t / (1.05 * 1.05)).epsilon(1e-13));
    // coupling scaled by 1/tau, symmetric without phase shift
    BranchRecord plain = br;
    plain.tau = 1.0;
    auto cp = derive_branch_coefficients(plain);
    CHECK(c.g_c_ij == doctest::Approx(cp.g_c_ij / 1.05).epsilon(1e-13));
    CHECK(c.g_c_ij == doctest::Approx(c.g_c_ji).epsilon(1e-15));
}

TEST_CASE("branch coefficients: phase shift breaks coupling symmetry") {
    BranchRecord br;
    br.r = 0.02;
    br.x = 0.2;
    br.b_ch = 0.0;
    br.tau = 1.0;
    br.phi_shift = 0.1;
    auto c = derive_branch_coefficients(br);
    CHECK(std::abs(c.g_c_ij - c.g_c_ji) > 1e-6);
    // numerical cross-check of both directions
    std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
    std::complex<double> t = std::polar(1.0, 0.1);
    CHECK(c.g_c_ij == doctest::Approx((std::conj(y) / t).real()).epsilon(1e-14));
    CHECK(c.g_c_ji == doctest::Approx((std::conj(y) / std::conj(t)).real()).epsilon(1e-14));
}

TEST_CASE("zero-resistance patching") {
    auto net = parse_matpower_case(kTwoBusCase);
    net.branches[0].r = 0.0;
    CHECK(patch_zero_resistance(net) == 1);
    CHECK(net.branches[0].r == doctest::Approx(1e-4));
    CHECK(patch_zero_resistance(net) == 0);  // nothing left to patch
    BranchRecord untouched;
    untouched.r = 0.02;
    untouched.x = 0.1;
    PowerNetwork one = parse_matpower_case(kTwoBusCase);
    const double before = one.branches[0].r;
    CHECK(patch_zero_resistance(one) == 0);
    CHECK(one.branches[0].r == before);
}

TEST_CASE("parse errors carry context") {
    CHECK_THROWS_AS(parse_matpower_case("mpc.bus = [1 2 3];"), ParseError);
    std::string bad = kTwoBusCase;
    // point a branch at a bus that does not exist
    auto pos = bad.find("1\t2\t0.01");
    bad.replace(pos, 4, "1\t7\t");
    CHECK_THROWS_AS(parse_matpower_case(bad), ValidationError);
}

TEST_CASE("JSON round-trip is value-exact") {
    auto net = load_matpower_file(std::string(SOCA_DATA_DIR) + "/case14.m");
    auto text = network_to_json(net);
    auto back = network_from_json(text);
    REQUIRE(back.n_bus() == net.n_bus());
    REQUIRE(back.n_branch() == net.n_branch());
    REQUIRE(back.n_gen() == net.n_gen());
    for (std::size_t i = 0; i < net.n_bus(); ++i) {
        CHECK(back.buses[i].Pd == net.buses[i].Pd);
        CHECK(back.buses[i].Qd == net.buses[i].Qd);
        CHECK(back.buses[i].bsh == net.buses[i].bsh);
        CHECK(back.buses[i].v_min == net.buses[i].v_min);
    }
    for (std::size_t e = 0; e < net.n_branch(); ++e) {
        CHECK(back.branches[e].r == net.branches[e].r);
        CHECK(back.branches[e].x == net.branches[e].x);
        CHECK(back.branches[e].tau == net.branches[e].tau);
        CHECK(back.branches[e].theta_max == net.branches[e].theta_max);
    }
    for (std::size_t g = 0; g < net.n_gen(); ++g) {
        CHECK(back.generators[g].c2 == net.generators[g].c2);
        CHECK(back.generators[g].P_max == net.generators[g].P_max);
    }
    CHECK(network_to_json(back) == text);
}

TEST_CASE("load scaling multiplies every demand") {
    auto net = load_matpower_file(std::string(SOCA_DATA_DIR) + "/case14.m");
    auto scaled = net.scaled_load(1.4);
    for (std::size_t i = 0; i < net.n_bus(); ++i) {
        CHECK(scaled.buses[i].Pd == doctest::Approx(1.4 * net.buses[i].Pd));
        CHECK(scaled.buses[i].Qd == doctest::Approx(1.4 * net.buses[i].Qd));
    }
}

TEST_CASE("missing gencost gets synthetic cost and a warning") {
    std::string nocost = kTwoBusCase;
    auto at = nocost.find("mpc.gencost");
    nocost = nocost.substr(0, at);
    auto net = parse_matpower_case(nocost);
    CHECK(net.generators[0].c2 == doctest::Approx(0.01 * 1e4));
    CHECK(net.generators[0].c1 == doctest::Approx(40.0 * 100.0));
    bool warned = false;
    for (auto& w : net.warnings) warned |= w.find("gencost") != std::string::npos;
    CHECK(warned);
}
