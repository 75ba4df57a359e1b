#pragma once

// Per-unit network model parsed from MATPOWER case files, plus the constant
// branch admittance coefficients used by all flow equations.

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace soca {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class BusType { PQ, PV, Slack };

struct BusRecord {
    int id = 0;               // original bus number from the case file
    BusType bus_type = BusType::PQ;
    double Pd = 0.0;          // load demand, p.u.
    double Qd = 0.0;          // p.u.
    double gsh = 0.0;         // shunt conductance, p.u.
    double bsh = 0.0;         // shunt susceptance, p.u.
    double v_min = 0.9;       // p.u.
    double v_max = 1.1;       // p.u.
    double base_kV = 0.0;
    double vm_set = 1.0;      // initial/setpoint magnitude from the case
    double va_set = 0.0;      // initial angle, rad
};

struct BranchRecord {
    int from = 0;             // bus ids as in the file
    int to = 0;
    double r = 0.0;           // series resistance, p.u.
    double x = 0.0;           // series reactance, p.u.
    double b_ch = 0.0;        // total charging susceptance, p.u.
    double tau = 1.0;         // tap ratio, 1 for plain lines
    double phi_shift = 0.0;   // phase shift, rad
    double S_max = 0.0;       // apparent-power rating, p.u.; 0 = unlimited
    double theta_min = 0.0;   // angle-difference bounds, rad
    double theta_max = 0.0;
};

struct GeneratorRecord {
    int bus = 0;
    double P_min = 0.0, P_max = 0.0;   // p.u.
    double Q_min = 0.0, Q_max = 0.0;   // p.u.
    double c2 = 0.0;                   // $/h per p.u.^2
    double c1 = 0.0;                   // $/h per p.u.
    double c0 = 0.0;                   // $/h
    double vg = 1.0;                   // voltage setpoint, p.u.
    double Pg_set = 0.0;               // scheduled output from the case, p.u.
    double cost(double P) const { return (c2 * P + c1) * P + c0; }
    double marginal_cost(double P) const { return 2.0 * c2 * P + c1; }
};

struct GmmModel;  // windcost.hpp

struct WindFarmSpec {
    int bus = 0;
    double P_wind_min = 0.0;   // MW
    double P_wind_max = 0.0;   // MW
    double power_factor = 0.975;
    double k_L = 50.0;         // $/MWh shortage penalty
    double k_H = 60.0;         // $/MWh surplus penalty
    int pwl_segments = 20;
    std::shared_ptr<const GmmModel> gmm;
};

// Constant admittance coefficients of one branch: self terms g^f, b^f (from
// side), g^t, b^t (to side) and coupling terms for each direction.
struct BranchCoefficients {
    double g_f = 0, b_f = 0;
    double g_t = 0, b_t = 0;
    double g_c_ij = 0, b_c_ij = 0;
    double g_c_ji = 0, b_c_ji = 0;
};

struct PowerNetwork {
    double base_MVA = 100.0;
    std::vector<BusRecord> buses;
    std::vector<BranchRecord> branches;
    std::vector<GeneratorRecord> generators;
    std::vector<WindFarmSpec> wind_farms;
    int slack_bus = 0;                 // original id
    std::string name;
    std::vector<std::string> warnings; // non-fatal findings from parse/validate

    // id -> index lookups built at construction
    int bus_index(int id) const;
    std::size_t n_bus() const { return buses.size(); }
    std::size_t n_branch() const { return branches.size(); }
    std::size_t n_gen() const { return generators.size(); }

    // generators attached to bus index i
    std::vector<std::size_t> gens_at(std::size_t bus_idx) const;
    std::vector<std::size_t> wind_at(std::size_t bus_idx) const;

    void rebuild_index();
    void validate();         // throws ValidationError; appends warnings

    // uniform multiplier on every Pd, Qd
    PowerNetwork scaled_load(double scale) const;

  private:
    std::vector<std::pair<int, int>> id_index_pairs_;  // sorted by id
    std::vector<std::vector<std::size_t>> gens_by_bus_;
    std::vector<std::vector<std::size_t>> wind_by_bus_;
};

// Options controlling parse-time defaulting.
struct ParseOptions {
    double default_c2 = 0.01;   // $/MWh^2 used when gencost is absent
    double default_c1 = 40.0;   // $/MWh
    double default_c0 = 0.0;
    double default_angle_bound = 1.0471975511965976;  // pi/3 rad
};

// Parse MATPOWER .m case text (baseMVA/bus/gen/branch/gencost matrices).
// All quantities are converted to per-unit on base_MVA; out-of-service
// branches and generators are dropped.
PowerNetwork parse_matpower_case(const std::string& text,
                                 const ParseOptions& opts = {});
PowerNetwork load_matpower_file(const std::string& path,
                                const ParseOptions& opts = {});

// Eight admittance constants from r, x, b_ch, tau, phi_shift.
// Throws ValidationError for tau <= 0 or a zero-impedance branch.
BranchCoefficients derive_branch_coefficients(const BranchRecord& branch);

// Give every zero-resistance branch r = r_min. Returns the patch count.
int patch_zero_resistance(PowerNetwork& network, double r_min = 1e-4);

// Canonical JSON dump / load of the per-unit model (round-trip exact).
std::string network_to_json(const PowerNetwork& network);
PowerNetwork network_from_json(const std::string& json_text);

}  // namespace soca
