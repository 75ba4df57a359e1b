#include "soca/netmodel.hpp"
#include "soca/windcost.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace soca {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

struct Matrix {
    std::vector<std::vector<double>> rows;
    int first_line = 0;  // 1-based line of the opening bracket
};

// Strips MATLAB % comments and ... continuations, keeps line structure.
std::string strip_comments(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '%') in_comment = true;
        if (c == '\n') in_comment = false;
        out.push_back(in_comment ? (c == '\n' ? '\n' : ' ') : c);
    }
    return out;
}

int line_of(const std::string& text, std::size_t pos) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

// Finds "<name> = [" and parses the bracketed numeric matrix. Rows end at
// ';' or newline. Returns nullopt when the field is absent.
std::optional<Matrix> parse_matrix(const std::string& text, const std::string& name) {
    std::size_t search = 0;
    while (true) {
        std::size_t at = text.find(name, search);
        if (at == std::string::npos) return std::nullopt;
        std::size_t p = at + name.size();
        while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
        if (p >= text.size() || text[p] != '=') { search = at + 1; continue; }
        ++p;
        while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
        if (p >= text.size() || text[p] != '[') { search = at + 1; continue; }
        ++p;

        Matrix m;
        m.first_line = line_of(text, at);
        std::vector<double> row;
        while (p < text.size() && text[p] != ']') {
            char c = text[p];
            if (c == ';' || c == '\n') {
                if (!row.empty()) m.rows.push_back(std::move(row));
                row.clear();
                ++p;
            } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
                ++p;
            } else {
                const char* start = text.c_str() + p;
                char* end = nullptr;
                double v = std::strtod(start, &end);
                if (end == start)
                    throw ParseError("malformed matrix entry in " + name + " near line " +
                                     std::to_string(line_of(text, p)));
                row.push_back(v);
                p += static_cast<std::size_t>(end - start);
            }
        }
        if (p >= text.size())
            throw ParseError("unterminated matrix " + name + " starting at line " +
                             std::to_string(m.first_line));
        if (!row.empty()) m.rows.push_back(std::move(row));
        return m;
    }
}

std::optional<double> parse_scalar(const std::string& text, const std::string& name) {
    std::size_t at = text.find(name);
    if (at == std::string::npos) return std::nullopt;
    std::size_t p = text.find('=', at);
    if (p == std::string::npos) return std::nullopt;
    ++p;
    const char* start = text.c_str() + p;
    char* end = nullptr;
    double v = std::strtod(start, &end);
    if (end == start) throw ParseError("malformed scalar " + name);
    return v;
}

void require_cols(const Matrix& m, std::size_t n, const std::string& name) {
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        if (m.rows[r].size() < n)
            throw ParseError(name + " row " + std::to_string(r + 1) + " (near line " +
                             std::to_string(m.first_line) + ") has " +
                             std::to_string(m.rows[r].size()) + " columns, expected >= " +
                             std::to_string(n));
}

double angle_bound_or_default(double deg, double fallback, bool upper) {
    if (deg == 0.0 || std::abs(deg) >= 360.0) return upper ? fallback : -fallback;
    return deg * kDegToRad;
}

}  // namespace

int PowerNetwork::bus_index(int id) const {
    auto it = std::lower_bound(id_index_pairs_.begin(), id_index_pairs_.end(),
                               std::make_pair(id, -1));
    if (it == id_index_pairs_.end() || it->first != id)
        throw ValidationError("unknown bus id " + std::to_string(id));
    return it->second;
}

std::vector<std::size_t> PowerNetwork::gens_at(std::size_t bus_idx) const {
    return gens_by_bus_.at(bus_idx);
}

std::vector<std::size_t> PowerNetwork::wind_at(std::size_t bus_idx) const {
    return wind_by_bus_.at(bus_idx);
}

void PowerNetwork::rebuild_index() {
    id_index_pairs_.clear();
    id_index_pairs_.reserve(buses.size());
    for (std::size_t i = 0; i < buses.size(); ++i)
        id_index_pairs_.emplace_back(buses[i].id, static_cast<int>(i));
    std::sort(id_index_pairs_.begin(), id_index_pairs_.end());
    for (std::size_t i = 1; i < id_index_pairs_.size(); ++i)
        if (id_index_pairs_[i].first == id_index_pairs_[i - 1].first)
            throw ValidationError("duplicate bus id " + std::to_string(id_index_pairs_[i].first));

    gens_by_bus_.assign(buses.size(), {});
    for (std::size_t g = 0; g < generators.size(); ++g)
        gens_by_bus_[static_cast<std::size_t>(bus_index(generators[g].bus))].push_back(g);
    wind_by_bus_.assign(buses.size(), {});
    for (std::size_t w = 0; w < wind_farms.size(); ++w)
        wind_by_bus_[static_cast<std::size_t>(bus_index(wind_farms[w].bus))].push_back(w);
}

void PowerNetwork::validate() {
    if (buses.empty()) throw ValidationError("network has no buses");
    int n_slack = 0;
    for (auto& b : buses) {
        if (!(b.v_min > 0.0) || !(b.v_min <= b.v_max))
            throw ValidationError("bus " + std::to_string(b.id) + ": need 0 < v_min <= v_max");
        if (b.bus_type == BusType::Slack) {
            ++n_slack;
            slack_bus = b.id;
        }
    }
    if (n_slack == 0) throw ValidationError("no slack bus");
    if (n_slack > 1) throw ValidationError("multiple slack buses");

    for (auto& br : branches) {
        bus_index(br.from);  // throws on unknown reference
        bus_index(br.to);
        if (!(br.tau > 0.0)) throw ValidationError("branch tap ratio must be positive");
    }
    for (auto& g : generators) {
        bus_index(g.bus);
        if (g.P_min > g.P_max || g.Q_min > g.Q_max)
            throw ValidationError("generator at bus " + std::to_string(g.bus) + " has inverted bounds");
    }
    for (auto& w : wind_farms) {
        bus_index(w.bus);
        if (w.P_wind_min < 0.0 || w.P_wind_min > w.P_wind_max)
            throw ValidationError("wind farm schedulable range invalid");
        if (w.power_factor < 0.95 || w.power_factor > 1.0)
            throw ValidationError("wind farm power factor outside [0.95, 1]");
    }

    // demote PV buses without an in-service generator
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].bus_type == BusType::PV && gens_by_bus_[i].empty()) {
            buses[i].bus_type = BusType::PQ;
            warnings.push_back("bus " + std::to_string(buses[i].id) +
                               " declared PV but has no generator; treated as PQ");
        }
    }

    // connectivity check (warn only)
    std::vector<int> comp(buses.size());
    std::iota(comp.begin(), comp.end(), 0);
    auto find = [&](int a) { while (comp[static_cast<std::size_t>(a)] != a) a = comp[static_cast<std::size_t>(a)] = comp[static_cast<std::size_t>(comp[static_cast<std::size_t>(a)])]; return a; };
    for (auto& br : branches) {
        int a = find(bus_index(br.from)), b = find(bus_index(br.to));
        if (a != b) comp[static_cast<std::size_t>(a)] = b;
    }
    int root = find(bus_index(slack_bus));
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (find(static_cast<int>(i)) != root) {
            warnings.push_back("network is not connected (bus " + std::to_string(buses[i].id) +
                               " unreachable from slack)");
            break;
        }
}

PowerNetwork PowerNetwork::scaled_load(double scale) const {
    PowerNetwork out = *this;
    for (auto& b : out.buses) {
        b.Pd *= scale;
        b.Qd *= scale;
    }
    return out;
}

PowerNetwork parse_matpower_case(const std::string& raw, const ParseOptions& opts) {
    const std::string text = strip_comments(raw);
    PowerNetwork net;

    {
        std::size_t fn = text.find("function");
        if (fn != std::string::npos) {
            std::size_t eq = text.find('=', fn);
            if (eq != std::string::npos) {
                std::istringstream is(text.substr(eq + 1, 80));
                is >> net.name;
            }
        }
    }

    auto base = parse_scalar(text, "baseMVA");
    if (!base) throw ParseError("case file has no baseMVA");
    if (*base <= 0.0) throw ParseError("baseMVA must be positive");
    net.base_MVA = *base;
    const double S = net.base_MVA;

    auto busm = parse_matrix(text, ".bus");
    auto genm = parse_matrix(text, ".gen");
    auto brm = parse_matrix(text, ".branch");
    auto costm = parse_matrix(text, ".gencost");
    if (!busm || !genm || !brm)
        throw ParseError("case file must contain bus, gen and branch matrices");
    require_cols(*busm, 13, "bus");
    require_cols(*genm, 10, "gen");
    require_cols(*brm, 11, "branch");

    for (auto& r : busm->rows) {
        BusRecord b;
        b.id = static_cast<int>(r[0]);
        int ty = static_cast<int>(r[1]);
        if (ty == 4) {
            net.warnings.push_back("isolated bus " + std::to_string(b.id) + " dropped");
            continue;
        }
        b.bus_type = ty == 3 ? BusType::Slack : (ty == 2 ? BusType::PV : BusType::PQ);
        b.Pd = r[2] / S;
        b.Qd = r[3] / S;
        b.gsh = r[4] / S;
        b.bsh = r[5] / S;
        b.vm_set = r[7];
        b.va_set = r[8] * kDegToRad;
        b.base_kV = r[9];
        b.v_max = r[11];
        b.v_min = r[12];
        net.buses.push_back(b);
    }

    std::vector<std::size_t> kept_gen_rows;
    for (std::size_t i = 0; i < genm->rows.size(); ++i) {
        auto& r = genm->rows[i];
        if (r[7] <= 0.0) continue;  // out of service
        GeneratorRecord g;
        g.bus = static_cast<int>(r[0]);
        g.Pg_set = r[1] / S;
        g.Q_max = r[3] / S;
        g.Q_min = r[4] / S;
        g.vg = r[5];
        g.P_max = r[8] / S;
        g.P_min = r[9] / S;
        net.generators.push_back(g);
        kept_gen_rows.push_back(i);
    }

    if (costm) {
        // one row per generator row of the file (Q-cost rows, if present, follow)
        if (costm->rows.size() < genm->rows.size())
            throw ParseError("gencost has fewer rows than gen");
        for (std::size_t k = 0; k < kept_gen_rows.size(); ++k) {
            auto& r = costm->rows[kept_gen_rows[k]];
            if (r.size() < 4) throw ParseError("gencost row too short");
            int model = static_cast<int>(r[0]);
            int ncost = static_cast<int>(r[3]);
            auto& g = net.generators[k];
            if (model != 2) {
                net.warnings.push_back("piecewise-linear gencost not supported; using default quadratic");
                g.c2 = opts.default_c2 * S * S;
                g.c1 = opts.default_c1 * S;
                g.c0 = opts.default_c0;
                continue;
            }
            if (static_cast<std::size_t>(ncost) + 4 > r.size())
                throw ParseError("gencost row shorter than its ncost");
            double c2 = 0, c1 = 0, c0 = 0;
            if (ncost >= 3) {
                c2 = r[static_cast<std::size_t>(4 + ncost - 3)];
                c1 = r[static_cast<std::size_t>(4 + ncost - 2)];
                c0 = r[static_cast<std::size_t>(4 + ncost - 1)];
                if (ncost > 3)
                    net.warnings.push_back("gencost polynomial degree > 2 truncated to quadratic");
            } else if (ncost == 2) {
                c1 = r[4];
                c0 = r[5];
            } else if (ncost == 1) {
                c0 = r[4];
            }
            g.c2 = c2 * S * S;
            g.c1 = c1 * S;
            g.c0 = c0;
        }
    } else {
        for (auto& g : net.generators) {
            g.c2 = opts.default_c2 * S * S;
            g.c1 = opts.default_c1 * S;
            g.c0 = opts.default_c0;
        }
        net.warnings.push_back("gencost absent; synthetic quadratic cost applied");
    }

    for (auto& r : brm->rows) {
        if (r[10] <= 0.0) continue;  // out of service
        BranchRecord br;
        br.from = static_cast<int>(r[0]);
        br.to = static_cast<int>(r[1]);
        br.r = r[2];
        br.x = r[3];
        br.b_ch = r[4];
        br.S_max = r[5] / S;  // rate 0 stays 0 = unlimited
        br.tau = r[8] == 0.0 ? 1.0 : r[8];
        br.phi_shift = r[9] * kDegToRad;
        if (r.size() >= 13) {
            br.theta_min = angle_bound_or_default(r[11], opts.default_angle_bound, false);
            br.theta_max = angle_bound_or_default(r[12], opts.default_angle_bound, true);
        } else {
            br.theta_min = -opts.default_angle_bound;
            br.theta_max = opts.default_angle_bound;
        }
        if (br.r == 0.0 && br.x == 0.0)
            throw ParseError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                             " has zero impedance");
        net.branches.push_back(br);
    }

    net.rebuild_index();
    net.validate();
    return net;
}

PowerNetwork load_matpower_file(const std::string& path, const ParseOptions& opts) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_matpower_case(ss.str(), opts);
}

BranchCoefficients derive_branch_coefficients(const BranchRecord& br) {
    if (!(br.tau > 0.0)) throw ValidationError("invalid branch: tap ratio must be positive");
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError("invalid branch: zero impedance");
    const std::complex<double> j(0.0, 1.0);
    const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> t = br.tau * std::exp(j * br.phi_shift);
    const std::complex<double> self = std::conj(y) - 0.5 * j * br.b_ch;

    BranchCoefficients c;
    c.g_f = std::real(self / std::norm(t));
    c.b_f = -std::imag(self / std::norm(t));
    c.g_t = std::real(self);
    c.b_t = -std::imag(self);
    c.g_c_ij = std::real(std::conj(y) / t);
    c.b_c_ij = -std::imag(std::conj(y) / t);
    c.g_c_ji = std::real(std::conj(y) / std::conj(t));
    c.b_c_ji = -std::imag(std::conj(y) / std::conj(t));
    return c;
}

int patch_zero_resistance(PowerNetwork& network, double r_min) {
    if (!(r_min > 0.0)) throw ValidationError("r_min must be positive");
    int count = 0;
    for (auto& br : network.branches)
        if (br.r == 0.0) {
            br.r = r_min;
            ++count;
        }
    return count;
}

namespace {

using nlohmann::json;

json gmm_to_json_obj(const GmmModel& m);
GmmModel gmm_from_json_obj(const json& j);

}  // namespace

std::string network_to_json(const PowerNetwork& net) {
    json j;
    j["name"] = net.name;
    j["base_MVA"] = net.base_MVA;
    j["slack_bus"] = net.slack_bus;
    j["buses"] = json::array();
    for (auto& b : net.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"type", b.bus_type == BusType::Slack ? "slack"
                                       : b.bus_type == BusType::PV  ? "PV"
                                                                    : "PQ"},
                              {"Pd", b.Pd},
                              {"Qd", b.Qd},
                              {"gsh", b.gsh},
                              {"bsh", b.bsh},
                              {"v_min", b.v_min},
                              {"v_max", b.v_max},
                              {"base_kV", b.base_kV},
                              {"vm", b.vm_set},
                              {"va", b.va_set}});
    }
    j["branches"] = json::array();
    for (auto& br : net.branches) {
        j["branches"].push_back({{"from", br.from},
                                 {"to", br.to},
                                 {"r", br.r},
                                 {"x", br.x},
                                 {"b_ch", br.b_ch},
                                 {"tau", br.tau},
                                 {"phi_shift", br.phi_shift},
                                 {"S_max", br.S_max},
                                 {"theta_min", br.theta_min},
                                 {"theta_max", br.theta_max}});
    }
    j["generators"] = json::array();
    for (auto& g : net.generators) {
        j["generators"].push_back({{"bus", g.bus},
                                   {"P_min", g.P_min},
                                   {"P_max", g.P_max},
                                   {"Q_min", g.Q_min},
                                   {"Q_max", g.Q_max},
                                   {"c2", g.c2},
                                   {"c1", g.c1},
                                   {"c0", g.c0},
                                   {"vg", g.vg},
                                   {"Pg", g.Pg_set}});
    }
    j["wind_farms"] = json::array();
    for (auto& w : net.wind_farms) {
        json wj = {{"bus", w.bus},
                   {"P_wind_min", w.P_wind_min},
                   {"P_wind_max", w.P_wind_max},
                   {"power_factor", w.power_factor},
                   {"k_L", w.k_L},
                   {"k_H", w.k_H},
                   {"pwl_segments", w.pwl_segments}};
        if (w.gmm) wj["gmm"] = gmm_to_json_obj(*w.gmm);
        j["wind_farms"].push_back(wj);
    }
    return j.dump(2);
}

PowerNetwork network_from_json(const std::string& text) {
    json j = json::parse(text);
    PowerNetwork net;
    net.name = j.value("name", "");
    net.base_MVA = j.at("base_MVA").get<double>();
    for (auto& bj : j.at("buses")) {
        BusRecord b;
        b.id = bj.at("id").get<int>();
        std::string ty = bj.at("type").get<std::string>();
        b.bus_type = ty == "slack" ? BusType::Slack : (ty == "PV" ? BusType::PV : BusType::PQ);
        b.Pd = bj.at("Pd").get<double>();
        b.Qd = bj.at("Qd").get<double>();
        b.gsh = bj.at("gsh").get<double>();
        b.bsh = bj.at("bsh").get<double>();
        b.v_min = bj.at("v_min").get<double>();
        b.v_max = bj.at("v_max").get<double>();
        b.base_kV = bj.at("base_kV").get<double>();
        b.vm_set = bj.at("vm").get<double>();
        b.va_set = bj.at("va").get<double>();
        net.buses.push_back(b);
    }
    for (auto& bj : j.at("branches")) {
        BranchRecord br;
        br.from = bj.at("from").get<int>();
        br.to = bj.at("to").get<int>();
        br.r = bj.at("r").get<double>();
        br.x = bj.at("x").get<double>();
        br.b_ch = bj.at("b_ch").get<double>();
        br.tau = bj.at("tau").get<double>();
        br.phi_shift = bj.at("phi_shift").get<double>();
        br.S_max = bj.at("S_max").get<double>();
        br.theta_min = bj.at("theta_min").get<double>();
        br.theta_max = bj.at("theta_max").get<double>();
        net.branches.push_back(br);
    }
    for (auto& gj : j.at("generators")) {
        GeneratorRecord g;
        g.bus = gj.at("bus").get<int>();
        g.P_min = gj.at("P_min").get<double>();
        g.P_max = gj.at("P_max").get<double>();
        g.Q_min = gj.at("Q_min").get<double>();
        g.Q_max = gj.at("Q_max").get<double>();
        g.c2 = gj.at("c2").get<double>();
        g.c1 = gj.at("c1").get<double>();
        g.c0 = gj.at("c0").get<double>();
        g.vg = gj.at("vg").get<double>();
        g.Pg_set = gj.at("Pg").get<double>();
        net.generators.push_back(g);
    }
    if (j.contains("wind_farms")) {
        for (auto& wj : j.at("wind_farms")) {
            WindFarmSpec w;
            w.bus = wj.at("bus").get<int>();
            w.P_wind_min = wj.at("P_wind_min").get<double>();
            w.P_wind_max = wj.at("P_wind_max").get<double>();
            w.power_factor = wj.at("power_factor").get<double>();
            w.k_L = wj.at("k_L").get<double>();
            w.k_H = wj.at("k_H").get<double>();
            w.pwl_segments = wj.at("pwl_segments").get<int>();
            if (wj.contains("gmm"))
                w.gmm = std::make_shared<GmmModel>(gmm_from_json_obj(wj.at("gmm")));
            net.wind_farms.push_back(w);
        }
    }
    net.rebuild_index();
    net.validate();
    return net;
}

namespace {

json gmm_to_json_obj(const GmmModel& m) {
    return {{"K", m.component_count()},
            {"weights", m.weights},
            {"means", m.means},
            {"stddevs", m.stddevs},
            {"support_max", m.support_max}};
}

GmmModel gmm_from_json_obj(const json& j) {
    GmmModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.means = j.at("means").get<std::vector<double>>();
    m.stddevs = j.at("stddevs").get<std::vector<double>>();
    m.support_max = j.at("support_max").get<double>();
    m.validate();
    return m;
}

}  // namespace

}  // namespace soca
