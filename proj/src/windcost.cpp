#include "soca/windcost.hpp"
#include "soca/netmodel.hpp"  // ParseError / ValidationError

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace soca {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrt2 = 0.7071067811865475244;

double normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
}

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / sigma * kInvSqrt2);
}

}  // namespace

void GmmModel::validate() const {
    if (weights.empty()) throw ValidationError("GMM needs at least one component");
    if (weights.size() != means.size() || weights.size() != stddevs.size())
        throw ValidationError("GMM parameter arrays have mismatched lengths");
    double sum = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (!(weights[k] > 0.0)) throw ValidationError("GMM weights must be positive");
        if (!(stddevs[k] > 0.0)) throw ValidationError("GMM stddevs must be positive");
        sum += weights[k];
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ValidationError("GMM weights must sum to 1 (got " + std::to_string(sum) + ")");
}

double GmmModel::pdf(double x) const {
    double f = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k)
        f += weights[k] * normal_pdf(x, means[k], stddevs[k]);
    return f;
}

double GmmModel::cdf(double x) const {
    double F = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k)
        F += weights[k] * normal_cdf(x, means[k], stddevs[k]);
    return std::clamp(F, 0.0, 1.0);
}

double GmmModel::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * means[k];
    return m;
}

double truncated_first_moment(const GmmModel& model, double dn, double up) {
    if (dn > up) throw ValidationError("truncated_first_moment: dn > up");
    double acc = 0.0;
    for (std::size_t k = 0; k < model.weights.size(); ++k) {
        const double mu = model.means[k];
        const double sigma = model.stddevs[k];
        const double n_dn = std::isinf(dn) ? 0.0 : normal_pdf(dn, mu, sigma);
        const double n_up = std::isinf(up) ? 0.0 : normal_pdf(up, mu, sigma);
        const double F_dn = std::isinf(dn) ? (dn < 0 ? 0.0 : 1.0) : normal_cdf(dn, mu, sigma);
        const double F_up = std::isinf(up) ? (up > 0 ? 1.0 : 0.0) : normal_cdf(up, mu, sigma);
        acc += model.weights[k] * (sigma * sigma * (n_dn - n_up) + mu * (F_up - F_dn));
    }
    return acc;
}

WindCost shortage_surplus_cost(const GmmModel& model, double P_schedule,
                               double k_L, double k_H, double P_max) {
    constexpr double kProbFloor = 1e-12;
    WindCost c;
    const double p_short = model.cdf(P_schedule);
    const double p_surplus = 1.0 - p_short;

    // F_L = k_L [ Pr(X < Ps) * Ps - E[X 1{0<=X<=Ps}] ]; the conditional
    // expectation's divisor cancels, so no division is needed.
    if (p_short >= kProbFloor)
        c.F_L = k_L * (p_short * P_schedule - truncated_first_moment(model, 0.0, P_schedule));
    if (p_surplus >= kProbFloor)
        c.F_H = k_H * (truncated_first_moment(model, P_schedule, P_max) - p_surplus * P_schedule);
    c.total = c.F_L + c.F_H;
    return c;
}

WindCostCurve wind_cost_curve(const GmmModel& model, double k_L, double k_H,
                              double lo, double hi, int points) {
    if (points < 2) throw ValidationError("wind_cost_curve needs >= 2 points");
    WindCostCurve curve;
    curve.k_L = k_L;
    curve.k_H = k_H;
    curve.P_schedule.resize(static_cast<std::size_t>(points));
    curve.F_L.resize(static_cast<std::size_t>(points));
    curve.F_H.resize(static_cast<std::size_t>(points));
    curve.total.resize(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double p = lo + (hi - lo) * i / (points - 1);
        const WindCost c = shortage_surplus_cost(model, p, k_L, k_H, model.support_max);
        const auto s = static_cast<std::size_t>(i);
        curve.P_schedule[s] = p;
        curve.F_L[s] = c.F_L;
        curve.F_H[s] = c.F_H;
        curve.total[s] = c.total;
    }
    return curve;
}

EmFitResult fit_gmm_em(const std::vector<double>& samples, int K, const EmOptions& opts) {
    if (K < 1) throw ValidationError("K must be >= 1");
    const std::size_t n = samples.size();

    const double lo = n ? *std::min_element(samples.begin(), samples.end()) : 0.0;
    const double hi = n ? *std::max_element(samples.begin(), samples.end()) : 0.0;
    const double range = hi - lo;
    const double var_floor = std::max(opts.variance_floor_scale * range * range, 1e-12);

    EmFitResult res;
    if (n == 0) throw ValidationError("no samples");

    if (range == 0.0) {
        // degenerate: every sample identical
        res.model.weights = {1.0};
        res.model.means = {samples[0]};
        res.model.stddevs = {std::sqrt(var_floor)};
        res.model.support_max = samples[0];
        res.converged = true;
        return res;
    }
    if (n < static_cast<std::size_t>(10 * K))
        throw ValidationError("need at least 10*K samples to fit " + std::to_string(K) +
                              " components");

    // k-means++ seeding
    std::mt19937_64 rng(opts.seed);
    std::vector<double> centers;
    centers.reserve(static_cast<std::size_t>(K));
    std::uniform_int_distribution<std::size_t> uni(0, n - 1);
    centers.push_back(samples[uni(rng)]);
    std::vector<double> d2(n);
    while (centers.size() < static_cast<std::size_t>(K)) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (double c : centers) best = std::min(best, (samples[i] - c) * (samples[i] - c));
            d2[i] = best;
            sum += best;
        }
        if (sum <= 0.0) {
            centers.push_back(samples[uni(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> ur(0.0, sum);
        double r = ur(rng), acc = 0.0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r) {
                pick = i;
                break;
            }
        }
        centers.push_back(samples[pick]);
    }
    std::sort(centers.begin(), centers.end());

    const auto Ku = static_cast<std::size_t>(K);
    std::vector<double> w(Ku, 1.0 / K), mu = centers, var(Ku);
    const double init_var = std::max(range * range / (4.0 * K * K), var_floor);
    std::fill(var.begin(), var.end(), init_var);

    constexpr double kLog2Pi = 1.8378770664093454836;
    std::vector<double> resp(Ku);  // responsibilities of one sample
    std::vector<double> Nk(Ku), Sk(Ku), Qk(Ku);
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < opts.max_iter; ++it) {
        std::fill(Nk.begin(), Nk.end(), 0.0);
        std::fill(Sk.begin(), Sk.end(), 0.0);
        std::fill(Qk.begin(), Qk.end(), 0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            // log-sum-exp over components
            double max_log = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < Ku; ++k) {
                const double z = samples[i] - mu[k];
                resp[k] = std::log(w[k]) - 0.5 * (kLog2Pi + std::log(var[k])) -
                          0.5 * z * z / var[k];
                max_log = std::max(max_log, resp[k]);
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < Ku; ++k) {
                resp[k] = std::exp(resp[k] - max_log);
                denom += resp[k];
            }
            ll += max_log + std::log(denom);
            for (std::size_t k = 0; k < Ku; ++k) {
                const double r = resp[k] / denom;
                Nk[k] += r;
                Sk[k] += r * samples[i];
                Qk[k] += r * samples[i] * samples[i];
            }
        }

        res.log_likelihood.push_back(ll);
        res.iterations = it + 1;
        if (it > 0 && ll - prev_ll < opts.tol * (1.0 + std::abs(ll))) {
            res.converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;

        for (std::size_t k = 0; k < Ku; ++k) {
            if (Nk[k] < 1e-10) {  // dead component: re-seed at the global mean
                mu[k] = 0.5 * (lo + hi);
                var[k] = range * range / 4.0;
                w[k] = 1.0 / n;
                continue;
            }
            w[k] = Nk[k] / static_cast<double>(n);
            mu[k] = Sk[k] / Nk[k];
            var[k] = std::max(Qk[k] / Nk[k] - mu[k] * mu[k], var_floor);
        }
        double wsum = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& wk : w) wk /= wsum;
    }

    res.model.weights = w;
    res.model.means = mu;
    res.model.stddevs.resize(Ku);
    for (std::size_t k = 0; k < Ku; ++k) res.model.stddevs[k] = std::sqrt(var[k]);
    res.model.support_max = hi;
    res.model.validate();
    return res;
}

double PwlCost::evaluate(double x) const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < slopes.size(); ++l)
        best = std::max(best, slopes[l] * x + intercepts[l]);
    return best;
}

PwlCost build_pwl_from_samples(const std::vector<double>& xs, const std::vector<double>& ys,
                               int segments, double target_gap) {
    const std::size_t n = xs.size();
    if (n < 3 || ys.size() != n) throw ValidationError("PWL needs >= 3 curve samples");
    if (segments < 2) throw ValidationError("PWL needs >= 2 segments");

    // lower convex hull (Andrew monotone chain over the sampled curve)
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < n; ++i) {
        while (hull.size() >= 2) {
            const std::size_t a = hull[hull.size() - 2], b = hull[hull.size() - 1];
            const double cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) -
                                 (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if (cross <= 0.0) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }

    // convexified curve value at every grid point
    std::vector<double> hy(n);
    for (std::size_t h = 0, i = 0; h + 1 < hull.size(); ++h) {
        const std::size_t a = hull[h], b = hull[h + 1];
        const double slope = (ys[b] - ys[a]) / (xs[b] - xs[a]);
        for (; i <= b; ++i) hy[i] = ys[a] + slope * (xs[i] - xs[a]);
    }
    hy[n - 1] = ys[hull.back()];

    PwlCost pwl;
    pwl.range_lo = xs.front();
    pwl.range_hi = xs.back();
    for (std::size_t i = 0; i < n; ++i)
        pwl.convexify_deviation = std::max(pwl.convexify_deviation, ys[i] - hy[i]);

    // tangent of the convexified curve at grid index i (3-point formulas are
    // exact for quadratics)
    auto tangent_at = [&](std::size_t i) -> std::pair<double, double> {
        double slope;
        const double h1 = xs[1] - xs[0];
        if (i == 0)
            slope = (-3.0 * hy[0] + 4.0 * hy[1] - hy[2]) / (2.0 * h1);
        else if (i == n - 1)
            slope = (3.0 * hy[n - 1] - 4.0 * hy[n - 2] + hy[n - 3]) / (2.0 * h1);
        else
            slope = (hy[i + 1] - hy[i - 1]) / (xs[i + 1] - xs[i - 1]);
        double intercept = hy[i] - slope * xs[i];
        // keep the line an under-estimator of the convexified curve
        double viol = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            viol = std::max(viol, slope * xs[k] + intercept - hy[k]);
        return {slope, intercept - viol};
    };

    std::vector<std::size_t> at = {0, n - 1};
    auto rebuild = [&]() {
        pwl.slopes.clear();
        pwl.intercepts.clear();
        for (std::size_t i : at) {
            auto [s, c] = tangent_at(i);
            pwl.slopes.push_back(s);
            pwl.intercepts.push_back(c);
        }
    };
    rebuild();

    while (static_cast<int>(at.size()) < segments) {
        double worst = 0.0;
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gap = hy[i] - pwl.evaluate(xs[i]);
            if (gap > worst) {
                worst = gap;
                worst_i = i;
            }
        }
        if (worst <= target_gap || worst <= 0.0) break;
        if (std::find(at.begin(), at.end(), worst_i) != at.end()) break;
        at.push_back(worst_i);
        rebuild();
    }

    // sort by slope; gap reported against the original (possibly nonconvex) curve
    std::vector<std::size_t> order(pwl.slopes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pwl.slopes[a] < pwl.slopes[b]; });
    std::vector<double> s2, c2;
    for (std::size_t o : order) {
        s2.push_back(pwl.slopes[o]);
        c2.push_back(pwl.intercepts[o]);
    }
    pwl.slopes = std::move(s2);
    pwl.intercepts = std::move(c2);

    pwl.max_gap = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        pwl.max_gap = std::max(pwl.max_gap, ys[i] - pwl.evaluate(xs[i]));
    return pwl;
}

PwlCost build_pwl_cost(const GmmModel& model, double k_L, double k_H, double lo,
                       double hi, int segments, int grid_points, double target_gap) {
    WindCostCurve curve = wind_cost_curve(model, k_L, k_H, lo, hi, grid_points);
    return build_pwl_from_samples(curve.P_schedule, curve.total, segments, target_gap);
}

std::vector<double> load_wind_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open wind data file: " + path);
    std::vector<double> vals;
    std::string line;
    bool first = true;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t a = line.find_first_not_of(" \t\r,");
        if (a == std::string::npos) continue;
        char* end = nullptr;
        double v = std::strtod(line.c_str() + a, &end);
        if (end == line.c_str() + a) {
            if (first) { first = false; continue; }  // header
            throw ParseError("bad value in " + path + " line " + std::to_string(lineno));
        }
        vals.push_back(v);
        first = false;
    }
    return vals;
}

std::string gmm_to_json(const GmmModel& m) {
    nlohmann::json j = {{"K", m.component_count()},
                        {"weights", m.weights},
                        {"means", m.means},
                        {"stddevs", m.stddevs},
                        {"support_max", m.support_max}};
    return j.dump(2);
}

GmmModel gmm_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GmmModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.means = j.at("means").get<std::vector<double>>();
    m.stddevs = j.at("stddevs").get<std::vector<double>>();
    m.support_max = j.at("support_max").get<double>();
    m.validate();
    return m;
}

GmmModel load_gmm_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open GMM file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return gmm_from_json(ss.str());
}

}  // namespace soca
