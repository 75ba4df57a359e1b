#include <doctest.h>

#include "soca/netmodel.hpp"
#include "soca/windcost.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace soca;

namespace {

GmmModel random_model(std::mt19937_64& rng, int K) {
    std::uniform_real_distribution<double> um(0.0, 200.0), us(0.5, 40.0), uw(0.2, 1.0);
    GmmModel m;
    double wsum = 0.0;
    for (int k = 0; k < K; ++k) {
        m.weights.push_back(uw(rng));
        wsum += m.weights.back();
        m.means.push_back(um(rng));
        m.stddevs.push_back(us(rng));
    }
    for (auto& w : m.weights) w /= wsum;
    // renormalize away the last-bit drift so validate() is happy
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < m.weights.size(); ++k) s += m.weights[k];
    m.weights.back() = 1.0 - s;
    m.support_max = 225.0;
    m.validate();
    return m;
}

double quad_range(const GmmModel& m, double dn, double up) {
    double lo = dn, hi = up;
    if (std::isinf(lo)) {
        lo = m.means[0] - 12.0 * m.stddevs[0];
        for (std::size_t k = 0; k < m.means.size(); ++k)
            lo = std::min(lo, m.means[k] - 12.0 * m.stddevs[k]);
    }
    if (std::isinf(hi)) {
        hi = m.means[0] + 12.0 * m.stddevs[0];
        for (std::size_t k = 0; k < m.means.size(); ++k)
            hi = std::max(hi, m.means[k] + 12.0 * m.stddevs[k]);
    }
    return oracles::integrate([&](double v) { return v * m.pdf(v); }, lo, hi, 1e-13);
}

}  // namespace

TEST_CASE("cdf limits and symmetry") {
    GmmModel m;
    m.weights = {1.0};
    m.means = {0.0};
    m.stddevs = {1.0};
    m.support_max = 10.0;
    CHECK(m.cdf(-1e9) == doctest::Approx(0.0).scale(1.0));
    CHECK(m.cdf(1e9) == doctest::Approx(1.0));
    CHECK(m.cdf(0.0) == doctest::Approx(0.5));
}

TEST_CASE("cdf matches quadrature of the pdf at a component mean") {
    std::mt19937_64 rng(5);
    auto m = random_model(rng, 3);
    const auto heaviest = static_cast<std::size_t>(
        std::max_element(m.weights.begin(), m.weights.end()) - m.weights.begin());
    const double x = m.means[heaviest];
    double lo = x;
    for (std::size_t k = 0; k < m.means.size(); ++k)
        lo = std::min(lo, m.means[k] - 12.0 * m.stddevs[k]);
    const double viaq = oracles::integrate([&](double v) { return m.pdf(v); }, lo, x, 1e-13);
    CHECK(m.cdf(x) == doctest::Approx(viaq).epsilon(1e-10));
}

TEST_CASE("truncated first moment closed form") {
    GmmModel std1;
    std1.weights = {1.0};
    std1.means = {0.0};
    std1.stddevs = {1.0};
    std1.support_max = 10.0;
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(truncated_first_moment(std1, -inf, inf) == doctest::Approx(0.0).scale(1.0));
    // half-normal mean: E[X 1{X>0}] = 1/sqrt(2 pi)
    CHECK(truncated_first_moment(std1, 0.0, inf) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));

    std::mt19937_64 rng(17);
    auto m = random_model(rng, 3);
    CHECK(truncated_first_moment(m, 10.0, 50.0) ==
          doctest::Approx(quad_range(m, 10.0, 50.0)).epsilon(1e-9));
}

TEST_CASE("integral invariance across random models and ranges") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ur(-50.0, 250.0);
    for (int trial = 0; trial < 60; ++trial) {
        auto m = random_model(rng, 1 + static_cast<int>(rng() % 5));
        double a = ur(rng), b = ur(rng);
        if (a > b) std::swap(a, b);
        const double closed = truncated_first_moment(m, a, b);
        const double quad = quad_range(m, a, b);
        CHECK(closed == doctest::Approx(quad).epsilon(1e-12).scale(1e3));
    }
}

TEST_CASE("shortage and surplus probabilities sum to one") {
    std::mt19937_64 rng(29);
    auto m = random_model(rng, 4);
    for (double ps : {0.0, 30.0, 80.0, 150.0, 225.0}) {
        const double pr_short = m.cdf(ps);
        CHECK(pr_short + (1.0 - pr_short) == doctest::Approx(1.0));
    }
}

TEST_CASE("shortage/surplus costs against the penalty integrals") {
    std::mt19937_64 rng(31);
    GmmModel m;  // all modes >= 6 sigma inside [0, 225] so that the closed
                 // form's full-CDF probabilities match the capped integrals
    m.weights = {0.35, 0.4, 0.25};
    m.means = {60.0, 110.0, 160.0};
    m.stddevs = {8.0, 12.0, 9.0};
    m.support_max = 225.0;
    const double kL = 50.0, kH = 60.0;
    std::uniform_real_distribution<double> ups(1.0, 224.0);
    for (int trial = 0; trial < 25; ++trial) {
        const double ps = ups(rng);
        auto c = shortage_surplus_cost(m, ps, kL, kH, m.support_max);
        const double FL_quad = kL * oracles::integrate(
                                        [&](double v) { return (ps - v) * m.pdf(v); }, 0.0,
                                        ps, 1e-12);
        const double FH_quad =
            kH * oracles::integrate([&](double v) { return (v - ps) * m.pdf(v); }, ps,
                                    m.support_max, 1e-12);
        CHECK(c.F_L + c.F_H ==
              doctest::Approx(FL_quad + FH_quad).epsilon(1e-6));
    }
    // a schedule far below any mass has no shortage cost
    auto zero = shortage_surplus_cost(m, -80.0, kL, kH, m.support_max);
    CHECK(zero.F_L == 0.0);
}

TEST_CASE("total cost curve is unimodal and its minimizer tracks the penalties") {
    GmmModel m;
    m.weights = {0.5, 0.5};
    m.means = {70.0, 140.0};
    m.stddevs = {15.0, 20.0};
    m.support_max = 225.0;

    auto argmin_of = [&](double kL, double kH) {
        auto curve = wind_cost_curve(m, kL, kH, 0.0, 225.0, 901);
        const auto it = std::min_element(curve.total.begin(), curve.total.end());
        return curve.P_schedule[static_cast<std::size_t>(it - curve.total.begin())];
    };

    {
        auto curve = wind_cost_curve(m, 50.0, 60.0, 0.0, 225.0, 901);
        const auto it = std::min_element(curve.total.begin(), curve.total.end());
        const auto at = static_cast<std::size_t>(it - curve.total.begin());
        for (std::size_t i = 0; i + 1 < at; ++i)
            CHECK(curve.total[i + 1] <= curve.total[i] + 1e-9);
        for (std::size_t i = at; i + 1 < curve.total.size(); ++i)
            CHECK(curve.total[i + 1] >= curve.total[i] - 1e-9);
        // F_L nondecreasing, F_H nonincreasing along the grid
        for (std::size_t i = 0; i + 1 < curve.total.size(); ++i) {
            CHECK(curve.F_L[i + 1] >= curve.F_L[i] - 1e-9);
            CHECK(curve.F_H[i + 1] <= curve.F_H[i] + 1e-9);
        }
    }

    // argmin nonincreasing in k_L, nondecreasing in k_H
    double prev = 1e9;
    for (double kL : {30.0, 45.0, 60.0, 75.0, 90.0}) {
        const double a = argmin_of(kL, 45.0);
        CHECK(a <= prev + 1e-9);
        prev = a;
    }
    prev = -1e9;
    for (double kH : {30.0, 45.0, 60.0, 75.0, 90.0}) {
        const double a = argmin_of(60.0, kH);
        CHECK(a >= prev - 1e-9);
        prev = a;
    }
}

TEST_CASE("EM: K=1 reduces to moment matching") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> nd(50.0, 8.0);
    std::vector<double> xs;
    for (int i = 0; i < 4000; ++i) xs.push_back(nd(rng));
    auto fit = fit_gmm_em(xs, 1);
    REQUIRE(fit.converged);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    CHECK(fit.model.means[0] == doctest::Approx(mean).epsilon(1e-10));
    CHECK(fit.model.stddevs[0] == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
}

TEST_CASE("EM recovers a known two-component mixture") {
    std::mt19937_64 rng(4242);
    std::normal_distribution<double> a(20.0, 5.0), b(80.0, 10.0);
    std::bernoulli_distribution pick(0.6);  // weight of the 80 MW mode
    std::vector<double> xs;
    for (int i = 0; i < 50000; ++i) xs.push_back(pick(rng) ? b(rng) : a(rng));
    EmOptions opts;
    opts.seed = 9;
    auto fit = fit_gmm_em(xs, 2, opts);
    REQUIRE(fit.converged);
    auto lo = static_cast<std::size_t>(fit.model.means[0] > fit.model.means[1] ? 1 : 0);
    auto hi = 1 - lo;
    CHECK(fit.model.means[lo] == doctest::Approx(20.0).epsilon(0.05));
    CHECK(fit.model.means[hi] == doctest::Approx(80.0).epsilon(0.05));
    CHECK(fit.model.stddevs[lo] == doctest::Approx(5.0).epsilon(0.05));
    CHECK(fit.model.stddevs[hi] == doctest::Approx(10.0).epsilon(0.05));
    CHECK(fit.model.weights[lo] == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("EM log-likelihood is nondecreasing") {
    auto xs = load_wind_csv(std::string(SOCA_DATA_DIR) + "/wind_sample.csv");
    REQUIRE(xs.size() == 20000);
    EmOptions opts;
    opts.seed = 3;
    opts.max_iter = 120;
    auto fit = fit_gmm_em(xs, 6, opts);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
        CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-10);
}

TEST_CASE("EM on the wind sample: CDF nearly saturates at capacity") {
    auto xs = load_wind_csv(std::string(SOCA_DATA_DIR) + "/wind_sample.csv");
    EmOptions opts;
    opts.seed = 1;
    auto fit = fit_gmm_em(xs, 12, opts);
    fit.model.support_max = 225.0;
    CHECK(fit.model.cdf(225.0) > 0.99);
}

TEST_CASE("EM degenerate and undersized sample handling") {
    std::vector<double> same(100, 42.0);
    auto fit = fit_gmm_em(same, 3);
    CHECK(fit.model.component_count() == 1);
    CHECK(fit.model.means[0] == doctest::Approx(42.0));
    CHECK(fit.model.stddevs[0] > 0.0);

    std::vector<double> few = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(fit_gmm_em(few, 2), ValidationError);
}

TEST_CASE("EM determinism under a fixed seed") {
    auto xs = load_wind_csv(std::string(SOCA_DATA_DIR) + "/wind_sample.csv");
    EmOptions opts;
    opts.seed = 7;
    auto a = fit_gmm_em(xs, 4, opts);
    auto b = fit_gmm_em(xs, 4, opts);
    CHECK(gmm_to_json(a.model) == gmm_to_json(b.model));
}

TEST_CASE("PWL: two tangents on a quadratic meet at the analytic midpoint gap") {
    // f(x) = 2 x^2 + 3 x + 1 on [0, 10]
    const double a = 2.0, b = 3.0, c = 1.0;
    std::vector<double> xs, ys;
    const int n = 2001;
    for (int i = 0; i < n; ++i) {
        const double x = 10.0 * i / (n - 1);
        xs.push_back(x);
        ys.push_back((a * x + b) * x + c);
    }
    auto pwl = build_pwl_from_samples(xs, ys, 2);
    REQUIRE(pwl.slopes.size() == 2);
    CHECK(pwl.slopes[0] <= pwl.slopes[1]);
    // tangency: envelope touches the curve at both ends
    CHECK(pwl.evaluate(0.0) == doctest::Approx(c).epsilon(1e-9));
    CHECK(pwl.evaluate(10.0) == doctest::Approx(231.0).epsilon(1e-9));
    // gap at the midpoint equals a*(width/2)^2
    const double mid_gap = ((a * 5.0 + b) * 5.0 + c) - pwl.evaluate(5.0);
    CHECK(mid_gap == doctest::Approx(a * 25.0).epsilon(1e-6));
    CHECK(pwl.max_gap == doctest::Approx(a * 25.0).epsilon(1e-6));
}

TEST_CASE("PWL under-approximates the wind cost curve tightly") {
    GmmModel m;
    m.weights = {0.4, 0.6};
    m.means = {60.0, 150.0};
    m.stddevs = {18.0, 22.0};
    m.support_max = 225.0;
    auto pwl = build_pwl_cost(m, 50.0, 60.0, 0.0, 225.0, 20);
    REQUIRE(pwl.slopes.size() <= 20);
    for (std::size_t l = 1; l < pwl.slopes.size(); ++l)
        CHECK(pwl.slopes[l] >= pwl.slopes[l - 1]);

    auto curve = wind_cost_curve(m, 50.0, 60.0, 0.0, 225.0, 2001);
    double cmin = 1e300, cmax = -1e300, worst = 0.0;
    for (std::size_t i = 0; i < curve.total.size(); ++i) {
        const double env = pwl.evaluate(curve.P_schedule[i]);
        CHECK(env <= curve.total[i] + 1e-7);  // never overestimates
        worst = std::max(worst, curve.total[i] - env);
        cmin = std::min(cmin, curve.total[i]);
        cmax = std::max(cmax, curve.total[i]);
    }
    CHECK(worst < 0.005 * (cmax - cmin));
    CHECK(pwl.max_gap == doctest::Approx(worst).epsilon(1e-9).scale(1.0));
}

TEST_CASE("GMM JSON round-trip") {
    GmmModel m;
    m.weights = {0.25, 0.75};
    m.means = {10.0, 50.0};
    m.stddevs = {2.0, 7.0};
    m.support_max = 80.0;
    auto back = gmm_from_json(gmm_to_json(m));
    CHECK(back.weights == m.weights);
    CHECK(back.means == m.means);
    CHECK(back.stddevs == m.stddevs);
    CHECK(back.support_max == m.support_max);
}
