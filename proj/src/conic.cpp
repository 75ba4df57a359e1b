#include "soca/conic.hpp"
#include "soca/netmodel.hpp"  // ValidationError / ParseError

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace soca {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

int ConicProgram::add_variable(double lb, double ub) {
    lb_.push_back(lb);
    ub_.push_back(ub);
    lin_.push_back(0.0);
    return n_++;
}

int ConicProgram::add_variables(int count, double lb, double ub) {
    const int first = n_;
    for (int i = 0; i < count; ++i) add_variable(lb, ub);
    return first;
}

void ConicProgram::set_bounds(int var, double lb, double ub) {
    lb_.at(static_cast<std::size_t>(var)) = lb;
    ub_.at(static_cast<std::size_t>(var)) = ub;
}

void ConicProgram::add_linear_cost(int var, double coeff) {
    lin_.at(static_cast<std::size_t>(var)) += coeff;
}

void ConicProgram::add_quadratic_cost(int var_i, int var_j, double coeff) {
    if (var_i < 0 || var_i >= n_ || var_j < 0 || var_j >= n_)
        throw ValidationError("quadratic cost index out of range");
    quad_idx_.emplace_back(var_i, var_j);
    quad_coeff_.push_back(coeff);
}

void ConicProgram::add_constant_cost(double value) { constant_ += value; }

int ConicProgram::add_equality(std::vector<LinTerm> terms, double rhs) {
    eq_terms_.push_back(std::move(terms));
    eq_rhs_.push_back(rhs);
    return n_eq() - 1;
}

int ConicProgram::add_inequality(std::vector<LinTerm> terms, double ub) {
    ineq_terms_.push_back(std::move(terms));
    ineq_ub_.push_back(ub);
    return n_ineq() - 1;
}

int ConicProgram::add_soc(std::vector<AffineExpr> rows) {
    if (rows.size() < 2) throw ValidationError("SOC block needs dimension >= 2");
    soc_.push_back(std::move(rows));
    return n_soc() - 1;
}

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::NumericalFailure: return "numerical_failure";
    }
    return "?";
}

std::vector<std::string> validate_program(const ConicProgram& p) {
    std::vector<std::string> notes;
    auto check_terms = [&](const std::vector<LinTerm>& terms, const std::string& what) {
        for (auto& t : terms)
            if (t.var < 0 || t.var >= p.n_)
                notes.push_back(what + " references variable " + std::to_string(t.var) +
                                " out of range");
    };
    for (std::size_t r = 0; r < p.eq_terms_.size(); ++r)
        check_terms(p.eq_terms_[r], "equality row " + std::to_string(r));
    for (std::size_t r = 0; r < p.ineq_terms_.size(); ++r)
        check_terms(p.ineq_terms_[r], "inequality row " + std::to_string(r));
    for (std::size_t b = 0; b < p.soc_.size(); ++b) {
        if (p.soc_[b].size() < 2)
            notes.push_back("SOC block " + std::to_string(b) + " has dimension < 2");
        for (auto& row : p.soc_[b]) check_terms(row.terms, "SOC block " + std::to_string(b));
    }
    for (int i = 0; i < p.n_; ++i)
        if (p.lb_[static_cast<std::size_t>(i)] > p.ub_[static_cast<std::size_t>(i)])
            notes.push_back("variable " + std::to_string(i) + " has lb > ub");

    // objective curvature: exact diagonal test, dense eigencheck when small
    bool off_diag = false;
    std::vector<double> diag(static_cast<std::size_t>(p.n_), 0.0);
    for (std::size_t k = 0; k < p.quad_idx_.size(); ++k) {
        auto [i, j] = p.quad_idx_[k];
        if (i == j) diag[static_cast<std::size_t>(i)] += p.quad_coeff_[k];
        else off_diag = true;
    }
    if (!off_diag) {
        for (int i = 0; i < p.n_; ++i)
            if (diag[static_cast<std::size_t>(i)] < 0.0) {
                notes.push_back("objective is not positive semidefinite (negative coefficient on x" +
                                std::to_string(i) + "^2)");
                break;
            }
    } else if (p.n_ <= 1000) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p.n_, p.n_);
        for (std::size_t k = 0; k < p.quad_idx_.size(); ++k) {
            auto [i, j] = p.quad_idx_[k];
            H(i, j) += p.quad_coeff_[k];
        }
        Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
            notes.push_back("objective is not positive semidefinite");
    }

    // crude unbounded-below screen: a variable with negative linear cost, no
    // upper bound and no constraint occurrences
    std::vector<bool> used(static_cast<std::size_t>(p.n_), false);
    auto mark = [&](const std::vector<LinTerm>& terms) {
        for (auto& t : terms)
            if (t.var >= 0 && t.var < p.n_) used[static_cast<std::size_t>(t.var)] = true;
    };
    for (auto& r : p.eq_terms_) mark(r);
    for (auto& r : p.ineq_terms_) mark(r);
    for (auto& b : p.soc_)
        for (auto& row : b) mark(row.terms);
    for (std::size_t k = 0; k < p.quad_idx_.size(); ++k) {
        used[static_cast<std::size_t>(p.quad_idx_[k].first)] = true;
        used[static_cast<std::size_t>(p.quad_idx_[k].second)] = true;
    }
    for (int i = 0; i < p.n_; ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (!used[s] && ((p.lin_[s] < 0.0 && !std::isfinite(p.ub_[s])) ||
                         (p.lin_[s] > 0.0 && !std::isfinite(p.lb_[s]))))
            notes.push_back("objective unbounded below in unconstrained variable x" +
                            std::to_string(i));
    }
    return notes;
}

namespace {

// cone layout: ml orthant rows, then SOC blocks with given dimensions
struct ConeLayout {
    int ml = 0;
    std::vector<int> dims;      // per SOC block
    std::vector<int> offsets;   // start of each SOC block in the m-vector
    int m = 0;
    int rank() const { return ml + static_cast<int>(dims.size()); }
};

struct Scaling {
    VectorXd wl;                             // orthant: w_i = sqrt(s/z)
    std::vector<VectorXd> wbar;              // per SOC block, J(wbar)=1
    std::vector<double> beta;
    VectorXd lambda;                         // scaled point, full m-vector
};

double block_min_eig(const ConeLayout& lay, const VectorXd& u) {
    double me = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lay.ml; ++i) me = std::min(me, u(i));
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        me = std::min(me, u(o) - u.segment(o + 1, d - 1).norm());
    }
    return me;
}

void add_identity(const ConeLayout& lay, VectorXd& u, double t) {
    for (int i = 0; i < lay.ml; ++i) u(i) += t;
    for (std::size_t b = 0; b < lay.dims.size(); ++b) u(lay.offsets[b]) += t;
}

// Jordan product u o v
VectorXd jprod(const ConeLayout& lay, const VectorXd& u, const VectorXd& v) {
    VectorXd r(lay.m);
    for (int i = 0; i < lay.ml; ++i) r(i) = u(i) * v(i);
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        r(o) = u.segment(o, d).dot(v.segment(o, d));
        r.segment(o + 1, d - 1) =
            u(o) * v.segment(o + 1, d - 1) + v(o) * u.segment(o + 1, d - 1);
    }
    return r;
}

// solve lambda o u = d for u
VectorXd jdiv(const ConeLayout& lay, const VectorXd& lambda, const VectorXd& d) {
    VectorXd u(lay.m);
    for (int i = 0; i < lay.ml; ++i) u(i) = d(i) / lambda(i);
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], dim = lay.dims[b];
        const double l0 = lambda(o);
        const auto l1 = lambda.segment(o + 1, dim - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double u0 = (l0 * d(o) - l1.dot(d.segment(o + 1, dim - 1))) / det;
        u(o) = u0;
        u.segment(o + 1, dim - 1) = (d.segment(o + 1, dim - 1) - u0 * l1) / l0;
    }
    return u;
}

// max step t such that u + t*du stays in the cone (may be +inf)
double max_step(const ConeLayout& lay, const VectorXd& u, const VectorXd& du) {
    double t = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lay.ml; ++i)
        if (du(i) < 0.0) t = std::min(t, -u(i) / du(i));
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        const double u0 = u(o), v0 = du(o);
        const auto u1 = u.segment(o + 1, d - 1);
        const auto v1 = du.segment(o + 1, d - 1);
        const double a = v0 * v0 - v1.squaredNorm();
        const double bq = 2.0 * (u0 * v0 - u1.dot(v1));
        const double c = u0 * u0 - u1.squaredNorm();  // > 0 strictly inside
        double tb = std::numeric_limits<double>::infinity();
        if (std::abs(a) < 1e-300) {
            if (bq < 0.0) tb = -c / bq;
        } else {
            const double disc = bq * bq - 4.0 * a * c;
            if (a < 0.0) {
                // f opens downward, f(0)=c>0: boundary at the larger root
                const double sq = std::sqrt(std::max(disc, 0.0));
                tb = (-bq - sq) / (2.0 * a);
            } else if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double q = -(bq + (bq >= 0 ? sq : -sq)) / 2.0;
                double r1 = q / a;
                double r2 = std::abs(q) > 0 ? c / q : std::numeric_limits<double>::infinity();
                if (r1 > r2) std::swap(r1, r2);
                if (r1 > 0.0) tb = r1;  // f(0)>0 rules out r1 <= 0 < r2
            }
        }
        t = std::min(t, std::max(tb, 0.0));
    }
    return t;
}

Scaling compute_scaling(const ConeLayout& lay, const VectorXd& s, const VectorXd& z) {
    Scaling W;
    W.wl.resize(lay.ml);
    W.lambda.resize(lay.m);
    for (int i = 0; i < lay.ml; ++i) {
        W.wl(i) = std::sqrt(s(i) / z(i));
        W.lambda(i) = std::sqrt(s(i) * z(i));
    }
    W.wbar.resize(lay.dims.size());
    W.beta.resize(lay.dims.size());
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        const auto sb = s.segment(o, d);
        const auto zb = z.segment(o, d);
        const double js =
            std::max(sb(0) * sb(0) - sb.segment(1, d - 1).squaredNorm(), 1e-300);
        const double jz =
            std::max(zb(0) * zb(0) - zb.segment(1, d - 1).squaredNorm(), 1e-300);
        const double sqjs = std::sqrt(js), sqjz = std::sqrt(jz);
        VectorXd sbar = sb / sqjs, zbar = zb / sqjz;
        const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
        VectorXd wbar(d);
        wbar(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
        wbar.segment(1, d - 1) =
            (sbar.segment(1, d - 1) - zbar.segment(1, d - 1)) / (2.0 * gamma);
        W.wbar[b] = wbar;
        W.beta[b] = std::sqrt(sqjs / sqjz);

        // lambda = W z computed through the hyperbolic Householder form
        const auto z1 = zb.segment(1, d - 1);
        const double inner = wbar.segment(1, d - 1).dot(z1);
        VectorXd lam(d);
        lam(0) = W.beta[b] * (wbar(0) * zb(0) + inner);
        lam.segment(1, d - 1) =
            W.beta[b] *
            (z1 + (zb(0) + inner / (1.0 + wbar(0))) * wbar.segment(1, d - 1));
        W.lambda.segment(o, d) = lam;
    }
    return W;
}

// u -> W u (symmetric scaling)
VectorXd apply_W(const ConeLayout& lay, const Scaling& W, const VectorXd& u) {
    VectorXd r(lay.m);
    for (int i = 0; i < lay.ml; ++i) r(i) = W.wl(i) * u(i);
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        const auto& wbar = W.wbar[b];
        const auto u1 = u.segment(o + 1, d - 1);
        const double inner = wbar.segment(1, d - 1).dot(u1);
        r(o) = W.beta[b] * (wbar(0) * u(o) + inner);
        r.segment(o + 1, d - 1) =
            W.beta[b] * (u1 + (u(o) + inner / (1.0 + wbar(0))) * wbar.segment(1, d - 1));
    }
    return r;
}

// u -> W^{-1} u  (W^{-1} = (1/beta) H(J wbar), J wbar = (w0, -w1))
VectorXd apply_Winv(const ConeLayout& lay, const Scaling& W, const VectorXd& u) {
    VectorXd r(lay.m);
    for (int i = 0; i < lay.ml; ++i) r(i) = u(i) / W.wl(i);
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        const int o = lay.offsets[b], d = lay.dims[b];
        const auto& wbar = W.wbar[b];
        const auto u1 = u.segment(o + 1, d - 1);
        const double dot = wbar.segment(1, d - 1).dot(u1);
        r(o) = (wbar(0) * u(o) - dot) / W.beta[b];
        r.segment(o + 1, d - 1) =
            (u1 - (u(o) - dot / (1.0 + wbar(0))) * wbar.segment(1, d - 1)) / W.beta[b];
    }
    return r;
}

// identity scaling with the same sparsity footprint as a real NT scaling
Scaling identity_scaling(const ConeLayout& lay) {
    Scaling W;
    W.wl = VectorXd::Ones(lay.ml);
    W.lambda = VectorXd::Zero(lay.m);
    W.wbar.resize(lay.dims.size());
    W.beta.assign(lay.dims.size(), 1.0);
    for (std::size_t b = 0; b < lay.dims.size(); ++b) {
        W.wbar[b] = VectorXd::Zero(lay.dims[b]);
        W.wbar[b](0) = 1.0;
    }
    return W;
}

}  // namespace

class ConicSolver {
  public:
    ConicSolver(const ConicProgram& p, const SolverOptions& opts) : p_(p), opts_(opts) {}

    ConicSolution run();

  private:
    const ConicProgram& p_;
    const SolverOptions& opts_;

    int n_ = 0, p_rows_ = 0;
    ConeLayout lay_;
    SpMat H_, A_, G_;
    VectorXd q_, b_, h_;
    // provenance of each orthant row: user inequality, lower or upper bound
    struct RowOrigin {
        enum Kind { UserIneq, LowerBound, UpperBound } kind;
        int index;
    };
    std::vector<RowOrigin> row_origin_;

    Eigen::SimplicialLDLT<SpMat> ldlt_;
    bool analyzed_ = false;
    std::vector<Triplet> kkt_fixed_;  // H, A, G parts (values constant)
    double reg_ = 1e-10;

    void build_standard_form();
    SpMat assemble_kkt(const Scaling* W, bool regularized) const;
    bool factor(const SpMat& K);
    VectorXd kkt_solve(const SpMat& K_exact, const VectorXd& rhs);
    double primal_obj(const VectorXd& x) const;
    ConicSolution extract(const VectorXd& x, const VectorXd& y, const VectorXd& z,
                          SolveStatus status, int iters, double pres, double dres,
                          double gap, double relgap,
                          const std::vector<std::string>& tracelog) const;
};

void ConicSolver::build_standard_form() {
    n_ = p_.n_;
    p_rows_ = p_.n_eq();

    std::vector<Triplet> ht;
    for (std::size_t k = 0; k < p_.quad_idx_.size(); ++k) {
        auto [i, j] = p_.quad_idx_[k];
        const double c = p_.quad_coeff_[k];
        // Hessian of sum c x_i x_j
        if (i == j) {
            ht.emplace_back(i, i, 2.0 * c);
        } else {
            ht.emplace_back(i, j, c);
            ht.emplace_back(j, i, c);
        }
    }
    H_.resize(n_, n_);
    H_.setFromTriplets(ht.begin(), ht.end());

    q_.resize(n_);
    for (int i = 0; i < n_; ++i) q_(i) = p_.lin_[static_cast<std::size_t>(i)];

    std::vector<Triplet> at;
    b_.resize(p_rows_);
    for (int r = 0; r < p_rows_; ++r) {
        for (auto& t : p_.eq_terms_[static_cast<std::size_t>(r)])
            at.emplace_back(r, t.var, t.coeff);
        b_(r) = p_.eq_rhs_[static_cast<std::size_t>(r)];
    }
    A_.resize(p_rows_, n_);
    A_.setFromTriplets(at.begin(), at.end());

    // orthant rows: user inequalities, then finite bounds
    std::vector<Triplet> gt;
    std::vector<double> hv;
    int row = 0;
    for (int r = 0; r < p_.n_ineq(); ++r) {
        for (auto& t : p_.ineq_terms_[static_cast<std::size_t>(r)])
            gt.emplace_back(row, t.var, t.coeff);
        hv.push_back(p_.ineq_ub_[static_cast<std::size_t>(r)]);
        row_origin_.push_back({RowOrigin::UserIneq, r});
        ++row;
    }
    for (int i = 0; i < n_; ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (std::isfinite(p_.lb_[s])) {
            gt.emplace_back(row, i, -1.0);
            hv.push_back(-p_.lb_[s]);
            row_origin_.push_back({RowOrigin::LowerBound, i});
            ++row;
        }
        if (std::isfinite(p_.ub_[s])) {
            gt.emplace_back(row, i, 1.0);
            hv.push_back(p_.ub_[s]);
            row_origin_.push_back({RowOrigin::UpperBound, i});
            ++row;
        }
    }
    lay_.ml = row;
    for (auto& block : p_.soc_) {
        lay_.offsets.push_back(row);
        lay_.dims.push_back(static_cast<int>(block.size()));
        for (auto& expr : block) {
            // s_row = expr(x):  G row = -terms, h = +constant
            for (auto& t : expr.terms) gt.emplace_back(row, t.var, -t.coeff);
            hv.push_back(expr.constant);
            ++row;
        }
    }
    lay_.m = row;
    G_.resize(lay_.m, n_);
    G_.setFromTriplets(gt.begin(), gt.end());
    h_ = Eigen::Map<VectorXd>(hv.data(), static_cast<long>(hv.size()));
}

SpMat ConicSolver::assemble_kkt(const Scaling* W, bool regularized) const {
    const int N = n_ + p_rows_ + lay_.m;
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(H_.nonZeros() + 2 * A_.nonZeros() + 2 * G_.nonZeros() +
                                       N + lay_.m * 3));
    for (int k = 0; k < H_.outerSize(); ++k)
        for (SpMat::InnerIterator it(H_, k); it; ++it)
            t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < A_.outerSize(); ++k)
        for (SpMat::InnerIterator it(A_, k); it; ++it) {
            t.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
            t.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()),
                           it.value());
        }
    const int zoff = n_ + p_rows_;
    for (int k = 0; k < G_.outerSize(); ++k)
        for (SpMat::InnerIterator it(G_, k); it; ++it) {
            t.emplace_back(zoff + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
            t.emplace_back(static_cast<int>(it.col()), zoff + static_cast<int>(it.row()),
                           it.value());
        }
    // -W'W block (identity when W is absent)
    if (W) {
        for (int i = 0; i < lay_.ml; ++i)
            t.emplace_back(zoff + i, zoff + i, -W->wl(i) * W->wl(i));
        for (std::size_t bk = 0; bk < lay_.dims.size(); ++bk) {
            const int o = lay_.offsets[bk], d = lay_.dims[bk];
            const double b2 = W->beta[bk] * W->beta[bk];
            const auto& wb = W->wbar[bk];
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    double v = 2.0 * wb(i) * wb(j);
                    if (i == j) v -= (i == 0 ? 1.0 : -1.0);
                    t.emplace_back(zoff + o + i, zoff + o + j, -b2 * v);
                }
        }
    } else {
        for (int i = 0; i < lay_.m; ++i) t.emplace_back(zoff + i, zoff + i, -1.0);
    }
    if (regularized) {
        for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg_);
        for (int i = n_; i < N; ++i) t.emplace_back(i, i, -reg_);
    }
    SpMat K(N, N);
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

bool ConicSolver::factor(const SpMat& K) {
    if (!analyzed_) {
        ldlt_.analyzePattern(K);
        analyzed_ = true;
    }
    ldlt_.factorize(K);
    return ldlt_.info() == Eigen::Success;
}

VectorXd ConicSolver::kkt_solve(const SpMat& K_exact, const VectorXd& rhs) {
    VectorXd x = ldlt_.solve(rhs);
    for (int round = 0; round < 2; ++round) {
        VectorXd r = rhs - K_exact * x;
        x += ldlt_.solve(r);
    }
    return x;
}

double ConicSolver::primal_obj(const VectorXd& x) const {
    return 0.5 * x.dot(H_ * x) + q_.dot(x) + p_.constant_;
}

ConicSolution ConicSolver::extract(const VectorXd& x, const VectorXd& y, const VectorXd& z,
                                   SolveStatus status, int iters, double pres, double dres,
                                   double gap, double relgap,
                                   const std::vector<std::string>& tracelog) const {
    ConicSolution sol;
    sol.status = status;
    sol.x.assign(x.data(), x.data() + n_);
    sol.objective = primal_obj(x);
    sol.dual_objective = sol.objective - gap;
    sol.eq_duals.assign(y.data(), y.data() + p_rows_);
    sol.ineq_duals.assign(static_cast<std::size_t>(p_.n_ineq()), 0.0);
    sol.bound_dual_lo.assign(static_cast<std::size_t>(n_), 0.0);
    sol.bound_dual_hi.assign(static_cast<std::size_t>(n_), 0.0);
    for (int r = 0; r < lay_.ml; ++r) {
        const auto& o = row_origin_[static_cast<std::size_t>(r)];
        switch (o.kind) {
            case RowOrigin::UserIneq:
                sol.ineq_duals[static_cast<std::size_t>(o.index)] = z(r);
                break;
            case RowOrigin::LowerBound:
                sol.bound_dual_lo[static_cast<std::size_t>(o.index)] = z(r);
                break;
            case RowOrigin::UpperBound:
                sol.bound_dual_hi[static_cast<std::size_t>(o.index)] = z(r);
                break;
        }
    }
    for (std::size_t bk = 0; bk < lay_.dims.size(); ++bk) {
        const int o = lay_.offsets[bk], d = lay_.dims[bk];
        sol.soc_duals.emplace_back(z.data() + o, z.data() + o + d);
    }
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.gap = gap;
    sol.relative_gap = relgap;
    sol.iterations = iters;
    sol.trace = tracelog;
    return sol;
}

ConicSolution ConicSolver::run() {
    build_standard_form();
    std::vector<std::string> tracelog;
    char line[256];

    const int m = lay_.m;

    // equality-constrained QP: a single KKT solve
    if (m == 0) {
        SpMat K = assemble_kkt(nullptr, true);
        SpMat K0 = assemble_kkt(nullptr, false);
        if (!factor(K)) {
            return extract(VectorXd::Zero(n_), VectorXd::Zero(p_rows_), VectorXd(),
                           SolveStatus::NumericalFailure, 0, 0, 0, 0, 0, tracelog);
        }
        VectorXd rhs(n_ + p_rows_);
        rhs << -q_, b_;
        VectorXd u = kkt_solve(K0, rhs);
        VectorXd x = u.head(n_), y = u.segment(n_, p_rows_);
        const double dres = (H_ * x + q_ + A_.transpose() * y).norm() /
                            std::max(1.0, q_.norm());
        const double pres = p_rows_ ? (A_ * x - b_).norm() / std::max(1.0, b_.norm()) : 0.0;
        const bool ok = pres <= opts_.tol * 10 && dres <= opts_.tol * 10;
        return extract(x, y, VectorXd(), ok ? SolveStatus::Optimal : SolveStatus::NumericalFailure,
                       1, pres, dres, 0.0, 0.0, tracelog);
    }

    // scale-aware static regularization
    reg_ = 1e-11 * std::max({1.0, q_.lpNorm<Eigen::Infinity>(),
                             b_.size() ? b_.lpNorm<Eigen::Infinity>() : 0.0,
                             h_.lpNorm<Eigen::Infinity>()});
    reg_ = std::min(reg_, 1e-7);

    // ---- initial point: solve with identity scaling (same sparsity pattern
    // as the NT-scaled systems, so the symbolic factorization is reused)
    const Scaling Wid = identity_scaling(lay_);
    SpMat K_init = assemble_kkt(&Wid, true);
    SpMat K_init0 = assemble_kkt(&Wid, false);
    if (!factor(K_init))
        return extract(VectorXd::Zero(n_), VectorXd::Zero(p_rows_), VectorXd::Zero(m),
                       SolveStatus::NumericalFailure, 0, 0, 0, 0, 0, tracelog);
    VectorXd rhs(n_ + p_rows_ + m);
    rhs.head(n_) = -q_;
    rhs.segment(n_, p_rows_) = b_;
    rhs.tail(m) = h_;
    VectorXd u0 = kkt_solve(K_init0, rhs);
    VectorXd x = u0.head(n_);
    VectorXd y = u0.segment(n_, p_rows_);
    VectorXd z = u0.tail(m);
    VectorXd s = -z;

    {
        const double ts = -block_min_eig(lay_, s);
        if (ts >= -1e-8 * std::max(1.0, s.norm())) add_identity(lay_, s, 1.0 + ts);
        const double tz = -block_min_eig(lay_, z);
        if (tz >= -1e-8 * std::max(1.0, z.norm())) add_identity(lay_, z, 1.0 + tz);
    }

    const double rank = lay_.rank();
    double best_score = std::numeric_limits<double>::infinity();
    VectorXd bx = x, by = y, bz = z;
    double bpres = 0, bdres = 0, bgap = 0, brelgap = 0;

    for (int iter = 0; iter < opts_.max_iter; ++iter) {
        VectorXd resx = H_ * x + q_ + A_.transpose() * y + G_.transpose() * z;
        VectorXd resy = A_ * x - b_;
        VectorXd resz = G_ * x + s - h_;

        const double gap = s.dot(z);
        const double mu = gap / rank;
        const double pcost = primal_obj(x);
        const double pres = std::max(
            p_rows_ ? resy.norm() / std::max(1.0, b_.norm()) : 0.0,
            resz.norm() / std::max(1.0, h_.norm()));
        const double dres = resx.norm() / std::max(1.0, q_.norm());
        const double relgap = gap / std::max(1.0, std::abs(pcost));

        if (opts_.trace) {
            std::snprintf(line, sizeof line, "%3d pcost=%.12e gap=%.6e pres=%.6e dres=%.6e",
                          iter, pcost, gap, pres, dres);
            tracelog.emplace_back(line);
        }

        const double score = pres + dres + relgap;
        if (score < best_score) {
            best_score = score;
            bx = x; by = y; bz = z;
            bpres = pres; bdres = dres; bgap = gap; brelgap = relgap;
        }

        if (pres <= opts_.tol && dres <= opts_.tol && relgap <= opts_.tol)
            return extract(x, y, z, SolveStatus::Optimal, iter, pres, dres, gap, relgap,
                           tracelog);

        // infeasibility / unboundedness certificates (heuristic)
        {
            const double val = b_.dot(y) + h_.dot(z);
            const double yznorm = std::sqrt(y.squaredNorm() + z.squaredNorm());
            if (val < -1e-6 * std::max(1.0, yznorm)) {
                const double cert =
                    (A_.transpose() * y + G_.transpose() * z).norm() / (-val);
                if (cert < 1e-7)
                    return extract(x, y, z, SolveStatus::Infeasible, iter, pres, dres, gap,
                                   relgap, tracelog);
            }
        }
        if (x.norm() > 1e5) {
            VectorXd xh = x / x.norm();
            const bool ray = (H_ * xh).norm() < 1e-7 &&
                             (p_rows_ == 0 || (A_ * xh).norm() < 1e-7) &&
                             block_min_eig(lay_, -(G_ * xh)) > -1e-7 && q_.dot(xh) < -1e-7;
            if (ray)
                return extract(x, y, z, SolveStatus::Unbounded, iter, pres, dres, gap, relgap,
                               tracelog);
        }

        auto classify_failure = [&]() {
            // a dual-feasible point with negative value and a large
            // complementarity gap is the signature of primal infeasibility
            if (dres <= 1e-7 && pres > 1e-4 && relgap > 1e-2 &&
                b_.dot(y) + h_.dot(z) < 0.0)
                return SolveStatus::Infeasible;
            return SolveStatus::NumericalFailure;
        };

        Scaling W = compute_scaling(lay_, s, z);
        SpMat K = assemble_kkt(&W, true);
        SpMat K0 = assemble_kkt(&W, false);
        if (!factor(K))
            return extract(bx, by, bz, classify_failure(), iter, bpres, bdres, bgap,
                           brelgap, tracelog);

        // affine direction
        VectorXd rhs3(n_ + p_rows_ + m);
        rhs3.head(n_) = -resx;
        rhs3.segment(n_, p_rows_) = -resy;
        rhs3.tail(m) = -resz + s;
        VectorXd d_aff = kkt_solve(K0, rhs3);
        VectorXd dz_aff = d_aff.tail(m);
        VectorXd ds_aff = -s - apply_W(lay_, W, apply_W(lay_, W, dz_aff));

        double alpha_aff = std::min({1.0, max_step(lay_, s, ds_aff), max_step(lay_, z, dz_aff)});
        const double mu_aff = (s + alpha_aff * ds_aff).dot(z + alpha_aff * dz_aff) / rank;
        double sigma = std::clamp(mu_aff / mu, 0.0, 1.0);
        sigma = sigma * sigma * sigma;

        // combined direction
        VectorXd comp = jprod(lay_, W.lambda, W.lambda);
        comp += jprod(lay_, apply_Winv(lay_, W, ds_aff), apply_W(lay_, W, dz_aff));
        VectorXd d_s = -comp;
        add_identity(lay_, d_s, sigma * mu);

        VectorXd wldiv = jdiv(lay_, W.lambda, d_s);
        rhs3.tail(m) = -resz - apply_W(lay_, W, wldiv);
        VectorXd dir = kkt_solve(K0, rhs3);
        VectorXd dx = dir.head(n_);
        VectorXd dy = dir.segment(n_, p_rows_);
        VectorXd dz = dir.tail(m);
        VectorXd ds = apply_W(lay_, W, wldiv - apply_W(lay_, W, dz));

        double alpha = std::min({1.0, max_step(lay_, s, ds), max_step(lay_, z, dz)});
        alpha *= 0.99;
        if (alpha < 1e-13)
            return extract(bx, by, bz, classify_failure(), iter, bpres, bdres, bgap, brelgap,
                           tracelog);

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
    }

    // iteration cap: report the best iterate seen
    return extract(bx, by, bz, SolveStatus::NumericalFailure, opts_.max_iter, bpres, bdres,
                   bgap, brelgap, tracelog);
}

ConicSolution solve(const ConicProgram& program, const SolverOptions& opts) {
    ConicSolver solver(program, opts);
    return solver.run();
}

// ---- sparse-triplet text format ------------------------------------------
//
//   vars <n>
//   bound <i> <lo> <hi>
//   obj_quad <i> <j> <coeff>
//   obj_lin <i> <coeff>
//   obj_const <c>
//   eq <rhs> <k> <i1> <c1> ... <ik> <ck>
//   ineq <ub> <k> <i1> <c1> ... <ik> <ck>
//   soc <nrows>, followed by nrows lines: row <const> <k> <i1> <c1> ...

std::string ConicProgram::dump_triplet() const {
    std::ostringstream os;
    os.precision(17);
    os << "vars " << n_ << "\n";
    for (int i = 0; i < n_; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (std::isfinite(lb_[si]) || std::isfinite(ub_[si]))
            os << "bound " << i << ' ' << lb_[si] << ' ' << ub_[si] << "\n";
    }
    for (std::size_t k = 0; k < quad_idx_.size(); ++k)
        os << "obj_quad " << quad_idx_[k].first << ' ' << quad_idx_[k].second << ' '
           << quad_coeff_[k] << "\n";
    for (int i = 0; i < n_; ++i)
        if (lin_[static_cast<std::size_t>(i)] != 0.0)
            os << "obj_lin " << i << ' ' << lin_[static_cast<std::size_t>(i)] << "\n";
    if (constant_ != 0.0) os << "obj_const " << constant_ << "\n";
    auto put_terms = [&](const std::vector<LinTerm>& terms) {
        os << ' ' << terms.size();
        for (auto& t : terms) os << ' ' << t.var << ' ' << t.coeff;
        os << "\n";
    };
    for (std::size_t r = 0; r < eq_terms_.size(); ++r) {
        os << "eq " << eq_rhs_[r];
        put_terms(eq_terms_[r]);
    }
    for (std::size_t r = 0; r < ineq_terms_.size(); ++r) {
        os << "ineq " << ineq_ub_[r];
        put_terms(ineq_terms_[r]);
    }
    for (auto& block : soc_) {
        os << "soc " << block.size() << "\n";
        for (auto& row : block) {
            os << "row " << row.constant;
            put_terms(row.terms);
        }
    }
    return os.str();
}

ConicProgram ConicProgram::parse_triplet(const std::string& text) {
    ConicProgram p;
    std::istringstream is(text);
    std::string tok;
    auto read_terms = [&](std::istringstream& ls) {
        std::size_t k;
        ls >> k;
        std::vector<LinTerm> terms(k);
        for (auto& t : terms) ls >> t.var >> t.coeff;
        return terms;
    };
    std::string line;
    int pending_soc = 0;
    std::vector<AffineExpr> soc_rows;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        if (!(ls >> tok)) continue;
        if (tok == "vars") {
            int n;
            ls >> n;
            p.add_variables(n);
        } else if (tok == "bound") {
            int i;
            double lo, hi;
            ls >> i >> lo >> hi;
            p.set_bounds(i, lo, hi);
        } else if (tok == "obj_quad") {
            int i, j;
            double c;
            ls >> i >> j >> c;
            p.add_quadratic_cost(i, j, c);
        } else if (tok == "obj_lin") {
            int i;
            double c;
            ls >> i >> c;
            p.add_linear_cost(i, c);
        } else if (tok == "obj_const") {
            double c;
            ls >> c;
            p.add_constant_cost(c);
        } else if (tok == "eq") {
            double rhs;
            ls >> rhs;
            p.add_equality(read_terms(ls), rhs);
        } else if (tok == "ineq") {
            double ub;
            ls >> ub;
            p.add_inequality(read_terms(ls), ub);
        } else if (tok == "soc") {
            ls >> pending_soc;
            soc_rows.clear();
        } else if (tok == "row") {
            AffineExpr e;
            ls >> e.constant;
            e.terms = read_terms(ls);
            soc_rows.push_back(std::move(e));
            if (static_cast<int>(soc_rows.size()) == pending_soc) {
                p.add_soc(soc_rows);
                soc_rows.clear();
                pending_soc = 0;
            }
        } else {
            throw ParseError("unknown token in conic program dump: " + tok);
        }
    }
    return p;
}

}  // namespace soca
