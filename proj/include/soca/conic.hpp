#pragma once

// Convex quadratic cone programming: linear equalities, linear inequalities,
// second-order cone blocks and a convex quadratic objective, solved by an
// embedded primal-dual interior-point method with Nesterov-Todd scaling.
//
// Dual sign convention (relied on by the relaxation diagnostics):
//   L(x, y, z) = f(x) + y' (A x - b) + z' (G x - h),   z >= 0 componentwise,
// with equality rows written "terms . x = rhs" and inequality rows
// "terms . x <= ub". A binding lower bound x >= lo therefore carries the
// multiplier of the row (-x <= -lo). SOC blocks get a dual vector in the
// dual cone with the same orientation.

#include <limits>
#include <string>
#include <vector>

namespace soca {

struct LinTerm {
    int var = 0;
    double coeff = 0.0;
};

struct AffineExpr {
    std::vector<LinTerm> terms;
    double constant = 0.0;
};

class ConicProgram {
  public:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    int add_variable(double lb = -kInf, double ub = kInf);
    int add_variables(int count, double lb = -kInf, double ub = kInf);
    void set_bounds(int var, double lb, double ub);

    void add_linear_cost(int var, double coeff);
    void add_quadratic_cost(int var_i, int var_j, double coeff);  // coeff*x_i*x_j
    void add_constant_cost(double value);

    int add_equality(std::vector<LinTerm> terms, double rhs);
    int add_inequality(std::vector<LinTerm> terms, double ub);
    // || rows[1..] ||_2 <= rows[0], every row affine in x
    int add_soc(std::vector<AffineExpr> rows);

    int n_vars() const { return n_; }
    int n_eq() const { return static_cast<int>(eq_rhs_.size()); }
    int n_ineq() const { return static_cast<int>(ineq_ub_.size()); }
    int n_soc() const { return static_cast<int>(soc_.size()); }

    // documented sparse-triplet text format for cross-solver debugging
    std::string dump_triplet() const;
    static ConicProgram parse_triplet(const std::string& text);

  private:
    friend class ConicSolver;
    friend std::vector<std::string> validate_program(const ConicProgram&);
    int n_ = 0;
    std::vector<double> lb_, ub_;
    std::vector<std::pair<int, int>> quad_idx_;
    std::vector<double> quad_coeff_;
    std::vector<double> lin_;
    double constant_ = 0.0;
    std::vector<std::vector<LinTerm>> eq_terms_;
    std::vector<double> eq_rhs_;
    std::vector<std::vector<LinTerm>> ineq_terms_;
    std::vector<double> ineq_ub_;
    std::vector<std::vector<AffineExpr>> soc_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SolveStatus s);

struct SolverOptions {
    double tol = 1e-8;       // scaled residual / relative gap tolerance
    int max_iter = 100;
    bool trace = false;      // record per-iteration log lines
};

struct ConicSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    std::vector<double> x;
    double objective = 0.0;
    double dual_objective = 0.0;

    std::vector<double> eq_duals;                 // y per equality row
    std::vector<double> ineq_duals;               // z per inequality row
    std::vector<double> bound_dual_lo, bound_dual_hi;  // per variable
    std::vector<std::vector<double>> soc_duals;

    double primal_residual = 0.0;   // scaled
    double dual_residual = 0.0;
    double gap = 0.0;               // s' z
    double relative_gap = 0.0;
    int iterations = 0;
    std::vector<std::string> trace;
};

ConicSolution solve(const ConicProgram& program, const SolverOptions& opts = {});

// report-only structural diagnostics (dimension errors, non-PSD objective,
// empty cones, obviously unbounded directions)
std::vector<std::string> validate_program(const ConicProgram& program);

}  // namespace soca
