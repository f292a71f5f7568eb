#pragma once

// Smooth scalar functions of named real variables: expression trees with
// symbolic differentiation and substitution, Hermite grid interpolants, and
// quadratic forms. Every kind is represented by a tree; numeric leaves
// (grid interpolants) enter the tree through Call nodes.

#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gfc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

namespace expr {

enum class Op {
    Const,
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Tanh,
    Sqrt,
    Cutoff,
    Call,
};

/// Numeric function of a fixed number of arguments that can report any
/// mixed partial derivative. Implementations must be immutable.
class Kernel {
public:
    virtual ~Kernel() = default;
    virtual const std::string& name() const = 0;
    virtual std::size_t arity() const = 0;
    /// `partial[i]` is the derivative order with respect to argument i.
    virtual double eval(std::span<const int> partial, std::span<const double> x) const = 0;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    Op op = Op::Const;
    double value = 0.0;          // Const
    std::string name;            // Var
    std::vector<NodePtr> args;   // operands / call arguments
    double inner = 0.0;          // Cutoff
    double outer = 0.0;          // Cutoff
    int order = 0;               // Cutoff derivative order
    std::shared_ptr<const Kernel> kernel;  // Call
    std::vector<int> partial;              // Call derivative multi-index
};

// Builders apply constant folding and the +-0 / *1 identities only.
NodePtr constant(double v);
NodePtr variable(const std::string& name);
NodePtr add(NodePtr a, NodePtr b);
NodePtr sub(NodePtr a, NodePtr b);
NodePtr mul(NodePtr a, NodePtr b);
NodePtr div(NodePtr a, NodePtr b);
NodePtr pow(NodePtr a, NodePtr b);
NodePtr neg(NodePtr a);
NodePtr unary(Op fn, NodePtr a);
NodePtr cutoff(NodePtr x, double inner, double outer, int order = 0);
NodePtr call(std::shared_ptr<const Kernel> kernel, std::vector<int> partial, std::vector<NodePtr> args);

bool is_constant(const NodePtr& n, double v);
bool equal(const NodePtr& a, const NodePtr& b);
std::string to_string(const NodePtr& n);
void collect_variables(const NodePtr& n, std::set<std::string>& out);
NodePtr derivative(const NodePtr& n, const std::string& var);
NodePtr substitute(const NodePtr& n, const std::map<std::string, NodePtr>& bindings);
std::size_t node_count(const NodePtr& n);

/// Value and derivatives of the even C-infinity cutoff that is 1 on |x|<=inner
/// and 0 on |x|>=outer.
double cutoff_value(double x, double inner, double outer, int order);

using KernelRegistry = std::map<std::string, std::shared_ptr<const Kernel>>;

/// Parses the expression grammar. Identifiers must be listed in `variables`,
/// be a builtin function, or name a kernel in `registry`.
NodePtr parse(const std::string& text, const std::vector<std::string>& variables,
              const KernelRegistry* registry = nullptr);

/// Several trees compiled into one tape with shared subexpressions.
class Program {
public:
    Program() = default;
    Program(const std::vector<NodePtr>& outputs, const std::vector<std::string>& variables);

    std::size_t num_outputs() const { return outputs_.size(); }
    std::size_t num_variables() const { return num_vars_; }
    void evaluate(std::span<const double> x, std::span<double> out,
                  std::vector<double>& scratch) const;

private:
    struct Instr {
        Op op;
        int a = -1;
        int b = -1;
        double value = 0.0;
        double inner = 0.0;
        double outer = 0.0;
        int order = 0;
        const Kernel* kernel = nullptr;
        std::vector<int> partial;
        std::vector<int> args;
    };
    std::vector<Instr> tape_;
    std::vector<int> outputs_;
    std::size_t num_vars_ = 0;
    std::vector<std::shared_ptr<const Kernel>> kernels_;
};

}  // namespace expr

/// Hermite cubic interpolant on a regular 1-D or 2-D grid. Nodal data holds
/// the value and first derivatives (plus the mixed derivative in 2-D).
class GridInterpolant : public expr::Kernel {
public:
    enum class Outside { Error, Zero };

    struct Axis {
        double lo = 0.0;
        double hi = 1.0;
        int count = 2;
        double spacing() const { return (hi - lo) / (count - 1); }
        double node(int i) const { return lo + i * spacing(); }
    };

    /// `values`, `dx`, `dy`, `dxy` are row-major over (ix, iy); for 1-D only
    /// `values` and `dx` are used.
    GridInterpolant(std::string name, std::vector<Axis> axes, std::vector<double> values,
                    std::vector<double> dx, std::vector<double> dy, std::vector<double> dxy,
                    Outside outside = Outside::Error);

    /// Derivatives estimated from natural cubic splines through the values.
    static std::shared_ptr<GridInterpolant> from_values(std::string name, std::vector<Axis> axes,
                                                        std::vector<double> values,
                                                        Outside outside = Outside::Error);

    const std::string& name() const override { return name_; }
    std::size_t arity() const override { return axes_.size(); }
    double eval(std::span<const int> partial, std::span<const double> x) const override;

    const std::vector<Axis>& axes() const { return axes_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& dx() const { return dx_; }
    const std::vector<double>& dy() const { return dy_; }
    const std::vector<double>& dxy() const { return dxy_; }
    Outside outside() const { return outside_; }

private:
    std::string name_;
    std::vector<Axis> axes_;
    std::vector<double> values_, dx_, dy_, dxy_;
    Outside outside_;
};

enum class FunctionKind { ExpressionTree, GridInterpolant, QuadraticForm };

/// Immutable smooth function of an ordered list of named variables.
class SmoothFunction {
public:
    SmoothFunction();  // constant zero of no variables

    static SmoothFunction from_tree(expr::NodePtr tree, std::vector<std::string> variables);
    static SmoothFunction constant(double value, std::vector<std::string> variables = {});
    static SmoothFunction variable(const std::string& name);
    /// x^T A x over `variables` with symmetric A, i.e. sum_ij A_ij x_i x_j.
    static SmoothFunction quadratic_form(std::vector<std::string> variables, const Eigen::MatrixXd& matrix);
    static SmoothFunction grid(std::shared_ptr<const GridInterpolant> kernel, std::vector<std::string> variables);

    FunctionKind kind() const { return kind_; }
    const std::vector<std::string>& variables() const { return vars_; }
    const expr::NodePtr& tree() const { return tree_; }
    const Eigen::MatrixXd& form_matrix() const { return form_; }
    std::shared_ptr<const GridInterpolant> grid_kernel() const { return grid_; }

    bool depends_on(const std::string& var) const;
    std::set<std::string> free_variables() const;

    double evaluate(const std::map<std::string, double>& point) const;
    /// Point given in variables() order.
    double evaluate(std::span<const double> point) const;

    SmoothFunction differentiate(const std::string& var) const;
    SmoothFunction substitute(const std::map<std::string, SmoothFunction>& bindings,
                              std::vector<std::string> result_variables) const;
    SmoothFunction substitute(const std::map<std::string, SmoothFunction>& bindings) const;
    /// Same tree, different declared variable list (must cover the free variables).
    SmoothFunction with_variables(std::vector<std::string> variables) const;

    std::string to_string() const;

    friend SmoothFunction operator+(const SmoothFunction& a, const SmoothFunction& b);
    friend SmoothFunction operator-(const SmoothFunction& a, const SmoothFunction& b);
    friend SmoothFunction operator*(const SmoothFunction& a, const SmoothFunction& b);
    friend SmoothFunction operator-(const SmoothFunction& a);

private:
    FunctionKind kind_ = FunctionKind::ExpressionTree;
    std::vector<std::string> vars_;
    expr::NodePtr tree_;
    Eigen::MatrixXd form_;
    std::shared_ptr<const GridInterpolant> grid_;
};

SmoothFunction parse_function(const std::string& text, const std::vector<std::string>& variables,
                              const expr::KernelRegistry* registry = nullptr);
double evaluate(const SmoothFunction& f, const std::map<std::string, double>& point);
SmoothFunction differentiate(const SmoothFunction& f, const std::string& var);
SmoothFunction substitute(const SmoothFunction& f, const std::map<std::string, SmoothFunction>& bindings);
/// C-infinity even cutoff in `var`: 1 on |x|<=inner, 0 on |x|>=outer.
SmoothFunction make_cutoff(double inner, double outer, const std::string& var = "q");
/// Monotone step in `var`: 0 for x<=lo, 1 for x>=hi, built from the cutoff profile.
SmoothFunction make_step(double lo, double hi, const std::string& var);

/// Ordered union of two variable lists (first list order, then new names).
std::vector<std::string> merge_variables(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace gfc
