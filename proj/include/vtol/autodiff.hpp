#pragma once

// Reverse-mode automatic differentiation on an append-only tape.
//
// Nodes hold dense row-major double tensors. Elementwise primitives store
// their local partials on the tape; structured primitives (matrix products,
// linear solves, the vortex-lattice kernels) register a vector-Jacobian
// product callback instead. A tape is single-owner: build one per sample or
// per worker and discard it after the backward sweep.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vtol::ad {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

struct Shape {
    int rows = 1;
    int cols = 1;
    [[nodiscard]] int size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Thrown for out-of-domain primitive evaluations (log of a non-positive
/// value, sqrt of a negative value). The message names the primitive and the
/// tape position it would have occupied.
class DomainError : public std::domain_error {
public:
    DomainError(const std::string& op, NodeId node, double operand);
    [[nodiscard]] const std::string& op() const { return op_; }
    [[nodiscard]] NodeId node() const { return node_; }

private:
    std::string op_;
    NodeId node_;
};

class Tape;

/// Handle to a tape node. Cheap to copy; only valid while its tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    [[nodiscard]] double value() const;
    [[nodiscard]] std::span<const double> values() const;
    [[nodiscard]] Shape shape() const;
    [[nodiscard]] int size() const { return shape().size(); }
    [[nodiscard]] NodeId id() const { return id_; }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ != kNoNode; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = kNoNode;
};

class Tape {
public:
    using Vjp = std::function<void(Tape&, NodeId)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var variable(double x);
    Var variable(std::span<const double> xs, Shape shape);
    Var variable(const Eigen::MatrixXd& m);

    /// Elementwise record with up to two operands. `partials[k]` holds
    /// d(out_e)/d(arg_k) for every output element e. Size-1 operands broadcast.
    Var record(const char* op, std::initializer_list<Var> args, std::vector<double> value,
               Shape shape, std::vector<std::vector<double>> partials);

    /// Structured record; `vjp` must push the node's adjoint to its parents via
    /// accumulate(). Parents must be earlier nodes.
    Var record_custom(const char* op, std::vector<double> value, Shape shape, Vjp vjp);

    [[nodiscard]] std::span<const double> value(NodeId id) const;
    [[nodiscard]] Shape shape(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
    [[nodiscard]] const char* op(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].op; }
    [[nodiscard]] std::span<const double> partials(NodeId id, int arg) const;
    [[nodiscard]] int arg_count(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].nargs; }
    [[nodiscard]] NodeId arg(NodeId id, int k) const { return nodes_[static_cast<std::size_t>(id)].args[k]; }

    /// Adjoint of a node after backward(); zero-filled for nodes off the path.
    [[nodiscard]] std::span<const double> adjoint(NodeId id) const;
    [[nodiscard]] std::span<const double> adjoint(Var v) const { return adjoint(v.id()); }
    [[nodiscard]] std::span<double> adjoint_mut(NodeId id);

    /// Adds `contribution` into the adjoint of `parent`. A contribution of the
    /// parent's size is added elementwise; a longer one is summed into a
    /// size-1 parent.
    void accumulate(NodeId parent, std::span<const double> contribution);

    /// Single reverse sweep seeded with `seed` (same size as `output`).
    void backward(Var output, std::span<const double> seed);
    /// Scalar output, seed 1.
    void backward(Var output);

    [[nodiscard]] NodeId size() const { return static_cast<NodeId>(nodes_.size()); }
    void clear();

private:
    struct Record {
        Shape shape;
        std::size_t value_offset = 0;
        std::size_t partial_offset = 0;
        NodeId args[2] = {kNoNode, kNoNode};
        int nargs = 0;
        int vjp = -1;
        const char* op = "";
    };

    NodeId push(const char* op, Shape shape, std::span<const double> value);

    std::vector<Record> nodes_;
    std::vector<double> values_;
    std::vector<double> partials_;
    std::vector<double> adjoints_;
    std::vector<Vjp> vjps_;
};

/// Gradient of a scalar output with respect to the listed inputs, flattened
/// in input order.
using Gradient = std::vector<double>;
Gradient gradient(Tape& tape, Var output, std::span<const Var> inputs);

// ---- scalar and elementwise primitives ------------------------------------

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var& operator+=(Var& a, Var b);
Var& operator-=(Var& a, Var b);
Var& operator*=(Var& a, double b);

Var sin(Var a);
Var cos(Var a);
Var tan(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var abs(Var a);
Var softplus(Var a);
Var atan2(Var y, Var x);
Var max(Var a, Var b);
Var max(Var a, double b);
Var min(Var a, double b);
Var square(Var a);

// ---- structured primitives ------------------------------------------------

Var dot(Var a, Var b);
Var cross(Var a, Var b);
Var sum(Var a);
/// Matrix (r x c) times vector (c).
Var matvec(Var m, Var x);
/// Batched affine map: X (n x in), W (out x in), b (out) -> X W^T + 1 b^T.
Var affine(Var x, Var w, Var b);
Var slice(Var a, int offset, int length);
/// Same data, new shape.
Var reshape(Var a, Shape shape);
Var concat(std::span<const Var> parts);
Var stack(std::span<const Var> scalars);
/// Columns [col, col+count) of a row-major matrix.
Var columns(Var m, int col, int count);
/// Horizontal concatenation of matrices with equal row counts.
Var hconcat(std::span<const Var> parts);
/// Row-wise scale and shift with per-column constants: out(i,j) = a(i,j)*s[j] + t[j].
Var column_affine(Var a, std::span<const double> scale, std::span<const double> shift);
/// Broadcasts a 3-vector onto every row of an (n x 3) field and adds it.
Var add_row(Var field, Var row);

// ---- linear solve ---------------------------------------------------------

/// Dense LU factorization retained for the adjoint.
class LuFactor {
public:
    explicit LuFactor(const Eigen::MatrixXd& a);
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    [[nodiscard]] Eigen::VectorXd solve_transposed(const Eigen::VectorXd& b) const;
    [[nodiscard]] double rcond() const { return rcond_; }
    [[nodiscard]] int size() const { return static_cast<int>(lu_.rows()); }

private:
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    double rcond_ = 0.0;
};

struct SolveAdjoint {
    Eigen::MatrixXd adjoint_a;
    Eigen::VectorXd adjoint_b;
};

/// For x = A^-1 b: adjoint_b = A^-T adjoint_x, adjoint_A = -adjoint_b x^T.
SolveAdjoint linear_solve_adjoint(const LuFactor& lu, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& adjoint_x);

/// Tape primitive x = A^-1 b with A (n x n) and b (n). Throws
/// std::runtime_error when A is numerically singular.
Var solve(Var a, Var b);

/// x = A^-1 b for a constant, already factorized A.
Var solve(std::shared_ptr<const LuFactor> lu, Var b);

// ---- gradcheck ------------------------------------------------------------

struct GradcheckResult {
    double max_rel_error = 0.0;
    int worst_index = -1;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences with per-component step
/// `step * max(1, |x_i|)`. Relative error is |a - n| / max(|a|, |n|, floor)
/// with floor = 1e-6 * max_i |a_i| (+1e-300), so a constant function scores 0.
GradcheckResult gradcheck(const ScalarFunction& f, std::span<const double> x0, double step);

}  // namespace vtol::ad
