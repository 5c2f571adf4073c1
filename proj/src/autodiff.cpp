#include "vtol/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace vtol::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

std::string domain_message(const std::string& op, NodeId node, double operand) {
    std::ostringstream os;
    os << "autodiff: " << op << " outside its domain (operand " << operand << ") at tape node "
       << node;
    return os.str();
}

Tape& tape_of(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw std::invalid_argument("autodiff: operands belong to different tapes");
    }
    return *a.tape();
}

template <class F, class D>
Var unary(const char* op, Var a, F f, D df) {
    Tape& t = *a.tape();
    auto x = a.values();
    std::vector<double> y(x.size());
    std::vector<double> p(x.size());
    for (std::size_t e = 0; e < x.size(); ++e) {
        y[e] = f(x[e]);
        p[e] = df(x[e], y[e]);
    }
    return t.record(op, {a}, std::move(y), a.shape(), {std::move(p)});
}

// f(x, y) -> value, dfa(x, y, out) / dfb(x, y, out) -> partials.
template <class F, class DA, class DB>
Var binary(const char* op, Var a, Var b, F f, DA dfa, DB dfb) {
    Tape& t = tape_of(a, b);
    auto xa = a.values();
    auto xb = b.values();
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    Shape out;
    if (sa == sb || sb.size() == 1) {
        out = sa;
    } else if (sa.size() == 1) {
        out = sb;
    } else {
        throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
    }
    const auto n = static_cast<std::size_t>(out.size());
    std::vector<double> y(n);
    std::vector<double> pa(n);
    std::vector<double> pb(n);
    for (std::size_t e = 0; e < n; ++e) {
        const double u = xa[xa.size() == 1 ? 0 : e];
        const double v = xb[xb.size() == 1 ? 0 : e];
        y[e] = f(u, v);
        pa[e] = dfa(u, v, y[e]);
        pb[e] = dfb(u, v, y[e]);
    }
    return t.record(op, {a, b}, std::move(y), out, {std::move(pa), std::move(pb)});
}

}  // namespace

DomainError::DomainError(const std::string& op, NodeId node, double operand)
    : std::domain_error(domain_message(op, node, operand)), op_(op), node_(node) {}

// ---- Var -------------------------------------------------------------------

double Var::value() const {
    auto v = tape_->value(id_);
    if (v.size() != 1) {
        throw std::logic_error("autodiff: value() on a non-scalar node");
    }
    return v[0];
}

std::span<const double> Var::values() const { return tape_->value(id_); }

Shape Var::shape() const { return tape_->shape(id_); }

// ---- Tape ------------------------------------------------------------------

NodeId Tape::push(const char* op, Shape shape, std::span<const double> value) {
    Record r;
    r.shape = shape;
    r.value_offset = values_.size();
    r.op = op;
    values_.insert(values_.end(), value.begin(), value.end());
    nodes_.push_back(r);
    return static_cast<NodeId>(nodes_.size() - 1);
}

Var Tape::variable(double x) { return Var(this, push("leaf", Shape{1, 1}, std::span(&x, 1))); }

Var Tape::variable(std::span<const double> xs, Shape shape) {
    if (static_cast<std::size_t>(shape.size()) != xs.size()) {
        throw std::invalid_argument("autodiff: leaf shape does not match data");
    }
    return Var(this, push("leaf", shape, xs));
}

Var Tape::variable(const Eigen::MatrixXd& m) {
    RowMat rm = m;
    return variable(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())),
                    Shape{static_cast<int>(m.rows()), static_cast<int>(m.cols())});
}

Var Tape::record(const char* op, std::initializer_list<Var> args, std::vector<double> value,
                 Shape shape, std::vector<std::vector<double>> partials) {
    if (args.size() > 2 || partials.size() != args.size()) {
        throw std::invalid_argument("autodiff: elementwise record takes at most two operands");
    }
    const NodeId id = push(op, shape, value);
    Record& r = nodes_.back();
    r.partial_offset = partials_.size();
    int k = 0;
    for (const Var& a : args) {
        if (a.tape() != this) {
            throw std::invalid_argument("autodiff: operand from another tape");
        }
        r.args[k++] = a.id();
    }
    r.nargs = k;
    for (auto& p : partials) {
        partials_.insert(partials_.end(), p.begin(), p.end());
    }
    return Var(this, id);
}

Var Tape::record_custom(const char* op, std::vector<double> value, Shape shape, Vjp vjp) {
    const NodeId id = push(op, shape, value);
    nodes_.back().vjp = static_cast<int>(vjps_.size());
    vjps_.push_back(std::move(vjp));
    return Var(this, id);
}

std::span<const double> Tape::value(NodeId id) const {
    const Record& r = nodes_[static_cast<std::size_t>(id)];
    return {values_.data() + r.value_offset, static_cast<std::size_t>(r.shape.size())};
}

std::span<const double> Tape::partials(NodeId id, int arg) const {
    const Record& r = nodes_[static_cast<std::size_t>(id)];
    if (arg < 0 || arg >= r.nargs) {
        throw std::out_of_range("autodiff: no such operand");
    }
    const auto n = static_cast<std::size_t>(r.shape.size());
    return {partials_.data() + r.partial_offset + static_cast<std::size_t>(arg) * n, n};
}

std::span<const double> Tape::adjoint(NodeId id) const {
    const Record& r = nodes_[static_cast<std::size_t>(id)];
    return {adjoints_.data() + r.value_offset, static_cast<std::size_t>(r.shape.size())};
}

std::span<double> Tape::adjoint_mut(NodeId id) {
    const Record& r = nodes_[static_cast<std::size_t>(id)];
    return {adjoints_.data() + r.value_offset, static_cast<std::size_t>(r.shape.size())};
}

void Tape::accumulate(NodeId parent, std::span<const double> contribution) {
    auto adj = adjoint_mut(parent);
    if (contribution.size() == adj.size()) {
        for (std::size_t e = 0; e < adj.size(); ++e) {
            adj[e] += contribution[e];
        }
    } else if (adj.size() == 1) {
        double s = 0.0;
        for (double c : contribution) {
            s += c;
        }
        adj[0] += s;
    } else {
        throw std::logic_error("autodiff: adjoint contribution has the wrong size");
    }
}

void Tape::backward(Var output, std::span<const double> seed) {
    if (output.tape() != this) {
        throw std::invalid_argument("autodiff: output belongs to another tape");
    }
    adjoints_.assign(values_.size(), 0.0);
    auto out_adj = adjoint_mut(output.id());
    if (seed.size() != out_adj.size()) {
        throw std::invalid_argument("autodiff: seed size does not match output");
    }
    std::copy(seed.begin(), seed.end(), out_adj.begin());

    for (NodeId id = output.id(); id >= 0; --id) {
        const Record& r = nodes_[static_cast<std::size_t>(id)];
        if (r.vjp < 0 && r.nargs == 0) {
            continue;
        }
        auto adj = adjoint(id);
        if (std::all_of(adj.begin(), adj.end(), [](double a) { return a == 0.0; })) {
            continue;
        }
        if (r.vjp >= 0) {
            vjps_[static_cast<std::size_t>(r.vjp)](*this, id);
            continue;
        }
        const auto n = adj.size();
        for (int k = 0; k < r.nargs; ++k) {
            const double* p = partials_.data() + r.partial_offset + static_cast<std::size_t>(k) * n;
            auto padj = adjoint_mut(r.args[k]);
            if (padj.size() == n) {
                for (std::size_t e = 0; e < n; ++e) {
                    if (adj[e] != 0.0) {
                        padj[e] += p[e] * adj[e];
                    }
                }
            } else {
                double s = 0.0;
                for (std::size_t e = 0; e < n; ++e) {
                    if (adj[e] != 0.0) {
                        s += p[e] * adj[e];
                    }
                }
                padj[0] += s;
            }
        }
    }
}

void Tape::backward(Var output) {
    const double one = 1.0;
    backward(output, std::span(&one, 1));
}

void Tape::clear() {
    nodes_.clear();
    values_.clear();
    partials_.clear();
    adjoints_.clear();
    vjps_.clear();
}

Gradient gradient(Tape& tape, Var output, std::span<const Var> inputs) {
    tape.backward(output);
    Gradient g;
    for (const Var& in : inputs) {
        auto a = tape.adjoint(in);
        g.insert(g.end(), a.begin(), a.end());
    }
    return g;
}

// ---- elementwise primitives ------------------------------------------------

Var operator+(Var a, Var b) {
    return binary(
        "add", a, b, [](double u, double v) { return u + v; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var operator-(Var a, Var b) {
    return binary(
        "sub", a, b, [](double u, double v) { return u - v; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var operator*(Var a, Var b) {
    return binary(
        "mul", a, b, [](double u, double v) { return u * v; },
        [](double, double v, double) { return v; }, [](double u, double, double) { return u; });
}

Var operator/(Var a, Var b) {
    return binary(
        "div", a, b, [](double u, double v) { return u / v; },
        [](double, double v, double) { return 1.0 / v; },
        [](double, double v, double y) { return -y / v; });
}

Var operator-(Var a) {
    return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(Var a, double b) {
    return unary("add_const", a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}
Var operator+(double a, Var b) { return b + a; }

Var operator-(Var a, double b) {
    return unary("sub_const", a, [b](double x) { return x - b; }, [](double, double) { return 1.0; });
}

Var operator-(double a, Var b) {
    return unary("rsub_const", b, [a](double x) { return a - x; }, [](double, double) { return -1.0; });
}

Var operator*(Var a, double b) {
    return unary("mul_const", a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}
Var operator*(double a, Var b) { return b * a; }

Var operator/(Var a, double b) {
    return unary("div_const", a, [b](double x) { return x / b; }, [b](double, double) { return 1.0 / b; });
}

Var operator/(double a, Var b) {
    return unary(
        "rdiv_const", b, [a](double x) { return a / x; }, [](double x, double y) { return -y / x; });
}

Var& operator+=(Var& a, Var b) { return a = a + b; }
Var& operator-=(Var& a, Var b) { return a = a - b; }
Var& operator*=(Var& a, double b) { return a = a * b; }

Var sin(Var a) {
    return unary("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
    return unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var tan(Var a) {
    return unary("tan", a, [](double x) { return std::tan(x); }, [](double, double y) { return 1.0 + y * y; });
}

Var sqrt(Var a) {
    for (double x : a.values()) {
        if (x < 0.0) {
            throw DomainError("sqrt", a.tape()->size(), x);
        }
    }
    return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var exp(Var a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double x : a.values()) {
        if (!(x > 0.0)) {
            throw DomainError("log", a.tape()->size(), x);
        }
    }
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
    return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var a) {
    return unary(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softplus(Var a) {
    // log(1 + e^x) evaluated without overflow; derivative is the logistic.
    return unary(
        "softplus", a,
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var atan2(Var y, Var x) {
    return binary(
        "atan2", y, x, [](double u, double v) { return std::atan2(u, v); },
        [](double u, double v, double) { return v / (u * u + v * v); },
        [](double u, double v, double) { return -u / (u * u + v * v); });
}

Var max(Var a, Var b) {
    return binary(
        "max", a, b, [](double u, double v) { return u > v ? u : v; },
        [](double u, double v, double) { return u > v ? 1.0 : 0.0; },
        [](double u, double v, double) { return v > u ? 1.0 : 0.0; });
}

Var max(Var a, double b) {
    return unary(
        "max_const", a, [b](double x) { return x > b ? x : b; },
        [b](double x, double) { return x > b ? 1.0 : 0.0; });
}

Var min(Var a, double b) {
    return unary(
        "min_const", a, [b](double x) { return x < b ? x : b; },
        [b](double x, double) { return x < b ? 1.0 : 0.0; });
}

Var square(Var a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- structured primitives -------------------------------------------------

Var dot(Var a, Var b) {
    Tape& t = tape_of(a, b);
    auto xa = a.values();
    auto xb = b.values();
    if (xa.size() != xb.size()) {
        throw std::invalid_argument("autodiff: dot size mismatch");
    }
    double s = 0.0;
    for (std::size_t e = 0; e < xa.size(); ++e) {
        s += xa[e] * xb[e];
    }
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return t.record_custom("dot", {s}, Shape{1, 1}, [ia, ib](Tape& tp, NodeId self) {
        const double g = tp.adjoint(self)[0];
        auto va = tp.value(ia);
        auto vb = tp.value(ib);
        std::vector<double> ga(vb.begin(), vb.end());
        std::vector<double> gb(va.begin(), va.end());
        for (auto& x : ga) x *= g;
        for (auto& x : gb) x *= g;
        tp.accumulate(ia, ga);
        tp.accumulate(ib, gb);
    });
}

Var cross(Var a, Var b) {
    Tape& t = tape_of(a, b);
    auto u = a.values();
    auto v = b.values();
    if (u.size() != 3 || v.size() != 3) {
        throw std::invalid_argument("autodiff: cross needs 3-vectors");
    }
    std::vector<double> w = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                             u[0] * v[1] - u[1] * v[0]};
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return t.record_custom("cross", std::move(w), Shape{3, 1}, [ia, ib](Tape& tp, NodeId self) {
        auto g = tp.adjoint(self);
        auto u = tp.value(ia);
        auto v = tp.value(ib);
        // d(u x v) . g w.r.t. u is v x g; w.r.t. v is g x u.
        const std::vector<double> gu = {v[1] * g[2] - v[2] * g[1], v[2] * g[0] - v[0] * g[2],
                                        v[0] * g[1] - v[1] * g[0]};
        const std::vector<double> gv = {g[1] * u[2] - g[2] * u[1], g[2] * u[0] - g[0] * u[2],
                                        g[0] * u[1] - g[1] * u[0]};
        tp.accumulate(ia, gu);
        tp.accumulate(ib, gv);
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double x : a.values()) {
        s += x;
    }
    const NodeId ia = a.id();
    const int n = a.size();
    return a.tape()->record_custom("sum", {s}, Shape{1, 1}, [ia, n](Tape& tp, NodeId self) {
        std::vector<double> g(static_cast<std::size_t>(n), tp.adjoint(self)[0]);
        tp.accumulate(ia, g);
    });
}

Var matvec(Var m, Var x) {
    Tape& t = tape_of(m, x);
    const Shape sm = m.shape();
    if (sm.cols != x.size()) {
        throw std::invalid_argument("autodiff: matvec shape mismatch");
    }
    ConstRowMap mm(m.values().data(), sm.rows, sm.cols);
    ConstVecMap xv(x.values().data(), sm.cols);
    Eigen::VectorXd y = mm * xv;
    const NodeId im = m.id();
    const NodeId ix = x.id();
    return t.record_custom("matvec", std::vector<double>(y.data(), y.data() + y.size()),
                           Shape{sm.rows, 1}, [im, ix, sm](Tape& tp, NodeId self) {
                               ConstVecMap g(tp.adjoint(self).data(), sm.rows);
                               ConstRowMap mm(tp.value(im).data(), sm.rows, sm.cols);
                               ConstVecMap xv(tp.value(ix).data(), sm.cols);
                               RowMap gm(tp.adjoint_mut(im).data(), sm.rows, sm.cols);
                               gm.noalias() += g * xv.transpose();
                               Eigen::Map<Eigen::VectorXd> gx(tp.adjoint_mut(ix).data(), sm.cols);
                               gx.noalias() += mm.transpose() * g;
                           });
}

Var affine(Var x, Var w, Var b) {
    Tape& t = tape_of(x, w);
    const Shape sx = x.shape();
    const Shape sw = w.shape();
    if (sx.cols != sw.cols || b.size() != sw.rows) {
        throw std::invalid_argument("autodiff: affine shape mismatch");
    }
    ConstRowMap xm(x.values().data(), sx.rows, sx.cols);
    ConstRowMap wm(w.values().data(), sw.rows, sw.cols);
    Eigen::Map<const Eigen::RowVectorXd> bv(b.values().data(), sw.rows);
    RowMat y = xm * wm.transpose();
    y.rowwise() += bv;
    const NodeId ix = x.id();
    const NodeId iw = w.id();
    const NodeId ib = b.id();
    return t.record_custom(
        "affine", std::vector<double>(y.data(), y.data() + y.size()), Shape{sx.rows, sw.rows},
        [ix, iw, ib, sx, sw](Tape& tp, NodeId self) {
            ConstRowMap g(tp.adjoint(self).data(), sx.rows, sw.rows);
            ConstRowMap xm(tp.value(ix).data(), sx.rows, sx.cols);
            ConstRowMap wm(tp.value(iw).data(), sw.rows, sw.cols);
            RowMap gx(tp.adjoint_mut(ix).data(), sx.rows, sx.cols);
            gx.noalias() += g * wm;
            RowMap gw(tp.adjoint_mut(iw).data(), sw.rows, sw.cols);
            gw.noalias() += g.transpose() * xm;
            Eigen::Map<Eigen::RowVectorXd> gb(tp.adjoint_mut(ib).data(), sw.rows);
            gb += g.colwise().sum();
        });
}

Var slice(Var a, int offset, int length) {
    auto v = a.values();
    if (offset < 0 || length < 0 || static_cast<std::size_t>(offset + length) > v.size()) {
        throw std::out_of_range("autodiff: slice out of range");
    }
    std::vector<double> out(v.begin() + offset, v.begin() + offset + length);
    const NodeId ia = a.id();
    const int n = a.size();
    return a.tape()->record_custom("slice", std::move(out), Shape{length, 1},
                                   [ia, offset, length, n](Tape& tp, NodeId self) {
                                       auto g = tp.adjoint(self);
                                       auto pa = tp.adjoint_mut(ia);
                                       (void)n;
                                       for (int e = 0; e < length; ++e) {
                                           pa[static_cast<std::size_t>(offset + e)] += g[static_cast<std::size_t>(e)];
                                       }
                                   });
}

Var reshape(Var a, Shape shape) {
    if (shape.size() != a.size()) {
        throw std::invalid_argument("autodiff: reshape changes the element count");
    }
    auto v = a.values();
    const NodeId ia = a.id();
    return a.tape()->record_custom("reshape", std::vector<double>(v.begin(), v.end()), shape,
                                   [ia](Tape& tp, NodeId self) { tp.accumulate(ia, tp.adjoint(self)); });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("autodiff: concat of nothing");
    }
    Tape& t = *parts.front().tape();
    std::vector<double> out;
    std::vector<NodeId> ids;
    std::vector<int> sizes;
    for (const Var& p : parts) {
        if (p.tape() != &t) {
            throw std::invalid_argument("autodiff: concat across tapes");
        }
        auto v = p.values();
        out.insert(out.end(), v.begin(), v.end());
        ids.push_back(p.id());
        sizes.push_back(p.size());
    }
    const int total = static_cast<int>(out.size());
    return t.record_custom("concat", std::move(out), Shape{total, 1},
                           [ids = std::move(ids), sizes = std::move(sizes)](Tape& tp, NodeId self) {
                               auto g = tp.adjoint(self);
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < ids.size(); ++k) {
                                   const auto n = static_cast<std::size_t>(sizes[k]);
                                   tp.accumulate(ids[k], g.subspan(off, n));
                                   off += n;
                               }
                           });
}

Var stack(std::span<const Var> scalars) {
    for (const Var& s : scalars) {
        if (s.size() != 1) {
            throw std::invalid_argument("autodiff: stack expects scalars");
        }
    }
    return concat(scalars);
}

Var columns(Var m, int col, int count) {
    const Shape s = m.shape();
    if (col < 0 || count < 0 || col + count > s.cols) {
        throw std::out_of_range("autodiff: column range out of bounds");
    }
    auto v = m.values();
    std::vector<double> out(static_cast<std::size_t>(s.rows * count));
    for (int i = 0; i < s.rows; ++i) {
        for (int j = 0; j < count; ++j) {
            out[static_cast<std::size_t>(i * count + j)] = v[static_cast<std::size_t>(i * s.cols + col + j)];
        }
    }
    const NodeId im = m.id();
    return m.tape()->record_custom("columns", std::move(out), Shape{s.rows, count},
                                   [im, s, col, count](Tape& tp, NodeId self) {
                                       auto g = tp.adjoint(self);
                                       auto pm = tp.adjoint_mut(im);
                                       for (int i = 0; i < s.rows; ++i) {
                                           for (int j = 0; j < count; ++j) {
                                               pm[static_cast<std::size_t>(i * s.cols + col + j)] +=
                                                   g[static_cast<std::size_t>(i * count + j)];
                                           }
                                       }
                                   });
}

Var hconcat(std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("autodiff: hconcat of nothing");
    }
    Tape& t = *parts.front().tape();
    const int rows = parts.front().shape().rows;
    int cols = 0;
    std::vector<NodeId> ids;
    std::vector<int> widths;
    for (const Var& p : parts) {
        if (p.tape() != &t || p.shape().rows != rows) {
            throw std::invalid_argument("autodiff: hconcat shape mismatch");
        }
        ids.push_back(p.id());
        widths.push_back(p.shape().cols);
        cols += p.shape().cols;
    }
    std::vector<double> out(static_cast<std::size_t>(rows * cols));
    int c0 = 0;
    for (const Var& p : parts) {
        auto v = p.values();
        const int w = p.shape().cols;
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < w; ++j) {
                out[static_cast<std::size_t>(i * cols + c0 + j)] = v[static_cast<std::size_t>(i * w + j)];
            }
        }
        c0 += w;
    }
    return t.record_custom(
        "hconcat", std::move(out), Shape{rows, cols},
        [ids = std::move(ids), widths = std::move(widths), rows, cols](Tape& tp, NodeId self) {
            auto g = tp.adjoint(self);
            int c0 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                auto pa = tp.adjoint_mut(ids[k]);
                const int w = widths[k];
                for (int i = 0; i < rows; ++i) {
                    for (int j = 0; j < w; ++j) {
                        pa[static_cast<std::size_t>(i * w + j)] += g[static_cast<std::size_t>(i * cols + c0 + j)];
                    }
                }
                c0 += w;
            }
        });
}

Var column_affine(Var a, std::span<const double> scale, std::span<const double> shift) {
    const Shape s = a.shape();
    if (scale.size() != static_cast<std::size_t>(s.cols) || shift.size() != scale.size()) {
        throw std::invalid_argument("autodiff: column_affine width mismatch");
    }
    auto v = a.values();
    std::vector<double> out(v.size());
    std::vector<double> p(v.size());
    for (int i = 0; i < s.rows; ++i) {
        for (int j = 0; j < s.cols; ++j) {
            const auto e = static_cast<std::size_t>(i * s.cols + j);
            out[e] = v[e] * scale[static_cast<std::size_t>(j)] + shift[static_cast<std::size_t>(j)];
            p[e] = scale[static_cast<std::size_t>(j)];
        }
    }
    return a.tape()->record("column_affine", {a}, std::move(out), s, {std::move(p)});
}

Var add_row(Var field, Var row) {
    Tape& t = tape_of(field, row);
    const Shape s = field.shape();
    if (row.size() != s.cols) {
        throw std::invalid_argument("autodiff: add_row width mismatch");
    }
    auto f = field.values();
    auto r = row.values();
    std::vector<double> out(f.begin(), f.end());
    for (int i = 0; i < s.rows; ++i) {
        for (int j = 0; j < s.cols; ++j) {
            out[static_cast<std::size_t>(i * s.cols + j)] += r[static_cast<std::size_t>(j)];
        }
    }
    const NodeId ifd = field.id();
    const NodeId ir = row.id();
    return t.record_custom("add_row", std::move(out), s, [ifd, ir, s](Tape& tp, NodeId self) {
        auto g = tp.adjoint(self);
        tp.accumulate(ifd, g);
        auto pr = tp.adjoint_mut(ir);
        for (int i = 0; i < s.rows; ++i) {
            for (int j = 0; j < s.cols; ++j) {
                pr[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * s.cols + j)];
            }
        }
    });
}

// ---- linear solve -----------------------------------------------------------

LuFactor::LuFactor(const Eigen::MatrixXd& a) : lu_(a) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("LuFactor: matrix is not square");
    }
    rcond_ = lu_.rcond();
}

Eigen::VectorXd LuFactor::solve(const Eigen::VectorXd& b) const { return lu_.solve(b); }

Eigen::VectorXd LuFactor::solve_transposed(const Eigen::VectorXd& b) const {
    return lu_.transpose().solve(b);
}

SolveAdjoint linear_solve_adjoint(const LuFactor& lu, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& adjoint_x) {
    SolveAdjoint out;
    out.adjoint_b = lu.solve_transposed(adjoint_x);
    out.adjoint_a = -out.adjoint_b * x.transpose();
    return out;
}

Var solve(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Shape sa = a.shape();
    if (sa.rows != sa.cols || b.size() != sa.rows) {
        throw std::invalid_argument("autodiff: solve shape mismatch");
    }
    const int n = sa.rows;
    Eigen::MatrixXd am = ConstRowMap(a.values().data(), n, n);
    auto lu = std::make_shared<LuFactor>(am);
    if (!(lu->rcond() > 1e-14)) {
        std::ostringstream os;
        os << "linear solve: matrix is singular or ill-conditioned (rcond estimate " << lu->rcond() << ")";
        throw std::runtime_error(os.str());
    }
    Eigen::VectorXd x = lu->solve(ConstVecMap(b.values().data(), n));
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return t.record_custom("solve", std::vector<double>(x.data(), x.data() + n), Shape{n, 1},
                           [ia, ib, n, lu](Tape& tp, NodeId self) {
                               Eigen::VectorXd g = ConstVecMap(tp.adjoint(self).data(), n);
                               Eigen::VectorXd xs = ConstVecMap(tp.value(self).data(), n);
                               Eigen::VectorXd gb = lu->solve_transposed(g);
                               Eigen::Map<Eigen::VectorXd>(tp.adjoint_mut(ib).data(), n) += gb;
                               RowMap ga(tp.adjoint_mut(ia).data(), n, n);
                               ga.noalias() -= gb * xs.transpose();
                           });
}

Var solve(std::shared_ptr<const LuFactor> lu, Var b) {
    if (!b.valid() || b.size() != lu->size()) {
        throw std::invalid_argument("autodiff: solve shape mismatch");
    }
    const int n = lu->size();
    Eigen::VectorXd x = lu->solve(ConstVecMap(b.values().data(), n));
    const NodeId ib = b.id();
    return b.tape()->record_custom("solve_fixed", std::vector<double>(x.data(), x.data() + n), Shape{n, 1},
                                   [ib, n, lu](Tape& tp, NodeId self) {
                                       Eigen::VectorXd g = ConstVecMap(tp.adjoint(self).data(), n);
                                       Eigen::Map<Eigen::VectorXd>(tp.adjoint_mut(ib).data(), n) +=
                                           lu->solve_transposed(g);
                                   });
}

// ---- gradcheck --------------------------------------------------------------

GradcheckResult gradcheck(const ScalarFunction& f, std::span<const double> x0, double step) {
    GradcheckResult res;
    {
        Tape tape;
        std::vector<Var> in;
        in.reserve(x0.size());
        for (double x : x0) {
            in.push_back(tape.variable(x));
        }
        Var out = f(tape, in);
        res.analytic = gradient(tape, out, in);
    }
    auto eval = [&](std::span<const double> x) {
        Tape tape;
        std::vector<Var> in;
        for (double xi : x) {
            in.push_back(tape.variable(xi));
        }
        return f(tape, in).value();
    };
    std::vector<double> x(x0.begin(), x0.end());
    res.numeric.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x0[i]));
        x[i] = x0[i] + h;
        const double fp = eval(x);
        x[i] = x0[i] - h;
        const double fm = eval(x);
        x[i] = x0[i];
        res.numeric[i] = (fp - fm) / (2.0 * h);
    }
    double scale = 0.0;
    for (double a : res.analytic) {
        scale = std::max(scale, std::abs(a));
    }
    const double floor = 1e-6 * scale + 1e-300;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = res.analytic[i];
        const double n = res.numeric[i];
        const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
        if (res.worst_index < 0 || err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = static_cast<int>(i);
        }
    }
    return res;
}

}  // namespace vtol::ad
