#ifndef OCP_TAPE_HPP
#define OCP_TAPE_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocp::ad {

/// Scalar reverse-mode tape with higher-order support: the backward sweep
/// records its own operations on the tape, so gradients of gradients (and
/// hence exact Laplacians) are ordinary tape programs.
///
/// This is the reference differentiation route. The batched MLP kernels in
/// netgrad.hpp are the fast path; tests check the two against each other and
/// against finite differences.
class Tape;

struct Var {
    Tape* tape = nullptr;
    int idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

class Tape {
public:
    enum class Op : std::uint8_t {
        Const, Input,
        Add, Sub, Mul, Div, Neg,
        Tanh, Exp, Log, Sin, Cos, Sqrt, Square, Abs,
    };

    struct Node {
        Op op;
        int a;
        int b;
        double val;
    };

    Var constant(double v) { return push(Op::Const, -1, -1, v); }
    Var input(double v) { return push(Op::Input, -1, -1, v); }

    double value(Var x) const { return nodes_[x.idx].val; }
    std::size_t size() const { return nodes_.size(); }

    Var add(Var x, Var y) { return push(Op::Add, x.idx, y.idx, val(x) + val(y)); }
    Var sub(Var x, Var y) { return push(Op::Sub, x.idx, y.idx, val(x) - val(y)); }
    Var mul(Var x, Var y) { return push(Op::Mul, x.idx, y.idx, val(x) * val(y)); }
    Var div(Var x, Var y) { return push(Op::Div, x.idx, y.idx, val(x) / val(y)); }
    Var neg(Var x) { return push(Op::Neg, x.idx, -1, -val(x)); }
    Var tanh(Var x) { return push(Op::Tanh, x.idx, -1, std::tanh(val(x))); }
    Var exp(Var x) { return push(Op::Exp, x.idx, -1, std::exp(val(x))); }
    Var log(Var x) { return push(Op::Log, x.idx, -1, std::log(val(x))); }
    Var sin(Var x) { return push(Op::Sin, x.idx, -1, std::sin(val(x))); }
    Var cos(Var x) { return push(Op::Cos, x.idx, -1, std::cos(val(x))); }
    Var sqrt(Var x) { return push(Op::Sqrt, x.idx, -1, std::sqrt(val(x))); }
    Var square(Var x) { return push(Op::Square, x.idx, -1, val(x) * val(x)); }
    Var abs(Var x) { return push(Op::Abs, x.idx, -1, std::fabs(val(x))); }

    /// Reverse sweep emitting gradient nodes onto this tape. Returns
    /// d(output)/d(x) for each requested x; entries are Consts of value 0
    /// when the output does not depend on x.
    std::vector<Var> gradient(Var output, std::span<const Var> xs) {
        if (!output.valid()) throw std::invalid_argument("tape gradient: invalid output");
        if (!std::isfinite(value(output)))
            throw std::runtime_error("tape gradient: non-finite output at node " +
                                     std::to_string(output.idx));
        const int n = output.idx + 1;
        std::vector<int> adj(n, -1); // node index of the adjoint Var, -1 = zero
        adj[output.idx] = constant(1.0).idx;

        auto accumulate = [&](int target, Var contrib) {
            if (target < 0) return;
            if (adj[target] < 0)
                adj[target] = contrib.idx;
            else
                adj[target] = add(Var{this, adj[target]}, contrib).idx;
        };

        for (int i = output.idx; i >= 0; --i) {
            if (adj[i] < 0) continue;
            // Snapshot: accumulate() may grow nodes_, invalidating references.
            const Node nd = nodes_[i];
            const Var a{this, nd.a};
            const Var g{this, adj[i]};
            switch (nd.op) {
            case Op::Const:
            case Op::Input:
                break;
            case Op::Add:
                accumulate(nd.a, g);
                accumulate(nd.b, g);
                break;
            case Op::Sub:
                accumulate(nd.a, g);
                accumulate(nd.b, neg(g));
                break;
            case Op::Mul:
                accumulate(nd.a, mul(g, Var{this, nd.b}));
                accumulate(nd.b, mul(g, Var{this, nd.a}));
                break;
            case Op::Div: {
                const Var b{this, nd.b};
                accumulate(nd.a, div(g, b));
                accumulate(nd.b, neg(div(mul(g, Var{this, i}), b)));
                break;
            }
            case Op::Neg:
                accumulate(nd.a, neg(g));
                break;
            case Op::Tanh: {
                const Var t{this, i};
                accumulate(nd.a, mul(g, sub(constant(1.0), square(t))));
                break;
            }
            case Op::Exp:
                accumulate(nd.a, mul(g, Var{this, i}));
                break;
            case Op::Log:
                accumulate(nd.a, div(g, a));
                break;
            case Op::Sin:
                accumulate(nd.a, mul(g, cos(a)));
                break;
            case Op::Cos:
                accumulate(nd.a, neg(mul(g, sin(a))));
                break;
            case Op::Sqrt: {
                const Var r{this, i};
                accumulate(nd.a, div(g, mul(constant(2.0), r)));
                break;
            }
            case Op::Square:
                accumulate(nd.a, mul(g, mul(constant(2.0), a)));
                break;
            case Op::Abs: {
                const double s = val(a) >= 0.0 ? 1.0 : -1.0;
                accumulate(nd.a, mul(g, constant(s)));
                break;
            }
            }
        }

        std::vector<Var> out;
        out.reserve(xs.size());
        for (Var x : xs)
            out.push_back(adj[x.idx] >= 0 ? Var{this, adj[x.idx]} : constant(0.0));
        return out;
    }

    Var gradient(Var output, Var x) {
        const Var xs[1] = {x};
        return gradient(output, std::span<const Var>(xs, 1))[0];
    }

private:
    double val(Var x) const { return nodes_[x.idx].val; }

    Var push(Op op, int a, int b, double v) {
        nodes_.push_back(Node{op, a, b, v});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

inline Var operator+(Var x, Var y) { return x.tape->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape->div(x, y); }
inline Var operator-(Var x) { return x.tape->neg(x); }
inline Var operator+(Var x, double c) { return x + x.tape->constant(c); }
inline Var operator+(double c, Var x) { return x + c; }
inline Var operator-(Var x, double c) { return x - x.tape->constant(c); }
inline Var operator-(double c, Var x) { return x.tape->constant(c) - x; }
inline Var operator*(Var x, double c) { return x * x.tape->constant(c); }
inline Var operator*(double c, Var x) { return x * c; }
inline Var operator/(Var x, double c) { return x / x.tape->constant(c); }
inline Var operator/(double c, Var x) { return x.tape->constant(c) / x; }
inline Var tanh(Var x) { return x.tape->tanh(x); }
inline Var exp(Var x) { return x.tape->exp(x); }
inline Var log(Var x) { return x.tape->log(x); }
inline Var sin(Var x) { return x.tape->sin(x); }
inline Var cos(Var x) { return x.tape->cos(x); }
inline Var sqrt(Var x) { return x.tape->sqrt(x); }
inline Var square(Var x) { return x.tape->square(x); }
inline Var abs(Var x) { return x.tape->abs(x); }

} // namespace ocp::ad

#endif
