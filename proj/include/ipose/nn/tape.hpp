#pragma once

// Reverse-mode scalar tape. Nodes store their local partials wrt parents at
// record time; backward() is a single reverse sweep. Var carries an implicit
// tape pointer so the generic quaternion/filter templates in ipose/quat.hpp
// and ipose/filters.hpp instantiate directly on Var for BPTT.

#include <cmath>
#include <cstdint>
#include <vector>

#include "ipose/errors.hpp"

namespace ipose::nn {

class Tape {
public:
    int leaf(double value) {
        vals_.push_back(value);
        nodes_.push_back({static_cast<int>(edges_p_.size()), 0});
        return static_cast<int>(vals_.size()) - 1;
    }

    int node1(double value, int p, double d) {
        begin(value);
        edge(p, d);
        return end();
    }

    int node2(double value, int p1, double d1, int p2, double d2) {
        begin(value);
        edge(p1, d1);
        edge(p2, d2);
        return end();
    }

    // n-ary node builder (used by the dense-layer op).
    void begin(double value) {
        pending_value_ = value;
        pending_first_ = static_cast<int>(edges_p_.size());
    }
    void edge(int parent, double partial) {
        edges_p_.push_back(parent);
        edges_d_.push_back(partial);
    }
    int end() {
        vals_.push_back(pending_value_);
        nodes_.push_back({pending_first_, static_cast<int>(edges_p_.size()) - pending_first_});
        return static_cast<int>(vals_.size()) - 1;
    }

    double value(int id) const { return vals_[id]; }
    double grad(int id) const { return grads_[id]; }
    std::size_t size() const { return vals_.size(); }

    void backward(int seed_id) {
        grads_.assign(vals_.size(), 0.0);
        grads_[seed_id] = 1.0;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            double g = grads_[i];
            if (g == 0.0) continue;
            const Node& n = nodes_[i];
            for (int e = n.first_edge; e < n.first_edge + n.n_edges; ++e)
                grads_[edges_p_[e]] += edges_d_[e] * g;
        }
    }

    void reset() {
        vals_.clear();
        grads_.clear();
        nodes_.clear();
        edges_p_.clear();
        edges_d_.clear();
    }

private:
    struct Node {
        int first_edge;
        int n_edges;
    };
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<Node> nodes_;
    std::vector<int> edges_p_;
    std::vector<double> edges_d_;
    double pending_value_ = 0.0;
    int pending_first_ = 0;
};

// A scalar on the tape, or a plain constant when tape == nullptr (so numeric
// literals in templated code stay off the tape).
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    double cval = 0.0;

    Var() = default;
    Var(double v) : cval(v) {}  // NOLINT: implicit by design
    Var(Tape* t, int i) : tape(t), id(i) {}

    double value() const { return tape ? tape->value(id) : cval; }
    bool is_const() const { return tape == nullptr; }
};

inline Var make_leaf(Tape& t, double v) { return Var(&t, t.leaf(v)); }

inline double scalar_value(const Var& v) { return v.value(); }

namespace detail {
inline Var lift(Tape* t, const Var& v) {
    // Promotes a constant onto the tape of the other operand.
    if (!v.is_const() || t == nullptr) return v;
    return Var(t, t->leaf(v.cval));
}
inline Tape* tape_of(const Var& a, const Var& b) { return a.tape ? a.tape : b.tape; }
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.cval + b.cval);
    Var la = detail::lift(t, a), lb = detail::lift(t, b);
    return Var(t, t->node2(la.value() + lb.value(), la.id, 1.0, lb.id, 1.0));
}

inline Var operator-(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.cval - b.cval);
    Var la = detail::lift(t, a), lb = detail::lift(t, b);
    return Var(t, t->node2(la.value() - lb.value(), la.id, 1.0, lb.id, -1.0));
}

inline Var operator-(const Var& a) {
    if (a.is_const()) return Var(-a.cval);
    return Var(a.tape, a.tape->node1(-a.value(), a.id, -1.0));
}

inline Var operator*(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.cval * b.cval);
    Var la = detail::lift(t, a), lb = detail::lift(t, b);
    return Var(t, t->node2(la.value() * lb.value(), la.id, lb.value(), lb.id, la.value()));
}

inline Var operator/(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.cval / b.cval);
    Var la = detail::lift(t, a), lb = detail::lift(t, b);
    double bv = lb.value();
    double v = la.value() / bv;
    return Var(t, t->node2(v, la.id, 1.0 / bv, lb.id, -v / bv));
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

// Value comparisons; branches taken on them are locally constant.
inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

inline Var sqrt(const Var& a) {
    if (a.is_const()) return Var(std::sqrt(a.cval));
    double v = std::sqrt(a.value());
    return Var(a.tape, a.tape->node1(v, a.id, 0.5 / v));
}

inline Var sin(const Var& a) {
    if (a.is_const()) return Var(std::sin(a.cval));
    return Var(a.tape, a.tape->node1(std::sin(a.value()), a.id, std::cos(a.value())));
}

inline Var cos(const Var& a) {
    if (a.is_const()) return Var(std::cos(a.cval));
    return Var(a.tape, a.tape->node1(std::cos(a.value()), a.id, -std::sin(a.value())));
}

inline Var tanh(const Var& a) {
    if (a.is_const()) return Var(std::tanh(a.cval));
    double v = std::tanh(a.value());
    return Var(a.tape, a.tape->node1(v, a.id, 1.0 - v * v));
}

inline Var exp(const Var& a) {
    if (a.is_const()) return Var(std::exp(a.cval));
    double v = std::exp(a.value());
    return Var(a.tape, a.tape->node1(v, a.id, v));
}

inline Var abs(const Var& a) {
    if (a.is_const()) return Var(std::fabs(a.cval));
    double s = a.value() >= 0.0 ? 1.0 : -1.0;
    return Var(a.tape, a.tape->node1(std::fabs(a.value()), a.id, s));
}

inline Var acos(const Var& a) {
    if (a.is_const()) return Var(std::acos(a.cval));
    double v = a.value();
    return Var(a.tape, a.tape->node1(std::acos(v), a.id, -1.0 / std::sqrt(1.0 - v * v)));
}

inline Var atan2(const Var& y, const Var& x) {
    Tape* t = detail::tape_of(y, x);
    if (!t) return Var(std::atan2(y.cval, x.cval));
    Var ly = detail::lift(t, y), lx = detail::lift(t, x);
    double yv = ly.value(), xv = lx.value();
    double denom = yv * yv + xv * xv;
    return Var(t, t->node2(std::atan2(yv, xv), ly.id, xv / denom, lx.id, -yv / denom));
}

inline Var sigmoid(const Var& a) {
    if (a.is_const()) return Var(1.0 / (1.0 + std::exp(-a.cval)));
    double v = 1.0 / (1.0 + std::exp(-a.value()));
    return Var(a.tape, a.tape->node1(v, a.id, v * (1.0 - v)));
}

inline Var relu(const Var& a) {
    if (a.is_const()) return Var(a.cval > 0.0 ? a.cval : 0.0);
    double v = a.value();
    return Var(a.tape, a.tape->node1(v > 0.0 ? v : 0.0, a.id, v > 0.0 ? 1.0 : 0.0));
}

// out[i] = sum_j W[i*nin+j] * x[j] + b[i], recorded as one n-ary node per row.
void affine(Tape& t, const std::vector<Var>& x, const std::vector<Var>& w,
            const std::vector<Var>& b, int n_out, std::vector<Var>& out);

}  // namespace ipose::nn
