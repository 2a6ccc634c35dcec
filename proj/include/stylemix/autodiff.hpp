// Copyright 2026 The stylemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stylemix/tensor.hpp"

namespace stylemix {

// Reverse-mode tape. A Node owns its value, the edges to its parents and a
// closure that pushes the node's accumulated gradient one level up. Graphs
// are acyclic by construction (a node's parents always predate it) and
// immutable once built; backward() walks one graph single-threaded.

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    explicit Node(Tensor4 v) : value(std::move(v)) {}

    Tensor4 value;
    Tensor4 grad;                          // allocated during backward
    bool grad_blocked = false;             // contributes zero upstream
    bool needs_grad = true;                // consumers may skip work when false
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn; // accumulates into parents' grads

    bool is_leaf() const { return parents.empty(); }
};

inline Var make_var(Tensor4 v) { return std::make_shared<Node>(std::move(v)); }

inline Var constant(Tensor4 v) { return make_var(std::move(v)); }

/// Same value, but the backward pass treats the node as a constant: nothing
/// flows through it, so every path behind it receives an exact zero.
inline Var stop_gradient(const Var& x) {
    Var n = make_var(x->value);
    n->parents = {x};
    n->grad_blocked = true;
    return n;
}

namespace detail {

// dL/db for a broadcast (B,C,1,1) operand: sum the per-entry contribution
// over the spatial extent of the full-shaped operand.
template <typename PerEntry>
inline void accumulate_broadcast(Tensor4& gb, const Tensor4& g, PerEntry f) {
    const std::int64_t spatial = static_cast<std::int64_t>(g.h()) * g.w();
    const std::int64_t planes = static_cast<std::int64_t>(g.b()) * g.c();
    for (std::int64_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) s += f(p * spatial + i);
        gb[p] += s;
    }
}

} // namespace detail

/// Differentiable entrywise op; `b` may broadcast as (B,C,1,1) over spatial.
inline Var elementwise(EwKind k, const Var& a, const Var& b) {
    const Broadcast bc = broadcast_kind(a->value.shape(), b->value.shape());
    Var out = make_var(elementwise(k, a->value, b->value));
    out->parents = {a, b};
    out->backward_fn = [k, bc, a, b](Node& n) {
        const Tensor4& g = n.grad;
        const Tensor4& av = a->value;
        const Tensor4& bv = b->value;
        const std::int64_t cnt = g.size();
        const std::int64_t spatial = static_cast<std::int64_t>(g.h()) * g.w();
        auto bval = [&](std::int64_t i) {
            return bc == Broadcast::same ? bv[i] : bv[i / spatial];
        };
        Tensor4& ga = a->grad;
        Tensor4& gb = b->grad;
        switch (k) {
            case EwKind::add:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
                if (bc == Broadcast::same)
                    for (std::int64_t i = 0; i < cnt; ++i) gb[i] += g[i];
                else
                    detail::accumulate_broadcast(gb, g, [&](std::int64_t i) { return g[i]; });
                break;
            case EwKind::sub:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
                if (bc == Broadcast::same)
                    for (std::int64_t i = 0; i < cnt; ++i) gb[i] -= g[i];
                else
                    detail::accumulate_broadcast(gb, g, [&](std::int64_t i) { return -g[i]; });
                break;
            case EwKind::mul:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * bval(i);
                if (bc == Broadcast::same)
                    for (std::int64_t i = 0; i < cnt; ++i) gb[i] += g[i] * av[i];
                else
                    detail::accumulate_broadcast(gb, g,
                        [&](std::int64_t i) { return g[i] * av[i]; });
                break;
            case EwKind::div:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i] / bval(i);
                if (bc == Broadcast::same)
                    for (std::int64_t i = 0; i < cnt; ++i)
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                else
                    detail::accumulate_broadcast(gb, g, [&](std::int64_t i) {
                        const double d = bval(i);
                        return -g[i] * av[i] / (d * d);
                    });
                break;
        }
    };
    return out;
}

inline Var elementwise(EwKind k, const Var& a, double s) {
    Var out = make_var(elementwise(k, a->value, s));
    out->parents = {a};
    out->backward_fn = [k, s, a](Node& n) {
        const Tensor4& g = n.grad;
        const std::int64_t cnt = g.size();
        Tensor4& ga = a->grad;
        switch (k) {
            case EwKind::add:
            case EwKind::sub:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
                break;
            case EwKind::mul:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * s;
                break;
            case EwKind::div:
                for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g[i] / s;
                break;
        }
    };
    return out;
}

inline Var add(const Var& a, const Var& b) { return elementwise(EwKind::add, a, b); }
inline Var sub(const Var& a, const Var& b) { return elementwise(EwKind::sub, a, b); }
inline Var mul(const Var& a, const Var& b) { return elementwise(EwKind::mul, a, b); }
inline Var div(const Var& a, const Var& b) { return elementwise(EwKind::div, a, b); }
inline Var add(const Var& a, double s) { return elementwise(EwKind::add, a, s); }
inline Var mul(const Var& a, double s) { return elementwise(EwKind::mul, a, s); }

/// Sum of all entries, as a (1,1,1,1) node.
inline Var sum_all(const Var& a) {
    Var out = make_var(Tensor4::scalar(a->value.sum()));
    out->parents = {a};
    out->backward_fn = [a](Node& n) {
        const double g = n.grad[0];
        Tensor4& ga = a->grad;
        const std::int64_t cnt = ga.size();
        for (std::int64_t i = 0; i < cnt; ++i) ga[i] += g;
    };
    return out;
}

/// Gradients of a scalar loss with respect to every leaf reachable from it.
class GradientMap {
public:
    void insert(const Node* n, const Tensor4* g) { grads_.emplace(n, g); }

    bool has(const Var& v) const { return grads_.count(v.get()) != 0; }

    const Tensor4& at(const Var& v) const {
        auto it = grads_.find(v.get());
        if (it == grads_.end())
            throw ValueError("GradientMap: node is not a leaf of the differentiated graph");
        return *it->second;
    }

    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const Node*, const Tensor4*> grads_;
};

/// Reverse accumulation from a scalar loss. Returns d loss / d leaf for every
/// leaf in the graph; grads also stay readable on the nodes themselves.
/// Grad-blocked nodes are skipped, so everything behind them stays exactly 0.
inline GradientMap backward(const Var& loss) {
    if (!(loss->value.shape() == Shape4{1, 1, 1, 1}))
        throw ShapeError("backward: loss must be scalar, got " + loss->value.shape().str());

    // Iterative post-order DFS; reversed post-order is a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad = Tensor4(n->value.shape(), 0.0);
    loss->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad_blocked) continue;
        if (n->backward_fn) n->backward_fn(*n);
    }

    GradientMap map;
    for (Node* n : order)
        if (n->is_leaf()) map.insert(n, &n->grad);
    return map;
}

} // namespace stylemix
