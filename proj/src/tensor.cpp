#include "mot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mot {

int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<double> data) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

[[noreturn]] void shape_error(const std::string& what) {
    throw std::invalid_argument("tensor: " + what);
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Attaches the result to the graph when recording is active.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto n = make_node(std::move(shape), std::move(data));
    bool any_rg = false;
    for (const auto& t : inputs) any_rg = any_rg || t.requires_grad();
    if (any_rg && g_grad_enabled) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (const auto& t : inputs) n->parents.push_back(t.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(n);
}

int64_t norm_axis(int64_t axis, int64_t ndim) {
    if (axis < 0) axis += ndim;
    if (axis < 0 || axis >= ndim) shape_error("axis out of range");
    return axis;
}

// Broadcast layout: output shape plus per-input strides (0 on expanded dims).
struct BroadcastPlan {
    Shape out;
    std::vector<int64_t> sa, sb;  // strides aligned to out
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
    size_t nd = std::max(a.size(), b.size());
    BroadcastPlan p;
    p.out.resize(nd);
    Shape ae(nd, 1), be(nd, 1);
    std::copy(a.begin(), a.end(), ae.begin() + (nd - a.size()));
    std::copy(b.begin(), b.end(), be.begin() + (nd - b.size()));
    for (size_t i = 0; i < nd; ++i) {
        if (ae[i] != be[i] && ae[i] != 1 && be[i] != 1)
            shape_error("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        p.out[i] = std::max(ae[i], be[i]);
    }
    auto sta = row_major_strides(ae), stb = row_major_strides(be);
    p.sa.resize(nd);
    p.sb.resize(nd);
    for (size_t i = 0; i < nd; ++i) {
        p.sa[i] = (ae[i] == 1 && p.out[i] != 1) ? 0 : sta[i];
        p.sb[i] = (be[i] == 1 && p.out[i] != 1) ? 0 : stb[i];
    }
    return p;
}

// Applies f(ia, ib, iout) over the broadcast iteration space.
template <typename F>
void broadcast_for_each(const BroadcastPlan& p, F&& f) {
    int64_t total = shape_numel(p.out);
    size_t nd = p.out.size();
    if (nd == 0) {
        f(0, 0, 0);
        return;
    }
    std::vector<int64_t> idx(nd, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
        f(ia, ib, lin);
        for (int64_t d = static_cast<int64_t>(nd) - 1; d >= 0; --d) {
            idx[d]++;
            ia += p.sa[d];
            ib += p.sb[d];
            if (idx[d] < p.out[d]) break;
            ia -= p.sa[d] * p.out[d];
            ib -= p.sb[d] * p.out[d];
            idx[d] = 0;
        }
    }
}

// dL/dx for a broadcast operand: scatter-add the output grad back.
void scatter_grad(Node& parent, const std::vector<int64_t>& strides,
                  const BroadcastPlan& p, const std::vector<double>& outgrad,
                  bool first_operand) {
    parent.ensure_grad();
    const auto& s = first_operand ? p.sa : p.sb;
    (void)strides;
    size_t nd = p.out.size();
    if (nd == 0) {
        parent.grad[0] += outgrad[0];
        return;
    }
    std::vector<int64_t> idx(nd, 0);
    int64_t ip = 0;
    int64_t total = shape_numel(p.out);
    for (int64_t lin = 0; lin < total; ++lin) {
        parent.grad[ip] += outgrad[lin];
        for (int64_t d = static_cast<int64_t>(nd) - 1; d >= 0; --d) {
            idx[d]++;
            ip += s[d];
            if (idx[d] < p.out[d]) break;
            ip -= s[d] * p.out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- Tensor basics ----

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    int64_t n = shape_numel(shape);
    if (n < 0) shape_error("negative dimension in " + shape_str(shape));
    auto node = make_node(std::move(shape), std::vector<double>(n, value));
    node->requires_grad = requires_grad;
    return wrap(node);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        shape_error("data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
    auto node = make_node(std::move(shape), std::move(data));
    node->requires_grad = requires_grad;
    return wrap(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::ndim() const { return static_cast<int64_t>(node_->shape.size()); }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->data.size()); }

int64_t Tensor::size(int64_t axis) const {
    return node_->shape[norm_axis(axis, ndim())];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::raw_data() {
    if (node_->backward_fn) shape_error("cannot mutate a non-leaf tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) shape_error("item() needs a one-element tensor, got " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int64_t>(idx.size()) != ndim()) shape_error("at(): wrong index arity");
    auto st = row_major_strides(node_->shape);
    int64_t off = 0;
    size_t d = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= node_->shape[d]) shape_error("at(): index out of range");
        off += i * st[d];
        ++d;
    }
    return node_->data[off];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool rg) {
    if (node_->backward_fn) shape_error("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = rg;
    return *this;
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.size() != node_->data.size()) shape_error("grad not populated");
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::detach() const {
    auto n = make_node(node_->shape, node_->data);
    return wrap(n);
}

void Tensor::backward() const {
    if (numel() != 1)
        shape_error("backward() requires a scalar loss, got shape " + shape_str(shape()));
    if (!node_->requires_grad)
        shape_error("backward() on a tensor that does not require grad");

    // iterative topological sort over parents
    std::vector<Node*> order;
    std::vector<std::pair<Node*, size_t>> stack;
    std::vector<Node*> seen;
    auto visited = [&](Node* n) {
        return std::find(seen.begin(), seen.end(), n) != seen.end();
    };
    stack.push_back({node_.get(), 0});
    seen.push_back(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !visited(p)) {
                seen.push_back(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // each pass propagates a fresh seed; only leaf grads persist across calls
    for (Node* n : order)
        if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---- elementwise binary ----

namespace {

template <typename FwdF, typename BwdF>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdF fwd, BwdF bwd) {
    auto plan = broadcast_plan(a.shape(), b.shape());
    std::vector<double> out(shape_numel(plan.out));
    const auto& ad = a.node()->data;
    const auto& bd = b.node()->data;
    broadcast_for_each(plan, [&](int64_t ia, int64_t ib, int64_t io) {
        out[io] = fwd(ad[ia], bd[ib]);
    });
    auto an = a.node();
    auto bn = b.node();
    return make_result(
        plan.out, std::move(out), {a, b},
        [an, bn, plan, bwd](Node& self) {
            std::vector<double> ga, gb;
            bool want_a = an->requires_grad, want_b = bn->requires_grad;
            if (want_a) ga.assign(self.data.size(), 0.0);
            if (want_b) gb.assign(self.data.size(), 0.0);
            broadcast_for_each(plan, [&](int64_t ia, int64_t ib, int64_t io) {
                auto [da, db] = bwd(an->data[ia], bn->data[ib], self.data[io]);
                if (want_a) ga[io] = da * self.grad[io];
                if (want_b) gb[io] = db * self.grad[io];
            });
            if (want_a) scatter_grad(*an, {}, plan, ga, true);
            if (want_b) scatter_grad(*bn, {}, plan, gb, false);
        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double y : b.node()->data)
        if (y == 0.0) shape_error("division by zero");
    return binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) v += c;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) v *= c;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an, c](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
    });
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        shape_error("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                    " changes element count");
    auto an = a.node();
    return make_result(std::move(shape), std::vector<double>(an->data), {a}, [an](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& a, int64_t axis0, int64_t axis1) {
    int64_t nd = a.ndim();
    axis0 = norm_axis(axis0, nd);
    axis1 = norm_axis(axis1, nd);
    Shape out_shape = a.shape();
    std::swap(out_shape[axis0], out_shape[axis1]);

    auto in_st = row_major_strides(a.shape());
    std::vector<int64_t> perm_st = in_st;
    std::swap(perm_st[axis0], perm_st[axis1]);

    int64_t total = a.numel();
    std::vector<double> out(total);
    const auto& src = a.node()->data;
    // walk the output in row-major order, read through permuted strides
    std::vector<int64_t> idx(out_shape.size(), 0);
    int64_t isrc = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
        out[lin] = src[isrc];
        for (int64_t d = nd - 1; d >= 0; --d) {
            idx[d]++;
            isrc += perm_st[d];
            if (idx[d] < out_shape[d]) break;
            isrc -= perm_st[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    auto an = a.node();
    return make_result(out_shape, std::move(out), {a},
                       [an, out_shape, perm_st, nd](Node& self) {
                           an->ensure_grad();
                           std::vector<int64_t> idx(out_shape.size(), 0);
                           int64_t isrc = 0;
                           int64_t total = static_cast<int64_t>(self.data.size());
                           for (int64_t lin = 0; lin < total; ++lin) {
                               an->grad[isrc] += self.grad[lin];
                               for (int64_t d = nd - 1; d >= 0; --d) {
                                   idx[d]++;
                                   isrc += perm_st[d];
                                   if (idx[d] < out_shape[d]) break;
                                   isrc -= perm_st[d] * out_shape[d];
                                   idx[d] = 0;
                               }
                           }
                       });
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
    if (parts.empty()) shape_error("concat of zero tensors");
    int64_t nd = parts[0].ndim();
    axis = norm_axis(axis, nd);
    Shape out_shape = parts[0].shape();
    int64_t cat_dim = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) shape_error("concat rank mismatch");
        for (int64_t d = 0; d < nd; ++d)
            if (d != axis && p.shape()[d] != out_shape[d])
                shape_error("concat shape mismatch at non-concat axis: " +
                            shape_str(p.shape()) + " vs " + shape_str(out_shape));
        cat_dim += p.shape()[axis];
    }
    out_shape[axis] = cat_dim;

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int64_t d = axis + 1; d < nd; ++d) inner *= out_shape[d];

    std::vector<double> out(shape_numel(out_shape));
    int64_t col_off = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(col_off);
        int64_t k = p.shape()[axis];
        const auto& src = p.node()->data;
        for (int64_t o = 0; o < outer; ++o)
            std::copy(src.begin() + o * k * inner, src.begin() + (o + 1) * k * inner,
                      out.begin() + (o * cat_dim + col_off) * inner);
        col_off += k;
    }

    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_result(out_shape, std::move(out), parts,
                       [nodes, offsets, outer, inner, cat_dim, axis](Node& self) {
                           for (size_t pi = 0; pi < nodes.size(); ++pi) {
                               auto& pn = *nodes[pi];
                               if (!pn.requires_grad) continue;
                               pn.ensure_grad();
                               int64_t k = pn.shape[axis];
                               for (int64_t o = 0; o < outer; ++o)
                                   for (int64_t i = 0; i < k * inner; ++i)
                                       pn.grad[o * k * inner + i] +=
                                           self.grad[(o * cat_dim + offsets[pi]) * inner + i];
                           }
                       });
}

Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length) {
    int64_t nd = a.ndim();
    axis = norm_axis(axis, nd);
    if (start < 0 || length < 0 || start + length > a.shape()[axis])
        shape_error("slice range [" + std::to_string(start) + "," +
                    std::to_string(start + length) + ") out of bounds for axis size " +
                    std::to_string(a.shape()[axis]));
    Shape out_shape = a.shape();
    out_shape[axis] = length;

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= a.shape()[d];
    for (int64_t d = axis + 1; d < nd; ++d) inner *= a.shape()[d];
    int64_t k = a.shape()[axis];

    std::vector<double> out(shape_numel(out_shape));
    const auto& src = a.node()->data;
    for (int64_t o = 0; o < outer; ++o)
        std::copy(src.begin() + (o * k + start) * inner,
                  src.begin() + (o * k + start + length) * inner,
                  out.begin() + o * length * inner);

    auto an = a.node();
    return make_result(out_shape, std::move(out), {a},
                       [an, outer, inner, k, start, length](Node& self) {
                           an->ensure_grad();
                           for (int64_t o = 0; o < outer; ++o)
                               for (int64_t i = 0; i < length * inner; ++i)
                                   an->grad[(o * k + start) * inner + i] +=
                                       self.grad[o * length * inner + i];
                       });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.node()->data) s += v;
    auto an = a.node();
    return make_result({}, {s}, {a}, [an](Node& self) {
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0];
    });
}

Tensor sum(const Tensor& a, int64_t axis, bool keepdims) {
    int64_t nd = a.ndim();
    axis = norm_axis(axis, nd);
    Shape out_shape;
    for (int64_t d = 0; d < nd; ++d) {
        if (d == axis) {
            if (keepdims) out_shape.push_back(1);
        } else {
            out_shape.push_back(a.shape()[d]);
        }
    }
    int64_t outer = 1, inner = 1, k = a.shape()[axis];
    for (int64_t d = 0; d < axis; ++d) outer *= a.shape()[d];
    for (int64_t d = axis + 1; d < nd; ++d) inner *= a.shape()[d];

    std::vector<double> out(outer * inner, 0.0);
    const auto& src = a.node()->data;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < k; ++j)
            for (int64_t i = 0; i < inner; ++i)
                out[o * inner + i] += src[(o * k + j) * inner + i];

    auto an = a.node();
    return make_result(out_shape, std::move(out), {a},
                       [an, outer, inner, k](Node& self) {
                           an->ensure_grad();
                           for (int64_t o = 0; o < outer; ++o)
                               for (int64_t j = 0; j < k; ++j)
                                   for (int64_t i = 0; i < inner; ++i)
                                       an->grad[(o * k + j) * inner + i] +=
                                           self.grad[o * inner + i];
                       });
}

Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, int64_t axis, bool keepdims) {
    int64_t k = a.shape()[norm_axis(axis, a.ndim())];
    return sum(a, axis, keepdims) * (1.0 / static_cast<double>(k));
}

// ---- nonlinearities ----

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->data[i] > 0.0) an->grad[i] += self.grad[i];
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) v = std::min(std::max(v, lo), hi);
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an, lo, hi](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->data[i] > lo && an->data[i] < hi) an->grad[i] += self.grad[i];
    });
}

Tensor sqrt(const Tensor& a) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) {
        if (v < 0.0) shape_error("sqrt of negative value");
        v = std::sqrt(v);
    }
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * 0.5 / self.data[i];
    });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.node()->data);
    for (double& v : out) {
        if (v <= 0.0) shape_error("log of non-positive value");
        v = std::log(v);
    }
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] / an->data[i];
    });
}

namespace {

struct AxisLayout {
    int64_t outer = 1, k = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& s, int64_t axis) {
    AxisLayout l;
    l.k = s[axis];
    for (int64_t d = 0; d < axis; ++d) l.outer *= s[d];
    for (int64_t d = axis + 1; d < static_cast<int64_t>(s.size()); ++d) l.inner *= s[d];
    return l;
}

}  // namespace

Tensor softmax(const Tensor& a, int64_t axis) {
    axis = norm_axis(axis, a.ndim());
    auto l = axis_layout(a.shape(), axis);
    std::vector<double> out(a.numel());
    const auto& src = a.node()->data;
    for (int64_t o = 0; o < l.outer; ++o)
        for (int64_t i = 0; i < l.inner; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < l.k; ++j)
                mx = std::max(mx, src[(o * l.k + j) * l.inner + i]);
            double z = 0.0;
            for (int64_t j = 0; j < l.k; ++j) {
                double e = std::exp(src[(o * l.k + j) * l.inner + i] - mx);
                out[(o * l.k + j) * l.inner + i] = e;
                z += e;
            }
            for (int64_t j = 0; j < l.k; ++j) out[(o * l.k + j) * l.inner + i] /= z;
        }
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an, l](Node& self) {
        an->ensure_grad();
        for (int64_t o = 0; o < l.outer; ++o)
            for (int64_t i = 0; i < l.inner; ++i) {
                double dotv = 0.0;
                for (int64_t j = 0; j < l.k; ++j) {
                    int64_t ix = (o * l.k + j) * l.inner + i;
                    dotv += self.grad[ix] * self.data[ix];
                }
                for (int64_t j = 0; j < l.k; ++j) {
                    int64_t ix = (o * l.k + j) * l.inner + i;
                    an->grad[ix] += (self.grad[ix] - dotv) * self.data[ix];
                }
            }
    });
}

Tensor log_softmax(const Tensor& a, int64_t axis) {
    axis = norm_axis(axis, a.ndim());
    auto l = axis_layout(a.shape(), axis);
    std::vector<double> out(a.numel());
    const auto& src = a.node()->data;
    for (int64_t o = 0; o < l.outer; ++o)
        for (int64_t i = 0; i < l.inner; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < l.k; ++j)
                mx = std::max(mx, src[(o * l.k + j) * l.inner + i]);
            double z = 0.0;
            for (int64_t j = 0; j < l.k; ++j)
                z += std::exp(src[(o * l.k + j) * l.inner + i] - mx);
            double lz = mx + std::log(z);
            for (int64_t j = 0; j < l.k; ++j) {
                int64_t ix = (o * l.k + j) * l.inner + i;
                out[ix] = src[ix] - lz;
            }
        }
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {a}, [an, l](Node& self) {
        an->ensure_grad();
        for (int64_t o = 0; o < l.outer; ++o)
            for (int64_t i = 0; i < l.inner; ++i) {
                double gsum = 0.0;
                for (int64_t j = 0; j < l.k; ++j)
                    gsum += self.grad[(o * l.k + j) * l.inner + i];
                for (int64_t j = 0; j < l.k; ++j) {
                    int64_t ix = (o * l.k + j) * l.inner + i;
                    an->grad[ix] += self.grad[ix] - std::exp(self.data[ix]) * gsum;
                }
            }
    });
}

// ---- matmul ----

namespace {

// C (m x n) += A (m x k) * B (k x n)
void mm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

// C (m x k) += A (m x n) * B^T, with B (k x n)
void mm_nt(const double* A, const double* B, double* C, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            const double* a = A + i * n;
            const double* b = B + p * n;
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) s += a[j] * b[j];
            C[i * k + p] += s;
        }
}

// C (k x n) += A^T * B, with A (m x k), B (m x n)
void mm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* b = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            if (a == 0.0) continue;
            double* c = C + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

struct MatmulPlan {
    Shape out;                       // full output shape
    Shape batch;                     // broadcast batch dims
    std::vector<int64_t> ba, bb;     // per-batch-element offsets into a and b
    int64_t m, k, n;
};

MatmulPlan matmul_plan(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2)
        shape_error("matmul needs rank >= 2 operands, got " + shape_str(a) + " and " +
                    shape_str(b));
    MatmulPlan p;
    p.m = a[a.size() - 2];
    p.k = a[a.size() - 1];
    int64_t kb = b[b.size() - 2];
    p.n = b[b.size() - 1];
    if (p.k != kb)
        shape_error("matmul inner dimension mismatch: " + shape_str(a) + " x " + shape_str(b));

    Shape batch_a(a.begin(), a.end() - 2), batch_b(b.begin(), b.end() - 2);
    auto plan = broadcast_plan(batch_a, batch_b);
    p.batch = plan.out;
    int64_t nb = shape_numel(p.batch);
    p.ba.resize(nb);
    p.bb.resize(nb);
    if (p.batch.empty()) {
        p.ba[0] = p.bb[0] = 0;
    } else {
        broadcast_for_each(plan, [&](int64_t ia, int64_t ib, int64_t io) {
            p.ba[io] = ia;
            p.bb[io] = ib;
        });
    }
    p.out = p.batch;
    p.out.push_back(p.m);
    p.out.push_back(p.n);
    return p;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto p = matmul_plan(a.shape(), b.shape());
    int64_t nb = shape_numel(p.batch);
    int64_t amat = p.m * p.k, bmat = p.k * p.n, omat = p.m * p.n;
    std::vector<double> out(nb * omat, 0.0);
    const double* ad = a.node()->data.data();
    const double* bd = b.node()->data.data();
    for (int64_t e = 0; e < nb; ++e)
        mm_nn(ad + p.ba[e] * amat, bd + p.bb[e] * bmat, out.data() + e * omat, p.m, p.k, p.n);

    auto an = a.node();
    auto bn = b.node();
    return make_result(p.out, std::move(out), {a, b}, [an, bn, p, nb, amat, bmat, omat](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t e = 0; e < nb; ++e)
                mm_nt(self.grad.data() + e * omat, bn->data.data() + p.bb[e] * bmat,
                      an->grad.data() + p.ba[e] * amat, p.m, p.n, p.k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t e = 0; e < nb; ++e)
                mm_tn(an->data.data() + p.ba[e] * amat, self.grad.data() + e * omat,
                      bn->grad.data() + p.bb[e] * bmat, p.m, p.k, p.n);
        }
    });
}

// ---- bilinear upsample ----

Tensor bilinear_upsample(const Tensor& map, int64_t out_h, int64_t out_w) {
    if (map.ndim() != 3) shape_error("bilinear_upsample expects (C,H,W), got " + shape_str(map.shape()));
    if (out_h < 1 || out_w < 1) shape_error("bilinear_upsample target size must be positive");
    int64_t C = map.shape()[0], H = map.shape()[1], W = map.shape()[2];

    auto src_coord = [](int64_t dst, int64_t out_n, int64_t in_n) -> double {
        if (out_n == 1 || in_n == 1) return 0.0;
        return static_cast<double>(dst) * static_cast<double>(in_n - 1) /
               static_cast<double>(out_n - 1);
    };

    struct Tap {
        int64_t i0, i1;
        double w0, w1;
    };
    std::vector<Tap> ys(out_h), xs(out_w);
    for (int64_t y = 0; y < out_h; ++y) {
        double c = src_coord(y, out_h, H);
        int64_t i0 = static_cast<int64_t>(std::floor(c));
        i0 = std::clamp<int64_t>(i0, 0, H - 1);
        int64_t i1 = std::min<int64_t>(i0 + 1, H - 1);
        double f = c - static_cast<double>(i0);
        ys[y] = {i0, i1, 1.0 - f, f};
    }
    for (int64_t x = 0; x < out_w; ++x) {
        double c = src_coord(x, out_w, W);
        int64_t i0 = static_cast<int64_t>(std::floor(c));
        i0 = std::clamp<int64_t>(i0, 0, W - 1);
        int64_t i1 = std::min<int64_t>(i0 + 1, W - 1);
        double f = c - static_cast<double>(i0);
        xs[x] = {i0, i1, 1.0 - f, f};
    }

    std::vector<double> out(C * out_h * out_w);
    const auto& src = map.node()->data;
    for (int64_t c = 0; c < C; ++c) {
        const double* plane = src.data() + c * H * W;
        double* op = out.data() + c * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y)
            for (int64_t x = 0; x < out_w; ++x) {
                const Tap& ty = ys[y];
                const Tap& tx = xs[x];
                op[y * out_w + x] = ty.w0 * (tx.w0 * plane[ty.i0 * W + tx.i0] +
                                             tx.w1 * plane[ty.i0 * W + tx.i1]) +
                                    ty.w1 * (tx.w0 * plane[ty.i1 * W + tx.i0] +
                                             tx.w1 * plane[ty.i1 * W + tx.i1]);
            }
    }

    auto an = map.node();
    return make_result({C, out_h, out_w}, std::move(out), {map},
                       [an, ys, xs, C, H, W, out_h, out_w](Node& self) {
                           an->ensure_grad();
                           for (int64_t c = 0; c < C; ++c) {
                               double* gp = an->grad.data() + c * H * W;
                               const double* og = self.grad.data() + c * out_h * out_w;
                               for (int64_t y = 0; y < out_h; ++y)
                                   for (int64_t x = 0; x < out_w; ++x) {
                                       const auto& ty = ys[y];
                                       const auto& tx = xs[x];
                                       double g = og[y * out_w + x];
                                       gp[ty.i0 * W + tx.i0] += ty.w0 * tx.w0 * g;
                                       gp[ty.i0 * W + tx.i1] += ty.w0 * tx.w1 * g;
                                       gp[ty.i1 * W + tx.i0] += ty.w1 * tx.w0 * g;
                                       gp[ty.i1 * W + tx.i1] += ty.w1 * tx.w1 * g;
                                   }
                           }
                       });
}

Tensor custom_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                 std::function<void(detail::Node&)> backward_fn) {
    return make_result(std::move(shape), std::move(data), std::move(inputs),
                       std::move(backward_fn));
}

int64_t argmax(std::span<const double> v) {
    int64_t best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int64_t>(i);
    return best;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace mot
