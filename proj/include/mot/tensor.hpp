#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mot {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    // recorded only while grad mode is on and some parent requires grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

/// Scoped switch that disables graph recording (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

/// Dense float64 tensor with reverse-mode autodiff. Value-semantic handle;
/// copies share the underlying node. Data is row-major.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t ndim() const;
    int64_t numel() const;
    int64_t size(int64_t axis) const;  // negative axis allowed

    std::span<const double> data() const;
    std::span<double> raw_data();  // leaf mutation (test/setup use)
    double item() const;
    double at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool rg);  // leaf tensors only
    std::span<const double> grad() const;
    void zero_grad();

    /// Stops gradient flow; shares no graph history with the source.
    Tensor detach() const;

    /// Reverse pass from a scalar. Grads accumulate across calls.
    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- elementwise (NumPy-style broadcasting on binary ops) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // throws on an exact-zero divisor
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- shape ops ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, int64_t axis0, int64_t axis1);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int64_t axis, bool keepdims);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int64_t axis, bool keepdims);

// ---- nonlinearities / numeric ----
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sqrt(const Tensor& a);  // requires nonnegative input
Tensor log(const Tensor& a);   // requires strictly positive input
/// Max-stabilized softmax along `axis`; slices sum to 1.
Tensor softmax(const Tensor& a, int64_t axis);
Tensor log_softmax(const Tensor& a, int64_t axis);

// ---- linear algebra ----
/// Batched matrix product [..,m,k] x [..,k,n] -> [..,m,n]; leading dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- spatial ----
/// Bilinear resize of a (C,H,W) map to (C,out_h,out_w); endpoints of the
/// source and target grids coincide, so affine ramps resize exactly.
Tensor bilinear_upsample(const Tensor& map, int64_t out_h, int64_t out_w);

/// Builds a graph-attached result for an op implemented elsewhere. When any
/// input requires grad (and recording is on), backward_fn is invoked with the
/// result node, whose grad it must push into the inputs' grads.
Tensor custom_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                 std::function<void(detail::Node&)> backward_fn);

// non-graph helpers
int64_t argmax(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace mot
