#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mipo::diff {

// Dense 64-bit real tensor, rank 1 or 2. Gradient buffer is allocated lazily
// and always matches the value shape. A tensor is either a leaf (parameter or
// constant) or the output of a Graph operation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::int64_t>& shape() const;
    std::int64_t numel() const;
    std::int64_t rows() const;  // rank-2 only
    std::int64_t cols() const;  // rank-2 only

    std::span<double> values();
    std::span<const double> values() const;
    double& at(std::int64_t r, std::int64_t c);
    double at(std::int64_t r, std::int64_t c) const;
    double item() const;  // numel() == 1

    bool requires_grad() const;
    void set_requires_grad(bool v);
    bool has_grad() const;
    std::span<double> grad();              // allocates (zeroed) on first use
    std::span<const double> grad() const;  // empty span when never touched
    void zero_grad();

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    friend class Graph;
    struct Impl {
        std::vector<std::int64_t> shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until touched
        bool requires_grad = false;
        bool graph_output = false;  // produced by a Graph op this pass
    };
    std::shared_ptr<Impl> impl_;

    static Tensor make(std::vector<std::int64_t> shape);
    void ensure_grad();
    bool wants_grad() const;  // parameter leaf or interior node
    void accumulate(std::span<const double> g);
};

std::string shape_str(const std::vector<std::int64_t>& shape);

// Define-by-run computation graph. Operations append nodes to a tape whose
// creation order is a valid topological order; backward() walks the tape in
// reverse and visits each node exactly once. Graphs are rebuilt per forward
// pass and are single-threaded; distinct graphs are independent.
class Graph {
public:
    explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}

    // leaf wrapper: a constant that participates without gradient
    static Tensor constant(double v) { return Tensor::scalar(v); }

    // Tensors are cheap shared handles and are passed by value so the
    // recorded backward closures own mutable copies.
    Tensor add(Tensor a, Tensor b);               // same shape
    Tensor add_rowvec(Tensor m, Tensor v);        // [T,D] + [D]
    Tensor mul(Tensor a, Tensor b);               // elementwise
    Tensor affine(Tensor a, double scale, double shift);
    Tensor matmul(Tensor a, Tensor b);            // [m,k]x[k,n]
    Tensor embedding(Tensor table, std::span<const int> ids);  // [V,D] gather
    Tensor row(Tensor m, std::int64_t r);         // [1,D] slice
    Tensor stack_rows(std::vector<Tensor> rows);  // inverse of row()
    Tensor tanh(Tensor a);
    Tensor sigmoid(Tensor a);
    Tensor softplus(Tensor a);
    Tensor log_softmax(Tensor m);                 // rowwise, stable
    Tensor take_per_row(Tensor m, std::span<const int> ids);  // [T,V] -> [T]
    Tensor sum(Tensor a);   // -> scalar
    Tensor mean(Tensor a);  // -> scalar

    // Seeds d(loss)=1 and accumulates gradients into every parameter reached.
    // Repeated calls accumulate; the caller is responsible for resetting.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return tape_.size(); }

private:
    struct Node {
        std::function<void()> backward;
    };
    std::vector<Node> tape_;
    std::vector<Tensor> outputs_;  // interior nodes; their grads reset per backward
    bool check_finite_;

    Tensor output(std::vector<std::int64_t> shape);
    void record(std::function<void()> fn) { tape_.push_back({std::move(fn)}); }
    void check(const Tensor& t, const char* op) const;
};

}  // namespace mipo::diff
