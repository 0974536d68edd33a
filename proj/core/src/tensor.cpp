#include "mipo/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace mipo::diff {

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::make(std::vector<std::int64_t> shape) {
    if (shape.empty() || shape.size() > 2)
        throw std::invalid_argument("tensor rank must be 1 or 2, got " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    t.impl_->shape = std::move(shape);
    return t;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    Tensor t = make(std::move(shape));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
    Tensor t = make(std::move(shape));
    for (auto& v : t.impl_->values) v = value;
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
    Tensor t = make(std::move(shape));
    if (static_cast<std::int64_t>(values.size()) != t.numel())
        throw std::invalid_argument("value count does not match shape " +
                                    shape_str(t.shape()));
    t.impl_->values = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const std::vector<std::int64_t>& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

std::int64_t Tensor::rows() const {
    if (impl_->shape.size() != 2) throw std::logic_error("rows(): tensor is not rank-2");
    return impl_->shape[0];
}

std::int64_t Tensor::cols() const {
    if (impl_->shape.size() != 2) throw std::logic_error("cols(): tensor is not rank-2");
    return impl_->shape[1];
}

std::span<double> Tensor::values() { return impl_->values; }
std::span<const double> Tensor::values() const { return impl_->values; }

double& Tensor::at(std::int64_t r, std::int64_t c) {
    return impl_->values[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
    return impl_->values[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item(): tensor has " +
                                             std::to_string(numel()) + " elements");
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

void Tensor::ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

std::span<double> Tensor::grad() {
    ensure_grad();
    return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
    for (auto& g : impl_->grad) g = 0.0;
}

bool Tensor::wants_grad() const { return impl_->requires_grad || impl_->graph_output; }

void Tensor::accumulate(std::span<const double> g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

// ---------------------------------------------------------------------------

Tensor Graph::output(std::vector<std::int64_t> shape) {
    Tensor t = Tensor::make(std::move(shape));
    t.impl_->graph_output = true;
    t.ensure_grad();
    outputs_.push_back(t);
    return t;
}

void Graph::check(const Tensor& t, const char* op) const {
    if (!check_finite_) return;
    for (double v : t.values())
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

Tensor Graph::add(Tensor a, Tensor b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shapes disagree: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    Tensor out = output(a.shape());
    auto av = a.values(), bv = b.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    check(out, "add");
    record([a, b, out]() mutable {
        auto og = out.grad();
        if (a.wants_grad()) a.accumulate(og);
        if (b.wants_grad()) b.accumulate(og);
    });
    return out;
}

Tensor Graph::add_rowvec(Tensor m, Tensor v) {
    if (m.shape().size() != 2 || v.shape().size() != 1 || m.cols() != v.numel())
        throw std::invalid_argument("add_rowvec: shapes disagree: " + shape_str(m.shape()) +
                                    " vs " + shape_str(v.shape()));
    Tensor out = output(m.shape());
    const auto T = m.rows(), D = m.cols();
    auto mv = m.values(), vv = v.values(), ov = out.values();
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t d = 0; d < D; ++d)
            ov[static_cast<std::size_t>(t * D + d)] =
                mv[static_cast<std::size_t>(t * D + d)] + vv[static_cast<std::size_t>(d)];
    check(out, "add_rowvec");
    record([m, v, out, T, D]() mutable {
        auto og = out.grad();
        if (m.wants_grad()) m.accumulate(og);
        if (v.wants_grad()) {
            auto vg = v.grad();
            for (std::int64_t t = 0; t < T; ++t)
                for (std::int64_t d = 0; d < D; ++d)
                    vg[static_cast<std::size_t>(d)] += og[static_cast<std::size_t>(t * D + d)];
        }
    });
    return out;
}

Tensor Graph::mul(Tensor a, Tensor b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shapes disagree: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    Tensor out = output(a.shape());
    auto av = a.values(), bv = b.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    check(out, "mul");
    record([a, b, out]() mutable {
        auto og = out.grad();
        auto av = a.values(), bv = b.values();
        if (a.wants_grad()) {
            auto ag = a.grad();
            for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * bv[i];
        }
        if (b.wants_grad()) {
            auto bg = b.grad();
            for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * av[i];
        }
    });
    return out;
}

Tensor Graph::affine(Tensor a, double scale, double shift) {
    Tensor out = output(a.shape());
    auto av = a.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = scale * av[i] + shift;
    check(out, "affine");
    record([a, out, scale]() mutable {
        if (!a.wants_grad()) return;
        auto og = out.grad();
        auto ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += scale * og[i];
    });
    return out;
}

Tensor Graph::matmul(Tensor a, Tensor b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto M = a.rows(), K = a.cols(), N = b.cols();
    Tensor out = output({M, N});
    auto av = a.values(), bv = b.values(), ov = out.values();
    for (std::int64_t i = 0; i < M; ++i)
        for (std::int64_t k = 0; k < K; ++k) {
            const double aik = av[static_cast<std::size_t>(i * K + k)];
            for (std::int64_t j = 0; j < N; ++j)
                ov[static_cast<std::size_t>(i * N + j)] +=
                    aik * bv[static_cast<std::size_t>(k * N + j)];
        }
    check(out, "matmul");
    record([a, b, out, M, K, N]() mutable {
        auto og = out.grad();
        auto av = a.values(), bv = b.values();
        if (a.wants_grad()) {  // dA = dC . B^T
            auto ag = a.grad();
            for (std::int64_t i = 0; i < M; ++i)
                for (std::int64_t k = 0; k < K; ++k) {
                    double s = 0.0;
                    for (std::int64_t j = 0; j < N; ++j)
                        s += og[static_cast<std::size_t>(i * N + j)] *
                             bv[static_cast<std::size_t>(k * N + j)];
                    ag[static_cast<std::size_t>(i * K + k)] += s;
                }
        }
        if (b.wants_grad()) {  // dB = A^T . dC
            auto bg = b.grad();
            for (std::int64_t k = 0; k < K; ++k)
                for (std::int64_t i = 0; i < M; ++i) {
                    const double aik = av[static_cast<std::size_t>(i * K + k)];
                    for (std::int64_t j = 0; j < N; ++j)
                        bg[static_cast<std::size_t>(k * N + j)] +=
                            aik * og[static_cast<std::size_t>(i * N + j)];
                }
        }
    });
    return out;
}

Tensor Graph::embedding(Tensor table, std::span<const int> ids) {
    if (table.shape().size() != 2)
        throw std::invalid_argument("embedding: table must be rank-2, got " +
                                    shape_str(table.shape()));
    const auto V = table.rows(), D = table.cols();
    for (int id : ids)
        if (id < 0 || id >= V)
            throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                        " out of range for table " + shape_str(table.shape()));
    const auto T = static_cast<std::int64_t>(ids.size());
    Tensor out = output({T, D});
    auto tv = table.values(), ov = out.values();
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t d = 0; d < D; ++d)
            ov[static_cast<std::size_t>(t * D + d)] =
                tv[static_cast<std::size_t>(ids[static_cast<std::size_t>(t)] * D + d)];
    check(out, "embedding");
    std::vector<int> ids_copy(ids.begin(), ids.end());
    record([table, out, ids_copy = std::move(ids_copy), D]() mutable {
        if (!table.wants_grad()) return;
        auto og = out.grad();
        auto tg = table.grad();
        for (std::size_t t = 0; t < ids_copy.size(); ++t)
            for (std::int64_t d = 0; d < D; ++d)
                tg[static_cast<std::size_t>(ids_copy[t] * D + d)] +=
                    og[t * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
    });
    return out;
}

Tensor Graph::row(Tensor m, std::int64_t r) {
    if (m.shape().size() != 2 || r < 0 || r >= m.rows())
        throw std::invalid_argument("row: index " + std::to_string(r) +
                                    " out of range for " + shape_str(m.shape()));
    const auto D = m.cols();
    Tensor out = output({1, D});
    auto mv = m.values(), ov = out.values();
    for (std::int64_t d = 0; d < D; ++d)
        ov[static_cast<std::size_t>(d)] = mv[static_cast<std::size_t>(r * D + d)];
    record([m, out, r, D]() mutable {
        if (!m.wants_grad()) return;
        auto og = out.grad();
        auto mg = m.grad();
        for (std::int64_t d = 0; d < D; ++d)
            mg[static_cast<std::size_t>(r * D + d)] += og[static_cast<std::size_t>(d)];
    });
    return out;
}

Tensor Graph::stack_rows(std::vector<Tensor> rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
    const auto D = rows[0].numel();
    for (const auto& r : rows)
        if (r.numel() != D)
            throw std::invalid_argument("stack_rows: row widths disagree");
    const auto T = static_cast<std::int64_t>(rows.size());
    Tensor out = output({T, D});
    auto ov = out.values();
    for (std::int64_t t = 0; t < T; ++t) {
        auto rv = rows[static_cast<std::size_t>(t)].values();
        for (std::int64_t d = 0; d < D; ++d)
            ov[static_cast<std::size_t>(t * D + d)] = rv[static_cast<std::size_t>(d)];
    }
    record([rows, out, T, D]() mutable {
        auto og = out.grad();
        for (std::int64_t t = 0; t < T; ++t) {
            Tensor& r = rows[static_cast<std::size_t>(t)];
            if (!r.wants_grad()) continue;
            auto rg = r.grad();
            for (std::int64_t d = 0; d < D; ++d)
                rg[static_cast<std::size_t>(d)] += og[static_cast<std::size_t>(t * D + d)];
        }
    });
    return out;
}

Tensor Graph::tanh(Tensor a) {
    Tensor out = output(a.shape());
    auto av = a.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
    check(out, "tanh");
    record([a, out]() mutable {
        if (!a.wants_grad()) return;
        auto og = out.grad();
        auto oy = out.values();
        auto ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * (1.0 - oy[i] * oy[i]);
    });
    return out;
}

namespace {

// overflow-safe scalar kernels shared by the sigmoid/softplus ops
double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::min(std::abs(x), 700.0)));
}

}  // namespace

Tensor Graph::sigmoid(Tensor a) {
    Tensor out = output(a.shape());
    auto av = a.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = stable_sigmoid(av[i]);
    check(out, "sigmoid");
    record([a, out]() mutable {
        if (!a.wants_grad()) return;
        auto og = out.grad();
        auto oy = out.values();
        auto ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * oy[i] * (1.0 - oy[i]);
    });
    return out;
}

Tensor Graph::softplus(Tensor a) {
    Tensor out = output(a.shape());
    auto av = a.values(), ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = stable_softplus(av[i]);
    check(out, "softplus");
    record([a, out]() mutable {
        if (!a.wants_grad()) return;
        auto og = out.grad();
        auto av = a.values();
        auto ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * stable_sigmoid(av[i]);
    });
    return out;
}

Tensor Graph::log_softmax(Tensor m) {
    if (m.shape().size() != 2 || m.cols() < 2)
        throw std::invalid_argument("log_softmax: need rank-2 input with >= 2 columns, got " +
                                    shape_str(m.shape()));
    for (double v : m.values())
        if (!std::isfinite(v)) throw std::invalid_argument("log_softmax: non-finite input");
    const auto T = m.rows(), V = m.cols();
    Tensor out = output({T, V});
    auto mv = m.values();
    auto ov = out.values();
    for (std::int64_t t = 0; t < T; ++t) {
        const auto base = static_cast<std::size_t>(t * V);
        double mx = mv[base];
        for (std::int64_t j = 1; j < V; ++j)
            mx = std::max(mx, mv[base + static_cast<std::size_t>(j)]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < V; ++j)
            sum += std::exp(mv[base + static_cast<std::size_t>(j)] - mx);
        const double lse = mx + std::log(sum);
        for (std::int64_t j = 0; j < V; ++j)
            ov[base + static_cast<std::size_t>(j)] = mv[base + static_cast<std::size_t>(j)] - lse;
    }
    check(out, "log_softmax");
    record([m, out, T, V]() mutable {
        if (!m.wants_grad()) return;
        auto og = out.grad();
        auto oy = out.values();
        auto mg = m.grad();
        for (std::int64_t t = 0; t < T; ++t) {
            const auto base = static_cast<std::size_t>(t * V);
            double gsum = 0.0;
            for (std::int64_t j = 0; j < V; ++j) gsum += og[base + static_cast<std::size_t>(j)];
            for (std::int64_t j = 0; j < V; ++j)
                mg[base + static_cast<std::size_t>(j)] +=
                    og[base + static_cast<std::size_t>(j)] -
                    std::exp(oy[base + static_cast<std::size_t>(j)]) * gsum;
        }
    });
    return out;
}

Tensor Graph::take_per_row(Tensor m, std::span<const int> ids) {
    if (m.shape().size() != 2)
        throw std::invalid_argument("take_per_row: need rank-2 input, got " +
                                    shape_str(m.shape()));
    if (static_cast<std::int64_t>(ids.size()) != m.rows())
        throw std::invalid_argument("take_per_row: one index per row required");
    const auto V = m.cols();
    for (int id : ids)
        if (id < 0 || id >= V)
            throw std::invalid_argument("take_per_row: column " + std::to_string(id) +
                                        " out of range for " + shape_str(m.shape()));
    const auto T = m.rows();
    Tensor out = output({T});
    auto mv = m.values();
    auto ov = out.values();
    for (std::int64_t t = 0; t < T; ++t)
        ov[static_cast<std::size_t>(t)] =
            mv[static_cast<std::size_t>(t * V + ids[static_cast<std::size_t>(t)])];
    std::vector<int> ids_copy(ids.begin(), ids.end());
    record([m, out, ids_copy = std::move(ids_copy), V]() mutable {
        if (!m.wants_grad()) return;
        auto og = out.grad();
        auto mg = m.grad();
        for (std::size_t t = 0; t < ids_copy.size(); ++t)
            mg[t * static_cast<std::size_t>(V) + static_cast<std::size_t>(ids_copy[t])] += og[t];
    });
    return out;
}

Tensor Graph::sum(Tensor a) {
    Tensor out = output({1});
    double s = 0.0;
    for (double v : a.values()) s += v;
    out.values()[0] = s;
    check(out, "sum");
    record([a, out]() mutable {
        if (!a.wants_grad()) return;
        const double g = out.grad()[0];
        auto ag = a.grad();
        for (auto& v : ag) v += g;
    });
    return out;
}

Tensor Graph::mean(Tensor a) {
    Tensor out = output({1});
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double n = static_cast<double>(a.numel());
    out.values()[0] = s / n;
    check(out, "mean");
    record([a, out, n]() mutable {
        if (!a.wants_grad()) return;
        const double g = out.grad()[0] / n;
        auto ag = a.grad();
        for (auto& v : ag) v += g;
    });
    return out;
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a defined scalar");
    if (!loss.impl_->graph_output)
        throw std::invalid_argument("backward: loss is not an output of this graph");
    // Interior gradients are scratch state for this pass; only leaf gradients
    // accumulate across repeated calls.
    for (auto& t : outputs_) t.zero_grad();
    loss.impl_->grad[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->backward();
    if (check_finite_) {
        for (const auto& t : outputs_)
            for (double g : t.impl_->grad)
                if (!std::isfinite(g))
                    throw std::runtime_error("backward: non-finite gradient produced");
    }
}

}  // namespace mipo::diff
