#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mipo/rng.hpp"
#include "mipo/tensor.hpp"
#include "testutil.hpp"

using mipo::Rng;
using mipo::diff::Graph;
using mipo::diff::Tensor;
using testutil::central_diff;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

// Weights the op output with a fixed random cotangent and returns the scalar
// loss; gradients of this loss are what the finite-difference oracle checks.
using OpFn = std::function<Tensor(Graph&, std::vector<Tensor>&)>;

double eval_loss(const OpFn& op, std::vector<Tensor>& inputs, const Tensor& cotangent) {
    Graph g;
    Tensor out = op(g, inputs);
    Tensor loss = g.sum(g.mul(out, cotangent));
    return loss.item();
}

void check_op_gradients(const char* name, std::vector<Tensor> inputs, const OpFn& op, Rng& rng,
                        double h = 1e-5, double tol = 1e-6) {
    INFO("op: " << name);
    Graph g;
    Tensor out = op(g, inputs);
    Tensor cotangent = random_tensor(rng, out.shape(), /*requires_grad=*/false);
    Tensor loss = g.sum(g.mul(out, cotangent));
    g.backward(loss);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        std::vector<double> analytic(inputs[i].grad().begin(), inputs[i].grad().end());
        for (std::size_t idx = 0; idx < analytic.size(); ++idx) {
            const double fd = central_diff(inputs[i], idx, h, [&] {
                return eval_loss(op, inputs, cotangent);
            });
            INFO("input " << i << " coord " << idx << " analytic " << analytic[idx] << " fd "
                          << fd);
            CHECK(rel_err(analytic[idx], fd) < tol);
        }
    }
}

}  // namespace

TEST_CASE("matmul forward: identity and forced arithmetic") {
    Graph g;
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
    Tensor c = g.matmul(eye, b);
    const double expected[] = {3, 4, 5, 6};
    for (int i = 0; i < 4; ++i) CHECK(c.values()[i] == expected[i]);

    Tensor rowv = Tensor::from({1, 2}, {1, 2});
    Tensor colv = Tensor::from({2, 1}, {3, 4});
    Tensor dot = g.matmul(rowv, colv);
    CHECK(dot.item() == 11.0);  // 1*3 + 2*4
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Graph g;
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({5, 2});
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[3x4]"), std::invalid_argument);
    try {
        g.matmul(a, b);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("[5x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches central finite differences (3x4 by 4x2)") {
    Rng rng(7);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    // gradient of sum of output w.r.t. a
    Graph g;
    Tensor out = g.matmul(a, b);
    Tensor loss = g.sum(out);
    g.backward(loss);
    std::vector<double> analytic(a.grad().begin(), a.grad().end());
    for (std::size_t idx = 0; idx < analytic.size(); ++idx) {
        const double fd = central_diff(a, idx, 1e-5, [&] {
            Graph g2;
            return g2.sum(g2.matmul(a, b)).item();
        });
        CHECK(rel_err(analytic[idx], fd) < 1e-6);
    }
}

TEST_CASE("log_softmax: symmetric row and stable extreme row") {
    Graph g;
    Tensor x = Tensor::from({1, 2}, {0, 0});
    Tensor y = g.log_softmax(x);
    CHECK(y.values()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(y.values()[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

    Tensor extreme = Tensor::from({1, 2}, {1000, 0});
    Tensor z = g.log_softmax(extreme);
    CHECK(z.values()[0] > -1e-6);
    CHECK(z.values()[1] == doctest::Approx(-1000.0).epsilon(1e-12));
}

TEST_CASE("log_softmax rows exponentiate to 1 within 1e-9 for entries in [-1e4, 1e4]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Graph g;
        Tensor x = random_tensor(rng, {4, 7}, false, -1e4, 1e4);
        Tensor y = g.log_softmax(x);
        for (std::int64_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::int64_t c = 0; c < 7; ++c) s += std::exp(y.at(r, c));
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("log_softmax rejects non-finite input") {
    Graph g;
    Tensor x = Tensor::from({1, 2}, {std::numeric_limits<double>::infinity(), 0.0});
    CHECK_THROWS_AS(g.log_softmax(x), std::invalid_argument);
}

TEST_CASE("backward: sum gives exact ones, quadratic gives exact identity") {
    Rng rng(3);
    Tensor p = random_tensor(rng, {3, 5});
    {
        Graph g;
        g.backward(g.sum(p));
        for (double v : p.grad()) CHECK(v == 1.0);
    }
    p.zero_grad();
    {
        // loss = p^T p / 2  =>  grad = p, exactly (scaling by 0.5 is lossless)
        Graph g;
        Tensor loss = g.affine(g.sum(g.mul(p, p)), 0.5, 0.0);
        g.backward(loss);
        auto vals = p.values();
        auto grad = p.grad();
        for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == vals[i]);
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Rng rng(5);
    Tensor p = random_tensor(rng, {2, 2});
    Graph g;
    Tensor out = g.tanh(p);
    CHECK_THROWS_AS(g.backward(out), std::invalid_argument);
}

TEST_CASE("backward: unused parameter receives exactly zero gradient") {
    Rng rng(11);
    Tensor used = random_tensor(rng, {4});
    Tensor unused = random_tensor(rng, {4});
    Graph g;
    g.backward(g.sum(g.tanh(used)));
    CHECK(!unused.has_grad());
    for (double v : unused.grad()) CHECK(v == 0.0);
}

TEST_CASE("repeated backward accumulates (caller resets)") {
    Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    Tensor loss = g.sum(p);
    g.backward(loss);
    g.backward(loss);
    for (double v : p.grad()) CHECK(v == 2.0);
}

TEST_CASE("every op matches the finite-difference oracle over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        check_op_gradients("add", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.add(in[0], in[1]); },
                           rng);
        check_op_gradients("add_rowvec", {random_tensor(rng, {3, 4}), random_tensor(rng, {4})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.add_rowvec(in[0], in[1]);
                           },
                           rng);
        check_op_gradients("mul", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.mul(in[0], in[1]); },
                           rng);
        check_op_gradients("affine", {random_tensor(rng, {5})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.affine(in[0], -2.5, 0.75);
                           },
                           rng);
        check_op_gradients("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.matmul(in[0], in[1]);
                           },
                           rng);
        check_op_gradients("embedding", {random_tensor(rng, {6, 3})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               const int ids[] = {1, 4, 1, 0};
                               return g.embedding(in[0], ids);
                           },
                           rng);
        check_op_gradients("row", {random_tensor(rng, {4, 3})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.row(in[0], 2); },
                           rng);
        check_op_gradients("stack_rows",
                           {random_tensor(rng, {1, 3}), random_tensor(rng, {1, 3}),
                            random_tensor(rng, {1, 3})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.stack_rows(in); },
                           rng);
        check_op_gradients("tanh", {random_tensor(rng, {2, 4})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.tanh(in[0]); }, rng);
        check_op_gradients("sigmoid", {random_tensor(rng, {7}, true, -4, 4)},
                           [](Graph& g, std::vector<Tensor>& in) { return g.sigmoid(in[0]); },
                           rng);
        check_op_gradients("softplus", {random_tensor(rng, {7}, true, -4, 4)},
                           [](Graph& g, std::vector<Tensor>& in) { return g.softplus(in[0]); },
                           rng);
        check_op_gradients("log_softmax", {random_tensor(rng, {2, 5}, true, -2, 2)},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.log_softmax(in[0]);
                           },
                           rng);
        check_op_gradients("take_per_row", {random_tensor(rng, {3, 4})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               const int ids[] = {2, 0, 3};
                               return g.take_per_row(in[0], ids);
                           },
                           rng);
        check_op_gradients("sum", {random_tensor(rng, {3, 2})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.sum(in[0]); }, rng);
        check_op_gradients("mean", {random_tensor(rng, {6})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.mean(in[0]); }, rng);
    }
}

TEST_CASE("gradients hold across the whole finite-difference step range") {
    // same oracle at h = 1e-5, 1e-4, 1e-3, all within the 1e-4 contract
    for (double h : {1e-5, 1e-4, 1e-3}) {
        Rng rng(static_cast<std::uint64_t>(h * 1e6) + 9);
        check_op_gradients("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.matmul(in[0], in[1]);
                           },
                           rng, h, 1e-4);
        check_op_gradients("tanh", {random_tensor(rng, {2, 4})},
                           [](Graph& g, std::vector<Tensor>& in) { return g.tanh(in[0]); }, rng,
                           h, 1e-4);
        check_op_gradients("log_softmax", {random_tensor(rng, {2, 5}, true, -2, 2)},
                           [](Graph& g, std::vector<Tensor>& in) {
                               return g.log_softmax(in[0]);
                           },
                           rng, h, 1e-4);
    }
}

TEST_CASE("log_softmax gradient vs finite differences on a random 2x5 input") {
    Rng rng(42);
    Tensor x = random_tensor(rng, {2, 5}, true, -2, 2);
    Tensor cot = random_tensor(rng, {2, 5}, false);
    Graph g;
    Tensor loss = g.sum(g.mul(g.log_softmax(x), cot));
    g.backward(loss);
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    for (std::size_t idx = 0; idx < analytic.size(); ++idx) {
        const double fd = central_diff(x, idx, 1e-5, [&] {
            Graph g2;
            return g2.sum(g2.mul(g2.log_softmax(x), cot)).item();
        });
        CHECK(rel_err(analytic[idx], fd) < 1e-6);
    }
}

TEST_CASE("graph ops flag non-finite results") {
    Graph g;
    Tensor huge = Tensor::from({2}, {1e308, 1e308});
    CHECK_THROWS_AS(g.add(huge, huge), std::runtime_error);
}

TEST_CASE("constants and frozen leaves stay gradient-free") {
    Tensor frozen = Tensor::from({2}, {0.5, -0.25}, false);
    Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    g.backward(g.sum(g.mul(p, frozen)));
    CHECK(!frozen.has_grad());
    CHECK(p.grad()[0] == 0.5);
    CHECK(p.grad()[1] == -0.25);
}
