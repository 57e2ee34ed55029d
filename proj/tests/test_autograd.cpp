#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "vdt/autograd.hpp"
#include "vdt/rng.hpp"

using namespace vdt;
using namespace vdt::ag;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double stddev = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    rng.fill_normal(t.data(), t.numel(), 0.0, stddev);
    return t;
}

using LossFn = std::function<Var(Tape*, std::vector<Var>&)>;

// central finite differences vs the tape, on every coordinate
void check_grads(const LossFn& fn, std::vector<Var> inputs, double eps = 1e-5,
                 double tol = 1e-5) {
    Tape tape;
    for (Var& v : inputs) v.reset_grad();
    Var loss = fn(&tape, inputs);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (Var& v : inputs) analytic.push_back(v.grad());

    for (size_t vi = 0; vi < inputs.size(); ++vi) {
        Var& v = inputs[vi];
        for (int64_t i = 0; i < v.val().numel(); ++i) {
            const double keep = v.val()[i];
            v.val()[i] = keep + eps;
            const double up = fn(nullptr, inputs).val()[0];
            v.val()[i] = keep - eps;
            const double dn = fn(nullptr, inputs).val()[0];
            v.val()[i] = keep;
            const double fd = (up - dn) / (2.0 * eps);
            const double an = analytic[vi][i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1.0});
            CHECK(std::fabs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    std::vector<Var> ins = {Var(random_tensor({3, 4}, 1), true), Var(random_tensor({3, 4}, 2), true)};
    Tensor target = random_tensor({3, 4}, 3);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var y = add(t, mul(t, v[0], v[1]), scale(t, sub(t, v[0], v[1]), 0.37));
            return mse(t, y, constant(target));
        },
        ins);
}

TEST_CASE("linear gradient (weights, bias, input)") {
    std::vector<Var> ins = {Var(random_tensor({2, 5, 4}, 4), true),
                            Var(random_tensor({4, 6}, 5), true),
                            Var(random_tensor({6}, 6), true)};
    Tensor target = random_tensor({2, 5, 6}, 7);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            return mse(t, linear(t, v[0], v[1], v[2]), constant(target));
        },
        ins);
}

TEST_CASE("layernorm gradient") {
    std::vector<Var> ins = {Var(random_tensor({4, 7}, 8), true)};
    Tensor target = random_tensor({4, 7}, 9);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) { return mse(t, layernorm(t, v[0]), constant(target)); },
        ins, 1e-5, 1e-4);
}

TEST_CASE("softmax gradient") {
    std::vector<Var> ins = {Var(random_tensor({3, 5}, 10), true)};
    Tensor target = random_tensor({3, 5}, 11);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            return mse(t, softmax_last(t, v[0]), constant(target));
        },
        ins);
}

TEST_CASE("gelu and tanh gradients") {
    std::vector<Var> ins = {Var(random_tensor({17}, 12), true)};
    Tensor target = random_tensor({17}, 13);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            return mse(t, tanh_op(t, gelu(t, v[0])), constant(target));
        },
        ins);
}

TEST_CASE("reshape, swap01, heads round trip gradients") {
    std::vector<Var> ins = {Var(random_tensor({2, 3, 8}, 14), true)};
    Tensor target = random_tensor({2, 3, 8}, 15);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var y = swap01(t, swap01(t, v[0]));
            y = from_heads(t, to_heads(t, y, 4), 4);
            y = reshape(t, y, {2, 3, 8});
            return mse(t, y, constant(target));
        },
        ins);
}

TEST_CASE("bmm gradients") {
    std::vector<Var> ins = {Var(random_tensor({2, 3, 4}, 16), true),
                            Var(random_tensor({2, 4, 5}, 17), true),
                            Var(random_tensor({2, 6, 4}, 18), true)};
    Tensor target1 = random_tensor({2, 3, 5}, 19);
    Tensor target2 = random_tensor({2, 3, 6}, 20);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var a = bmm_nn(t, v[0], v[1]);
            Var b = bmm_nt(t, v[0], v[2]);
            return add(t, mse(t, a, constant(target1)), mse(t, b, constant(target2)));
        },
        ins);
}

TEST_CASE("broadcast, modulate, slice, concat gradients") {
    std::vector<Var> ins = {Var(random_tensor({1, 3, 4}, 21), true),
                            Var(random_tensor({8}, 22), true),
                            Var(random_tensor({2, 3, 2}, 23), true)};
    Tensor target = random_tensor({2, 3, 6}, 24);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var x = broadcast_temporal(t, v[0], 2);
            Var sc = slice1d(t, v[1], 0, 4);
            Var sh = slice1d(t, v[1], 4, 4);
            Var y = modulate(t, x, sc, sh);
            Var z = concat_last(t, {y, v[2]});
            return mse(t, z, constant(target));
        },
        ins);
}

TEST_CASE("patch rearrangement gradients and exact round trip") {
    Tensor z = random_tensor({2, 4, 6, 3}, 25);
    Var zin(z, true);
    // exact round trip
    Var tok = patches_from_latent(nullptr, zin, 2);
    Var back = latent_from_patches(nullptr, tok, 2, 4, 6, 3);
    CHECK(max_abs_diff(back.val(), z) == 0.0);

    std::vector<Var> ins = {zin};
    Tensor target = random_tensor({2, 4, 6, 3}, 26);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var y = latent_from_patches(t, patches_from_latent(t, v[0], 2), 2, 4, 6, 3);
            return mse(t, y, constant(target));
        },
        ins);
}

TEST_CASE("conv2d gradients (stride 1 and stride 2)") {
    std::vector<Var> ins = {Var(random_tensor({2, 5, 4, 3}, 27), true),
                            Var(random_tensor({3, 3, 3, 4}, 28), true),
                            Var(random_tensor({4}, 29), true)};
    Tensor t1 = random_tensor({2, 5, 4, 4}, 30);
    Tensor t2 = random_tensor({2, 3, 2, 4}, 31);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) {
            Var a = conv2d(t, v[0], v[1], v[2], 1, 1);
            Var b = conv2d(t, v[0], v[1], v[2], 2, 1);
            return add(t, mse(t, a, constant(t1)), mse(t, b, constant(t2)));
        },
        ins, 1e-5, 1e-4);
}

TEST_CASE("upsample2x gradient") {
    std::vector<Var> ins = {Var(random_tensor({1, 3, 2, 4}, 32), true)};
    Tensor target = random_tensor({1, 6, 4, 4}, 33);
    check_grads(
        [&](Tape* t, std::vector<Var>& v) { return mse(t, upsample2x(t, v[0]), constant(target)); },
        ins);
}

TEST_CASE("gradient accumulates across shared subexpressions") {
    Var x(random_tensor({4}, 34), true);
    Tape t;
    Var y = add(&t, x, x);  // dy/dx = 2
    Var loss = mse(&t, y, constant(Tensor({4})));
    t.backward(loss);
    for (int64_t i = 0; i < 4; ++i) {
        const double expect = 2.0 * (2.0 * x.val()[i]) * 2.0 / 4.0;
        CHECK(std::fabs(x.grad()[i] - expect) < 1e-12);
    }
}
