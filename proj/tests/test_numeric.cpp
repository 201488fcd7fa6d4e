#include "movsem/numeric.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace movsem;
using movsem::num::Tape;
using movsem::num::Var;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Scalar probe: sum(out .* weights) with fixed random weights, so every
// output element contributes to the gradient.
Var<double> probe(Tape<double>& tape, Var<double> out, const std::vector<double>& weights) {
    return num::sum(num::mul(out, tape.constant(out.rows(), out.cols(), weights)));
}

// Generic finite-difference check of one op against the tape gradients for
// each differentiable input.
void check_op(const char* name,
              const std::vector<std::pair<int, int>>& input_shapes,
              const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& build,
              std::uint64_t seed = 1234, double h = 1e-3, double tol = 1e-4) {
    CAPTURE(name);
    Rng rng(seed);
    std::vector<std::vector<double>> inputs;
    for (auto [r, c] : input_shapes) {
        inputs.push_back(random_values(static_cast<std::size_t>(r) * c, rng));
    }

    // forward once for output shape + probe weights
    std::vector<double> weights;
    {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            vars.push_back(tape.leaf(input_shapes[i].first, input_shapes[i].second, inputs[i]));
        }
        Var<double> out = build(tape, vars);
        weights = random_values(out.value().size(), rng);
    }

    auto loss_of = [&]() {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            vars.push_back(tape.leaf(input_shapes[i].first, input_shapes[i].second, inputs[i]));
        }
        return probe(tape, build(tape, vars), weights).value()[0];
    };

    for (std::size_t which = 0; which < inputs.size(); ++which) {
        // analytic gradients
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            vars.push_back(tape.leaf(input_shapes[i].first, input_shapes[i].second, inputs[i]));
        }
        Var<double> loss = probe(tape, build(tape, vars), weights);
        tape.backward(loss);
        std::vector<double> analytic(vars[which].grad().begin(), vars[which].grad().end());
        double err = test::gradcheck_max_rel_error(inputs[which], analytic, loss_of, h);
        CAPTURE(which);
        CHECK(err < tol);
    }
}

} // namespace

TEST_CASE("softmax basics") {
    Tape<double> tape;
    Var<double> x = tape.constant(1, 2, std::vector<double>{0.0, 0.0});
    Var<double> y = num::softmax(x, 1);
    CHECK(y.value()[0] == doctest::Approx(0.5));
    CHECK(y.value()[1] == doctest::Approx(0.5));

    Var<double> big = tape.constant(1, 3, std::vector<double>{1000.0, 1001.0, 999.0});
    auto v = num::softmax(big, 1).value();
    CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0));
    CHECK(std::isfinite(v[0]));
}

TEST_CASE("masked mean keeps only the surviving rows") {
    Tape<double> tape;
    Var<double> x = tape.constant(2, 3, std::vector<double>{1, 2, 3, 40, 50, 60});
    auto y = num::masked_mean(x, {1, 0});
    CHECK(y.value()[0] == doctest::Approx(1.0));
    CHECK(y.value()[1] == doctest::Approx(2.0));
    CHECK(y.value()[2] == doctest::Approx(3.0));

    auto none = num::masked_mean(x, {0, 0});
    CHECK(none.value()[0] == 0.0); // zeros, never NaN
}

TEST_CASE("l2_normalize") {
    Tape<double> tape;
    Rng rng(5);
    Var<double> x = tape.constant(3, 8, random_values(24, rng));
    auto y = num::l2_normalize(x).value();
    for (int i = 0; i < 3; ++i) {
        double norm2 = 0;
        for (int j = 0; j < 8; ++j) norm2 += y[i * 8 + j] * y[i * 8 + j];
        CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-6));
    }
    Var<double> zero = tape.constant(1, 4, std::vector<double>{0, 0, 0, 0});
    CHECK_THROWS_AS(num::l2_normalize(zero), NumericError);
}

TEST_CASE("shape mismatches name the op and shapes") {
    Tape<double> tape;
    Var<double> a = tape.constant(2, 3, std::vector<double>(6, 1.0));
    Var<double> b = tape.constant(4, 5, std::vector<double>(20, 1.0));
    CHECK_THROWS_WITH_AS(num::matmul(a, b), doctest::Contains("matmul"), ShapeError);
    CHECK_THROWS_WITH_AS(num::add(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("gradients of every core op match central finite differences") {
    check_op("matmul", {{4, 4}, {4, 4}}, [](Tape<double>& t, auto& v) {
        (void)t;
        return num::matmul(v[0], v[1]);
    });
    check_op("matmul_nt", {{4, 3}, {5, 3}}, [](Tape<double>&, auto& v) {
        return num::matmul_nt(v[0], v[1]);
    });
    check_op("add", {{4, 4}, {4, 4}},
             [](Tape<double>&, auto& v) { return num::add(v[0], v[1]); });
    check_op("sub", {{4, 4}, {4, 4}},
             [](Tape<double>&, auto& v) { return num::sub(v[0], v[1]); });
    check_op("add_rowvec", {{4, 4}, {1, 4}},
             [](Tape<double>&, auto& v) { return num::add_rowvec(v[0], v[1]); });
    check_op("scale", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::scale(v[0], 1.7); });
    check_op("mul", {{4, 4}, {4, 4}},
             [](Tape<double>&, auto& v) { return num::mul(v[0], v[1]); });
    check_op("concat_rows", {{2, 4}, {3, 4}},
             [](Tape<double>&, auto& v) { return num::concat(v[0], v[1], 0); });
    check_op("concat_cols", {{3, 2}, {3, 4}},
             [](Tape<double>&, auto& v) { return num::concat(v[0], v[1], 1); });
    check_op("softmax_rows", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::softmax(v[0], 1); });
    check_op("softmax_cols", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::softmax(v[0], 0); });
    check_op("layer_norm", {{4, 4}, {1, 4}, {1, 4}},
             [](Tape<double>&, auto& v) { return num::layer_norm(v[0], v[1], v[2]); });
    check_op("masked_mean", {{4, 4}}, [](Tape<double>&, auto& v) {
        return num::masked_mean(v[0], {1, 0, 1, 1});
    });
    check_op("block_masked_mean", {{4, 4}}, [](Tape<double>&, auto& v) {
        return num::block_masked_mean(v[0], 2, {1, 0, 1, 1});
    });
    check_op("l2_normalize", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::l2_normalize(v[0]); });
    check_op("logsumexp_row", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::logsumexp_row(v[0]); });
    check_op("pick", {{4, 4}},
             [](Tape<double>&, auto& v) { return num::pick(v[0], 2, 1); });
    check_op("euclidean", {{1, 6}, {1, 6}},
             [](Tape<double>&, auto& v) { return num::euclidean(v[0], v[1]); });
    check_op("block_attention", {{4, 8}, {4, 8}, {4, 8}}, [](Tape<double>&, auto& v) {
        return num::block_attention(v[0], v[1], v[2], 2, 2, {0, 0, 0, 1});
    });
    check_op("full_attention", {{6, 8}, {6, 8}, {6, 8}}, [](Tape<double>&, auto& v) {
        return num::block_attention(v[0], v[1], v[2], 6, 4, {0, 0, 0, 0, 1, 0});
    });
}

TEST_CASE("relu gradient away from the kink") {
    Rng rng(21);
    std::vector<double> input = random_values(16, rng);
    for (auto& v : input) v += (v >= 0 ? 0.2 : -0.2); // keep clear of 0
    std::vector<double> weights = random_values(16, rng);
    auto loss_of = [&]() {
        Tape<double> tape;
        Var<double> x = tape.leaf(4, 4, input);
        return probe(tape, num::relu(x), weights).value()[0];
    };
    Tape<double> tape;
    Var<double> x = tape.leaf(4, 4, input);
    Var<double> loss = probe(tape, num::relu(x), weights);
    tape.backward(loss);
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    CHECK(test::gradcheck_max_rel_error(input, analytic, loss_of, 1e-3) < 1e-4);
}

TEST_CASE("composite graph gradient check") {
    // a small end-to-end graph exercising several ops at once
    Rng rng(99);
    std::vector<double> input = random_values(24, rng);
    std::vector<double> w = random_values(36, rng);
    std::vector<double> gamma = random_values(6, rng, 0.5, 1.5);
    std::vector<double> beta = random_values(6, rng);

    auto build = [&](Tape<double>& tape, std::vector<double>& x_store) {
        Var<double> x = tape.leaf(4, 6, x_store);
        Var<double> wm = tape.constant(6, 6, w);
        Var<double> g = tape.constant(1, 6, gamma);
        Var<double> b = tape.constant(1, 6, beta);
        Var<double> h = num::layer_norm(num::matmul(x, wm), g, b);
        h = num::relu(h);
        h = num::block_attention(h, h, h, 2, 3, {0, 0, 0, 1});
        h = num::softmax(h, 1);
        Var<double> pooled = num::masked_mean(h, {1, 1, 0, 1});
        return num::sum(num::l2_normalize(pooled));
    };
    auto loss_of = [&]() {
        Tape<double> tape;
        return build(tape, input).value()[0];
    };
    Tape<double> tape;
    Var<double> loss = build(tape, input);
    tape.backward(loss);
    // leaf is node 0
    std::vector<double> analytic(tape.n(0).grad.begin(), tape.n(0).grad.end());
    CHECK(test::gradcheck_max_rel_error(input, analytic, loss_of, 1e-4) < 1e-4);
}

TEST_CASE("multi-head self-attention contracts") {
    Rng rng(7);
    const int d = 8, heads = 2;
    num::AttentionParams<double> params("attn", d);
    params.init(rng);
    for (auto* p : {&params.bq, &params.bk, &params.bv, &params.bo}) {
        for (auto& v : p->value) v = rng.uniform(-0.1, 0.1);
    }

    SUBCASE("single token: output equals projected value") {
        Tape<double> tape;
        std::vector<double> xv = random_values(d, rng);
        Var<double> x = tape.constant(1, d, xv);
        Var<double> out = num::multi_head_self_attention(x, params, heads, 1, {0});
        // by hand: v = x Wv + bv ; out = v Wo + bo (softmax over one key is 1)
        Tape<double> ref;
        Var<double> xr = ref.constant(1, d, xv);
        Var<double> v = num::add_rowvec(num::matmul(xr, ref.param(params.wv)), ref.param(params.bv));
        Var<double> expect =
            num::add_rowvec(num::matmul(v, ref.param(params.wo)), ref.param(params.bo));
        for (int j = 0; j < d; ++j) {
            CHECK(out.value()[j] == doctest::Approx(expect.value()[j]).epsilon(1e-9));
        }
    }

    SUBCASE("padded keys receive zero total attention weight") {
        Tape<double> tape;
        const int n = 6;
        Var<double> x = tape.constant(n, d, random_values(n * d, rng));
        std::vector<std::uint8_t> padded = {0, 0, 0, 0, 1, 1};
        Var<double> q = num::add_rowvec(num::matmul(x, tape.param(params.wq)), tape.param(params.bq));
        Var<double> k = num::add_rowvec(num::matmul(x, tape.param(params.wk)), tape.param(params.bk));
        Var<double> v = num::add_rowvec(num::matmul(x, tape.param(params.wv)), tape.param(params.bv));
        Var<double> ctx = num::block_attention(q, k, v, n, heads, padded);
        const auto& weights = tape.n(ctx.id()).aux; // [head][row][key]
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < n; ++i) {
                double padded_sum = 0, total = 0, min_w = 1.0;
                for (int j = 0; j < n; ++j) {
                    double wgt = weights[(h * n + i) * n + j];
                    total += wgt;
                    min_w = std::min(min_w, wgt);
                    if (padded[j]) padded_sum += wgt;
                }
                CHECK(padded_sum <= 1e-7);
                CHECK(total == doctest::Approx(1.0).epsilon(1e-6)); // convex combination
                CHECK(min_w >= 0.0);
            }
        }
    }

    SUBCASE("fully masked block yields zeros, never NaN") {
        Tape<double> tape;
        Var<double> x = tape.constant(4, d, random_values(4 * d, rng));
        Var<double> out = num::block_attention(x, x, x, 2, heads, {0, 0, 1, 1});
        for (int j = 0; j < d; ++j) {
            CHECK(out.value()[2 * d + j] == 0.0);
            CHECK(out.value()[3 * d + j] == 0.0);
            CHECK(std::isfinite(out.value()[j]));
        }
    }

    SUBCASE("matches a brute-force per-element implementation on n=6") {
        const int n = 6;
        std::vector<double> xv = random_values(n * d, rng);
        std::vector<std::uint8_t> padded = {0, 0, 0, 1, 0, 0};
        Tape<double> tape;
        Var<double> x = tape.constant(n, d, xv);
        Var<double> out = num::multi_head_self_attention(x, params, heads, n, padded);

        test::NaiveBlockRef ref;
        ref.d_h = d;
        ref.heads = heads;
        ref.wq = test::NaiveBlockRef::dump(params.wq);
        ref.bq = test::NaiveBlockRef::dump(params.bq);
        ref.wk = test::NaiveBlockRef::dump(params.wk);
        ref.bk = test::NaiveBlockRef::dump(params.bk);
        ref.wv = test::NaiveBlockRef::dump(params.wv);
        ref.bv = test::NaiveBlockRef::dump(params.bv);
        ref.wo = test::NaiveBlockRef::dump(params.wo);
        ref.bo = test::NaiveBlockRef::dump(params.bo);
        std::vector<double> expect = ref.attention(xv, n, padded);
        for (int i = 0; i < n * d; ++i) {
            CHECK(out.value()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves the parameter unchanged") {
        num::Parameter<double> p("p", {2, 2});
        p.value = {1, 2, 3, 4};
        num::adam_step<double>({&p}, {0.1, 0.9, 0.999, 1e-8});
        CHECK(p.value == std::vector<double>{1, 2, 3, 4});
    }
    SUBCASE("one step with constant gradient is about -lr * sign(g)") {
        num::Parameter<double> p("p", {1, 3});
        p.value = {0.0, 0.0, 0.0};
        p.grad = {0.5, -2.0, 4.0};
        num::adam_step<double>({&p}, {0.01, 0.9, 0.999, 1e-8});
        // bias-corrected m-hat = g, v-hat = g^2, so the step is lr * g/|g|
        CHECK(p.value[0] == doctest::Approx(-0.01).epsilon(1e-4));
        CHECK(p.value[1] == doctest::Approx(0.01).epsilon(1e-4));
        CHECK(p.value[2] == doctest::Approx(-0.01).epsilon(1e-4));
        CHECK(p.grad == std::vector<double>{0, 0, 0}); // cleared
    }
    SUBCASE("quadratic bowl converges") {
        // f(x) = 0.5 * sum((x - c)^2), minimum at c
        num::Parameter<double> p("p", {1, 4});
        p.value = {3.0, -2.0, 1.0, 0.5};
        std::vector<double> c = {1.0, 1.0, -1.0, 0.0};
        num::AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
        for (int step = 0; step < 500; ++step) {
            for (int i = 0; i < 4; ++i) p.grad[i] = p.value[i] - c[i];
            num::adam_step<double>({&p}, adam);
        }
        for (int i = 0; i < 4; ++i) CHECK(std::abs(p.value[i] - c[i]) < 1e-3);
    }
    SUBCASE("NaN gradient aborts with the parameter name") {
        num::Parameter<double> p("encoder.w", {1, 1});
        p.grad = {std::nan("")};
        CHECK_THROWS_WITH_AS(num::adam_step<double>({&p}, {0.1, 0.9, 0.999, 1e-8}),
                             doctest::Contains("encoder.w"), NumericError);
    }
}

TEST_CASE("no-grad tape skips gradient machinery") {
    num::Parameter<float> p("p", {2, 2});
    p.value = {1, 2, 3, 4};
    Tape<float> tape(false);
    Var<float> x = tape.param(p);
    Var<float> y = num::scale(x, 2.0f);
    CHECK(y.value()[3] == doctest::Approx(8.0f));
    CHECK_FALSE(tape.n(y.id()).requires_grad);
}
