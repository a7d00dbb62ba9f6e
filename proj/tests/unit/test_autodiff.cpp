#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stalign/autodiff/adam.hpp"
#include "stalign/autodiff/checkpoint.hpp"
#include "stalign/autodiff/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/op_catalog.hpp"

using namespace stalign;
using ad::Tensor;
using ad::TensorD;

namespace {

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

}  // namespace

TEST_CASE("matmul worked examples") {
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto r = ad::matmul(eye, m);
    CHECK(std::vector<float>(r.values().begin(), r.values().end()) == std::vector<float>{1, 2, 3, 4});

    Rng rng(3);
    auto z = ad::matmul(Tensor::zeros({2, 3}), Tensor::from({3, 4}, std::vector<float>(12, 1.5F)));
    CHECK(z.shape() == ad::Shape{2, 4});
    for (float v : z.values()) CHECK(v == 0.0F);

    auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
    const auto oracle = naive_matmul({1, 2, 3, 4}, {5, 6, 7, 8}, 2, 2, 2);
    CHECK(oracle == std::vector<double>{19, 22, 43, 50});
    auto c = ad::matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.values()[i] == doctest::Approx(oracle[i]));
}

TEST_CASE("matmul rejects mismatched inner dimensions and names both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 3});
    try {
        (void)ad::matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ad::ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random 4x4 triples") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto mk = [&] {
            std::vector<float> v(16);
            for (auto& x : v) x = static_cast<float>(rng.uniform(-2, 2));
            return Tensor::from({4, 4}, v);
        };
        auto A = mk(), B = mk(), C = mk();
        auto l = ad::matmul(ad::matmul(A, B), C);
        auto r = ad::matmul(A, ad::matmul(B, C));
        for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(l.values()[i] - r.values()[i]) < 1e-4);
    }
}

TEST_CASE("softmax worked examples and naive oracle") {
    for (float c : {-3.0F, 0.0F, 7.5F}) {
        auto s = ad::softmax(Tensor::from({4}, {c, c, c, c}), 0);
        for (float v : s.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));
    }
    auto s2 = ad::softmax(Tensor::from({2}, {0.0F, static_cast<float>(std::log(3.0))}), 0);
    CHECK(s2.values()[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(s2.values()[1] == doctest::Approx(0.75).epsilon(1e-6));

    Rng rng(11);
    std::vector<double> x(7);
    for (auto& v : x) v = rng.uniform(-1, 1);
    double z = 0.0;
    for (double v : x) z += std::exp(v);
    auto s = ad::softmax(TensorD::from({7}, x), 0);
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(s.values()[i] - std::exp(x[i]) / z) < 1e-6);
}

TEST_CASE("softmax rows sum to one and stay in [0,1]") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        std::vector<float> v(5 * 6);
        for (auto& x : v) x = static_cast<float>(rng.uniform(-40, 40));
        for (std::size_t axis : {0UL, 1UL}) {
            auto s = ad::softmax(Tensor::from({5, 6}, v), axis);
            const std::size_t outer = axis == 0 ? 6 : 5, len = axis == 0 ? 5 : 6;
            for (std::size_t o = 0; o < outer; ++o) {
                double total = 0.0;
                for (std::size_t i = 0; i < len; ++i) {
                    const float p = axis == 0 ? s.values()[i * 6 + o] : s.values()[o * 6 + i];
                    CHECK(p >= 0.0F);
                    CHECK(p <= 1.0F);
                    total += p;
                }
                CHECK(std::abs(total - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("layer_norm examples and errors") {
    auto ones = Tensor::full({4}, 1.0F);
    auto zeros = Tensor::zeros({4});
    auto c = ad::layer_norm(Tensor::from({1, 4}, {5, 5, 5, 5}), ones, zeros);
    for (float v : c.values()) CHECK(v == 0.0F);

    auto s = ad::layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1.0F), Tensor::zeros({2}));
    CHECK(s.values()[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s.values()[1] == doctest::Approx(-1.0).epsilon(1e-5));

    Rng rng(5);
    std::vector<double> x(9);
    for (auto& v : x) v = rng.uniform(-3, 3);
    auto y = ad::layer_norm(TensorD::from({1, 9}, x), TensorD::full({9}, 1.0), TensorD::zeros({9}));
    double mu = 0.0, var = 0.0;
    for (double v : x) mu += v;
    mu /= 9;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= 9;
    double ymean = 0.0, yvar = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(std::abs(y.values()[i] - (x[i] - mu) / std::sqrt(var + 1e-5)) < 1e-6);
        ymean += y.values()[i];
    }
    ymean /= 9;
    for (double v : y.values()) yvar += (v - ymean) * (v - ymean);
    CHECK(std::abs(ymean) < 1e-6);
    CHECK(std::abs(yvar / 9 - 1.0) < 1e-4);

    CHECK_THROWS_AS(ad::layer_norm(Tensor::from({2, 1}, {1, 2}), Tensor::full({1}, 1.0F), Tensor::zeros({1})),
                    ad::ShapeError);
}

TEST_CASE("gelu, linear, mean trivial cases") {
    CHECK(ad::gelu(Tensor::scalar(0.0F)).item() == 0.0F);

    auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto y = ad::linear(x, eye, Tensor::zeros({3}));
    CHECK(std::vector<float>(y.values().begin(), y.values().end()) ==
          std::vector<float>(x.values().begin(), x.values().end()));

    auto m = ad::mean(Tensor::from({1, 3}, {7, 8, 9}), 0);
    CHECK(m.shape() == ad::Shape{3});
    CHECK(std::vector<float>(m.values().begin(), m.values().end()) == std::vector<float>{7, 8, 9});

    CHECK_THROWS_AS(ad::linear(x, Tensor::zeros({2, 3}), Tensor()), ad::ShapeError);
    std::vector<Tensor> bad{Tensor::zeros({2, 3}), Tensor::zeros({3, 3})};
    CHECK_THROWS_AS(ad::concat<float>(bad, 1), ad::ShapeError);
}

TEST_CASE("backward closed forms") {
    auto x = TensorD::from({3}, {1.0, -2.0, 0.5}, true);
    ad::sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);

    auto y = TensorD::from({3}, {1.0, -2.0, 0.5}, true);
    ad::sum(ad::mul(y, y)).backward();
    CHECK(y.grad()[0] == doctest::Approx(2.0));
    CHECK(y.grad()[1] == doctest::Approx(-4.0));
    CHECK(y.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("backward contract errors") {
    auto x = TensorD::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(ad::mul(x, x).backward(), ad::ContractError);

    auto loss = ad::sum(ad::mul(x, x));
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), ad::ContractError);

    // A second loss reusing an interior node of a consumed tape is rejected too.
    auto shared = ad::mul(x, x);
    ad::sum(shared).backward();
    CHECK_THROWS_AS(ad::sum(shared).backward(), ad::ContractError);
}

TEST_CASE("no-grad mode records nothing") {
    auto x = TensorD::from({2}, {1.0, 2.0}, true);
    ad::NoGradGuard guard;
    auto y = ad::sum(ad::mul(x, x));
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("composite MLP gradient matches finite differences on 10 seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(1000 + seed);
        std::vector<TensorD> in{testing::random_tensor({3, 4}, rng), testing::random_tensor({4, 6}, rng, -1, 1),
                                testing::random_tensor({6}, rng, -1, 1), testing::random_tensor({6, 2}, rng, -1, 1),
                                testing::random_tensor({2}, rng, -1, 1)};
        auto f = [](std::vector<TensorD>& x) {
            auto h = ad::gelu(ad::linear(x[0], x[1], x[2]));
            auto o = ad::linear(h, x[3], x[4]);
            return ad::sum(ad::mul(o, o));
        };
        const auto res = testing::grad_check(f, in);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("every op passes the finite-difference check") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        for (auto& probe : testing::op_probes(seed)) {
            CAPTURE(probe.name);
            const auto res = testing::grad_check(probe.fn, probe.inputs);
            CHECK(res.checked > 0);
            CHECK(res.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("random 3-layer compositions pass the finite-difference check") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto probe = testing::random_composition(seed);
        CAPTURE(probe.name);
        const auto res = testing::grad_check(probe.fn, probe.inputs);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("float engine agrees with the double engine") {
    Rng rng(9);
    std::vector<double> xv(12), wv(12);
    for (auto& v : xv) v = rng.uniform(-2, 2);
    for (auto& v : wv) v = rng.uniform(-1, 1);
    auto xd = TensorD::from({3, 4}, xv, true);
    auto wd = TensorD::from({4, 3}, wv, true);
    const std::vector<double> mix{0.3, -1.2, 0.7, 2.0, 0.1, -0.4, -0.9, 1.1, 0.5};
    ad::sum(ad::mul(ad::softmax(ad::matmul(xd, wd), 1), TensorD::from({3, 3}, mix))).backward();

    auto xf = Tensor::from({3, 4}, std::vector<float>(xv.begin(), xv.end()), true);
    auto wf = Tensor::from({4, 3}, std::vector<float>(wv.begin(), wv.end()), true);
    auto lf = ad::sum(ad::mul(ad::softmax(ad::matmul(xf, wf), 1),
                              Tensor::from({3, 3}, std::vector<float>(mix.begin(), mix.end()))));
    lf.backward();
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(xf.grad()[i] - xd.grad()[i]) < 1e-5);
}

TEST_CASE("adam worked examples") {
    SUBCASE("zero gradient on fresh state is a fixed point") {
        auto p = Tensor::from({3}, {1.0F, -2.0F, 0.5F}, true);
        std::vector<Tensor> params{p};
        ad::AdamState st;
        st.lr = 0.1;
        for (int i = 0; i < 5; ++i) {
            p.mutable_grad();  // allocates zeros
            ad::adam_step<float>(params, st);
        }
        CHECK(st.step_count == 5);
        CHECK(p.values()[0] == 1.0F);
        CHECK(p.values()[1] == -2.0F);
        CHECK(p.values()[2] == 0.5F);
    }
    SUBCASE("first step moves by about lr") {
        // m1 = 0.1, v1 = 0.001; bias-corrected m=1, v=1 -> step = lr * 1/(1+eps)
        auto p = TensorD::from({1}, {1.0}, true);
        p.mutable_grad()[0] = 1.0;
        std::vector<TensorD> params{p};
        ad::AdamState st;
        st.lr = 0.1;
        ad::adam_step<double>(params, st);
        CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-7));
        CHECK(st.step_count == 1);
    }
    SUBCASE("100 steps on (w-3)^2 track a scripted recurrence") {
        // Reference: the same recurrence written out by hand.
        double w_ref = 0.0, m = 0.0, v = 0.0;
        for (int t = 1; t <= 100; ++t) {
            const double g = 2.0 * (w_ref - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            w_ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        }
        auto w = TensorD::from({1}, {0.0}, true);
        std::vector<TensorD> params{w};
        ad::AdamState st;
        st.lr = 0.1;
        for (int t = 0; t < 100; ++t) {
            w.zero_grad();
            auto d = ad::sub(w, TensorD::from({1}, {3.0}));
            ad::sum(ad::mul(d, d)).backward();
            ad::adam_step<double>(params, st);
        }
        CHECK(w.values()[0] == doctest::Approx(w_ref).epsilon(1e-12));
        CHECK(std::abs(w.values()[0] - 3.0) < 0.5);
    }
    SUBCASE("moment shape mismatch is rejected") {
        auto p = Tensor::from({2}, {1.0F, 2.0F}, true);
        std::vector<Tensor> params{p};
        ad::AdamState st;
        st.first_moment = {{0.0}};
        st.second_moment = {{0.0}};
        CHECK_THROWS_AS(ad::adam_step<float>(params, st), ad::ShapeError);
    }
}

TEST_CASE("checkpoint round trip, version check, truncation") {
    const auto dir = std::filesystem::temp_directory_path() / "stalign_ckpt_test";
    std::filesystem::create_directories(dir);
    Rng rng(1);
    ad::ParameterStore store;
    store.add_normal("video.w", {3, 4}, 1.0, rng);
    store.add_normal("text.b", {5}, 1.0, rng);
    store.add_normal("proj.scale", {}, 1.0, rng);
    const auto path = dir / "a.ckpt";
    ad::save_checkpoint(store, path);

    ad::ParameterStore other;
    other.add_zeros("video.w", {3, 4});
    other.add_zeros("text.b", {5});
    other.add_zeros("proj.scale", {});
    ad::load_checkpoint(other, path);
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto a = store.tensors()[i].values();
        const auto b = other.tensors()[i].values();
        CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }

    ad::ParameterStore wrong;
    wrong.add_zeros("video.w", {4, 3});
    wrong.add_zeros("text.b", {5});
    wrong.add_zeros("proj.scale", {});
    try {
        ad::load_checkpoint(wrong, path);
        FAIL("expected CheckpointError");
    } catch (const ad::CheckpointError& e) {
        CHECK(std::string(e.what()).find("video.w") != std::string::npos);
    }

    std::string bytes;
    {
        std::ifstream f(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(f), {});
    }
    {
        std::string v2 = bytes;
        v2[4] = 2;
        std::ofstream(dir / "v2.ckpt", std::ios::binary) << v2;
        CHECK_THROWS_AS(ad::read_checkpoint(dir / "v2.ckpt"), ad::CheckpointError);
    }
    {
        std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
        CHECK_THROWS_AS(ad::read_checkpoint(dir / "trunc.ckpt"), ad::CheckpointError);
    }
    std::filesystem::remove_all(dir);
}
