#include <doctest.h>

#include <cmath>
#include <random>

#include "fixy/model_ir.hpp"
#include "fixy/pipeline.hpp"
#include "fixy/quantization.hpp"

using namespace fixy;

namespace {

QuantTensor raw(std::vector<std::int8_t> v) {
    QuantTensor q;
    q.group_size = v.size();
    q.scales = {1.0};
    q.removed.assign(v.size(), 0);
    q.values = std::move(v);
    return q;
}

} // namespace

TEST_SUITE("quantization") {

TEST_CASE("per-tensor symmetric int8") {
    const std::vector<float> w{0.5f, -0.25f, 0.0f};
    const auto q = quantize_weights(w, Granularity::per_tensor);
    REQUIRE(q.scales.size() == 1);
    CHECK(q.scales[0] == doctest::Approx(0.5 / 127));
    CHECK(q.values == std::vector<std::int8_t>{127, -64, 0});
}

TEST_CASE("per-channel scales and range") {
    std::mt19937_64 rng(9);
    std::normal_distribution<float> d(0.0f, 0.3f);
    std::vector<float> w(4 * 27);
    for (auto& v : w) v = d(rng);
    const auto q = quantize_weights(w, Granularity::per_channel, 4);
    CHECK(q.groups() == 4);
    CHECK(q.group_size == 27);
    for (std::size_t g = 0; g < 4; ++g) {
        int peak = 0;
        for (std::size_t i = 0; i < 27; ++i) peak = std::max(peak, std::abs(int{q.values[g * 27 + i]}));
        CHECK(peak == 127);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(q.values[i] >= -127);
        CHECK(std::abs(q.dequantize(i) - w[i]) <= q.scale_of(i) / 2 + 1e-9);
    }
}

TEST_CASE("all-zero tensor") {
    const std::vector<float> w(6, 0.0f);
    const auto q = quantize_weights(w, Granularity::per_tensor);
    for (auto v : q.values) CHECK(v == 0);
}

TEST_CASE("rounding half away from zero") {
    CHECK(round_half_away(2.5) == 3);
    CHECK(round_half_away(-2.5) == -3);
    CHECK(round_half_away(2.49) == 2);
    CHECK(shift_round(24, 4) == 2);
    CHECK(shift_round(-24, 4) == -2);
    CHECK(shift_round(23, 4) == 1);
}

TEST_CASE("magnitude_below policy") {
    const auto [q, r] = prune_weights(raw({5, 0, -3, 100}), PrunePolicy::magnitude_below(4));
    CHECK(q.values == std::vector<std::int8_t>{5, 0, 0, 100});
    CHECK(q.removed == std::vector<std::uint8_t>{0, 1, 1, 0});
    CHECK(r.kept == 2);
    CHECK(r.removed_zero == 1);
    CHECK(r.removed_small == 1);
    CHECK(r.sparsity == doctest::Approx(0.5));
}

TEST_CASE("exact_zero policy") {
    const auto [q, r] = prune_weights(raw({5, 0, -3, 0}), PrunePolicy::exact_zero());
    CHECK(r.kept == 2);
    CHECK(r.removed_zero == 2);
    CHECK(q.removed == std::vector<std::uint8_t>{0, 1, 0, 1});
}

TEST_CASE("target sparsity is monotone and model-wide") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> d(-127, 127);
    std::vector<QuantTensor> base;
    for (int t = 0; t < 3; ++t) {
        std::vector<std::int8_t> v(50 + 20 * t);
        for (auto& x : v) x = static_cast<std::int8_t>(d(rng));
        base.push_back(raw(v));
    }
    std::int64_t prev_kept = INT64_MAX;
    for (double s : {0.0, 0.2, 0.5, 0.8, 0.99}) {
        auto ts = base;
        const auto r = prune_weights(ts, PrunePolicy::target(s));
        CHECK(r.sparsity >= s - 1e-12);
        CHECK(r.kept <= prev_kept);
        prev_kept = r.kept;
        for (const auto& t : ts)
            for (std::size_t i = 0; i < t.size(); ++i)
                if (!t.removed[i]) CHECK(std::abs(int{t.values[i]}) >= r.threshold_used);
    }
}

TEST_CASE("ties go to the earliest weight") {
    std::vector<QuantTensor> ts{raw({3, -3}), raw({3, 9})};
    const auto r = prune_weights(ts, PrunePolicy::target(0.25));
    CHECK(r.kept == 3);
    CHECK(ts[0].removed == std::vector<std::uint8_t>{1, 0});
    CHECK(ts[1].removed == std::vector<std::uint8_t>{0, 0});
    CHECK_THROWS_AS(prune_weights(ts, PrunePolicy::target(1.0)), ParameterError);
}

TEST_CASE("mobilenet at half sparsity") {
    const auto shaped = infer_shapes(build_mobilenet(0.25, {32, 32, 3, 8}));
    FreezeOptions fo;
    fo.n_fixed = 14;
    fo.prune = PrunePolicy::target(0.5);
    fo.calibration_images = 0;
    const auto p = freeze(shaped, fo);
    CHECK(p.prune.sparsity >= 0.5);
    CHECK(p.prune.sparsity < 0.52);
}

TEST_CASE("batch-norm fold") {
    const std::vector<float> g{2}, b{0}, m{1}, v{3};
    const auto r = fold_bn(g, b, m, v, 1.0);
    CHECK(r.real_scale[0] == doctest::Approx(1.0));
    CHECK(r.real_bias[0] == doctest::Approx(-1.0));
    CHECK(r.dequantized_scale(0) == doctest::Approx(1.0));
    CHECK(r.bias[0] == -1);
    CHECK(r.register_count() == 2);
}

TEST_CASE("encoded scale precision") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> g(0.05f, 3.0f), mu(-1.0f, 1.0f), var(0.01f, 4.0f);
    std::uniform_real_distribution<double> lsb(1e-3, 1e-1);
    for (int i = 0; i < 1000; ++i) {
        const std::vector<float> gg{g(rng)}, bb{mu(rng)}, mm{mu(rng)}, vv{var(rng)};
        const std::vector<double> acc{lsb(rng)};
        const auto r = fold_bn(gg, bb, mm, vv, 1e-3, acc);
        const double want = r.real_scale[0] * acc[0];
        CHECK(std::abs(r.dequantized_scale(0) - want) / want <= std::ldexp(1.0, -15));
    }
}

TEST_CASE("fold rejects bad statistics") {
    const std::vector<float> one{1}, neg{-1};
    CHECK_THROWS_AS(fold_bn(one, one, one, neg, 0.0), NumericError);
    const std::vector<float> two{1, 1};
    CHECK_THROWS_AS(fold_bn(one, two, one, one, 0.0), ParameterError);
}

TEST_CASE("Q stage") {
    QParams q;
    q.right_shift = 4;
    CHECK(apply_q(2560, q) == 160);
    CHECK(apply_q(1000000, q) == 255);
    CHECK(apply_q(-50, q) == 0);
    q.output_signed = true;
    CHECK(apply_q(-1000000, q) == -128);
    CHECK(apply_q(1000000, q) == 127);
}

TEST_CASE("Q calibration") {
    std::vector<std::int64_t> v;
    for (int i = 0; i <= 4000; ++i) v.push_back(i);
    const auto q = calibrate_q(v, false, 0.0);
    CHECK(q.right_shift == 4); // 4000 / 16 = 250
    const auto tight = calibrate_q(v, false, 0.5);
    CHECK(tight.right_shift < q.right_shift);
}

}
