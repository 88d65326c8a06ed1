#include <doctest.h>

#include <cmath>
#include <random>

#include "fixy/kernels.hpp"
#include "fixy/line_buffer.hpp"
#include "fixy/simulator.hpp"
#include "helpers.hpp"

using namespace fixy;
using fixy::testing::UnitSpec;
using fixy::testing::random_chain;

namespace {

Layer window(int k, int stride) { return {"lb", LayerKind::conv2d, k, k, stride, Padding::same, 1, 1, 1e-3}; }

} // namespace

TEST_SUITE("line_buffer") {

TEST_CASE("bank sizing") {
    const auto a = plan_line_buffer(window(3, 1), {112, 112, 8}, 8);
    CHECK(a.bank_count == 4);
    CHECK(a.bank_depth == 112);
    CHECK(a.word_bits == 64);
    CHECK(a.sram_bits() == 28672);
    const auto b = plan_line_buffer(window(5, 1), {56, 56, 16}, 8);
    CHECK(b.bank_count == 6);
    CHECK(b.shift_register_bits() == 3200);
    const auto c = plan_line_buffer(window(1, 1), {56, 56, 16}, 8);
    CHECK_FALSE(c.buffered());
    CHECK(c.sram_bits() == 0);
    CHECK(c.fill_latency() == 0);
    CHECK_THROWS_AS(plan_line_buffer(window(4, 1), {8, 8, 1}, 8), UnsupportedOpError);
}

TEST_CASE("bandwidth ratios") {
    CHECK(sram_bandwidth(plan_line_buffer(window(3, 1), {16, 16, 1}, 8)).ratio() == 3.0);
    CHECK(sram_bandwidth(plan_line_buffer(window(5, 1), {16, 16, 1}, 8)).ratio() == 5.0);
    CHECK(sram_bandwidth(plan_line_buffer(window(7, 1), {16, 16, 1}, 8)).ratio() == 7.0);
}

TEST_CASE("schedule") {
    const auto b = plan_line_buffer(window(3, 1), {112, 112, 1}, 8);
    const auto s = schedule_pipeline({112, 112, 1}, {b});
    CHECK(s.frame_cycles == 12544 + 2 * 112 + 3);
    const auto b2 = plan_line_buffer(window(3, 2), {112, 112, 1}, 8);
    const auto b3 = plan_line_buffer(window(1, 1), {56, 56, 1}, 8);
    const auto s2 = schedule_pipeline({112, 112, 1}, {b2, b3});
    CHECK(s2.stages[0].rate == 0.25);
    CHECK(s2.stages[1].fill_latency == 0);
    CHECK(s2.frame_cycles == 12544 + 227);
}

}

TEST_SUITE("simulator") {

TEST_CASE("reference convolution matches a naive loop") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> px(0.0f, 1.0f);
    for (auto kind : {LayerKind::conv2d, LayerKind::depthwise_conv2d}) {
        for (int stride : {1, 2}) {
            UnitSpec u{kind, 3, stride, 5, Padding::same, false, false, 0};
            const Model m = fixy::testing::chain_model({9, 11, 4, 8}, {u}, rng());
            const auto shaped = infer_shapes(m);
            RealMap img({9, 11, 4});
            for (auto& v : img.data) v = px(rng);
            const auto ref = run_reference(shaped, img);
            const auto want = fixy::testing::naive_conv(img, m.layers[0], m.tensors("u0").weights);
            REQUIRE(ref.shape == want.shape);
            double worst = 0;
            for (std::size_t i = 0; i < ref.data.size(); ++i)
                worst = std::max(worst, static_cast<double>(std::abs(ref.data[i] - want.data[i])));
            CHECK(worst < 1e-5);
        }
    }
}

TEST_CASE("single scaler") {
    const auto s = fixy::testing::make_stage(LayerKind::conv2d, 1, 1, {1, 1, 1}, 1, {7});
    Activations x({1, 1, 1}, 10);
    CHECK(run_stage_serial(s, x).data[0] == 70);
    CHECK(evaluate(s.plans[0], 10) == 70);
}

TEST_CASE("serial and parallel kernels agree") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
        const Model m = random_chain(rng);
        const auto p = fixy::testing::freeze_all(m, PrunePolicy::target(0.3), 1, t);
        const auto img = fixy::testing::random_image(m.input.shape(), rng);
        const auto a = run_fixed(p, img, {false, true});
        const auto b = run_fixed(p, img, {true, true});
        CHECK(a.output == b.output);
        CHECK(a.snapshots == b.snapshots);
    }
}

TEST_CASE("fixed pipeline tracks the float reference") {
    UnitSpec a{LayerKind::conv2d, 3, 2, 8, Padding::same, true, true, 0};
    UnitSpec b{LayerKind::depthwise_conv2d, 3, 1, 0, Padding::same, true, true, 0};
    UnitSpec c{LayerKind::pointwise_conv2d, 1, 1, 8, Padding::same, true, true, 0};
    const Model m = fixy::testing::chain_model({24, 24, 3, 8}, {a, b, c}, 11);
    const auto p = fixy::testing::freeze_all(m, PrunePolicy::exact_zero(), 4, 2);
    const auto shaped = infer_shapes(with_quantized_weights(m, p));
    std::mt19937_64 rng(5);
    double total = 0;
    std::size_t count = 0;
    for (int i = 0; i < 20; ++i) {
        const auto img = fixy::testing::random_image(m.input.shape(), rng);
        const auto out = run_fixed(p, img).output;
        const auto ref = run_reference(shaped, to_real(img, p.stages[0].input_scale));
        const auto& q = p.stages.back().q;
        for (std::size_t k = 0; k < out.data.size(); ++k) {
            const double want = std::clamp<double>(std::round(ref.data[k] / p.output_scale()), q.lo(), q.hi());
            total += std::abs(out.data[k] - want);
            ++count;
        }
    }
    CHECK(total / count <= 2.0);
}

TEST_CASE("tap outputs") {
    const auto shaped = infer_shapes(build_mobilenet(0.25, {16, 16, 3, 8}));
    FreezeOptions fo;
    fo.n_fixed = 3;
    fo.taps = {2};
    fo.calibration_images = 1;
    const auto p = freeze(shaped, fo);
    std::mt19937_64 rng(1);
    const auto r = run_fixed(p, fixy::testing::random_image({16, 16, 3}, rng), {true, true});
    REQUIRE(r.taps.size() == 1);
    CHECK(r.taps[0].layer_id == "block2_pw");
    int idx = 0;
    for (std::size_t i = 0; i < p.stages.size(); ++i)
        if (p.stages[i].layer_id == "block2_pw") idx = static_cast<int>(i);
    CHECK(r.taps[0].values == r.snapshots[static_cast<std::size_t>(idx)]);
}

TEST_CASE("comparisons") {
    Activations a({1, 2, 2}), b({1, 2, 2});
    a.data = {1, 2, 3, 4};
    b.data = {1, 4, 3, 3};
    const auto d = compare_outputs(a, b);
    CHECK_FALSE(d.pass);
    CHECK(d.max_abs == 2);
    CHECK(d.first_mismatch == 1);
    CHECK(d.mismatches == 2);
    CHECK(d.mean_abs == doctest::Approx(0.75));
    CHECK(compare_outputs(a, b, 2).pass);
    CHECK(compare_outputs(a, a).pass);
    CHECK_THROWS_AS(compare_outputs(a, Activations({2, 2, 1})), ShapeError);
}

TEST_CASE("input checks") {
    const auto s = fixy::testing::make_stage(LayerKind::conv2d, 1, 1, {2, 2, 1}, 1, {7});
    Activations bad({2, 2, 1}, 300);
    CHECK_THROWS_AS(check_input_range(s, bad), Error);
    const Model m = fixy::testing::chain_model({8, 8, 1, 8}, {UnitSpec{}}, 1);
    const auto p = fixy::testing::freeze_all(m);
    CHECK_THROWS_AS(run_fixed(p, Activations({8, 7, 1})), ShapeError);
}

}

TEST_SUITE("cycle_sim") {

TEST_CASE("single 3x3 stage on 16x16") {
    UnitSpec u{LayerKind::conv2d, 3, 1, 1, Padding::same, false, true, 0};
    const Model m = fixy::testing::chain_model({16, 16, 1, 8}, {u}, 4);
    const auto p = fixy::testing::freeze_all(m);
    std::mt19937_64 rng(2);
    const auto img = fixy::testing::random_image({16, 16, 1}, rng);
    CycleStats st;
    const auto r = run_cycle_accurate(p, img, &st);
    CHECK(r.cycle_count == 256 + 2 * 16 + 3);
    CHECK(st.cycle_count == r.cycle_count);
    CHECK(r.output == run_fixed(p, img).output);
    CHECK(st.stages[0].steady_reads_per_output() == 3.0);
    CHECK(sram_bandwidth(p.buffers[0]).naive_reads_per_output / st.stages[0].steady_reads_per_output() == 3.0);
    CHECK(st.stages[0].emissions == 256);
}

TEST_CASE("random pipelines match the functional model") {
    std::mt19937_64 rng(2024);
    int with_k5 = 0, with_s2 = 0, with_k1 = 0;
    for (int t = 0; t < 100; ++t) {
        CAPTURE(t);
        const Model m = random_chain(rng);
        const auto p = fixy::testing::freeze_all(m, PrunePolicy::target(0.4), 1, t);
        for (const auto& s : p.stages) {
            with_k5 += s.kh == 5;
            with_k1 += s.kh == 1;
            with_s2 += s.stride == 2;
        }
        const auto img = fixy::testing::random_image(m.input.shape(), rng);
        CycleStats st;
        const auto r = run_cycle_accurate(p, img, &st);
        CHECK(r.output == run_fixed(p, img).output);
        CHECK(r.cycle_count == p.schedule.frame_cycles);
        for (std::size_t i = 0; i < p.stages.size(); ++i)
            CHECK(st.stages[i].emissions == static_cast<std::int64_t>(p.stages[i].out_shape.h) * p.stages[i].out_shape.w);
    }
    CHECK(with_k5 > 0);
    CHECK(with_k1 > 0);
    CHECK(with_s2 > 0);
}

TEST_CASE("stride-2 reads") {
    UnitSpec u{LayerKind::depthwise_conv2d, 3, 2, 0, Padding::same, false, true, 0};
    const Model m = fixy::testing::chain_model({20, 20, 2, 8}, {u}, 4);
    const auto p = fixy::testing::freeze_all(m);
    std::mt19937_64 rng(3);
    CycleStats st;
    run_cycle_accurate(p, fixy::testing::random_image({20, 20, 2}, rng), &st);
    CHECK(st.stages[0].steady_reads_per_output() == 6.0);
    CHECK(st.stages[0].sram_writes == 400);
}

}
