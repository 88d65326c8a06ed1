#include "fixy/kernels.hpp"

namespace fixy {

std::pair<int, int> stage_padding(const DatapathStage& s) {
    if (s.pad == Padding::valid) return {0, 0};
    auto before = [&](int n, int k) {
        const int out = (n + s.stride - 1) / s.stride;
        return std::max(0, (out - 1) * s.stride + k - n) / 2;
    };
    return {before(s.in_shape.h, s.kh), before(s.in_shape.w, s.kw)};
}

void check_input_range(const DatapathStage& s, const Activations& in) {
    if (in.shape != s.in_shape)
        throw ShapeError(s.layer_id + ": input " + to_string(in.shape) + " does not match " + to_string(s.in_shape));
    const Range r = s.precision.input_range;
    for (auto v : in.data)
        if (!r.contains(v))
            throw DataError(s.layer_id + ": input value " + std::to_string(v) + " outside [" + std::to_string(r.lo) +
                            "," + std::to_string(r.hi) + "]");
}

namespace {

template <typename Sink>
void for_each_window(const DatapathStage& s, const Activations& in, int oy, int pt, int pl, Sink&& sink) {
    for (int ox = 0; ox < s.out_shape.w; ++ox) {
        const int y0 = oy * s.stride - pt, x0 = ox * s.stride - pl;
        auto fetch = [&](int dy, int dx, int ch, std::int32_t& v) {
            const int y = y0 + dy, x = x0 + dx;
            if (y < 0 || y >= in.shape.h || x < 0 || x >= in.shape.w) return false;
            v = in.at(y, x, ch);
            return true;
        };
        sink(ox, fetch);
    }
}

void run_row(const DatapathStage& s, const Activations& in, Activations& out, int oy, int pt, int pl) {
    for_each_window(s, in, oy, pt, pl, [&](int ox, auto& fetch) {
        for (int c = 0; c < s.out_shape.c; ++c) out.at(oy, ox, c) = evaluate_output(s, c, fetch);
    });
}

} // namespace

std::vector<std::int64_t> collect_pre_q(const DatapathStage& s, const Activations& in) {
    check_input_range(s, in);
    const auto [pt, pl] = stage_padding(s);
    std::vector<std::int64_t> values;
    values.reserve(s.out_shape.size());
    for (int oy = 0; oy < s.out_shape.h; ++oy)
        for_each_window(s, in, oy, pt, pl, [&](int, auto& fetch) {
            for (int c = 0; c < s.out_shape.c; ++c) values.push_back(evaluate_pre_q(s, c, fetch));
        });
    return values;
}

Activations run_stage_serial(const DatapathStage& s, const Activations& in) {
    check_input_range(s, in);
    Activations out(s.out_shape);
    const auto [pt, pl] = stage_padding(s);
    for (int oy = 0; oy < s.out_shape.h; ++oy) run_row(s, in, out, oy, pt, pl);
    return out;
}

Activations run_stage_parallel(const DatapathStage& s, const Activations& in) {
    check_input_range(s, in);
    Activations out(s.out_shape);
    const auto [pt, pl] = stage_padding(s);
    // Exceptions must not escape an OpenMP region; capture the first one.
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (int oy = 0; oy < s.out_shape.h; ++oy) {
        try {
            run_row(s, in, out, oy, pt, pl);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

} // namespace fixy
