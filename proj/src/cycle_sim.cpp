#include <algorithm>
#include <optional>

#include "fixy/kernels.hpp"
#include "fixy/simulator.hpp"

namespace fixy {

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

/// One stage: K+1 row banks, a K x K x C shift register and the datapath.
class StageModel {
public:
    StageModel(const DatapathStage& s, const LineBufferSpec& b)
        : s_(s), b_(b), k_(s.kh), h_(s.in_shape.h), w_(s.in_shape.w), c_(s.in_shape.c) {
        if (b_.buffered()) {
            banks_.assign(static_cast<std::size_t>(b_.bank_count) * w_ * c_, 0);
            shift_.assign(static_cast<std::size_t>(k_) * k_ * c_, 0);
        }
        pixel_.resize(static_cast<std::size_t>(c_));
        out_ = Activations(s.out_shape);
    }

    std::int64_t drain_ticks() const { return b_.fill_latency(); }
    std::int64_t input_pixels() const { return static_cast<std::int64_t>(h_) * w_; }
    const Activations& output() const { return out_; }
    StageCounters& counters() { return n_; }

    /// Advances one tick. `in` is empty on drain ticks. Returns the emitted pixel, if any.
    std::optional<std::vector<std::int32_t>> tick(const std::vector<std::int32_t>* in) {
        const std::int64_t t = n_.ticks++;
        const int wr = static_cast<int>(t / w_), wc = static_cast<int>(t % w_);
        if (in) pixel_ = *in;
        else std::fill(pixel_.begin(), pixel_.end(), 0);
        if (!b_.buffered()) return emit(wr, wc, false);

        const int write_bank = wr % b_.bank_count;
        std::int64_t reads = 0;
        // Shift left by one column, then load column wc of rows wr-K .. wr-1.
        for (int dy = 0; dy < k_; ++dy)
            for (int dx = 0; dx + 1 < k_; ++dx)
                std::copy_n(&shift_[slot(dy, dx + 1)], c_, &shift_[slot(dy, dx)]);
        for (int dy = 0; dy < k_; ++dy) {
            const int row = wr - k_ + dy;
            std::int32_t* dst = &shift_[slot(dy, k_ - 1)];
            if (row < 0 || row >= h_) {
                std::fill_n(dst, c_, 0);
                continue;
            }
            const int bank = row % b_.bank_count;
            if (bank == write_bank)
                throw SimulationError(s_.layer_id + ": bank " + std::to_string(bank) +
                                      " read and written in the same cycle");
            std::copy_n(&banks_[word(bank, wc)], c_, dst);
            ++reads;
        }
        n_.sram_reads += reads;
        reads_since_emit_ += reads;
        if (in) {
            std::copy(pixel_.begin(), pixel_.end(), &banks_[word(write_bank, wc)]);
            ++n_.sram_writes;
        }
        // A window overhanging the right edge completes on the next row's first ticks.
        if (auto px = emit(wr - k_, wc - k_ + 1, false)) return px;
        return emit(wr - k_ - 1, wc - k_ + 1 + w_, true);
    }

private:
    std::size_t slot(int dy, int dx) const { return (static_cast<std::size_t>(dy) * k_ + dx) * c_; }
    std::size_t word(int bank, int col) const { return (static_cast<std::size_t>(bank) * w_ + col) * c_; }

    std::optional<std::vector<std::int32_t>> emit(int r0, int c0, bool wrapped) {
        const int ry = r0 + b_.pad_top, rx = c0 + b_.pad_left;
        if (floor_div(ry, s_.stride) * s_.stride != ry || floor_div(rx, s_.stride) * s_.stride != rx)
            return std::nullopt;
        const int oy = ry / s_.stride, ox = rx / s_.stride;
        if (ry < 0 || rx < 0 || oy >= s_.out_shape.h || ox >= s_.out_shape.w) return std::nullopt;

        auto fetch = [&](int dy, int dx, int ch, std::int32_t& v) {
            const int y = r0 + dy, x = c0 + dx;
            if (y < 0 || y >= h_ || x < 0 || x >= w_) return false;
            v = b_.buffered() ? shift_[slot(dy, dx) + ch] : pixel_[ch];
            return true;
        };
        std::vector<std::int32_t> px(static_cast<std::size_t>(s_.out_shape.c));
        for (int c = 0; c < s_.out_shape.c; ++c) px[c] = evaluate_output(s_, c, fetch);
        std::copy(px.begin(), px.end(), &out_.data[out_.index(oy, ox, 0)]);

        const bool interior = r0 >= 0 && r0 + k_ <= h_;
        if (b_.buffered() && interior && !wrapped && ox > 0) {
            n_.steady_reads += reads_since_emit_;
            ++n_.steady_emissions;
        }
        reads_since_emit_ = 0;
        ++n_.emissions;
        return px;
    }

    const DatapathStage& s_;
    const LineBufferSpec& b_;
    int k_, h_, w_, c_;
    std::vector<std::int32_t> banks_, shift_, pixel_;
    std::int64_t reads_since_emit_ = 0;
    Activations out_;
    StageCounters n_;
};

} // namespace

SimResult run_cycle_accurate(const FixedPipeline& p, const Activations& image, CycleStats* stats) {
    if (image.shape != p.input.shape())
        throw ShapeError("image " + to_string(image.shape) + " does not match pipeline input " +
                         to_string(p.input.shape()));
    if (!p.stages.empty()) check_input_range(p.stages.front(), image);

    std::vector<StageModel> stages;
    stages.reserve(p.stages.size());
    for (std::size_t i = 0; i < p.stages.size(); ++i) stages.emplace_back(p.stages[i], p.buffers[i]);

    const std::int64_t pixels = static_cast<std::int64_t>(image.shape.h) * image.shape.w;
    const std::size_t n = stages.size();
    // done[i]: cycle at which stage i-1 has produced its last output (done[0] = input stream end).
    std::vector<std::int64_t> done(n + 1, -1);
    std::vector<std::int64_t> drained(n, 0);
    done[0] = pixels;
    std::int64_t cycle = 0;
    const auto c = static_cast<std::size_t>(image.shape.c);
    while (done[n] < 0) {
        std::optional<std::vector<std::int32_t>> token;
        if (cycle < pixels) token.emplace(image.data.begin() + cycle * c, image.data.begin() + (cycle + 1) * c);
        for (std::size_t i = 0; i < n; ++i) {
            auto& st = stages[i];
            if (token) {
                token = st.tick(&*token);
            } else if (done[i] >= 0 && cycle >= done[i] && drained[i] < st.drain_ticks()) {
                ++drained[i];
                token = st.tick(nullptr);
                if (drained[i] == st.drain_ticks()) done[i + 1] = cycle + 1;
            }
            if (done[i] >= 0 && done[i + 1] < 0 && st.drain_ticks() == 0 && cycle + 1 >= done[i])
                done[i + 1] = done[i];
        }
        ++cycle;
        if (cycle > pixels * 64 + 1'000'000) throw SimulationError("pipeline did not drain");
    }

    SimResult r;
    r.cycle_count = done[n];
    for (std::size_t i = 0; i < n; ++i) {
        auto& st = stages[i];
        const auto expected = static_cast<std::int64_t>(p.stages[i].out_shape.h) * p.stages[i].out_shape.w;
        if (st.counters().emissions != expected)
            throw SimulationError(p.stages[i].layer_id + ": emitted " + std::to_string(st.counters().emissions) +
                                  " of " + std::to_string(expected) + " outputs");
        st.counters().done_cycle = done[i + 1];
        if (p.stages[i].tap_enabled) r.taps.push_back({p.stages[i].layer_id, st.output()});
    }
    r.output = n ? stages.back().output() : image;
    if (stats) {
        stats->cycle_count = r.cycle_count;
        stats->stages.clear();
        for (auto& st : stages) stats->stages.push_back(st.counters());
    }
    return r;
}

} // namespace fixy
