#include "fixy/emitter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include "fixy/explorer.hpp"
#include "fixy/kernels.hpp"
#include "fixy/simulator.hpp"

namespace fixy {

namespace {

constexpr int kCfgAddrBits = 16;
constexpr int kCfgDataBits = 32;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Signed Verilog literal of the given width, e.g. -16'sd5.
std::string literal(std::int64_t v, int bits) {
    const std::string mag = std::to_string(v < 0 ? -v : v);
    return (v < 0 ? "-" : "") + std::to_string(bits) + "'sd" + mag;
}

std::string operand_name(int dy, int dx, int ch) {
    return "x_" + std::to_string(dy) + "_" + std::to_string(dx) + "_" + std::to_string(ch);
}

/// Shift-add expression of |w| * x. Returns the expression and whether the
/// product must be negated downstream.
std::pair<std::string, bool> scaler_expression(const ShiftAddPlan& plan, const std::string& x) {
    const bool negate = plan.terms.front().sign < 0;
    std::string e;
    for (std::size_t i = 0; i < plan.terms.size(); ++i) {
        const auto& d = plan.terms[i];
        const int sign = negate ? -d.sign : d.sign;
        const std::string term = d.position == 0 ? x : "(" + x + " <<< " + std::to_string(d.position) + ")";
        if (i == 0) e = term;
        else e += (sign > 0 ? " + " : " - ") + term;
    }
    return {e, negate};
}

struct Leaf {
    std::string name;
    bool negative = false;
};

struct StageText {
    std::ostringstream decl;
    std::ostringstream body;
};

int register_levels_of(const AdderTree& t) {
    int n = 0;
    for (int level = kAdderLevelsPerRegister; level < t.depth; level += kAdderLevelsPerRegister) ++n;
    return n;
}

/// Reduces `leaves` to one signed node, registering after every
/// kAdderLevelsPerRegister levels below the root.
Leaf emit_tree(StageText& st, std::vector<Leaf> leaves, int c, int acc_bits, int depth) {
    const std::string w = "[" + std::to_string(acc_bits - 1) + ":0]";
    int level = 0;
    while (leaves.size() > 1) {
        ++level;
        std::vector<Leaf> next;
        for (std::size_t i = 0; i < leaves.size(); i += 2) {
            const std::string name = "tr_" + std::to_string(c) + "_" + std::to_string(level) + "_" + std::to_string(i / 2);
            std::string expr;
            bool neg = false;
            if (i + 1 == leaves.size()) {
                expr = leaves[i].name;
                neg = leaves[i].negative;
            } else {
                const Leaf& a = leaves[i];
                const Leaf& b = leaves[i + 1];
                if (a.negative == b.negative) {
                    expr = a.name + " + " + b.name;
                    neg = a.negative;
                } else if (b.negative) {
                    expr = a.name + " - " + b.name;
                } else {
                    expr = b.name + " - " + a.name;
                }
            }
            st.body << "    wire signed " << w << " " << name << ";\n";
            st.body << "    assign " << name << " = " << expr << ";\n";
            next.push_back({name, neg});
        }
        if (level % kAdderLevelsPerRegister == 0 && level < depth) {
            for (auto& n : next) {
                const std::string r = "tp" + n.name.substr(2);
                st.body << "    reg signed " << w << " " << r << ";\n";
                st.body << "    always @(posedge clk) " << r << " <= " << n.name << ";\n";
                n.name = r;
            }
        }
        leaves = std::move(next);
    }
    return leaves.front();
}

void emit_header(std::ostringstream& o, const DatapathStage& s, const LineBufferSpec& b, const std::string& name,
                 int in_bits, int out_bits) {
    const int cin = s.in_channels(), cout = s.out_channels();
    o << "// " << s.layer_id << ": " << to_string(s.kind) << " " << s.kh << "x" << s.kw << " stride " << s.stride
      << ", " << to_string(s.in_shape) << " -> " << to_string(s.out_shape) << "\n";
    o << "module " << name << " (\n"
      << "    input wire clk,\n"
      << "    input wire rst_n,\n"
      << "    input wire in_valid,\n"
      << "    input wire [" << cin * in_bits - 1 << ":0] in_data,\n"
      << "    input wire cfg_we,\n"
      << "    input wire [" << kCfgAddrBits - 1 << ":0] cfg_addr,\n"
      << "    input wire [" << kCfgDataBits - 1 << ":0] cfg_data,\n"
      << "    output reg out_valid,\n"
      << "    output reg [" << cout * out_bits - 1 << ":0] out_data\n"
      << ");\n";
    o << "    wire win_valid;\n"
      << "    wire [" << s.kh * s.kw * cin * in_bits - 1 << ":0] win_data;\n"
      << "    wire [" << s.kh * s.kw - 1 << ":0] win_mask;\n";
    o << "    fixy_line_buffer #(.K(" << s.kh << "), .W(" << b.width << "), .H(" << b.height << "), .C(" << cin
      << "), .B(" << in_bits << "), .S(" << s.stride << "), .PT(" << b.pad_top << "), .PL(" << b.pad_left
      << "), .OH(" << s.out_shape.h << "), .OW(" << s.out_shape.w << ")) lb (\n"
      << "        .clk(clk), .rst_n(rst_n), .in_valid(in_valid), .in_data(in_data),\n"
      << "        .win_valid(win_valid), .win_data(win_data), .win_mask(win_mask));\n";
}

/// Window operand (dy, dx, ch), sign-extended to `bits` and zero when masked.
void emit_operand(StageText& st, const DatapathStage& s, int dy, int dx, int ch, int in_bits, int bits,
                  bool in_signed) {
    const int slot = dy * s.kw + dx;
    const int lsb = (slot * s.in_channels() + ch) * in_bits;
    const std::string raw = "win_data[" + std::to_string(lsb + in_bits - 1) + ":" + std::to_string(lsb) + "]";
    const std::string ext = in_signed ? "{{" + std::to_string(bits - in_bits) + "{" + "win_data[" +
                                            std::to_string(lsb + in_bits - 1) + "]}}, " + raw + "}"
                                      : "{" + std::to_string(bits - in_bits) + "'d0, " + raw + "}";
    const std::string name = operand_name(dy, dx, ch);
    st.decl << "    wire signed [" << bits - 1 << ":0] " << name << " = win_mask[" << slot << "] ? " << ext << " : "
            << bits << "'sd0;\n";
}

std::string emit_conv_stage(const DatapathStage& s, const LineBufferSpec& b, const std::string& name) {
    const int in_bits = b.bits;
    const int out_bits = s.q.output_bits;
    const bool in_signed = s.precision.input_range.lo < 0;
    const int acc_bits = std::max(s.precision.acc_bits, in_bits + 1);
    int bn_bits = acc_bits + kBnMantissaBits;
    for (int v : s.precision.bn_product_bits) bn_bits = std::max(bn_bits, v);
    const int cout = s.out_channels();
    const int levels = stage_register_levels(s);

    StageText st;
    std::ostringstream o;
    emit_header(o, s, b, name, in_bits, out_bits);

    // Operands in a fixed order so the text is stable.
    std::vector<std::uint8_t> used(static_cast<std::size_t>(s.kh) * s.kw * s.in_channels(), 0);
    for (int c = 0; c < cout; ++c)
        for (std::size_t t = 0; t < s.taps; ++t) {
            if (s.plans[c * s.taps + t].is_pruned) continue;
            const auto [dy, dx] = s.tap_offset(t);
            used[(static_cast<std::size_t>(dy) * s.kw + dx) * s.in_channels() + s.tap_channel(c, static_cast<int>(t))] = 1;
        }
    for (int dy = 0; dy < s.kh; ++dy)
        for (int dx = 0; dx < s.kw; ++dx)
            for (int ch = 0; ch < s.in_channels(); ++ch)
                if (used[(static_cast<std::size_t>(dy) * s.kw + dx) * s.in_channels() + ch])
                    emit_operand(st, s, dy, dx, ch, in_bits, acc_bits, in_signed);

    const std::string aw = "[" + std::to_string(acc_bits - 1) + ":0]";
    std::vector<Leaf> roots;
    for (int c = 0; c < cout; ++c) {
        std::vector<Leaf> leaves;
        for (std::size_t t = 0; t < s.taps; ++t) {
            const ShiftAddPlan& plan = s.plans[c * s.taps + t];
            if (plan.is_pruned) continue;
            const auto [dy, dx] = s.tap_offset(t);
            const auto [expr, neg] = scaler_expression(plan, operand_name(dy, dx, s.tap_channel(c, static_cast<int>(t))));
            const std::string sc = "sc_" + std::to_string(c) + "_" + std::to_string(t);
            st.body << "    wire signed " << aw << " " << sc << ";\n";
            st.body << "    assign " << sc << " = " << expr << ";\n";
            leaves.push_back({sc, neg});
        }
        Leaf root;
        if (leaves.empty()) {
            root = {"acc_zero_" + std::to_string(c), false};
            st.body << "    wire signed " << aw << " " << root.name << " = " << acc_bits << "'sd0;\n";
        } else {
            root = emit_tree(st, std::move(leaves), c, acc_bits, s.trees[c].depth);
        }
        // Balance shallower channels to the stage latency.
        for (int k = register_levels_of(s.trees[c]); k < levels; ++k) {
            const std::string r = "td_" + std::to_string(c) + "_" + std::to_string(k);
            st.body << "    reg signed " << aw << " " << r << ";\n";
            st.body << "    always @(posedge clk) " << r << " <= " << root.name << ";\n";
            root.name = r;
        }
        roots.push_back(root);
    }

    o << st.decl.str() << st.body.str();

    // Programmable batch-norm and Q registers.
    o << "    reg signed [" << kBnMantissaBits - 1 << ":0] bn_m [0:" << cout - 1 << "];\n";
    o << "    reg signed " << aw << " bn_b [0:" << cout - 1 << "];\n";
    o << "    reg [4:0] q_shift;\n";
    o << "    always @(posedge clk or negedge rst_n) begin\n"
      << "        if (!rst_n) begin\n";
    for (int c = 0; c < cout; ++c) {
        o << "            bn_m[" << c << "] <= " << literal(s.bn.mantissa[c], kBnMantissaBits) << ";\n";
        o << "            bn_b[" << c << "] <= " << literal(s.bn.bias[c], acc_bits) << ";\n";
    }
    o << "            q_shift <= 5'd" << s.q.right_shift << ";\n"
      << "        end else if (cfg_we) begin\n"
      << "            if (cfg_addr < " << cout << ") bn_m[cfg_addr] <= cfg_data[" << kBnMantissaBits - 1 << ":0];\n"
      << "            else if (cfg_addr < " << 2 * cout << ") bn_b[cfg_addr - " << cout << "] <= cfg_data[" << acc_bits - 1
      << ":0];\n"
      << "            else if (cfg_addr == " << 2 * cout << ") q_shift <= cfg_data[4:0];\n"
      << "        end\n"
      << "    end\n";

    // Valid delay matching the tree registers.
    std::string valid = "win_valid";
    for (int k = 0; k < levels; ++k) {
        const std::string r = "vd_" + std::to_string(k);
        o << "    reg " << r << ";\n";
        o << "    always @(posedge clk or negedge rst_n) begin\n"
          << "        if (!rst_n) " << r << " <= 1'b0;\n"
          << "        else " << r << " <= " << valid << ";\n"
          << "    end\n";
        valid = r;
    }

    const std::string bw = "[" + std::to_string(bn_bits - 1) + ":0]";
    const std::int64_t lo = s.q.lo(), hi = s.q.hi();
    for (int c = 0; c < cout; ++c) {
        const std::string cs = std::to_string(c);
        const Leaf& r = roots[c];
        o << "    wire signed " << aw << " bs_" << cs << " = "
          << (r.negative ? "bn_b[" + cs + "] - " + r.name : r.name + " + bn_b[" + cs + "]") << ";\n";
        o << "    wire signed " << bw << " bp_" << cs << " = bs_" << cs << " * bn_m[" << cs << "];\n";
        if (s.relu)
            o << "    wire signed " << bw << " rl_" << cs << " = bp_" << cs << "[" << bn_bits - 1 << "] ? " << bn_bits
              << "'sd0 : bp_" << cs << ";\n";
        else
            o << "    wire signed " << bw << " rl_" << cs << " = bp_" << cs << ";\n";
        o << "    wire [" << bn_bits - 1 << ":0] mg_" << cs << " = rl_" << cs << "[" << bn_bits - 1 << "] ? -rl_" << cs
          << " : rl_" << cs << ";\n";
        o << "    wire [" << bn_bits - 1 << ":0] rd_" << cs << " = q_shift == 0 ? mg_" << cs << " : (mg_" << cs
          << " + (" << bn_bits << "'d1 << (q_shift - 1))) >> q_shift;\n";
        o << "    wire signed " << bw << " qv_" << cs << " = rl_" << cs << "[" << bn_bits - 1 << "] ? -$signed(rd_"
          << cs << ") : $signed(rd_" << cs << ");\n";
        o << "    wire signed " << bw << " qc_" << cs << " = qv_" << cs << " > " << literal(hi, bn_bits) << " ? "
          << literal(hi, bn_bits) << " : qv_" << cs << " < " << literal(lo, bn_bits) << " ? " << literal(lo, bn_bits)
          << " : qv_" << cs << ";\n";
    }
    o << "    always @(posedge clk or negedge rst_n) begin\n"
      << "        if (!rst_n) begin\n"
      << "            out_valid <= 1'b0;\n"
      << "            out_data <= 0;\n"
      << "        end else begin\n"
      << "            out_valid <= " << valid << ";\n";
    for (int c = 0; c < cout; ++c)
        o << "            out_data[" << (c + 1) * out_bits - 1 << ":" << c * out_bits << "] <= qc_" << c << "["
          << out_bits - 1 << ":0];\n";
    o << "        end\n"
      << "    end\n"
      << "endmodule\n";
    return o.str();
}

std::string emit_pool_stage(const DatapathStage& s, const LineBufferSpec& b, const std::string& name) {
    const int bits = b.bits;
    const bool sgn = s.precision.input_range.lo < 0;
    const int c_n = s.out_channels();
    std::ostringstream o;
    emit_header(o, s, b, name, bits, bits);
    const std::string w = "[" + std::to_string(bits - 1) + ":0]";
    const std::string floor_v = sgn ? "{1'b1, " + std::to_string(bits - 1) + "'d0}" : std::to_string(bits) + "'d0";
    for (int c = 0; c < c_n; ++c) {
        std::vector<std::string> cur;
        for (int dy = 0; dy < s.kh; ++dy)
            for (int dx = 0; dx < s.kw; ++dx) {
                const int slot = dy * s.kw + dx;
                const int lsb = (slot * s.in_channels() + c) * bits;
                const std::string n = "mx_" + std::to_string(c) + "_0_" + std::to_string(slot);
                o << "    wire " << (sgn ? "signed " : "") << w << " " << n << " = win_mask[" << slot << "] ? win_data["
                  << lsb + bits - 1 << ":" << lsb << "] : " << floor_v << ";\n";
                cur.push_back(n);
            }
        for (int level = 1; cur.size() > 1; ++level) {
            std::vector<std::string> next;
            for (std::size_t i = 0; i < cur.size(); i += 2) {
                if (i + 1 == cur.size()) {
                    next.push_back(cur[i]);
                    continue;
                }
                const std::string n = "mx_" + std::to_string(c) + "_" + std::to_string(level) + "_" + std::to_string(i / 2);
                o << "    wire " << (sgn ? "signed " : "") << w << " " << n << " = " << cur[i] << " > " << cur[i + 1]
                  << " ? " << cur[i] << " : " << cur[i + 1] << ";\n";
                next.push_back(n);
            }
            cur = std::move(next);
        }
        o << "    wire " << w << " pm_" << c << " = " << cur.front() << ";\n";
    }
    o << "    always @(posedge clk or negedge rst_n) begin\n"
      << "        if (!rst_n) begin\n"
      << "            out_valid <= 1'b0;\n"
      << "            out_data <= 0;\n"
      << "        end else begin\n"
      << "            out_valid <= win_valid;\n";
    for (int c = 0; c < c_n; ++c)
        o << "            out_data[" << (c + 1) * bits - 1 << ":" << c * bits << "] <= pm_" << c << ";\n";
    o << "        end\n"
      << "    end\n"
      << "endmodule\n";
    return o.str();
}

int stage_out_bits(const DatapathStage& s, const LineBufferSpec& b) {
    return s.kind == StageKind::maxpool ? b.bits : s.q.output_bits;
}

std::string emit_top(const FixedPipeline& p, const std::vector<std::string>& names) {
    std::ostringstream o;
    const Shape3 in = p.input.shape();
    const int in_bits = 8;
    const int out_w = p.stages.empty() ? in.c * in_bits
                                       : p.stages.back().out_channels() * stage_out_bits(p.stages.back(), p.buffers.back());
    o << "// " << p.model_name << ": first " << p.n_fixed << " CONV units, " << p.stages.size() << " stages\n";
    o << "module fixy_top (\n"
      << "    input wire clk,\n"
      << "    input wire rst_n,\n"
      << "    input wire in_valid,\n"
      << "    input wire [" << in.c * in_bits - 1 << ":0] in_data,\n"
      << "    input wire cfg_we,\n"
      << "    input wire [7:0] cfg_stage,\n"
      << "    input wire [" << kCfgAddrBits - 1 << ":0] cfg_addr,\n"
      << "    input wire [" << kCfgDataBits - 1 << ":0] cfg_data,\n";
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const auto& s = p.stages[i];
        if (!s.tap_enabled || i + 1 == p.stages.size()) continue;
        const int w = s.out_channels() * stage_out_bits(s, p.buffers[i]);
        o << "    output wire tap" << s.unit << "_valid,\n"
          << "    output wire [" << w - 1 << ":0] tap" << s.unit << "_data,\n";
    }
    o << "    output wire out_valid,\n"
      << "    output wire [" << out_w - 1 << ":0] out_data\n"
      << ");\n";
    if (p.stages.empty()) {
        o << "    assign out_valid = in_valid;\n"
          << "    assign out_data = in_data;\n"
          << "endmodule\n";
        return o.str();
    }
    std::string v = "in_valid", d = "in_data";
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const auto& s = p.stages[i];
        const int w = s.out_channels() * stage_out_bits(s, p.buffers[i]);
        const std::string is = std::to_string(i);
        o << "    wire s" << is << "_valid;\n"
          << "    wire [" << w - 1 << ":0] s" << is << "_data;\n";
        o << "    " << names[i] << " u" << is << " (\n"
          << "        .clk(clk), .rst_n(rst_n), .in_valid(" << v << "), .in_data(" << d << "),\n"
          << "        .cfg_we(cfg_we && cfg_stage == 8'd" << i << "), .cfg_addr(cfg_addr), .cfg_data(cfg_data),\n"
          << "        .out_valid(s" << is << "_valid), .out_data(s" << is << "_data));\n";
        if (s.tap_enabled && i + 1 < p.stages.size())
            o << "    assign tap" << s.unit << "_valid = s" << is << "_valid;\n"
              << "    assign tap" << s.unit << "_data = s" << is << "_data;\n";
        v = "s" + is + "_valid";
        d = "s" + is + "_data";
    }
    o << "    assign out_valid = " << v << ";\n"
      << "    assign out_data = " << d << ";\n"
      << "endmodule\n";
    return o.str();
}

} // namespace

std::string verilog_identifier(std::string_view s) {
    std::string out;
    for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' ? ch : '_';
    if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front()))) out = "n_" + out;
    return out;
}

std::string stage_module_name(const DatapathStage& s, std::size_t index) {
    return "stage" + std::to_string(index) + "_" + verilog_identifier(s.layer_id);
}

int stage_register_levels(const DatapathStage& s) {
    int levels = 0;
    for (const auto& t : s.trees) levels = std::max(levels, register_levels_of(t));
    return levels;
}

std::string emit_line_buffer_module() {
    return R"(// Streaming line buffer: K+1 row banks of W words and a K x K window shift
// register. Each advance consumes one input word (or a zero word while
// draining) and presents the window completed by that advance. K = 1 passes
// the input word straight through.
module fixy_line_buffer #(
    parameter K = 3,
    parameter W = 8,
    parameter H = 8,
    parameter C = 1,
    parameter B = 8,
    parameter S = 1,
    parameter PT = 1,
    parameter PL = 1,
    parameter OH = 8,
    parameter OW = 8
) (
    input wire clk,
    input wire rst_n,
    input wire in_valid,
    input wire [C*B-1:0] in_data,
    output wire win_valid,
    output wire [K*K*C*B-1:0] win_data,
    output wire [K*K-1:0] win_mask
);
    localparam WB = C * B;
    localparam NB = K + 1;
    localparam FILL = (K > 1) ? (K - 1) * W + K : 0;

    reg [31:0] received;
    reg [31:0] drained;
    reg signed [31:0] wr;
    reg signed [31:0] wc;
    wire draining = (received == H * W) && (drained < FILL);
    wire advance = in_valid || draining;

    always @(posedge clk or negedge rst_n) begin
        if (!rst_n) begin
            received <= 0;
            drained <= 0;
            wr <= 0;
            wc <= 0;
        end else if (advance) begin
            if (in_valid) received <= received + 1;
            else drained <= drained + 1;
            if (wc == W - 1) begin
                wc <= 0;
                wr <= wr + 1;
            end else begin
                wc <= wc + 1;
            end
        end
    end

    function hit;
        input signed [31:0] r;
        input signed [31:0] c;
        reg signed [31:0] y;
        reg signed [31:0] x;
        begin
            y = r + PT;
            x = c + PL;
            hit = (y >= 0) && (x >= 0) && (y % S == 0) && (x % S == 0) && (y / S < OH) && (x / S < OW);
        end
    endfunction

    // Window origin in input coordinates. A window overhanging the right
    // edge completes during the first advances of the following row.
    wire signed [31:0] ra = (K > 1) ? wr - K : wr;
    wire signed [31:0] ca = wc - K + 1;
    wire signed [31:0] rb = ra - 1;
    wire signed [31:0] cb = ca + W;
    wire hit_a = advance && hit(ra, ca);
    wire hit_b = advance && (K > 1) && !hit_a && hit(rb, cb);
    wire signed [31:0] r0 = hit_a ? ra : rb;
    wire signed [31:0] c0 = hit_a ? ca : cb;
    assign win_valid = hit_a || hit_b;

    genvar dy, dx;
    generate
        for (dy = 0; dy < K; dy = dy + 1) begin : g_mask_row
            for (dx = 0; dx < K; dx = dx + 1) begin : g_mask_col
                assign win_mask[dy*K+dx] = (r0 + dy >= 0) && (r0 + dy < H) && (c0 + dx >= 0) && (c0 + dx < W);
            end
        end
        if (K == 1) begin : g_direct
            assign win_data = in_data;
        end else begin : g_buffered
            // Behavioral banks: substitution point for single-port SRAM macros.
            reg [WB-1:0] bank [0:NB*W-1];
            reg [K*K*WB-1:0] shreg;
            for (dy = 0; dy < K; dy = dy + 1) begin : g_row
                for (dx = 0; dx < K - 1; dx = dx + 1) begin : g_shift
                    assign win_data[(dy*K+dx)*WB +: WB] = shreg[(dy*K+dx+1)*WB +: WB];
                end
                wire signed [31:0] row = wr - K + dy;
                wire row_ok = (row >= 0) && (row < H);
                wire [31:0] addr = (row_ok ? row % NB : 0) * W + wc;
                assign win_data[(dy*K+K-1)*WB +: WB] = row_ok ? bank[addr] : {WB{1'b0}};
            end
            always @(posedge clk) begin
                if (advance) begin
                    shreg <= win_data;
                    if (in_valid) bank[(wr % NB) * W + wc] <= in_data;
                end
            end
        end
    endgenerate
endmodule
)";
}

std::string emit_stage_module(const DatapathStage& s, const LineBufferSpec& b, const std::string& name) {
    try {
        if (s.kind == StageKind::maxpool) return emit_pool_stage(s, b, name);
        if (s.q.output_bits < 2 || s.q.output_bits > 16)
            throw EmissionError("output width " + std::to_string(s.q.output_bits) + " not supported");
        if (s.q.right_shift > 31) throw EmissionError("Q shift exceeds the 5-bit register");
        return emit_conv_stage(s, b, name);
    } catch (const EmissionError& e) {
        throw EmissionError(s.layer_id + ": " + e.what());
    }
}

EmitBundle emit_verilog(const FixedPipeline& p) {
    if (p.buffers.size() != p.stages.size()) throw EmissionError("pipeline buffers do not match its stages");
    if (p.stages.size() > 255) throw EmissionError("more than 255 stages do not fit the configuration bus");
    EmitBundle out;
    out.rtl.push_back({"rtl/fixy_line_buffer.v", emit_line_buffer_module()});
    std::vector<std::string> names;
    nlohmann::json stages = nlohmann::json::array();
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const auto& s = p.stages[i];
        const auto& b = p.buffers[i];
        names.push_back(stage_module_name(s, i));
        out.rtl.push_back({"rtl/" + names.back() + ".v", emit_stage_module(s, b, names.back())});
        const HwCost cost = stage_cost(s);
        stages.push_back({{"module", names.back()},
                          {"layer_id", s.layer_id},
                          {"kind", std::string(to_string(s.kind))},
                          {"kernel", s.kh},
                          {"stride", s.stride},
                          {"in_shape", {s.in_shape.h, s.in_shape.w, s.in_shape.c}},
                          {"out_shape", {s.out_shape.h, s.out_shape.w, s.out_shape.c}},
                          {"acc_bits", s.precision.acc_bits},
                          {"register_levels", stage_register_levels(s)},
                          {"latency_cycles", stage_register_levels(s) + 1},
                          {"bank_count", b.bank_count},
                          {"bank_depth", b.bank_depth},
                          {"word_bits", b.word_bits},
                          {"scaler_adders", cost.scaler_adders},
                          {"tree_adders", cost.tree_adders},
                          {"comparators", cost.comparators},
                          {"cfg_map", s.kind == StageKind::maxpool
                                          ? nlohmann::json::object()
                                          : nlohmann::json{{"bn_mantissa", {0, s.out_channels() - 1}},
                                                           {"bn_bias", {s.out_channels(), 2 * s.out_channels() - 1}},
                                                           {"q_shift", 2 * s.out_channels()}}},
                          {"tap_enabled", s.tap_enabled}});
    }
    out.rtl.push_back({"rtl/fixy_top.v", emit_top(p, names)});

    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : out.rtl) files.push_back({{"path", f.path}, {"fnv1a64", hex64(fnv1a64(f.text))}});
    out.manifest = {{"format", "fixyforge-rtl"},
                    {"version", 1},
                    {"model", p.model_name},
                    {"n_fixed", p.n_fixed},
                    {"top", "fixy_top"},
                    {"dialect", "verilog-2001"},
                    {"reset", "asynchronous, active low"},
                    {"register_rule", "adder trees register every " + std::to_string(kAdderLevelsPerRegister) +
                                          " levels below the root; channels are delay-balanced; one output "
                                          "register per stage"},
                    {"sram", "behavioral register arrays in fixy_line_buffer (bank)"},
                    {"input", {p.input.h, p.input.w, p.input.c}},
                    {"frame_cycles", p.schedule.frame_cycles},
                    {"stages", stages},
                    {"files", files}};
    return out;
}

void emit_testbench(EmitBundle& bundle, const FixedPipeline& p, const std::vector<Activations>& images) {
    if (images.empty()) throw EmissionError("testbench needs at least one image");
    const Shape3 in = p.input.shape();
    const Shape3 os = p.output_shape();
    const int out_bits = p.stages.empty() ? 8 : stage_out_bits(p.stages.back(), p.buffers.back());
    if (out_bits != 8) throw EmissionError("testbench vectors assume 8-bit outputs");

    nlohmann::json vectors = nlohmann::json::array();
    bundle.vectors.clear();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const SimResult cyc = run_cycle_accurate(p, images[i]);
        FixedSimOptions fo;
        fo.parallel = false;
        const SimResult fun = run_fixed(p, images[i], fo);
        const DiffReport d = compare_outputs(fun.output, cyc.output, 0);
        if (!d.pass) throw EmissionError("image " + std::to_string(i) + ": cycle-accurate and functional outputs differ");
        const std::string stim = to_bytes(images[i]);
        const std::string expd = to_bytes(cyc.output);
        const std::string si = "vectors/stimulus_" + std::to_string(i) + ".bin";
        const std::string ei = "vectors/expected_" + std::to_string(i) + ".bin";
        bundle.vectors.push_back({si, {stim.begin(), stim.end()}});
        bundle.vectors.push_back({ei, {expd.begin(), expd.end()}});
        vectors.push_back({{"stimulus", si},
                           {"expected", ei},
                           {"stimulus_fnv1a64", hex64(fnv1a64(stim))},
                           {"expected_fnv1a64", hex64(fnv1a64(expd))},
                           {"cycle_count", cyc.cycle_count}});
    }

    const int in_w = in.c * 8, out_w = os.c * out_bits;
    const std::int64_t pixels = static_cast<std::int64_t>(in.h) * in.w;
    const std::int64_t outputs = static_cast<std::int64_t>(os.h) * os.w;
    const std::int64_t timeout = pixels * 4 + 64 * (static_cast<std::int64_t>(p.stages.size()) + 1) +
                                 p.schedule.frame_cycles;
    std::ostringstream o;
    o << "`timescale 1ns/1ps\n"
      << "// Streams each stimulus file at one pixel per cycle and compares every\n"
      << "// output pixel against the expected file. Run from the bundle root.\n"
      << "module tb_top;\n"
      << "    reg clk;\n"
      << "    reg rst_n;\n"
      << "    reg in_valid;\n"
      << "    reg [" << in_w - 1 << ":0] in_data;\n"
      << "    wire out_valid;\n"
      << "    wire [" << out_w - 1 << ":0] out_data;\n"
      << "    fixy_top dut (\n"
      << "        .clk(clk), .rst_n(rst_n), .in_valid(in_valid), .in_data(in_data),\n"
      << "        .cfg_we(1'b0), .cfg_stage(8'd0), .cfg_addr(" << kCfgAddrBits << "'d0), .cfg_data(" << kCfgDataBits
      << "'d0),\n";
    for (std::size_t i = 0; i + 1 < p.stages.size(); ++i)
        if (p.stages[i].tap_enabled)
            o << "        .tap" << p.stages[i].unit << "_valid(), .tap" << p.stages[i].unit << "_data(),\n";
    o << "        .out_valid(out_valid), .out_data(out_data));\n\n"
      << "    localparam PIXELS = " << pixels << ";\n"
      << "    localparam OUTPUTS = " << outputs << ";\n"
      << "    localparam TIMEOUT = " << timeout << ";\n"
      << "    integer fs, fe, k, p, seen, errors, total_errors, cycles, expv;\n\n"
      << "    always #1 clk = ~clk;\n\n"
      << "    always @(posedge clk) begin\n"
      << "        if (rst_n && out_valid && fe != 0) begin\n"
      << "            for (k = 0; k < " << os.c << "; k = k + 1) begin\n"
      << "                expv = $fgetc(fe);\n"
      << "                if (out_data[k*8 +: 8] !== expv[7:0]) errors = errors + 1;\n"
      << "            end\n"
      << "            seen = seen + 1;\n"
      << "        end\n"
      << "    end\n\n"
      << "    task run_image;\n"
      << "        input [8*64-1:0] stim_path;\n"
      << "        input [8*64-1:0] exp_path;\n"
      << "        begin\n"
      << "            fs = $fopen(stim_path, \"rb\");\n"
      << "            fe = $fopen(exp_path, \"rb\");\n"
      << "            if (fs == 0 || fe == 0) begin\n"
      << "                $display(\"tb_top: cannot open vectors\");\n"
      << "                $finish;\n"
      << "            end\n"
      << "            seen = 0;\n"
      << "            errors = 0;\n"
      << "            rst_n = 1'b0;\n"
      << "            in_valid = 1'b0;\n"
      << "            repeat (2) @(negedge clk);\n"
      << "            rst_n = 1'b1;\n"
      << "            for (p = 0; p < PIXELS; p = p + 1) begin\n"
      << "                @(negedge clk);\n"
      << "                for (k = 0; k < " << in.c << "; k = k + 1) in_data[k*8 +: 8] = $fgetc(fs);\n"
      << "                in_valid = 1'b1;\n"
      << "            end\n"
      << "            @(negedge clk);\n"
      << "            in_valid = 1'b0;\n"
      << "            cycles = 0;\n"
      << "            while (seen < OUTPUTS && cycles < TIMEOUT) begin\n"
      << "                @(negedge clk);\n"
      << "                cycles = cycles + 1;\n"
      << "            end\n"
      << "            if (seen != OUTPUTS) errors = errors + 1;\n"
      << "            $display(\"tb_top: %0s %0d/%0d outputs, %0d mismatches\", stim_path, seen, OUTPUTS, errors);\n"
      << "            total_errors = total_errors + errors;\n"
      << "            $fclose(fs);\n"
      << "            $fclose(fe);\n"
      << "            fe = 0;\n"
      << "        end\n"
      << "    endtask\n\n"
      << "    initial begin\n"
      << "        clk = 1'b0;\n"
      << "        fe = 0;\n"
      << "        total_errors = 0;\n"
      << "        in_data = 0;\n";
    for (std::size_t i = 0; i < images.size(); ++i)
        o << "        run_image(\"vectors/stimulus_" << i << ".bin\", \"vectors/expected_" << i << ".bin\");\n";
    o << "        if (total_errors == 0) $display(\"tb_top: PASS\");\n"
      << "        else $display(\"tb_top: FAIL %0d\", total_errors);\n"
      << "        $finish;\n"
      << "    end\n"
      << "endmodule\n";
    bundle.testbench = {"tb/tb_top.v", o.str()};
    bundle.manifest["testbench"] = {{"path", bundle.testbench.path},
                                    {"fnv1a64", hex64(fnv1a64(bundle.testbench.text))},
                                    {"pixels_per_cycle", 1},
                                    {"comparison", "exact"}};
    bundle.manifest["vectors"] = vectors;
    bundle.manifest["vector_layout"] = "raw bytes, row-major, channel innermost, signed values two's complement";
}

void write_bundle(const EmitBundle& bundle, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    auto put = [&](const std::string& rel, const char* data, std::size_t n) {
        const fs::path path = root / rel;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write " + path.string());
        f.write(data, static_cast<std::streamsize>(n));
        if (!f) throw IoError("write failed for " + path.string());
    };
    for (const auto& f : bundle.rtl) put(f.path, f.text.data(), f.text.size());
    if (!bundle.testbench.path.empty()) put(bundle.testbench.path, bundle.testbench.text.data(), bundle.testbench.text.size());
    for (const auto& v : bundle.vectors)
        put(v.path, reinterpret_cast<const char*>(v.bytes.data()), v.bytes.size());
    const std::string m = bundle.manifest.dump(2) + "\n";
    put("manifest.json", m.data(), m.size());
}

OperatorAudit audit_operators(const std::string& text) {
    OperatorAudit a;
    std::istringstream in(text);
    std::string line;
    auto count = [](const std::string& l) {
        std::int64_t n = 0;
        for (std::size_t i = 1; i + 1 < l.size(); ++i)
            if ((l[i] == '+' || l[i] == '-') && l[i - 1] == ' ' && l[i + 1] == ' ') ++n;
        return n;
    };
    while (std::getline(in, line)) {
        const auto start = line.find_first_not_of(' ');
        if (start == std::string::npos) continue;
        const std::string_view l(line.c_str() + start);
        if (l.starts_with("assign sc_")) a.scaler_ops += count(line);
        else if (l.starts_with("assign tr_")) a.tree_ops += count(line);
    }
    return a;
}

bool has_weight_memory(const std::string& text) {
    if (text.find("$readmem") != std::string::npos) return true;
    static const std::regex init_block(R"(initial\s+begin[^]*?\w+\s*\[[^\]]+\]\s*=)");
    return std::regex_search(text, init_block);
}

} // namespace fixy
