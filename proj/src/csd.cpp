#include <algorithm>
#include <cstdlib>

#include "fixy/fixed_datapath.hpp"

namespace fixy {

CsdDigits csd_encode(std::int64_t w) {
    if (std::llabs(w) >= (std::int64_t{1} << 31)) throw ParameterError("CSD input out of range");
    CsdDigits out;
    std::int64_t v = w;
    int pos = 0;
    while (v != 0) {
        if (v & 1) {
            // v mod 4 == 3 -> digit -1, so the next digit is forced to zero.
            const int d = (v & 3) == 3 ? -1 : 1;
            out.push_back({pos, d});
            v -= d;
        }
        v >>= 1; // exact: v is even here
        ++pos;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::int64_t csd_value(const CsdDigits& d) {
    std::int64_t v = 0;
    for (const auto& x : d) v += x.sign * (std::int64_t{1} << x.position);
    return v;
}

ShiftAddPlan plan_scaler(int w, bool pruned) {
    ShiftAddPlan p;
    p.weight = w;
    p.is_pruned = pruned || w == 0;
    if (p.is_pruned) return p;
    p.terms = csd_encode(w);
    p.adder_count = static_cast<int>(p.terms.size()) - 1;
    return p;
}

} // namespace fixy
