#include "fixy/tensor.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fixy {

std::string to_string(const Shape3& s) {
    std::ostringstream os;
    os << s.h << "x" << s.w << "x" << s.c;
    return os.str();
}

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::string& buf, std::size_t& pos) {
    for (;;) {
        while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
        if (pos < buf.size() && buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return buf.substr(start, pos - start);
}

} // namespace

Activations read_pnm(const std::string& path) {
    const std::string buf = slurp(path);
    std::size_t pos = 0;
    const std::string magic = pnm_token(buf, pos);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw ParseError(path + ": not a binary PGM/PPM (magic '" + magic + "')");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(pnm_token(buf, pos));
        h = std::stoi(pnm_token(buf, pos));
        maxval = std::stoi(pnm_token(buf, pos));
    } catch (const std::exception&) {
        throw ParseError(path + ": malformed PNM header");
    }
    if (maxval != 255) throw UnsupportedOpError(path + ": only 8-bit PNM (maxval 255) is supported");
    ++pos; // single whitespace after maxval
    Shape3 shape{h, w, channels};
    if (buf.size() < pos + shape.size()) throw IntegrityError(path + ": truncated pixel data");
    Activations t(shape);
    for (std::size_t i = 0; i < shape.size(); ++i)
        t.data[i] = static_cast<unsigned char>(buf[pos + i]);
    return t;
}

Activations read_raw_u8(const std::string& path, Shape3 shape) {
    const std::string buf = slurp(path);
    if (buf.size() != shape.size())
        throw IntegrityError(path + ": expected " + std::to_string(shape.size()) + " bytes, found " +
                             std::to_string(buf.size()));
    Activations t(shape);
    for (std::size_t i = 0; i < shape.size(); ++i) t.data[i] = static_cast<unsigned char>(buf[i]);
    return t;
}

std::string to_bytes(const Activations& t) {
    std::string out(t.data.size(), '\0');
    for (std::size_t i = 0; i < t.data.size(); ++i)
        out[i] = static_cast<char>(static_cast<std::uint8_t>(t.data[i] & 0xFF));
    return out;
}

void write_raw_u8(const std::string& path, const Activations& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const std::string bytes = to_bytes(t);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RealMap to_real(const Activations& t, double scale) {
    RealMap r(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) r.data[i] = static_cast<float>(t.data[i] * scale);
    return r;
}

} // namespace fixy
