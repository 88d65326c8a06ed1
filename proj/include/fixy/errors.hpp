#pragma once

#include <stdexcept>
#include <string>

namespace fixy {

/// Base of every domain error raised by the toolchain. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define FIXY_DEFINE_ERROR(Name, tag)                                           \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(tag, what) {}           \
    }

FIXY_DEFINE_ERROR(ParseError, "parse error");
FIXY_DEFINE_ERROR(IntegrityError, "integrity error");
FIXY_DEFINE_ERROR(UnsupportedOpError, "unsupported op");
FIXY_DEFINE_ERROR(ShapeError, "shape error");
FIXY_DEFINE_ERROR(ParameterError, "parameter error");
FIXY_DEFINE_ERROR(DataError, "data error");
FIXY_DEFINE_ERROR(NumericError, "numeric error");
FIXY_DEFINE_ERROR(OverflowError, "overflow");
FIXY_DEFINE_ERROR(ConstructionError, "construction error");
FIXY_DEFINE_ERROR(SimulationError, "simulation error");
FIXY_DEFINE_ERROR(EmissionError, "emission error");
FIXY_DEFINE_ERROR(CalibrationError, "calibration error");
FIXY_DEFINE_ERROR(IoError, "io error");

#undef FIXY_DEFINE_ERROR

} // namespace fixy
