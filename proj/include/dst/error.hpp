#pragma once

#include <stdexcept>
#include <string>

namespace dst {

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
    Usage,
    Data,
    Numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define DST_DEFINE_ERROR(Name, Kind)                                              \
    class Name : public Error {                                                   \
    public:                                                                       \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
    }

// autodiff
DST_DEFINE_ERROR(DimensionError, Numeric);
DST_DEFINE_ERROR(UnsupportedOpError, Usage);
DST_DEFINE_ERROR(ContractError, Usage);
DST_DEFINE_ERROR(EmptyTapeError, Usage);
DST_DEFINE_ERROR(NumericError, Numeric);

// data and graph
DST_DEFINE_ERROR(ReferenceError, Data);
DST_DEFINE_ERROR(ParseError, Data);
DST_DEFINE_ERROR(SpecError, Data);
DST_DEFINE_ERROR(CoverageError, Data);
DST_DEFINE_ERROR(DegenerateNeighborhoodError, Data);

// model lifecycle
DST_DEFINE_ERROR(ConfigError, Usage);
DST_DEFINE_ERROR(IntegrityError, Data);
DST_DEFINE_ERROR(VersionError, Data);

// forecasting and evaluation
DST_DEFINE_ERROR(HorizonError, Data);
DST_DEFINE_ERROR(UndefinedVarianceError, Numeric);
DST_DEFINE_ERROR(UndefinedRatioError, Numeric);

#undef DST_DEFINE_ERROR

}  // namespace dst
