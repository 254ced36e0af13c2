#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crtfrag {

enum class Errc {
    InvalidArgument,
    InvalidMechanism,
    InfiniteVariationViolated,
    DivergentIntegral,
    DegenerateAtZero,
    HorizonExhausted,
    Underflow,
    AboveThePoint,
    BeyondSampledHorizon,
    NotLaminar,
    IndexOutOfRange,
    NoSkeletonPart,
    NoNodePart,
    UnsupportedForMonteCarlo,
    UnknownKey,
    InvalidField,
    SuiteMismatch,
    Io,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so callers
// (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

} // namespace crtfrag
