#pragma once

#include <stdexcept>
#include <string>

namespace evkd {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define EVKD_DEFINE_ERROR(Name)                                  \
    struct Name : Error {                                        \
        explicit Name(const std::string& msg) : Error(msg) {}    \
    }

// event parsing / representations
EVKD_DEFINE_ERROR(MalformedRecord);
EVKD_DEFINE_ERROR(OutOfBounds);
EVKD_DEFINE_ERROR(EmptyStream);
EVKD_DEFINE_ERROR(OverlappingWindows);
EVKD_DEFINE_ERROR(EmptyWindow);
EVKD_DEFINE_ERROR(DegenerateBox);
EVKD_DEFINE_ERROR(BadPatchSize);

// tensor / autodiff
EVKD_DEFINE_ERROR(ShapeMismatch);
EVKD_DEFINE_ERROR(NonScalarLoss);

// head / losses
EVKD_DEFINE_ERROR(CenterOutOfGrid);
EVKD_DEFINE_ERROR(DegenerateGT);
EVKD_DEFINE_ERROR(NonFinite);

// training
EVKD_DEFINE_ERROR(MissingView);
EVKD_DEFINE_ERROR(NonFiniteLoss);
EVKD_DEFINE_ERROR(ConfigMismatch);

// generator / evaluation
EVKD_DEFINE_ERROR(InvalidSpec);
EVKD_DEFINE_ERROR(MissingAnnotation);
EVKD_DEFINE_ERROR(UnknownTag);
EVKD_DEFINE_ERROR(IoFailure);
EVKD_DEFINE_ERROR(ConfigError);

#undef EVKD_DEFINE_ERROR

} // namespace evkd
