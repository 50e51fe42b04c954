#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pverify {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PVERIFY_DEFINE_ERROR(Name)                                                 \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}       \
    }

// linprog
PVERIFY_DEFINE_ERROR(NumericalFailure);

// geometry
PVERIFY_DEFINE_ERROR(InfeasibleInput);
PVERIFY_DEFINE_ERROR(TemplateMismatch);
PVERIFY_DEFINE_ERROR(DegenerateSplit);
PVERIFY_DEFINE_ERROR(DegenerateGeometry);
PVERIFY_DEFINE_ERROR(EmptyInput);
PVERIFY_DEFINE_ERROR(InvalidTemplate);

// neural
PVERIFY_DEFINE_ERROR(SchemaError);
PVERIFY_DEFINE_ERROR(NonFiniteWeight);

// refine / imdp / oracle / cli
PVERIFY_DEFINE_ERROR(NoValidCut);
PVERIFY_DEFINE_ERROR(InfeasibleIntervals);
PVERIFY_DEFINE_ERROR(CapExceeded);
PVERIFY_DEFINE_ERROR(DimensionError);
PVERIFY_DEFINE_ERROR(ConfigError);

#undef PVERIFY_DEFINE_ERROR

/// Raised by the network loader; carries the 1-based index of the offending layer.
class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t layer, const std::string& what)
        : Error("DimensionMismatch(layer=" + std::to_string(layer) + "): " + what), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

}  // namespace pverify
