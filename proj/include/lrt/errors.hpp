#ifndef LRT_ERRORS_HPP
#define LRT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lrt {

/// Base class for every error raised by this library. The CLI maps any
/// Error to exit code 1 with a one-line diagnostic.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LRT_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                              \
      public:                                                                \
        explicit Name(const std::string& msg) : Error(msg) {}                \
    }

LRT_DEFINE_ERROR(ShapeError);         // dimension mismatch in tensor ops
LRT_DEFINE_ERROR(InvalidInput);       // non-finite data, malformed arguments
LRT_DEFINE_ERROR(NumericalFailure);   // iterative solver exceeded its cap
LRT_DEFINE_ERROR(DegenerateSpectrum); // all-zero singular values
LRT_DEFINE_ERROR(SequenceError);      // out-of-order epochs
LRT_DEFINE_ERROR(NotEnoughData);      // history shorter than required window
LRT_DEFINE_ERROR(RankError);          // truncation rank out of range
LRT_DEFINE_ERROR(OriginError);        // conv-only op applied to a dense pair
LRT_DEFINE_ERROR(PlanError);          // factorization plan inconsistent with model
LRT_DEFINE_ERROR(ProfileError);       // profiling setup invalid
LRT_DEFINE_ERROR(FormatError);        // malformed snapshot / dataset file
LRT_DEFINE_ERROR(DivergenceError);    // training loss blew up
LRT_DEFINE_ERROR(IoError);            // filesystem failures, with path context

#undef LRT_DEFINE_ERROR

} // namespace lrt

#endif
