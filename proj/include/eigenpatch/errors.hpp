#pragma once

#include <stdexcept>
#include <string>

namespace eigenpatch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EIGENPATCH_DEFINE_ERROR(Name) \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  }

EIGENPATCH_DEFINE_ERROR(FormatError);
EIGENPATCH_DEFINE_ERROR(SizeError);
EIGENPATCH_DEFINE_ERROR(ValueError);
EIGENPATCH_DEFINE_ERROR(ArgumentError);
EIGENPATCH_DEFINE_ERROR(DegenerateInputError);
EIGENPATCH_DEFINE_ERROR(SegmentationError);
EIGENPATCH_DEFINE_ERROR(NumericalError);
EIGENPATCH_DEFINE_ERROR(ConvergenceError);
EIGENPATCH_DEFINE_ERROR(StratificationError);
EIGENPATCH_DEFINE_ERROR(ResampleError);
EIGENPATCH_DEFINE_ERROR(ConfigurationError);
EIGENPATCH_DEFINE_ERROR(GenerationError);
EIGENPATCH_DEFINE_ERROR(IoError);

#undef EIGENPATCH_DEFINE_ERROR

}  // namespace eigenpatch
