#pragma once

#include <stdexcept>
#include <string>

namespace kvalign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KVALIGN_DEFINE_ERROR(Name, Base) \
  class Name : public Base {             \
   public:                               \
    using Base::Base;                    \
  }

// geometry
KVALIGN_DEFINE_ERROR(ZeroVector, Error);
KVALIGN_DEFINE_ERROR(DimensionMismatch, Error);
KVALIGN_DEFINE_ERROR(NonSymmetric, Error);
KVALIGN_DEFINE_ERROR(InvalidArgument, Error);

// grads
KVALIGN_DEFINE_ERROR(DegenerateConfiguration, Error);
KVALIGN_DEFINE_ERROR(NonFiniteFunction, Error);

// losses / fewshot
KVALIGN_DEFINE_ERROR(EmptyPrototypes, Error);
KVALIGN_DEFINE_ERROR(IndexOutOfRange, Error);
KVALIGN_DEFINE_ERROR(ShapeMismatch, Error);
KVALIGN_DEFINE_ERROR(EmptyClass, Error);
KVALIGN_DEFINE_ERROR(CountMismatch, Error);
KVALIGN_DEFINE_ERROR(KindMismatch, Error);
KVALIGN_DEFINE_ERROR(EmptyValidation, Error);
KVALIGN_DEFINE_ERROR(InsufficientCandidates, Error);

// synthdata / io
KVALIGN_DEFINE_ERROR(SeparationUnsatisfiable, Error);
KVALIGN_DEFINE_ERROR(IoError, Error);
KVALIGN_DEFINE_ERROR(FormatError, Error);

// cip
KVALIGN_DEFINE_ERROR(EmptyClassName, Error);
KVALIGN_DEFINE_ERROR(ParseError, Error);
KVALIGN_DEFINE_ERROR(MissingStage, ParseError);
KVALIGN_DEFINE_ERROR(MalformedTags, ParseError);
KVALIGN_DEFINE_ERROR(NetworkError, Error);
KVALIGN_DEFINE_ERROR(Timeout, NetworkError);

#undef KVALIGN_DEFINE_ERROR

class HttpStatusError : public NetworkError {
 public:
  explicit HttpStatusError(int status)
      : NetworkError("HTTP status " + std::to_string(status)), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace kvalign
