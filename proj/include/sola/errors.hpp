#pragma once

#include <stdexcept>
#include <string>

namespace sola {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SOLA_DEFINE_ERROR(Name)           \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

SOLA_DEFINE_ERROR(FormatError)
SOLA_DEFINE_ERROR(UnsupportedLayout)
SOLA_DEFINE_ERROR(DataError)
SOLA_DEFINE_ERROR(IoError)
SOLA_DEFINE_ERROR(SpecError)
SOLA_DEFINE_ERROR(TooShortError)
SOLA_DEFINE_ERROR(ConfigError)
SOLA_DEFINE_ERROR(ShapeError)
SOLA_DEFINE_ERROR(DomainError)
SOLA_DEFINE_ERROR(NumericsError)

#undef SOLA_DEFINE_ERROR

}  // namespace sola
