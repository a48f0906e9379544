#pragma once

#include <stdexcept>
#include <string>

namespace comac {

/// Base of every error thrown by the engine. `kind()` is a stable short
/// name used in CLI diagnostics and tests.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(std::string(kind) + ": " + what), kind_(kind) {}

  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define COMAC_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  }

COMAC_DEFINE_ERROR(EmptyEntry);
COMAC_DEFINE_ERROR(ParseError);
COMAC_DEFINE_ERROR(SchemaError);
COMAC_DEFINE_ERROR(FormatError);
COMAC_DEFINE_ERROR(ShapeError);
COMAC_DEFINE_ERROR(DegenerateRow);
COMAC_DEFINE_ERROR(EmptyCorpus);
COMAC_DEFINE_ERROR(ConfigError);
COMAC_DEFINE_ERROR(LabelError);
COMAC_DEFINE_ERROR(NumericsError);
COMAC_DEFINE_ERROR(EmptyEval);
COMAC_DEFINE_ERROR(MissingEntry);
COMAC_DEFINE_ERROR(IoError);

#undef COMAC_DEFINE_ERROR

}  // namespace comac
