#pragma once

#include <stdexcept>
#include <string>

namespace ounet {

// Error categories. The CLI maps UsageError/ConfigError to exit code 2 and
// everything else to exit code 1.
enum class ErrorKind {
  kConfig,
  kInput,
  kDomain,
  kShape,
  kParse,
  kFormat,
  kNumeric,
  kIo,
  kInternal,
  kUsage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define OUNET_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

OUNET_DEFINE_ERROR(ConfigError, kConfig)
OUNET_DEFINE_ERROR(InputError, kInput)
OUNET_DEFINE_ERROR(DomainError, kDomain)
OUNET_DEFINE_ERROR(ShapeError, kShape)
OUNET_DEFINE_ERROR(ParseError, kParse)
OUNET_DEFINE_ERROR(FormatError, kFormat)
OUNET_DEFINE_ERROR(NumericError, kNumeric)
OUNET_DEFINE_ERROR(IoError, kIo)
OUNET_DEFINE_ERROR(InternalError, kInternal)
OUNET_DEFINE_ERROR(UsageError, kUsage)

#undef OUNET_DEFINE_ERROR

}  // namespace ounet
