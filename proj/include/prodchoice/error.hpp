#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prodchoice {

/// Broad error class; maps one-to-one onto CLI exit codes.
enum class ErrorKind { config, data, backend, analysis };

int exit_code_for(ErrorKind kind) noexcept;
std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string_view name, const std::string& message)
      : std::runtime_error(std::string(name) + ": " + message), kind_(kind), name_(name) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return name_; }

 private:
  ErrorKind kind_;
  std::string_view name_;
};

#define PRODCHOICE_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& message) : Error(Kind, #Name, message) {} \
  };

PRODCHOICE_DEFINE_ERROR(ConfigError, ErrorKind::config)
PRODCHOICE_DEFINE_ERROR(InvalidInput, ErrorKind::data)
PRODCHOICE_DEFINE_ERROR(MissingInput, ErrorKind::data)

// corpus
PRODCHOICE_DEFINE_ERROR(EmptyDialogue, ErrorKind::data)
PRODCHOICE_DEFINE_ERROR(NoPrecedingTurn, ErrorKind::data)

// lm-gateway
PRODCHOICE_DEFINE_ERROR(InvalidRequest, ErrorKind::backend)
PRODCHOICE_DEFINE_ERROR(BackendUnavailable, ErrorKind::backend)
PRODCHOICE_DEFINE_ERROR(FixtureMiss, ErrorKind::backend)
PRODCHOICE_DEFINE_ERROR(ContextOverflow, ErrorKind::backend)
PRODCHOICE_DEFINE_ERROR(RefusalDetected, ErrorKind::backend)
PRODCHOICE_DEFINE_ERROR(UnparseableVerdict, ErrorKind::backend)

// costs
PRODCHOICE_DEFINE_ERROR(AlignmentError, ErrorKind::data)
PRODCHOICE_DEFINE_ERROR(UndefinedForSingleton, ErrorKind::analysis)

// alternatives
PRODCHOICE_DEFINE_ERROR(PrefixViolation, ErrorKind::data)
PRODCHOICE_DEFINE_ERROR(InsufficientParaphrases, ErrorKind::data)

// stats / align / choice
PRODCHOICE_DEFINE_ERROR(InvalidProbability, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(InvalidObservation, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(InsufficientData, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(ZeroVariance, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(DegenerateVariance, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(NonConvergence, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(PerfectSeparation, ErrorKind::analysis)
PRODCHOICE_DEFINE_ERROR(NonIdentifiable, ErrorKind::analysis)

#undef PRODCHOICE_DEFINE_ERROR

}  // namespace prodchoice
