#ifndef MASKMOTION_ERROR_H_
#define MASKMOTION_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskmotion {

// Coarse error classes. The CLI maps each to a distinct exit status and a
// machine-parseable prefix.
enum class ErrorCategory {
  kInvalidArgument,  // precondition violated by the caller
  kShapeMismatch,
  kFormat,           // malformed record or file
  kIo,
  kConfig,           // bad config key/value or incompatible checkpoint
  kUsage,            // CLI misuse
  kNumeric,          // NaN/Inf or undefined math (zero-norm cosine)
  kInternal,         // a checked invariant of this library failed
};

std::string_view CategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace maskmotion

#endif  // MASKMOTION_ERROR_H_
