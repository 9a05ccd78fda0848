#pragma once

#include <stdexcept>
#include <string>

namespace masksearch {

enum class Errc {
  kInvalidSparsity,
  kBudgetExhausted,
  kDegenerateMask,
  kUnsupportedModel,
  kInvalidInput,
  kSpaceTooLarge,
  kInsufficientData,
  kIoError,
  kLocked,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::kInvalidSparsity: return "invalid-sparsity";
    case Errc::kBudgetExhausted: return "budget-exhausted";
    case Errc::kDegenerateMask: return "degenerate-mask";
    case Errc::kUnsupportedModel: return "unsupported-model";
    case Errc::kInvalidInput: return "invalid-input";
    case Errc::kSpaceTooLarge: return "space-too-large";
    case Errc::kInsufficientData: return "insufficient-data";
    case Errc::kIoError: return "io-error";
    case Errc::kLocked: return "locked";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace masksearch
