#pragma once

#include <stdexcept>
#include <string>

namespace rotapol {

enum class Err {
  ConfigInvalid,
  ZeroControlField,
  DegenerateGroupVelocity,
  UndefinedField,
  NonFiniteField,
  GridMismatch,
  EdgeLeakage,
  ZeroNorm,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  StepTooLarge,
  UnsupportedLoss,
  NoConvergence,
  NonHermitianConfig,
  EmptyInput,
  InsufficientSamples,
  DegenerateOrbit,
  AmbiguousRotation,
  NonPositiveNorm,
  NumericsFailure,
  IoError,
};

const char* err_name(Err e);

// Process exit code contract: config errors 2, numerics 3, I/O 4.
int err_exit_code(Err e);

class Error : public std::runtime_error {
public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const noexcept { return code_; }

private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

} // namespace rotapol
