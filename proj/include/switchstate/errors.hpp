#pragma once

#include <stdexcept>
#include <string>

namespace switchstate {

// Error categories mirror the C API status codes (see switchstate.h).
enum class ErrorKind {
  InvalidArgument,  // bad inputs from the caller (non-finite data, dim mismatch)
  InvalidParameter, // model parameters violate an invariant
  Numeric,          // Cholesky failure, non-finite objective, underflow
  Io,               // file system / parse failures
  Contract          // internal precondition broken (posteriors vs params mismatch)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(std::string msg) {
  return Error(ErrorKind::InvalidArgument, std::move(msg));
}
inline Error param_error(std::string msg) {
  return Error(ErrorKind::InvalidParameter, std::move(msg));
}
inline Error numeric_error(std::string msg) {
  return Error(ErrorKind::Numeric, std::move(msg));
}
inline Error io_error(std::string msg) {
  return Error(ErrorKind::Io, std::move(msg));
}
inline Error contract_error(std::string msg) {
  return Error(ErrorKind::Contract, std::move(msg));
}

}  // namespace switchstate
