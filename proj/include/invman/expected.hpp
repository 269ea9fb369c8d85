#pragma once
/** @file expected.hpp
 *  @brief Value-or-error return type used by every fallible operation.
 */

#include <string>
#include <utility>
#include <variant>

namespace invman {

enum class ErrorCode {
  dimension_mismatch,
  invalid_argument,
  unbounded_domain,
  empty_domain,
  step_underflow,
  non_finite,
  max_steps,
  blow_up,
  outside_domain,
  not_jordan,
  unsupported,
  non_monotone,
  divergence,
  precondition,
  infeasible,
  unknown_system,
  config,
};

const char* to_string(ErrorCode code);

struct Error {
  ErrorCode code;
  std::string message;
};

inline Error make_error(ErrorCode code, std::string message) {
  return Error{code, std::move(message)};
}

template <class T>
class Expected {
 public:
  Expected(T value) : data_(std::move(value)) {}
  Expected(Error error) : data_(std::move(error)) {}

  bool ok() const { return data_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(data_); }
  const T& value() const& { return std::get<0>(data_); }
  T&& value() && { return std::get<0>(std::move(data_)); }

  T* operator->() { return &std::get<0>(data_); }
  const T* operator->() const { return &std::get<0>(data_); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

  const Error& error() const { return std::get<1>(data_); }

 private:
  std::variant<T, Error> data_;
};

}  // namespace invman
