#pragma once

#include <string>
#include <utility>
#include <variant>

#include "worldscaffold/error.hpp"

namespace worldscaffold {

// A robust estimator declining to produce a model. This is an ordinary outcome,
// not a failure of the caller.
struct Rejection {
  std::string reason;
};

template <typename T>
class Result {
 public:
  Result(T value) : state_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Rejection rejection) : state_(std::move(rejection)) {}  // NOLINT

  bool ok() const noexcept { return std::holds_alternative<T>(state_); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const {
    if (!ok()) throw InvalidInput("rejected result accessed: " + rejection().reason);
    return std::get<T>(state_);
  }
  T& value() {
    if (!ok()) throw InvalidInput("rejected result accessed: " + rejection().reason);
    return std::get<T>(state_);
  }
  const T* operator->() const { return &value(); }
  const T& operator*() const { return value(); }

  const Rejection& rejection() const { return std::get<Rejection>(state_); }

 private:
  std::variant<T, Rejection> state_;
};

}  // namespace worldscaffold
