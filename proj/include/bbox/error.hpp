#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bbox {

enum class ErrorCode {
  Ok,
  InvalidParameter,
  ChainExhausted,
  Decode,
  Config,
  Auth,
  Duplicate,
  MspUnavailable,
  NotLeader,
  TransferFailed,
  UnknownSensor,
  TxStalled,
  NotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::ChainExhausted: return "ChainExhausted";
    case ErrorCode::Decode: return "DecodeError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Auth: return "AuthError";
    case ErrorCode::Duplicate: return "DuplicateError";
    case ErrorCode::MspUnavailable: return "MspUnavailable";
    case ErrorCode::NotLeader: return "NotLeader";
    case ErrorCode::TransferFailed: return "TransferFailed";
    case ErrorCode::UnknownSensor: return "UnknownSensor";
    case ErrorCode::TxStalled: return "TxStalled";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Result of an interactive protocol step: "1", or "0 with an error code".
class Status {
 public:
  Status() = default;
  explicit Status(ErrorCode code, std::string detail = {}) : code_(code), detail_(std::move(detail)) {}

  static Status ok() { return {}; }

  explicit operator bool() const noexcept { return code_ == ErrorCode::Ok; }
  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  friend bool operator==(const Status& s, ErrorCode c) { return s.code_ == c; }

 private:
  ErrorCode code_ = ErrorCode::Ok;
  std::string detail_;
};

// A value or the Status explaining its absence.
template <class T>
class Result {
 public:
  Result(T value) : value_(std::move(value)) {}
  Result(Status status) : status_(std::move(status)) {}
  Result(ErrorCode code, std::string detail = {}) : status_(code, std::move(detail)) {}

  explicit operator bool() const noexcept { return value_.has_value(); }
  const Status& status() const noexcept { return status_; }
  ErrorCode code() const noexcept { return status_.code(); }

  T& value() {
    if (!value_) throw Error(status_.code(), status_.detail());
    return *value_;
  }
  const T& value() const {
    if (!value_) throw Error(status_.code(), status_.detail());
    return *value_;
  }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  Status status_;
  std::optional<T> value_;
};

}  // namespace bbox
