#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitwing {

// Base of everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank disagreement between tensors / layer parameters.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached an operation that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-contract argument (labels, ratios, counts, flags, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the model's current mode (e.g. backward on a
// frozen client).
class ModeError : public Error {
 public:
  using Error::Error;
};

// Filesystem problems.
class IoError : public Error {
 public:
  using Error::Error;
};

// Undecodable image bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

enum class ProtocolCode : uint8_t {
  BadMagic,
  BadVersion,
  Truncated,
  LengthMismatch,
  UnknownMsgType,
  BadPayload,
  DuplicateFrame,
  RoundMismatch,
  HandshakeMismatch,
  ConnectionClosed,
};

const char* to_string(ProtocolCode code);

// Malformed frame or protocol-state violation; `code()` identifies which.
class ProtocolError : public Error {
 public:
  ProtocolError(ProtocolCode code, const std::string& what);
  ProtocolCode code() const noexcept { return code_; }

 private:
  ProtocolCode code_;
};

// A round barrier expired: one or more clients never delivered their frame.
class RoundAbortError : public Error {
 public:
  RoundAbortError(uint32_t round_id, std::vector<uint16_t> missing);
  uint32_t round_id() const noexcept { return round_id_; }
  const std::vector<uint16_t>& missing_clients() const noexcept { return missing_; }

 private:
  uint32_t round_id_;
  std::vector<uint16_t> missing_;
};

}  // namespace splitwing
