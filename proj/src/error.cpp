#include "splitwing/error.hpp"

#include <sstream>

namespace splitwing {

const char* to_string(ProtocolCode code) {
  switch (code) {
    case ProtocolCode::BadMagic: return "bad magic";
    case ProtocolCode::BadVersion: return "bad version";
    case ProtocolCode::Truncated: return "truncated frame";
    case ProtocolCode::LengthMismatch: return "length mismatch";
    case ProtocolCode::UnknownMsgType: return "unknown message type";
    case ProtocolCode::BadPayload: return "bad payload";
    case ProtocolCode::DuplicateFrame: return "duplicate frame";
    case ProtocolCode::RoundMismatch: return "round mismatch";
    case ProtocolCode::HandshakeMismatch: return "handshake mismatch";
    case ProtocolCode::ConnectionClosed: return "connection closed";
  }
  return "unknown";
}

ProtocolError::ProtocolError(ProtocolCode code, const std::string& what)
    : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

namespace {
std::string abort_message(uint32_t round_id, const std::vector<uint16_t>& missing) {
  std::ostringstream os;
  os << "round " << round_id << " aborted; missing client(s):";
  for (uint16_t id : missing) os << ' ' << id;
  return os.str();
}
}  // namespace

RoundAbortError::RoundAbortError(uint32_t round_id, std::vector<uint16_t> missing)
    : Error(abort_message(round_id, missing)), round_id_(round_id), missing_(std::move(missing)) {}

}  // namespace splitwing
