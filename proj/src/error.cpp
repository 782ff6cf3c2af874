#include "optisync/error.hpp"

namespace optisync {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::SchedulingInPast: return "SchedulingInPast";
    case Errc::EmptyLabel: return "EmptyLabel";
    case Errc::TimeBeforeUpdate: return "TimeBeforeUpdate";
    case Errc::PpsDisabled: return "PpsDisabled";
    case Errc::LinkDown: return "LinkDown";
    case Errc::TimestampInLocalPast: return "TimestampInLocalPast";
    case Errc::AlreadyFailed: return "AlreadyFailed";
    case Errc::EmptyTrace: return "EmptyTrace";
    case Errc::IncompleteRecord: return "IncompleteRecord";
    case Errc::InvalidRecord: return "InvalidRecord";
    case Errc::NoOffsetEstimate: return "NoOffsetEstimate";
    case Errc::NoBackupPath: return "NoBackupPath";
    case Errc::UnknownParameter: return "UnknownParameter";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

namespace {
std::string join_issues(const std::vector<std::string>& issues) {
  std::string out = std::to_string(issues.size()) + " problem(s)";
  for (const auto& i : issues) out += "\n  " + i;
  return out;
}
}  // namespace

ValidationFailed::ValidationFailed(std::vector<std::string> issues)
    : Error(Errc::ValidationError, join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace optisync
