#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace optisync {

enum class Errc {
  SchedulingInPast,
  EmptyLabel,
  TimeBeforeUpdate,
  PpsDisabled,
  LinkDown,
  TimestampInLocalPast,
  AlreadyFailed,
  EmptyTrace,
  IncompleteRecord,
  InvalidRecord,
  NoOffsetEstimate,
  NoBackupPath,
  UnknownParameter,
  ParseError,
  ValidationError,
  InvalidArgument,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Scenario validation failure carrying every problem found, each prefixed
/// with the field path it refers to.
class ValidationFailed : public Error {
 public:
  explicit ValidationFailed(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

}  // namespace optisync
