#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace lseq {

enum class ErrorKind {
  Validation,
  Resource,
  Structure,
  DegenerateEvent,
  RankDeficiency,
  Unidentifiable,
  InvalidMixture,
  InvalidResult,
  Inconsistency,
  AmbiguousLabel,
  DegenerateLabel,
  Budget,
  Incomplete,
  Boundary,
  Generation,
};

const char* to_string(ErrorKind kind);

/// Short rendering of a measured error for messages (to_string prints 0.000000 for 1e-9).
inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

/** Every failure raised by the library carries one of the kinds above. */
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Resource: return "resource error";
    case ErrorKind::Structure: return "structure error";
    case ErrorKind::DegenerateEvent: return "degenerate-event error";
    case ErrorKind::RankDeficiency: return "rank-deficiency error";
    case ErrorKind::Unidentifiable: return "unidentifiable error";
    case ErrorKind::InvalidMixture: return "invalid-mixture error";
    case ErrorKind::InvalidResult: return "invalid-result error";
    case ErrorKind::Inconsistency: return "inconsistency error";
    case ErrorKind::AmbiguousLabel: return "ambiguous-label error";
    case ErrorKind::DegenerateLabel: return "degenerate-label error";
    case ErrorKind::Budget: return "budget error";
    case ErrorKind::Incomplete: return "incompleteness error";
    case ErrorKind::Boundary: return "boundary error";
    case ErrorKind::Generation: return "generation error";
  }
  return "error";
}

}  // namespace lseq
