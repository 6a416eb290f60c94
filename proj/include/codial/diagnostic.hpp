#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "codial/util.hpp"

namespace codial {

enum class Severity { error, warning };

inline const char* to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

struct Diagnostic {
  Severity severity = Severity::error;
  std::string path;
  std::string message;
  // Machine-readable class ("RI1", "RI2", "RI3", "schema", ...) and the node
  // or slot the diagnostic is about. Repair passes key off these two fields.
  std::string code;
  std::string subject;

  bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

inline std::ostream& operator<<(std::ostream& os, const Diagnostic& d) {
  return os << d.path << ": " << to_string(d.severity) << ": " << d.message;
}

inline std::string format(const Diagnostic& d) {
  return d.path + ": " + to_string(d.severity) + ": " + d.message;
}

inline bool has_errors(const Diagnostics& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::error) return true;
  return false;
}

inline json to_json(const Diagnostic& d) {
  return json{{"severity", to_string(d.severity)}, {"path", d.path}, {"message", d.message},
              {"code", d.code}, {"subject", d.subject}};
}

class ValidationFailed : public Error {
 public:
  explicit ValidationFailed(Diagnostics diags)
      : Error("ValidationFailed", summary(diags)), diagnostics_(std::move(diags)) {}

  const Diagnostics& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string summary(const Diagnostics& diags) {
    std::string out;
    for (const auto& d : diags) {
      if (d.severity != Severity::error) continue;
      if (!out.empty()) out += "; ";
      out += format(d);
    }
    return out;
  }

  Diagnostics diagnostics_;
};

}  // namespace codial
