#include "pedocds/validation.hpp"

#include <algorithm>

namespace pedocds {

void ValidationReport::add(Severity severity, std::string subject, std::string message,
                           std::string tag) {
  findings_.push_back({severity, std::move(subject), std::move(message), std::move(tag)});
}

void ValidationReport::merge(const ValidationReport& other) {
  findings_.insert(findings_.end(), other.findings_.begin(), other.findings_.end());
}

std::size_t ValidationReport::count(Severity severity) const {
  return static_cast<std::size_t>(std::count_if(
      findings_.begin(), findings_.end(), [&](const Finding& f) { return f.severity == severity; }));
}

bool ValidationReport::mentions(const std::string& needle) const {
  return std::any_of(findings_.begin(), findings_.end(), [&](const Finding& f) {
    return f.message.find(needle) != std::string::npos;
  });
}

std::string to_string(Severity severity) {
  switch (severity) {
    case Severity::error:
      return "error";
    case Severity::warning:
      return "warning";
    case Severity::advisory:
      return "advisory";
  }
  return "error";
}

void to_json(nlohmann::json& j, const Finding& f) {
  j = nlohmann::json{{"severity", to_string(f.severity)},
                     {"subject", f.subject},
                     {"message", f.message}};
  if (!f.tag.empty()) j["tag"] = f.tag;
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  j = nlohmann::json{{"ok", r.ok()}, {"findings", r.findings()}};
}

}  // namespace pedocds
