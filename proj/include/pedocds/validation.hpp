#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace pedocds {

enum class Severity { error, warning, advisory };

struct Finding {
  Severity severity = Severity::error;
  std::string subject;  // feature id, layer role, parameter name...
  std::string message;
  std::string tag;      // optional machine tag, e.g. "source conflict"

  bool operator==(const Finding&) const = default;
};

/// Findings are data, not failures: a report with no error-severity findings is ok().
class ValidationReport {
 public:
  void add(Severity severity, std::string subject, std::string message, std::string tag = {});
  void error(std::string subject, std::string message, std::string tag = {}) {
    add(Severity::error, std::move(subject), std::move(message), std::move(tag));
  }
  void warning(std::string subject, std::string message, std::string tag = {}) {
    add(Severity::warning, std::move(subject), std::move(message), std::move(tag));
  }
  void advisory(std::string subject, std::string message, std::string tag = {}) {
    add(Severity::advisory, std::move(subject), std::move(message), std::move(tag));
  }
  void merge(const ValidationReport& other);

  const std::vector<Finding>& findings() const noexcept { return findings_; }
  bool empty() const noexcept { return findings_.empty(); }
  std::size_t size() const noexcept { return findings_.size(); }
  std::size_t count(Severity severity) const;
  bool ok() const { return count(Severity::error) == 0; }

  /// True when some finding's message contains `needle`.
  bool mentions(const std::string& needle) const;

 private:
  std::vector<Finding> findings_;
};

std::string to_string(Severity severity);

void to_json(nlohmann::json& j, const Finding& f);
void to_json(nlohmann::json& j, const ValidationReport& r);

}  // namespace pedocds
