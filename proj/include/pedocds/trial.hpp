#pragma once

// N-of-1 fitting workflow: baseline (T0), fitting (T1), at most three
// modification rounds, closure. A trial is an append-only event log; its
// state is always the fold of that log.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedocds/pressure.hpp"
#include "pedocds/taxonomy.hpp"

namespace pedocds::trial {

using taxonomy::FeatureCatalog;
using taxonomy::Prescription;

inline constexpr int max_rounds = 3;

enum class Phase { not_started, baseline, fitted, mod_round, closed };
enum class CloseReason { goal_met, rounds_exhausted, withdrawn };

struct AdherenceReport {
  double worn_hours = 0.0;
  double ambulatory_hours = 0.0;
  double goal_ratio = 0.8;

  double ratio() const { return worn_hours / ambulatory_hours; }
  bool goal_met() const { return ratio() > goal_ratio; }
};

/// Throws ValidationError unless ambulatory > 0 and 0 <= worn <= ambulatory.
AdherenceReport adherence(double worn_hours, double ambulatory_hours, double goal_ratio = 0.8);

struct VisitRecord {
  std::string label;                // T0..T4
  std::string date;                 // YYYY-MM-DD
  std::optional<int> satisfaction;  // 1..5, not captured at T0
  std::optional<AdherenceReport> adherence;
  std::string notes;
};

struct Event {
  std::string type;  // started | fitted | modified | visit | closed
  nlohmann::json payload;
  std::string timestamp;

  bool operator==(const Event&) const = default;
};

struct TrialState {
  std::string trial_id;
  std::string patient_id;
  Phase phase = Phase::not_started;
  int round = 0;
  std::optional<CloseReason> reason;
  std::vector<std::string> baseline_recordings;
  std::vector<Prescription> prescriptions;  // version i at index i - 1
  std::vector<pressure::OffloadReport> evaluations;
  std::vector<VisitRecord> visits;
};

/// Applies one event to a state. Throws ConflictError when the event is not
/// allowed in the current state, so replaying a tampered log fails loudly.
TrialState apply(TrialState state, const Event& event);

class Trial {
 public:
  explicit Trial(std::string trial_id);

  static Trial replay(std::string trial_id, const std::vector<Event>& events);

  const TrialState& state() const noexcept { return state_; }
  const std::vector<Event>& events() const noexcept { return events_; }

  /// Opens the trial at T0 with prescription version 1.
  void start(const std::string& patient_id, const std::vector<std::string>& baseline_recordings,
             const Prescription& prescription, const std::string& date, const FeatureCatalog& catalog,
             const std::string& timestamp = {});
  void record_fitting(const VisitRecord& visit, const std::string& timestamp = {});
  /// Appends the next prescription version and its evaluation; closes the
  /// trial when every targeted zone met its goal. A fourth attempt closes the
  /// trial as rounds_exhausted and then throws ConflictError.
  void record_modification(const Prescription& prescription, const pressure::OffloadReport& evaluation,
                           const VisitRecord& visit, const FeatureCatalog& catalog, const std::string& timestamp = {});
  /// A follow-up visit without a design change.
  void record_visit(const VisitRecord& visit, const std::string& timestamp = {});
  void withdraw(const std::string& notes, const std::string& timestamp = {});

 private:
  void append(Event event);

  std::string trial_id_;
  TrialState state_;
  std::vector<Event> events_;
};

struct MaintenanceStatus {
  bool due = false;
  bool overdue = false;
  int elapsed_months = 0;  // whole months
  std::pair<int, int> window{3, 6};
};

/// Top cover replacement: due once `window.first` months have elapsed,
/// overdue after `window.second`. Dates are YYYY-MM-DD.
MaintenanceStatus maintenance_due(const std::string& last_replacement, const std::string& today,
                                  std::pair<int, int> window = {3, 6});

std::string to_string(Phase phase);
std::string to_string(CloseReason reason);
CloseReason parse_close_reason(const std::string& s);

nlohmann::json visit_to_json(const VisitRecord& visit);
VisitRecord visit_from_json(const nlohmann::json& j);
nlohmann::json event_to_json(const Event& event);
Event event_from_json(const nlohmann::json& j);
nlohmann::json events_to_json(const std::vector<Event>& events);
std::vector<Event> events_from_json(const nlohmann::json& j);
nlohmann::json state_to_json(const TrialState& state);

}  // namespace pedocds::trial
