#include "pedocds/trial.hpp"

#include <chrono>
#include <cstdio>

#include "pedocds/error.hpp"

namespace pedocds::trial {

using nlohmann::json;

namespace {

int label_index(const std::string& label) {
  if (label.size() == 2 && label[0] == 'T' && label[1] >= '0' && label[1] <= '4') return label[1] - '0';
  throw ValidationError("visit label must be one of T0..T4, got '" + label + "'");
}

void check_visit(const TrialState& state, const VisitRecord& visit) {
  const int index = label_index(visit.label);
  if (!state.visits.empty() && index <= label_index(state.visits.back().label)) {
    throw ValidationError("visit " + visit.label + " must come after " + state.visits.back().label);
  }
  if (visit.satisfaction && (*visit.satisfaction < 1 || *visit.satisfaction > 5)) {
    throw ValidationError("satisfaction must be between 1 and 5");
  }
  if (index == 0 && visit.adherence) throw ValidationError("adherence is not captured at T0");
  if (visit.adherence) adherence(visit.adherence->worn_hours, visit.adherence->ambulatory_hours);
}

void require_open(const TrialState& state) {
  if (state.phase == Phase::not_started) throw ConflictError("trial " + state.trial_id + " has not started");
  if (state.phase == Phase::closed) throw ConflictError("trial " + state.trial_id + " is closed");
}

void check_prescription(const Prescription& rx, const FeatureCatalog& catalog) {
  if (rx.values.empty()) throw ValidationError("missing prescription");
  const auto report = taxonomy::validate_prescription(rx, catalog);
  if (!report.ok()) {
    for (const auto& f : report.findings()) {
      if (f.severity == Severity::error) throw ValidationError("invalid prescription: " + f.message);
    }
  }
}

std::chrono::year_month_day parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || s.size() != 10) {
    throw ValidationError("date must be YYYY-MM-DD, got '" + s + "'");
  }
  const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw ValidationError("invalid date '" + s + "'");
  return date;
}

// Calendar month addition; the day is clamped to the end of a shorter month.
std::chrono::sys_days add_months(std::chrono::year_month_day date, int months) {
  const auto ym = std::chrono::year_month{date.year(), date.month()} + std::chrono::months{months};
  const auto last = std::chrono::year_month_day_last{ym.year(), std::chrono::month_day_last{ym.month()}};
  return std::chrono::sys_days{std::chrono::year_month_day{ym.year(), ym.month(), std::min(date.day(), last.day())}};
}

}  // namespace

AdherenceReport adherence(double worn_hours, double ambulatory_hours, double goal_ratio) {
  if (!(ambulatory_hours > 0)) throw ValidationError("ambulatory hours must be positive");
  if (!(worn_hours >= 0)) throw ValidationError("worn hours must not be negative");
  if (worn_hours > ambulatory_hours) throw ValidationError("worn hours exceed ambulatory hours");
  return {worn_hours, ambulatory_hours, goal_ratio};
}

TrialState apply(TrialState state, const Event& event) {
  const json& p = event.payload;
  try {
    if (event.type == "started") {
      if (state.phase != Phase::not_started) throw ConflictError("trial " + state.trial_id + " already started");
      state.patient_id = p.at("patient_id").get<std::string>();
      state.baseline_recordings = p.value("baseline_recordings", std::vector<std::string>{});
      Prescription rx = p.at("prescription").get<Prescription>();
      rx.version = 1;
      const VisitRecord visit = visit_from_json(p.at("visit"));
      if (visit.label != "T0") throw ValidationError("a trial starts at T0");
      check_visit(state, visit);
      state.prescriptions.push_back(std::move(rx));
      state.visits.push_back(visit);
      state.phase = Phase::baseline;
    } else if (event.type == "fitted") {
      require_open(state);
      if (state.phase != Phase::baseline) throw ConflictError("fitting is only recorded once, after baseline");
      const VisitRecord visit = visit_from_json(p.at("visit"));
      check_visit(state, visit);
      state.visits.push_back(visit);
      state.phase = Phase::fitted;
    } else if (event.type == "modified") {
      require_open(state);
      if (state.phase == Phase::baseline) throw ConflictError("must fit before modifying");
      if (state.round >= max_rounds) throw ConflictError("modification rounds exhausted");
      const VisitRecord visit = visit_from_json(p.at("visit"));
      check_visit(state, visit);
      Prescription rx = p.at("prescription").get<Prescription>();
      rx.version = static_cast<int>(state.prescriptions.size()) + 1;
      state.prescriptions.push_back(std::move(rx));
      state.evaluations.push_back(pressure::report_from_json(p.at("evaluation")));
      state.visits.push_back(visit);
      state.round += 1;
      state.phase = Phase::mod_round;
    } else if (event.type == "visit") {
      require_open(state);
      if (state.phase == Phase::baseline) throw ConflictError("must fit before follow-up visits");
      const VisitRecord visit = visit_from_json(p.at("visit"));
      check_visit(state, visit);
      state.visits.push_back(visit);
    } else if (event.type == "closed") {
      require_open(state);
      const CloseReason reason = parse_close_reason(p.at("reason").get<std::string>());
      if (reason == CloseReason::rounds_exhausted && state.round < max_rounds) {
        throw ConflictError("rounds are not exhausted");
      }
      if (reason == CloseReason::goal_met && (state.evaluations.empty() || !state.evaluations.back().met())) {
        throw ConflictError("goal not met by the latest evaluation");
      }
      state.reason = reason;
      state.phase = Phase::closed;
    } else {
      throw ValidationError("unknown trial event '" + event.type + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed " + event.type + " event: " + e.what());
  }
  return state;
}

Trial::Trial(std::string trial_id) : trial_id_(std::move(trial_id)) {
  if (trial_id_.empty()) throw ValidationError("trial id must not be empty");
  state_.trial_id = trial_id_;
}

Trial Trial::replay(std::string trial_id, const std::vector<Event>& events) {
  Trial trial(std::move(trial_id));
  for (const Event& e : events) trial.append(e);
  return trial;
}

void Trial::append(Event event) {
  state_ = apply(state_, event);  // a copy: a rejected event must leave the state intact
  events_.push_back(std::move(event));
}

void Trial::start(const std::string& patient_id, const std::vector<std::string>& baseline_recordings,
                  const Prescription& prescription, const std::string& date, const FeatureCatalog& catalog,
                  const std::string& timestamp) {
  if (state_.phase != Phase::not_started) throw ConflictError("trial " + trial_id_ + " already started");
  if (patient_id.empty()) throw ValidationError("patient id must not be empty");
  check_prescription(prescription, catalog);
  VisitRecord t0{"T0", date, std::nullopt, std::nullopt, {}};
  append({"started",
          {{"patient_id", patient_id},
           {"baseline_recordings", baseline_recordings},
           {"prescription", prescription},
           {"visit", visit_to_json(t0)}},
          timestamp});
}

void Trial::record_fitting(const VisitRecord& visit, const std::string& timestamp) {
  append({"fitted", {{"visit", visit_to_json(visit)}}, timestamp});
}

void Trial::record_modification(const Prescription& prescription, const pressure::OffloadReport& evaluation,
                                const VisitRecord& visit, const FeatureCatalog& catalog,
                                const std::string& timestamp) {
  require_open(state_);
  if (state_.phase == Phase::baseline) throw ConflictError("must fit before modifying");
  if (state_.round >= max_rounds) {
    append({"closed", {{"reason", to_string(CloseReason::rounds_exhausted)}}, timestamp});
    throw ConflictError("modification rounds exhausted");
  }
  check_prescription(prescription, catalog);
  append({"modified",
          {{"prescription", prescription},
           {"evaluation", pressure::report_to_json(evaluation)},
           {"visit", visit_to_json(visit)}},
          timestamp});
  if (evaluation.met()) append({"closed", {{"reason", to_string(CloseReason::goal_met)}}, timestamp});
}

void Trial::record_visit(const VisitRecord& visit, const std::string& timestamp) {
  append({"visit", {{"visit", visit_to_json(visit)}}, timestamp});
}

void Trial::withdraw(const std::string& notes, const std::string& timestamp) {
  append({"closed", {{"reason", to_string(CloseReason::withdrawn)}, {"notes", notes}}, timestamp});
}

MaintenanceStatus maintenance_due(const std::string& last_replacement, const std::string& today,
                                  std::pair<int, int> window) {
  if (window.first < 0 || window.second < window.first) throw ValidationError("invalid maintenance window");
  const auto last = parse_date(last_replacement);
  const auto now = parse_date(today);
  const std::chrono::sys_days now_days{now};
  if (now_days < std::chrono::sys_days{last}) throw ValidationError("today precedes the last replacement");
  MaintenanceStatus status;
  status.window = window;
  while (add_months(last, status.elapsed_months + 1) <= now_days) ++status.elapsed_months;
  status.due = now_days >= add_months(last, window.first);
  status.overdue = now_days > add_months(last, window.second);
  return status;
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::not_started: return "NotStarted";
    case Phase::baseline: return "Baseline";
    case Phase::fitted: return "Fitted";
    case Phase::mod_round: return "ModRound";
    case Phase::closed: return "Closed";
  }
  return "NotStarted";
}

std::string to_string(CloseReason reason) {
  switch (reason) {
    case CloseReason::goal_met: return "goal_met";
    case CloseReason::rounds_exhausted: return "rounds_exhausted";
    case CloseReason::withdrawn: return "withdrawn";
  }
  return "withdrawn";
}

CloseReason parse_close_reason(const std::string& s) {
  if (s == "goal_met") return CloseReason::goal_met;
  if (s == "rounds_exhausted") return CloseReason::rounds_exhausted;
  if (s == "withdrawn") return CloseReason::withdrawn;
  throw ValidationError("unknown close reason '" + s + "'");
}

json visit_to_json(const VisitRecord& visit) {
  json j{{"label", visit.label}, {"date", visit.date}, {"notes", visit.notes}};
  j["satisfaction"] = visit.satisfaction ? json(*visit.satisfaction) : json(nullptr);
  if (visit.adherence) {
    j["adherence"] = {{"worn_hours", visit.adherence->worn_hours},
                      {"ambulatory_hours", visit.adherence->ambulatory_hours},
                      {"ratio", visit.adherence->ratio()},
                      {"goal_met", visit.adherence->goal_met()}};
  } else {
    j["adherence"] = nullptr;
  }
  return j;
}

VisitRecord visit_from_json(const json& j) {
  VisitRecord v;
  try {
    v.label = j.at("label").get<std::string>();
    v.date = j.value("date", std::string{});
    v.notes = j.value("notes", std::string{});
    if (j.contains("satisfaction") && !j.at("satisfaction").is_null()) v.satisfaction = j.at("satisfaction").get<int>();
    if (j.contains("adherence") && !j.at("adherence").is_null()) {
      const json& a = j.at("adherence");
      v.adherence = adherence(a.at("worn_hours").get<double>(), a.at("ambulatory_hours").get<double>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed visit: ") + e.what());
  }
  label_index(v.label);
  if (!v.date.empty()) parse_date(v.date);
  return v;
}

json event_to_json(const Event& event) {
  return {{"event", event.type}, {"payload", event.payload}, {"timestamp", event.timestamp}};
}

Event event_from_json(const json& j) {
  try {
    return {j.at("event").get<std::string>(), j.value("payload", json::object()), j.value("timestamp", std::string{})};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed event: ") + e.what());
  }
}

json events_to_json(const std::vector<Event>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back(event_to_json(e));
  return out;
}

std::vector<Event> events_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("event log must be a JSON array");
  std::vector<Event> out;
  for (const auto& e : j) out.push_back(event_from_json(e));
  return out;
}

json state_to_json(const TrialState& state) {
  json prescriptions = json::array();
  for (const auto& rx : state.prescriptions) prescriptions.push_back(rx);
  json evaluations = json::array();
  for (const auto& e : state.evaluations) evaluations.push_back(pressure::report_to_json(e));
  json visits = json::array();
  for (const auto& v : state.visits) visits.push_back(visit_to_json(v));
  json j{{"trial_id", state.trial_id},
         {"patient_id", state.patient_id},
         {"state", to_string(state.phase)},
         {"round", state.round},
         {"rounds_remaining", max_rounds - state.round},
         {"baseline_recordings", state.baseline_recordings},
         {"prescriptions", prescriptions},
         {"evaluations", evaluations},
         {"visits", visits}};
  j["reason"] = state.reason ? json(to_string(*state.reason)) : json(nullptr);
  return j;
}

}  // namespace pedocds::trial
