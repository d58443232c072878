// pedocds: command-line front end for the prescription engine.
// Exit codes: 0 success, 1 validation findings, 2 errors.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pedocds/error.hpp"
#include "pedocds/geometry.hpp"
#include "pedocds/platform.hpp"
#include "pedocds/pressure.hpp"
#include "pedocds/recommender.hpp"
#include "pedocds/ruledsl.hpp"
#include "pedocds/taxonomy.hpp"
#include "pedocds/trial.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pedocds;

namespace {

constexpr int exit_findings = 1;
constexpr int exit_error = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

std::string join(const taxonomy::CodeSet& codes) {
  std::string out;
  for (const auto& c : codes) out += (out.empty() ? "" : ", ") + c;
  return out;
}

std::string describe(const taxonomy::DecisionSource& s) {
  switch (s.origin) {
    case taxonomy::Origin::rule: return "RULE " + s.detail;
    case taxonomy::Origin::model: return "MODEL " + s.detail + " (" + fmt(*s.confidence, 3) + ")";
    case taxonomy::Origin::default_value: return "DEFAULT";
    case taxonomy::Origin::clinician: return "CLINICIAN";
  }
  return "";
}

void print_report(const ValidationReport& report) {
  for (const auto& f : report.findings()) {
    std::cout << to_string(f.severity) << ": " << f.subject << ": " << f.message;
    if (!f.tag.empty()) std::cout << " [" << f.tag << "]";
    std::cout << "\n";
  }
}

struct Common {
  std::string data_dir;
  bool json_out = false;

  fs::path data() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("PEDOCDS_DATA"); env && *env) return env;
    return "data";
  }
  platform::Config config() const { return platform::load_config(data(), !data_dir.empty()); }
  taxonomy::FeatureCatalog catalog(const std::string& override_path = {}) const {
    if (!override_path.empty()) return taxonomy::load_catalog_file(override_path);
    const auto c = config();
    return taxonomy::load_catalog_file(c.resolve(c.catalog_file).string());
  }
};

int emit_sheet(const Common& common, const json& sheet) {
  if (common.json_out) {
    std::cout << sheet.dump(2) << "\n";
  } else {
    for (const auto& [key, value] : sheet.items()) {
      if (key == "validation") continue;
      std::cout << key << ": " << value.dump() << "\n";
    }
    for (const auto& f : sheet.at("validation").at("findings")) {
      std::cout << f.at("severity").get<std::string>() << ": " << f.at("message").get<std::string>() << "\n";
    }
  }
  return sheet.at("validation").at("ok").get<bool>() ? 0 : exit_findings;
}

trial::VisitRecord visit_from(const std::string& label, const std::string& date, int satisfaction, double worn,
                              double ambulatory) {
  trial::VisitRecord v;
  v.label = label;
  v.date = date;
  if (satisfaction > 0) v.satisfaction = satisfaction;
  if (ambulatory > 0) v.adherence = trial::adherence(worn, ambulatory);
  return v;
}

trial::Trial load_trial(const std::string& log) {
  const json j = read_json(log);
  return trial::Trial::replay(j.at("trial_id").get<std::string>(), trial::events_from_json(j.at("events")));
}

void save_trial(const std::string& log, const trial::Trial& t) {
  write_text(log, json{{"trial_id", t.state().trial_id}, {"events", trial::events_to_json(t.events())}}.dump(2) + "\n");
}

int show_trial(const Common& common, const trial::Trial& t) {
  const auto& s = t.state();
  if (common.json_out) {
    std::cout << trial::state_to_json(s).dump(2) << "\n";
    return 0;
  }
  std::cout << "trial " << s.trial_id << " (patient " << s.patient_id << "): " << trial::to_string(s.phase);
  if (s.phase == trial::Phase::mod_round) std::cout << " " << s.round;
  if (s.reason) std::cout << " (" << trial::to_string(*s.reason) << ")";
  std::cout << "\nrounds used: " << s.round << "/" << trial::max_rounds
            << ", prescription versions: " << s.prescriptions.size() << "\n";
  for (const auto& v : s.visits) {
    std::cout << "  " << v.label << " " << v.date;
    if (v.satisfaction) std::cout << " satisfaction " << *v.satisfaction;
    if (v.adherence) {
      std::cout << " adherence " << fmt(v.adherence->ratio(), 3) << (v.adherence->goal_met() ? " (goal met)" : " (below goal)");
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Footwear and insole prescription engine"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--data", common.data_dir, "Data directory (default: $PEDOCDS_DATA or ./data)");
  app.add_flag("--json", common.json_out, "Machine-readable output");

  int rc = 0;

  // catalog validate
  auto* catalog_cmd = app.add_subcommand("catalog", "Feature catalog");
  catalog_cmd->require_subcommand(1);
  std::string catalog_file;
  auto* catalog_validate = catalog_cmd->add_subcommand("validate", "Check a catalog file");
  catalog_validate->add_option("file", catalog_file)->required();
  catalog_validate->callback([&] {
    const auto c = taxonomy::load_catalog_file(catalog_file);
    if (common.json_out) {
      std::cout << json{{"ok", true}, {"version", c.version()}, {"inputs", c.inputs().size()},
                        {"outputs", c.outputs().size()}}.dump(2) << "\n";
    } else {
      std::cout << "ok: catalog " << c.version() << " with " << c.inputs().size() << " inputs and "
                << c.outputs().size() << " outputs\n";
    }
  });

  // rules check
  auto* rules_cmd = app.add_subcommand("rules", "Rule files");
  rules_cmd->require_subcommand(1);
  std::string rules_file;
  std::string rules_catalog;
  bool rules_print = false;
  auto* rules_check = rules_cmd->add_subcommand("check", "Parse and check a rule file");
  rules_check->add_option("file", rules_file)->required();
  rules_check->add_option("--catalog", rules_catalog);
  rules_check->add_flag("--print", rules_print, "Print the rules in canonical form");
  rules_check->callback([&] {
    const auto c = common.catalog(rules_catalog);
    ruledsl::RuleSet rules;
    try {
      rules = ruledsl::parse_rules(read_text(rules_file), c);
    } catch (const ParseError& e) {
      throw ValidationError(rules_file + ":" + e.what());
    }
    if (rules_print) {
      std::cout << ruledsl::print_rules(rules);
    } else if (common.json_out) {
      json names = json::array();
      for (const auto& r : rules.rules) names.push_back(r.name);
      std::cout << json{{"ok", true}, {"rules", names}}.dump(2) << "\n";
    } else {
      std::cout << "ok: " << rules.rules.size() << " rules\n";
    }
  });

  // recommend
  auto* rec_cmd = app.add_subcommand("recommend", "Recommend a prescription for a profile");
  std::string rec_profile;
  std::string rec_rules;
  std::string rec_models;
  std::string rec_policy;
  bool rec_explain = false;
  rec_cmd->add_option("--profile", rec_profile)->required();
  rec_cmd->add_option("--rules", rec_rules, "Rule file (default: the shipped rules)");
  rec_cmd->add_option("--models", rec_models, "Model directory (default: the shipped models)");
  rec_cmd->add_option("--policy", rec_policy, "Policy JSON file");
  rec_cmd->add_flag("--explain", rec_explain);
  rec_cmd->callback([&] {
    const auto cfg = common.config();
    const auto c = taxonomy::load_catalog_file(cfg.resolve(cfg.catalog_file).string());
    const auto profile = read_json(rec_profile).get<taxonomy::PatientProfile>();
    const auto report = taxonomy::validate_profile(profile, c);
    if (!report.ok()) {
      print_report(report);
      rc = exit_findings;
      return;
    }
    const auto rules = ruledsl::load_rules_file(rec_rules.empty() ? cfg.resolve(cfg.rules_file).string() : rec_rules, c);
    const auto models = platform::load_models_dir(rec_models.empty() ? cfg.resolve(cfg.models_dir) : fs::path(rec_models));
    const auto policy = rec_policy.empty() ? cfg.policy : recommender::policy_from_json(read_json(rec_policy));
    const auto rec = recommender::recommend(profile, rules, models, policy, c);
    if (common.json_out) {
      json out = recommender::recommendation_to_json(rec);
      if (rec_explain) {
        json ex = json::object();
        for (const auto* f : c.outputs()) ex[f->id] = ruledsl::explain(rec.trace, f->id);
        out["explanations"] = ex;
      }
      std::cout << out.dump(2) << "\n";
      return;
    }
    for (const auto* f : c.outputs()) {
      std::cout << std::left << std::setw(9) << f->id;
      auto it = rec.prescription.values.find(f->id);
      if (it == rec.prescription.values.end()) {
        std::cout << "(abstained)\n";
      } else {
        std::cout << std::setw(18) << join(it->second) << describe(rec.prescription.sources.at(f->id)) << "\n";
      }
      if (rec_explain) {
        std::istringstream lines(ruledsl::explain(rec.trace, f->id));
        for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
      }
    }
    std::cout << rec.prescription.values.size() << "/" << c.outputs().size() << " features resolved\n";
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train per-feature models");
  std::string train_dataset;
  std::string train_target = "all";
  std::string train_kind = "tree";
  std::string train_out;
  std::uint64_t train_seed = 42;
  int train_trees = 25;
  train_cmd->add_option("--dataset", train_dataset)->required();
  train_cmd->add_option("--target", train_target, "Output feature or 'all'");
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--kind", train_kind)->check(CLI::IsMember({"tree", "forest"}));
  train_cmd->add_option("--trees", train_trees, "Forest size");
  train_cmd->add_option("--out", train_out, "Directory for model files");
  train_cmd->callback([&] {
    const auto c = common.catalog();
    const auto ds = recommender::load_dataset_file(train_dataset, c);
    recommender::TrainingSpec spec;
    spec.kind = train_kind == "tree" ? recommender::ModelKind::tree : recommender::ModelKind::forest;
    spec.seed = train_seed;
    spec.forest.n_trees = train_trees;
    std::vector<std::string> targets;
    if (train_target == "all") {
      for (const auto* f : c.outputs()) {
        if (!recommender::with_target(ds, f->id).records.empty()) targets.push_back(f->id);
      }
    } else {
      targets.push_back(train_target);
    }
    const auto models = recommender::train_models(ds, targets, spec, c);
    if (!train_out.empty()) fs::create_directories(train_out);
    json summary = json::array();
    for (const auto& [target, model] : models) {
      const json j = recommender::model_to_json(model);
      if (!train_out.empty()) write_text((fs::path(train_out) / (model.id + ".json")).string(), j.dump(1) + "\n");
      summary.push_back({{"id", model.id}, {"target", target}});
      if (!common.json_out) std::cout << "trained " << model.id << "\n";
    }
    if (common.json_out) std::cout << summary.dump(2) << "\n";
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate per-feature models");
  std::string eval_dataset;
  std::string eval_protocol = "loo";
  std::string eval_kind = "tree";
  std::uint64_t eval_seed = 42;
  eval_cmd->add_option("--dataset", eval_dataset)->required();
  eval_cmd->add_option("--protocol", eval_protocol);
  eval_cmd->add_option("--kind", eval_kind)->check(CLI::IsMember({"tree", "forest"}));
  eval_cmd->add_option("--seed", eval_seed);
  eval_cmd->callback([&] {
    const auto c = common.catalog();
    const auto ds = recommender::load_dataset_file(eval_dataset, c);
    recommender::TrainingSpec spec;
    spec.kind = eval_kind == "tree" ? recommender::ModelKind::tree : recommender::ModelKind::forest;
    spec.seed = eval_seed;
    const auto table = recommender::evaluate_models(ds, recommender::parse_protocol(eval_protocol), spec, c);
    if (common.json_out) {
      std::cout << recommender::accuracy_to_json(table).dump(2) << "\n";
      return;
    }
    for (const auto& row : table.rows) {
      std::cout << std::left << std::setw(9) << row.feature
                << (row.accuracy ? fmt(*row.accuracy, 4) : std::string("n/a")) << "  (" << row.evaluated << " records)\n";
    }
    std::cout << "macro average: " << fmt(table.macro_average, 4) << "\n";
  });

  // geom
  auto* geom_cmd = app.add_subcommand("geom", "Design geometry sheets");
  geom_cmd->require_subcommand(1);
  double foot_length = 0;
  double shoe_length = 0;
  double mth_line = 0;
  std::string sex = "unspecified";
  geometry::RockerCodes rocker_codes;
  auto* geom_rocker = geom_cmd->add_subcommand("rocker", "Rocker profile");
  geom_rocker->add_option("--foot-length", foot_length)->required();
  geom_rocker->add_option("--shoe-length", shoe_length, "Shoe interior length")->required();
  geom_rocker->add_option("--mth-line", mth_line, "MTH line from the heel");
  geom_rocker->add_option("--fwt", rocker_codes.footwear_type);
  geom_rocker->add_option("--fwrap", rocker_codes.apex_position);
  geom_rocker->add_option("--fwraa", rocker_codes.apex_direction);
  geom_rocker->add_option("--fwrang", rocker_codes.severity);
  geom_rocker->callback([&] {
    const auto k = common.config().constants;
    geometry::FootMeasurements m;
    m.foot_length = units::Millimetres(foot_length);
    if (mth_line > 0) m.mth_line_from_heel = units::Millimetres(mth_line);
    const auto spec = geometry::rocker_spec(m, units::Millimetres(shoe_length), rocker_codes, k);
    rc = emit_sheet(common, geometry::design_sheet(spec, geometry::validate_rocker(spec, k)));
  });

  std::string fwt = "FWT2";
  std::string insblm = "INSBLM1";
  std::string insmlm = "INSMLM1";
  std::string instlm = "INSTLM1";
  geometry::InsoleOptions insole_opts;
  auto* geom_insole = geom_cmd->add_subcommand("insole", "Insole layer stack");
  geom_insole->add_option("--fwt", fwt);
  geom_insole->add_option("--insblm", insblm);
  geom_insole->add_option("--insmlm", insmlm);
  geom_insole->add_option("--instlm", instlm);
  geom_insole->add_flag("--printed-base", insole_opts.printed_base);
  geom_insole->add_flag("--dual-density", insole_opts.dual_density_base);
  geom_insole->callback([&] {
    const auto k = common.config().constants;
    const auto stack = geometry::insole_stack_spec(fwt, insblm, insmlm, instlm, k, insole_opts);
    rc = emit_sheet(common, geometry::design_sheet(stack, geometry::validate_insole_stack(stack, k, insole_opts)));
  });

  geometry::MetAdditionRequest met;
  double met_top_cover = 0;
  double met_thickness = 0;
  double met_hardness = 0;
  auto* geom_met = geom_cmd->add_subcommand("met", "Metatarsal addition placement");
  geom_met->add_option("--mth-line", mth_line)->required();
  geom_met->add_option("--insma", met.addition);
  geom_met->add_option("--insmap", met.position);
  geom_met->add_option("--top-cover", met_top_cover, "Top cover thickness (mm)");
  geom_met->add_option("--thickness", met_thickness);
  geom_met->add_option("--hardness", met_hardness);
  geom_met->callback([&] {
    met.mth_line_from_heel = units::Millimetres(mth_line);
    met.top_cover_thickness = units::Millimetres(met_top_cover);
    if (met_thickness > 0) met.thickness = units::Millimetres(met_thickness);
    if (met_hardness > 0) met.hardness = units::ShoreA(met_hardness);
    rc = emit_sheet(common, geometry::design_sheet(geometry::met_addition_placement(met, common.config().constants)));
  });

  bool oedema = false;
  auto* geom_fit = geom_cmd->add_subcommand("fit", "Fit and toe allowance check");
  geom_fit->add_option("--foot-length", foot_length)->required();
  geom_fit->add_option("--shoe-length", shoe_length)->required();
  geom_fit->add_flag("--oedema", oedema);
  geom_fit->callback([&] {
    geometry::FootMeasurements m;
    m.foot_length = units::Millimetres(foot_length);
    const auto report = geometry::fit_check(m, units::Millimetres(shoe_length), oedema, common.config().constants);
    rc = emit_sheet(common, json{{"sheet", "fit"}, {"toe_allowance_mm", shoe_length - foot_length}, {"validation", report}});
  });

  std::string fwhh = "FWHH1";
  double lift = 0;
  auto* geom_heel = geom_cmd->add_subcommand("heel", "Heel height");
  geom_heel->add_option("--sex", sex)->check(CLI::IsMember({"male", "female", "unspecified"}));
  geom_heel->add_option("--fwhh", fwhh);
  geom_heel->add_option("--fwt", fwt);
  geom_heel->add_option("--lift", lift);
  geom_heel->callback([&] {
    std::optional<units::Millimetres> requested;
    if (lift > 0) requested = units::Millimetres(lift);
    rc = emit_sheet(common, geometry::design_sheet(geometry::heel_height_spec(geometry::parse_sex(sex), fwhh, fwt,
                                                                              common.config().constants, requested)));
  });

  // pressure compare
  auto* pressure_cmd = app.add_subcommand("pressure", "Plantar pressure analysis");
  pressure_cmd->require_subcommand(1);
  std::string baseline_csv;
  std::string intervention_csv;
  std::string target_spec;
  std::string side = "right";
  auto* pressure_compare = pressure_cmd->add_subcommand("compare", "Baseline vs intervention offloading");
  pressure_compare->add_option("--baseline", baseline_csv)->required();
  pressure_compare->add_option("--intervention", intervention_csv)->required();
  pressure_compare->add_option("--target", target_spec, "e.g. 'reduction>=30|ppp<=200@forefoot'");
  pressure_compare->add_option("--side", side)->check(CLI::IsMember({"left", "right"}));
  pressure_compare->callback([&] {
    const auto cfg = common.config();
    pressure::RecordingMeta meta;
    meta.side = pressure::parse_side(side);
    meta.label = "baseline";
    const auto b = pressure::parse_recording(read_text(baseline_csv), meta);
    meta.label = "intervention";
    const auto i = pressure::parse_recording(read_text(intervention_csv), meta);
    const auto target = target_spec.empty() ? cfg.target : pressure::parse_target(target_spec);
    const auto report = pressure::compare(b, i, target, cfg.zoning, cfg.contact_threshold);
    if (common.json_out) {
      std::cout << pressure::report_to_json(report).dump(2) << "\n";
      return;
    }
    std::cout << "target: " << pressure::to_string(target) << "\n";
    for (const auto& z : report.zones) {
      std::cout << std::left << std::setw(9) << z.zone << "PPP " << fmt(z.ppp_baseline) << " -> "
                << fmt(z.ppp_intervention) << " kPa, "
                << (z.ppp_reduction_pct ? fmt(*z.ppp_reduction_pct) + "% reduction" : std::string("reduction n/a"));
      if (z.pti_baseline && z.pti_intervention) {
        std::cout << ", PTI " << fmt(*z.pti_baseline) << " -> " << fmt(*z.pti_intervention) << " kPa*s";
      }
      std::cout << ", contact " << fmt(z.contact_area_baseline) << " -> " << fmt(z.contact_area_intervention) << " cm2";
      if (z.targeted) std::cout << (z.met ? " [met]" : " [not met]");
      std::cout << "\n";
    }
    std::cout << (report.met() ? "goal met\n" : "goal not met\n");
  });

  // trial
  auto* trial_cmd = app.add_subcommand("trial", "N-of-1 fitting trial (event log file)");
  trial_cmd->require_subcommand(1);
  std::string log;
  std::string trial_id;
  std::string patient;
  std::string rx_file;
  std::string date;
  std::string label;
  int satisfaction = 0;
  double worn = 0;
  double ambulatory = 0;
  std::string notes;

  auto* trial_start = trial_cmd->add_subcommand("start", "Open a trial at T0");
  trial_start->add_option("--log", log)->required();
  trial_start->add_option("--id", trial_id)->required();
  trial_start->add_option("--patient", patient)->required();
  trial_start->add_option("--prescription", rx_file)->required();
  trial_start->add_option("--date", date);
  trial_start->callback([&] {
    if (fs::exists(log)) throw ConflictError("trial log " + log + " already exists");
    trial::Trial t(trial_id);
    t.start(patient, {}, read_json(rx_file).get<taxonomy::Prescription>(), date, common.catalog(), platform::utc_now());
    save_trial(log, t);
    show_trial(common, t);
  });

  auto add_visit_options = [&](CLI::App* cmd) {
    cmd->add_option("--log", log)->required();
    cmd->add_option("--label", label)->required();
    cmd->add_option("--date", date);
    cmd->add_option("--satisfaction", satisfaction);
    cmd->add_option("--worn", worn, "Hours per day the footwear is worn");
    cmd->add_option("--ambulatory", ambulatory, "Ambulatory hours per day");
  };

  auto* trial_fit = trial_cmd->add_subcommand("fit", "Record the fitting visit");
  add_visit_options(trial_fit);
  trial_fit->callback([&] {
    auto t = load_trial(log);
    t.record_fitting(visit_from(label, date, satisfaction, worn, ambulatory), platform::utc_now());
    save_trial(log, t);
    show_trial(common, t);
  });

  auto* trial_modify = trial_cmd->add_subcommand("modify", "Record a modification round");
  add_visit_options(trial_modify);
  trial_modify->add_option("--prescription", rx_file, "Modified prescription (default: unchanged)");
  trial_modify->add_option("--baseline", baseline_csv)->required();
  trial_modify->add_option("--intervention", intervention_csv)->required();
  trial_modify->add_option("--target", target_spec);
  trial_modify->callback([&] {
    const auto cfg = common.config();
    auto t = load_trial(log);
    const auto rx = rx_file.empty() ? t.state().prescriptions.back() : read_json(rx_file).get<taxonomy::Prescription>();
    const auto target = target_spec.empty() ? cfg.target : pressure::parse_target(target_spec);
    const auto report = pressure::compare(pressure::parse_recording(read_text(baseline_csv)),
                                          pressure::parse_recording(read_text(intervention_csv)), target, cfg.zoning,
                                          cfg.contact_threshold);
    try {
      t.record_modification(rx, report, visit_from(label, date, satisfaction, worn, ambulatory),
                            taxonomy::load_catalog_file(cfg.resolve(cfg.catalog_file).string()), platform::utc_now());
    } catch (const ConflictError&) {
      save_trial(log, t);
      throw;
    }
    save_trial(log, t);
    show_trial(common, t);
  });

  auto* trial_visit = trial_cmd->add_subcommand("visit", "Record a follow-up visit without modification");
  add_visit_options(trial_visit);
  trial_visit->callback([&] {
    auto t = load_trial(log);
    t.record_visit(visit_from(label, date, satisfaction, worn, ambulatory), platform::utc_now());
    save_trial(log, t);
    show_trial(common, t);
  });

  auto* trial_withdraw = trial_cmd->add_subcommand("withdraw", "Close the trial as withdrawn");
  trial_withdraw->add_option("--log", log)->required();
  trial_withdraw->add_option("--notes", notes);
  trial_withdraw->callback([&] {
    auto t = load_trial(log);
    t.withdraw(notes, platform::utc_now());
    save_trial(log, t);
    show_trial(common, t);
  });

  auto* trial_show = trial_cmd->add_subcommand("show", "Replay and print a trial");
  trial_show->add_option("--log", log)->required();
  trial_show->callback([&] { show_trial(common, load_trial(log)); });

  auto* trial_adherence = trial_cmd->add_subcommand("adherence", "Wear-time adherence against the >80% goal");
  trial_adherence->add_option("--worn", worn)->required();
  trial_adherence->add_option("--ambulatory", ambulatory)->required();
  trial_adherence->callback([&] {
    const auto a = trial::adherence(worn, ambulatory);
    if (common.json_out) {
      std::cout << json{{"ratio", a.ratio()}, {"goal_met", a.goal_met()}}.dump(2) << "\n";
    } else {
      std::cout << "ratio " << fmt(a.ratio(), 4) << (a.goal_met() ? ": goal met\n" : ": goal not met\n");
    }
  });

  std::string last_replacement;
  std::string today;
  auto* trial_maint = trial_cmd->add_subcommand("maintenance", "Top cover replacement status");
  trial_maint->add_option("--last", last_replacement)->required();
  trial_maint->add_option("--today", today)->required();
  trial_maint->callback([&] {
    const auto k = common.config().constants;
    const auto s = trial::maintenance_due(last_replacement, today, k.top_cover_replace_months);
    if (common.json_out) {
      std::cout << json{{"due", s.due}, {"overdue", s.overdue}, {"elapsed_months", s.elapsed_months},
                        {"window", {s.window.first, s.window.second}}}.dump(2) << "\n";
    } else {
      std::cout << s.elapsed_months << " months elapsed: "
                << (s.overdue ? "overdue" : s.due ? "due" : "not due") << "\n";
    }
  });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1";
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--host", host);
  std::string store_dir;
  serve_cmd->add_option("--store", store_dir, "Record store directory (default from config)");
  serve_cmd->callback([&] {
    auto config = common.config();
    if (!store_dir.empty()) config.store_dir = store_dir;
    platform::Service service(config);
    std::cerr << "serving " << common.data() << " on http://" << host << ":" << port << "\n";
    platform::serve(service, host, port);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_error;
  }
  return rc;
}
