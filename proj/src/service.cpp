#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pedocds/error.hpp"
#include "pedocds/platform.hpp"
#include "pedocds/trial.hpp"

namespace pedocds::platform {

using nlohmann::json;
using taxonomy::CodeSet;
using taxonomy::PatientProfile;
using taxonomy::Prescription;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("request body is not JSON: ") + e.what());
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::optional<int> optional_version(const json& body) {
  if (body.contains("version") && !body.at("version").is_null()) return body.at("version").get<int>();
  return std::nullopt;
}

std::optional<int> query_version(const std::map<std::string, std::string>& query) {
  auto it = query.find("version");
  if (it == query.end()) return std::nullopt;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ValidationError("version must be an integer");
  }
}

template <class Q>
std::optional<Q> optional_quantity(const json& j, const char* key) {
  if (j.contains(key) && !j.at(key).is_null()) return Q(j.at(key).get<double>());
  return std::nullopt;
}

geometry::FootMeasurements foot_from_json(const json& j) {
  geometry::FootMeasurements m;
  m.foot_length = units::Millimetres(j.at("length").get<double>());
  m.foot_width = units::Millimetres(j.value("width", 0.0));
  m.mth1_from_heel = optional_quantity<units::Millimetres>(j, "mth1");
  m.mth2_from_heel = optional_quantity<units::Millimetres>(j, "mth2");
  m.mth_line_from_heel = optional_quantity<units::Millimetres>(j, "mth_line");
  m.sex = geometry::parse_sex(j.value("sex", std::string("unspecified")));
  m.body_weight_kg = j.value("body_weight_kg", 0.0);
  return m;
}

json source_json(const Prescription& rx, const std::string& feature) {
  auto it = rx.sources.find(feature);
  return it == rx.sources.end() ? json(nullptr) : json(it->second);
}

json codes_json(const Prescription& rx, const std::string& feature) {
  auto it = rx.values.find(feature);
  return it == rx.values.end() ? json(nullptr) : json(it->second);
}

recommender::TrainingSpec training_spec_from_json(const json& j) {
  recommender::TrainingSpec spec;
  const std::string kind = j.value("kind", std::string("tree"));
  if (kind == "tree") {
    spec.kind = recommender::ModelKind::tree;
  } else if (kind == "forest") {
    spec.kind = recommender::ModelKind::forest;
  } else {
    throw ValidationError("unknown model kind '" + kind + "'");
  }
  spec.seed = j.value("seed", spec.seed);
  const json params = j.value("params", json::object());
  spec.tree.max_depth = params.value("max_depth", spec.tree.max_depth);
  spec.tree.min_samples_leaf = params.value("min_samples_leaf", spec.tree.min_samples_leaf);
  spec.forest.tree = spec.tree;
  spec.forest.n_trees = params.value("n_trees", spec.forest.n_trees);
  spec.forest.feature_subsample = params.value("feature_subsample", spec.forest.feature_subsample);
  spec.forest.bootstrap = params.value("bootstrap", spec.forest.bootstrap);
  return spec;
}

json training_spec_to_json(const recommender::TrainingSpec& spec) {
  return {{"kind", spec.kind == recommender::ModelKind::tree ? "tree" : "forest"},
          {"seed", spec.seed},
          {"params",
           {{"max_depth", spec.tree.max_depth},
            {"min_samples_leaf", spec.tree.min_samples_leaf},
            {"n_trees", spec.forest.n_trees},
            {"feature_subsample", spec.forest.feature_subsample},
            {"bootstrap", spec.forest.bootstrap}}}};
}

}  // namespace

// ---------------------------------------------------------------- config

Config load_config(std::optional<fs::path> data_dir, bool ignore_env) {
  Config c;
  const char* env = ignore_env ? nullptr : std::getenv("PEDOCDS_DATA");
  if (env && *env) {
    c.data_dir = env;
  } else if (data_dir) {
    c.data_dir = *data_dir;
  } else {
    c.data_dir = "data";
  }
  c.store_dir = c.data_dir / "store";
  const fs::path file = c.data_dir / "config.json";
  if (!fs::exists(file)) return c;
  json j;
  try {
    j = json::parse(read_text(file));
    if (j.contains("catalog")) c.catalog_file = j.at("catalog").get<std::string>();
    if (j.contains("rules")) c.rules_file = j.at("rules").get<std::string>();
    if (j.contains("models")) c.models_dir = j.at("models").get<std::string>();
    if (j.contains("store")) c.store_dir = c.resolve(j.at("store").get<std::string>());
    if (j.contains("design_constants")) {
      const json& k = j.at("design_constants");
      c.constants = k.is_string() ? geometry::load_constants_file(c.resolve(k.get<std::string>()).string())
                                  : geometry::DesignConstants::from_json(k);
    }
    if (j.contains("pressure")) {
      const json& p = j.at("pressure");
      if (p.contains("target")) c.target = pressure::target_from_json(p.at("target"));
      c.contact_threshold = p.value("contact_threshold_kpa", c.contact_threshold);
      if (p.contains("zoning")) {
        const json& z = p.at("zoning");
        c.zoning.heel_end_pct = z.value("heel_end_pct", c.zoning.heel_end_pct);
        c.zoning.midfoot_end_pct = z.value("midfoot_end_pct", c.zoning.midfoot_end_pct);
        c.zoning.mth_end_pct = z.value("mth_end_pct", c.zoning.mth_end_pct);
      }
    }
    if (j.contains("policy")) c.policy = recommender::policy_from_json(j.at("policy"));
  } catch (const json::exception& e) {
    throw ValidationError("malformed config " + file.string() + ": " + e.what());
  }
  return c;
}

std::map<std::string, recommender::Model> load_models_dir(const fs::path& dir) {
  std::map<std::string, recommender::Model> models;
  if (!fs::is_directory(dir)) return models;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_text(f));
    } catch (const json::parse_error& e) {
      throw ValidationError("malformed model file " + f.string() + ": " + e.what());
    }
    recommender::Model m = recommender::model_from_json(j);
    const std::string target = m.target();
    if (!models.emplace(target, std::move(m)).second) {
      throw ValidationError("two models in " + dir.string() + " predict " + target);
    }
  }
  return models;
}

int status_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::validation: return 400;
      case ErrorKind::not_found: return 404;
      case ErrorKind::conflict: return 409;
    }
  }
  if (dynamic_cast<const json::exception*>(&e)) return 400;
  return 500;
}

// ---------------------------------------------------------------- service

Service::Service(Config config, Store::Clock clock)
    : config_(std::move(config)),
      catalog_(taxonomy::load_catalog_file(config_.resolve(config_.catalog_file).string())),
      rules_(ruledsl::load_rules_file(config_.resolve(config_.rules_file).string(), catalog_)),
      store_(config_.store_dir.empty() ? config_.data_dir / "store" : config_.store_dir, std::move(clock)) {
  for (auto& [target, model] : load_models_dir(config_.resolve(config_.models_dir))) {
    if (!catalog_.find(target)) throw ValidationError("default model " + model.id + " predicts unknown " + target);
    models_.emplace(target, std::move(model));
  }
}

Response Service::handle(const Request& request) {
  Response response;
  int status = 200;
  try {
    json out = route(request, status);
    response.status = status;
    response.body = out.dump();
  } catch (const std::exception& e) {
    response.status = status_for(e);
    response.body = json{{"error", e.what()}, {"status", response.status}}.dump();
  }
  return response;
}

json Service::route(const Request& request, int& status) {
  const auto parts = split_path(request.path);
  const std::string& m = request.method;
  auto body = [&] { return parse_body(request.body); };
  auto method_guard = [&](const char* allowed) {
    if (m != allowed) throw ValidationError("method " + m + " not allowed on " + request.path);
  };
  if (parts.empty()) throw NotFoundError("no route for " + request.path);
  const std::string& head = parts[0];

  if (head == "catalog" && parts.size() == 1) {
    method_guard("GET");
    return taxonomy::catalog_to_json(catalog_);
  }
  if ((head == "profiles" || head == "datasets" || head == "rulesets" || head == "recordings") && parts.size() == 2) {
    method_guard("GET");
    const std::string kind = head == "profiles"   ? "profile"
                             : head == "datasets" ? "dataset"
                             : head == "rulesets" ? "ruleset"
                                                  : "recording";
    return envelope_to_json(store_.get(kind, parts[1], query_version(request.query)));
  }
  if (head == "profiles" && parts.size() == 1) {
    if (m == "GET") return store_.list("profile");
    method_guard("POST");
    return post_profile(body(), status);
  }
  if (head == "datasets" && parts.size() == 1) {
    if (m == "GET") return store_.list("dataset");
    method_guard("POST");
    return post_dataset(body(), status);
  }
  if (head == "rulesets" && parts.size() == 1) {
    if (m == "GET") return store_.list("ruleset");
    method_guard("POST");
    return post_ruleset(body(), status);
  }
  if (head == "recommend" && parts.size() == 1) {
    method_guard("POST");
    return recommend(body());
  }
  if (head == "whatif" && parts.size() == 1) {
    method_guard("POST");
    return whatif(body());
  }
  if (head == "geometry" && parts.size() == 2) {
    method_guard("POST");
    return geometry(parts[1], body());
  }
  if (head == "pressure" && parts.size() == 2 && parts[1] == "recordings") {
    if (m == "GET") return store_.list("recording");
    method_guard("POST");
    return post_recording(request, status);
  }
  if (head == "pressure" && parts.size() == 3 && parts[1] == "recordings") {
    method_guard("GET");
    return envelope_to_json(store_.get("recording", parts[2], query_version(request.query)));
  }
  if (head == "pressure" && parts.size() == 2 && parts[1] == "compare") {
    method_guard("POST");
    return compare(body());
  }
  if (head == "trials" && parts.size() == 1) {
    if (m == "GET") return store_.list("trial");
    method_guard("POST");
    return post_trial(body(), status);
  }
  if (head == "trials" && parts.size() == 2) {
    method_guard("GET");
    return get_trial(parts[1]);
  }
  if (head == "trials" && parts.size() == 3 && parts[2] == "events") {
    if (m == "GET") return get_trial(parts[1]).at("events");
    method_guard("POST");
    return post_trial_event(parts[1], body());
  }
  if (head == "models" && parts.size() == 1) {
    if (m == "GET") {
      json out = json::object();
      out["stored"] = store_.list("model");
      json defaults = json::array();
      for (const auto& [target, model] : models_) defaults.push_back(model.id);
      out["defaults"] = defaults;
      return out;
    }
    throw NotFoundError("no route for " + m + " " + request.path);
  }
  if (head == "models" && parts.size() == 2 && parts[1] == "train") {
    method_guard("POST");
    return train(body(), status);
  }
  if (head == "models" && parts.size() == 2) {
    method_guard("GET");
    // A trained model shadows a shipped default with the same id.
    if (store_.exists("model", parts[1])) {
      return envelope_to_json(store_.get("model", parts[1], query_version(request.query)));
    }
    for (const auto& [target, model] : models_) {
      if (model.id == parts[1]) return {{"id", model.id}, {"default", true}, {"model", model_to_json(model)}};
    }
    throw NotFoundError("model " + parts[1] + " not found");
  }
  if (head == "models" && parts.size() == 3 && parts[2] == "eval") {
    method_guard("GET");
    return eval_model(parts[1], request.query);
  }
  throw NotFoundError("no route for " + m + " " + request.path);
}

json Service::post_profile(const json& body, int& status) {
  const json doc = body.contains("profile") ? body.at("profile") : body;
  PatientProfile profile = doc.get<PatientProfile>();
  if (profile.patient_id.empty()) profile.patient_id = body.value("id", std::string{});
  if (profile.patient_id.empty()) throw ValidationError("profile needs a patient_id");
  const auto report = taxonomy::validate_profile(profile, catalog_);
  if (!report.ok()) {
    status = 400;
    return {{"error", "invalid profile"}, {"status", 400}, {"validation", report}};
  }
  status = 201;
  return envelope_to_json(store_.put("profile", profile.patient_id, profile, optional_version(body)));
}

json Service::post_dataset(const json& body, int& status) {
  const std::string id = body.at("id").get<std::string>();
  const recommender::Dataset dataset = recommender::load_dataset(body.at("records"), catalog_);
  status = 201;
  return envelope_to_json(store_.put("dataset", id, recommender::dataset_to_json(dataset), optional_version(body)));
}

json Service::post_ruleset(const json& body, int& status) {
  const std::string id = body.at("id").get<std::string>();
  const std::string text = body.at("text").get<std::string>();
  const ruledsl::RuleSet rules = ruledsl::parse_rules(text, catalog_);
  status = 201;
  json stored{{"text", text}, {"catalog_version", catalog_.version()}, {"rules", rules.rules.size()}};
  return envelope_to_json(store_.put("ruleset", id, stored, optional_version(body)));
}

PatientProfile Service::resolve_profile(const json& body) const {
  PatientProfile profile;
  if (body.contains("profile")) {
    profile = body.at("profile").get<PatientProfile>();
  } else if (body.contains("profile_id")) {
    const auto id = body.at("profile_id").get<std::string>();
    std::optional<int> version;
    if (body.contains("profile_version")) version = body.at("profile_version").get<int>();
    profile = store_.get("profile", id, version).body.get<PatientProfile>();
  } else {
    throw ValidationError("request needs profile or profile_id");
  }
  const auto report = taxonomy::validate_profile(profile, catalog_);
  if (!report.ok()) {
    for (const auto& f : report.findings()) {
      if (f.severity == Severity::error) throw ValidationError("invalid profile: " + f.message);
    }
  }
  return profile;
}

ruledsl::RuleSet Service::resolve_rules(const json& body) const {
  if (!body.contains("ruleset_id") || body.at("ruleset_id").is_null()) return rules_;
  const auto env = store_.get("ruleset", body.at("ruleset_id").get<std::string>());
  return ruledsl::parse_rules(env.body.at("text").get<std::string>(), catalog_);
}

std::map<std::string, recommender::Model> Service::resolve_models(const json& body) const {
  if (!body.contains("model_ids") || body.at("model_ids").is_null()) return models_;
  std::map<std::string, recommender::Model> out;
  for (const auto& id_json : body.at("model_ids")) {
    const std::string id = id_json.get<std::string>();
    std::optional<recommender::Model> model;
    if (store_.exists("model", id)) {
      model = recommender::model_from_json(store_.get("model", id).body.at("model"));
    } else {
      for (const auto& [target, m] : models_) {
        if (m.id == id) model = m;
      }
    }
    if (!model) throw NotFoundError("model " + id + " not found");
    const std::string target = model->target();
    if (!out.emplace(target, std::move(*model)).second) {
      throw ValidationError("two requested models predict " + target);
    }
  }
  return out;
}

recommender::Policy Service::resolve_policy(const json& body) const {
  if (!body.contains("policy") || body.at("policy").is_null()) return config_.policy;
  return recommender::policy_from_json(body.at("policy"));
}

json Service::recommend(const json& body) {
  const PatientProfile profile = resolve_profile(body);
  const auto rec = recommender::recommend(profile, resolve_rules(body), resolve_models(body), resolve_policy(body),
                                          catalog_);
  json out = recommender::recommendation_to_json(rec);
  if (body.value("explain", false)) {
    json explanations = json::object();
    for (const auto* f : catalog_.outputs()) explanations[f->id] = ruledsl::explain(rec.trace, f->id);
    out["explanations"] = explanations;
  }
  return out;
}

json Service::whatif(const json& body) {
  PatientProfile base = resolve_profile(body);
  PatientProfile changed = base;
  if (body.contains("overrides")) {
    for (const auto& [feature, codes] : body.at("overrides").items()) {
      if (codes.is_null()) {
        changed.values.erase(feature);
      } else {
        changed.values[feature] = codes.is_string() ? CodeSet{codes.get<std::string>()} : codes.get<CodeSet>();
      }
    }
  }
  const auto report = taxonomy::validate_profile(changed, catalog_);
  if (!report.ok()) {
    for (const auto& f : report.findings()) {
      if (f.severity == Severity::error) throw ValidationError("invalid override: " + f.message);
    }
  }
  const auto rules = resolve_rules(body);
  const auto models = resolve_models(body);
  const auto policy = resolve_policy(body);
  const auto before = recommender::recommend(base, rules, models, policy, catalog_);
  const auto after = recommender::recommend(changed, rules, models, policy, catalog_);
  json diff = json::object();
  for (const auto* f : catalog_.outputs()) {
    const json b{{"codes", codes_json(before.prescription, f->id)}, {"source", source_json(before.prescription, f->id)}};
    const json a{{"codes", codes_json(after.prescription, f->id)}, {"source", source_json(after.prescription, f->id)}};
    diff[f->id] = {{"changed", a != b}, {"before", b}, {"after", a}};
  }
  return {{"base", recommender::recommendation_to_json(before)},
          {"recommendation", recommender::recommendation_to_json(after)},
          {"profile", changed},
          {"diff", diff}};
}

json Service::geometry(const std::string& which, const json& body) {
  using units::Millimetres;
  using units::ShoreA;
  const auto& k = config_.constants;
  if (which == "rocker") {
    geometry::RockerCodes codes;
    const json c = body.value("codes", json::object());
    codes.footwear_type = c.value("FWT", codes.footwear_type);
    codes.apex_position = c.value("FWRAP", codes.apex_position);
    codes.apex_direction = c.value("FWRAA", codes.apex_direction);
    codes.severity = c.value("FWRANG", codes.severity);
    const auto spec = geometry::rocker_spec(foot_from_json(body.at("foot")),
                                            Millimetres(body.at("shoe_interior_length").get<double>()), codes, k);
    return geometry::design_sheet(spec, geometry::validate_rocker(spec, k));
  }
  if (which == "insole") {
    geometry::InsoleOptions opts;
    opts.printed_base = body.value("printed_base", false);
    opts.dual_density_base = body.value("dual_density_base", false);
    const auto stack = geometry::insole_stack_spec(body.at("FWT").get<std::string>(), body.at("INSBLM").get<std::string>(),
                                                   body.at("INSMLM").get<std::string>(),
                                                   body.at("INSTLM").get<std::string>(), k, opts);
    return geometry::design_sheet(stack, geometry::validate_insole_stack(stack, k, opts));
  }
  if (which == "met-addition") {
    geometry::MetAdditionRequest r;
    r.mth_line_from_heel = Millimetres(body.at("mth_line").get<double>());
    r.addition = body.value("INSMA", r.addition);
    r.position = body.value("INSMAP", r.position);
    r.top_cover_thickness = Millimetres(body.value("top_cover_thickness", 0.0));
    if (body.contains("shift_factor")) r.shift_factor = body.at("shift_factor").get<double>();
    r.thickness = optional_quantity<Millimetres>(body, "thickness");
    r.hardness = optional_quantity<ShoreA>(body, "hardness");
    return geometry::design_sheet(geometry::met_addition_placement(r, k));
  }
  if (which == "fit") {
    const auto foot = foot_from_json(body.at("foot"));
    const Millimetres interior(body.at("shoe_interior_length").get<double>());
    const auto report = geometry::fit_check(foot, interior, body.value("oedema", false), k);
    return {{"sheet", "fit"},
            {"toe_allowance_mm", (interior - foot.foot_length).value()},
            {"ok", report.ok()},
            {"validation", report}};
  }
  if (which == "heel") {
    const auto spec = geometry::heel_height_spec(geometry::parse_sex(body.value("sex", std::string("unspecified"))),
                                                 body.at("FWHH").get<std::string>(), body.value("FWT", std::string("FWT2")),
                                                 k, optional_quantity<Millimetres>(body, "lift"));
    return geometry::design_sheet(spec);
  }
  if (which == "mla") {
    return geometry::design_sheet(geometry::mla_spec(Millimetres(body.at("cast_height").get<double>()),
                                                     body.value("INSMLAH", std::string("INSMLAH1")), k,
                                                     optional_quantity<Millimetres>(body, "addition")));
  }
  if (which == "cutout") {
    const json& roi = body.at("roi");
    geometry::RegionOfInterest r{Millimetres(roi.value("x", 0.0)), Millimetres(roi.value("y", 0.0)),
                                 Millimetres(roi.at("radius").get<double>())};
    return geometry::design_sheet(geometry::cutout_spec(r, k, optional_quantity<Millimetres>(body, "margin"),
                                                        optional_quantity<ShoreA>(body, "pad_hardness")));
  }
  throw NotFoundError("no geometry sheet '" + which + "'");
}

json Service::post_recording(const Request& request, int& status) {
  json meta = json::object();
  std::string csv;
  if (request.content_type.rfind("text/csv", 0) == 0) {
    csv = request.body;
    for (const char* key : {"id", "side", "condition", "label"}) {
      if (auto it = request.query.find(key); it != request.query.end()) meta[key] = it->second;
    }
  } else {
    const json body = parse_body(request.body);
    csv = body.at("csv").get<std::string>();
    for (const char* key : {"id", "side", "condition", "label"}) {
      if (body.contains(key)) meta[key] = body.at(key);
    }
  }
  if (!meta.contains("id")) throw ValidationError("recording upload needs an id");
  pressure::RecordingMeta rm;
  rm.side = pressure::parse_side(meta.value("side", std::string("left")));
  rm.condition = pressure::parse_condition(meta.value("condition", std::string("in_shoe")));
  rm.label = meta.value("label", meta.at("id").get<std::string>());
  const auto rec = pressure::parse_recording(csv, rm);
  json stored{{"csv", csv},
              {"side", pressure::to_string(rm.side)},
              {"condition", pressure::to_string(rm.condition)},
              {"label", rm.label}};
  std::optional<int> version;
  if (auto it = request.query.find("version"); it != request.query.end()) version = std::stoi(it->second);
  const auto env = store_.put("recording", meta.at("id").get<std::string>(), stored, version);
  status = 201;
  return {{"id", env.id}, {"version", env.version}, {"created_at", env.created_at},
          {"summary", pressure::recording_summary(rec)}};
}

pressure::Recording Service::resolve_recording(const json& body, const std::string& key) const {
  if (body.contains(key + "_csv")) {
    pressure::RecordingMeta meta;
    meta.side = pressure::parse_side(body.value("side", std::string("left")));
    meta.label = key;
    return pressure::parse_recording(body.at(key + "_csv").get<std::string>(), meta);
  }
  if (!body.contains(key + "_id")) throw ValidationError("compare needs " + key + "_id or " + key + "_csv");
  const auto env = store_.get("recording", body.at(key + "_id").get<std::string>());
  pressure::RecordingMeta meta;
  meta.side = pressure::parse_side(env.body.value("side", std::string("left")));
  meta.condition = pressure::parse_condition(env.body.value("condition", std::string("in_shoe")));
  meta.label = env.body.value("label", env.id);
  return pressure::parse_recording(env.body.at("csv").get<std::string>(), meta);
}

pressure::OffloadReport Service::run_compare(const json& body) const {
  const auto baseline = resolve_recording(body, "baseline");
  const auto intervention = resolve_recording(body, "intervention");
  const auto target = body.contains("target") ? pressure::target_from_json(body.at("target")) : config_.target;
  const double threshold = body.value("contact_threshold_kpa", config_.contact_threshold);
  return pressure::compare(baseline, intervention, target, config_.zoning, threshold);
}

json Service::compare(const json& body) { return pressure::report_to_json(run_compare(body)); }

json Service::post_trial(const json& body, int& status) {
  const std::string id = body.at("trial_id").get<std::string>();
  Prescription rx;
  if (body.contains("prescription")) {
    rx = body.at("prescription").get<Prescription>();
  } else if (body.contains("prescription_id")) {
    rx = store_.get("prescription", body.at("prescription_id").get<std::string>()).body.get<Prescription>();
  } else {
    throw ValidationError("missing prescription");
  }
  auto guard = store_.lock("trial", id);
  if (store_.exists("trial", id)) throw ConflictError("trial " + id + " already started");
  trial::Trial t(id);
  t.start(body.at("patient_id").get<std::string>(), body.value("baseline_recordings", std::vector<std::string>{}),
          rx, body.value("date", std::string{}), catalog_, utc_now());
  store_.put(guard, "trial", id, trial::event_to_json(t.events().front()), 1);
  status = 201;
  return {{"state", trial::state_to_json(t.state())}, {"events", trial::events_to_json(t.events())}};
}

json Service::get_trial(const std::string& id) {
  std::vector<trial::Event> events;
  for (const auto& env : store_.history("trial", id)) events.push_back(trial::event_from_json(env.body));
  if (events.empty()) throw NotFoundError("trial " + id + " not found");
  const auto t = trial::Trial::replay(id, events);
  return {{"state", trial::state_to_json(t.state())}, {"events", trial::events_to_json(t.events())}};
}

json Service::post_trial_event(const std::string& id, const json& body) {
  auto guard = store_.lock("trial", id);
  std::vector<trial::Event> events;
  for (const auto& env : store_.history("trial", id)) events.push_back(trial::event_from_json(env.body));
  if (events.empty()) throw NotFoundError("trial " + id + " not found");
  const std::size_t before = events.size();
  if (body.contains("expected_version") && body.at("expected_version").get<std::size_t>() != before + 1) {
    throw ConflictError("trial " + id + " is at event " + std::to_string(before) + "; expected_version " +
                        std::to_string(body.at("expected_version").get<std::size_t>()) + " is stale");
  }
  trial::Trial t = trial::Trial::replay(id, events);
  const std::string type = body.at("type").get<std::string>();
  const std::string now = utc_now();
  auto visit = [&] { return trial::visit_from_json(body.at("visit")); };

  auto persist = [&] {
    for (std::size_t i = before; i < t.events().size(); ++i) {
      store_.put(guard, "trial", id, trial::event_to_json(t.events()[i]), static_cast<int>(i + 1));
    }
  };
  try {
    if (type == "fitting") {
      t.record_fitting(visit(), now);
    } else if (type == "modification") {
      Prescription rx;
      if (body.contains("prescription")) {
        rx = body.at("prescription").get<Prescription>();
      } else if (!t.state().prescriptions.empty()) {
        rx = t.state().prescriptions.back();
      }
      pressure::OffloadReport evaluation;
      if (body.contains("evaluation")) {
        evaluation = pressure::report_from_json(body.at("evaluation"));
      } else if (body.contains("compare")) {
        evaluation = run_compare(body.at("compare"));
      } else if (t.state().phase == trial::Phase::fitted ||
                 (t.state().phase == trial::Phase::mod_round && t.state().round < trial::max_rounds)) {
        throw ValidationError("modification needs an evaluation or a compare request");
      }
      t.record_modification(rx, evaluation, body.contains("visit") ? visit() : trial::VisitRecord{}, catalog_, now);
    } else if (type == "visit") {
      t.record_visit(visit(), now);
    } else if (type == "withdraw") {
      t.withdraw(body.value("notes", std::string{}), now);
    } else {
      throw ValidationError("unknown trial event type '" + type + "'");
    }
  } catch (const std::exception&) {
    persist();
    throw;
  }
  persist();
  return {{"state", trial::state_to_json(t.state())}, {"events", trial::events_to_json(t.events())}};
}

json Service::train(const json& body, int& status) {
  const std::string dataset_id = body.at("dataset_id").get<std::string>();
  const auto env = store_.get("dataset", dataset_id);
  const auto dataset = recommender::load_dataset(env.body, catalog_);
  const auto spec = training_spec_from_json(body);
  std::vector<std::string> targets;
  const json t = body.value("targets", json("all"));
  if (t.is_string() && t.get<std::string>() == "all") {
    for (const auto* f : catalog_.outputs()) {
      if (!recommender::with_target(dataset, f->id).records.empty()) targets.push_back(f->id);
    }
  } else {
    targets = t.is_string() ? std::vector<std::string>{t.get<std::string>()} : t.get<std::vector<std::string>>();
  }
  const auto models = recommender::train_models(dataset, targets, spec, catalog_);
  json out = json::array();
  for (const auto& [target, model] : models) {
    json stored{{"model", recommender::model_to_json(model)},
                {"dataset_id", dataset_id},
                {"dataset_version", env.version},
                {"training", training_spec_to_json(spec)}};
    const auto saved = store_.put("model", model.id, stored);
    out.push_back({{"id", saved.id}, {"version", saved.version}, {"target", target}});
  }
  status = 201;
  return {{"models", out}};
}

json Service::eval_model(const std::string& id, const std::map<std::string, std::string>& query) {
  const auto env = store_.get("model", id, query_version(query));
  const auto model = recommender::model_from_json(env.body.at("model"));
  const auto data_env = store_.get("dataset", env.body.at("dataset_id").get<std::string>(),
                                   env.body.at("dataset_version").get<int>());
  const auto dataset = recommender::load_dataset(data_env.body, catalog_);
  auto it = query.find("protocol");
  const auto protocol = recommender::parse_protocol(it == query.end() ? "loo" : it->second);
  const auto table = recommender::evaluate_models(dataset, protocol, training_spec_from_json(env.body.at("training")),
                                                  catalog_, {model.target()});
  json out = recommender::accuracy_to_json(table);
  out["model_id"] = id;
  out["protocol"] = protocol == recommender::Protocol::leave_one_out ? "loo" : "resubstitution";
  return out;
}

}  // namespace pedocds::platform
