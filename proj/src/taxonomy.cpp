#include "pedocds/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "pedocds/error.hpp"

namespace pedocds::taxonomy {

using nlohmann::json;

namespace {

const std::set<std::string>& required_multivalued() {
  static const std::set<std::string> ids{"MFP", "CM", "PMS", "INSMOD"};
  return ids;
}

bool is_upper_alpha(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= 'A' && c <= 'Z'; });
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "input") return FeatureKind::input;
  if (s == "output") return FeatureKind::output;
  throw ValidationError("malformed document: unknown feature kind '" + s + "'");
}

FeatureGroup parse_group(const std::string& s) {
  static const std::map<std::string, FeatureGroup> groups{
      {"person", FeatureGroup::person},     {"diagnosis", FeatureGroup::diagnosis},
      {"fund", FeatureGroup::fund},         {"footwear", FeatureGroup::footwear},
      {"insole", FeatureGroup::insole},     {"evaluation", FeatureGroup::evaluation}};
  auto it = groups.find(s);
  if (it == groups.end()) throw ValidationError("malformed document: unknown feature group '" + s + "'");
  return it->second;
}

Origin parse_origin(const std::string& s) {
  if (s == "RULE") return Origin::rule;
  if (s == "MODEL") return Origin::model;
  if (s == "DEFAULT") return Origin::default_value;
  if (s == "CLINICIAN") return Origin::clinician;
  throw ValidationError("unknown decision origin '" + s + "'");
}

Laterality parse_laterality(const std::string& s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  if (s == "bilateral") return Laterality::bilateral;
  throw ValidationError("unknown laterality '" + s + "'");
}

CodeSet codes_from_json(const json& j) {
  CodeSet out;
  if (j.is_string()) {
    out.insert(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& c : j) out.insert(c.get<std::string>());
  } else {
    throw ValidationError("code set must be a string or an array of strings");
  }
  return out;
}

void check_codes(const std::string& feature, const CodeSet& codes, const FeatureCatalog& catalog,
                 FeatureKind expected, ValidationReport& report) {
  const FeatureDef* def = catalog.find(feature);
  if (def == nullptr) {
    report.error(feature, "unknown feature " + feature);
    return;
  }
  if (def->kind != expected) {
    report.error(feature, feature + " is an " + to_string(def->kind) + " feature");
    return;
  }
  if (codes.empty()) report.error(feature, feature + " has no codes");
  if (!def->multivalued && codes.size() > 1) report.error(feature, feature + " is single-valued");
  for (const auto& code : codes) {
    if (!def->has_code(code)) report.error(feature, "unknown code " + code + " for " + feature);
  }
}

}  // namespace

bool FeatureDef::has_code(std::string_view code) const {
  return std::any_of(codes.begin(), codes.end(), [&](const CodeDef& c) { return c.code == code; });
}

std::optional<std::pair<std::string, int>> split_code(std::string_view code) {
  std::size_t i = 0;
  while (i < code.size() && std::isupper(static_cast<unsigned char>(code[i]))) ++i;
  if (i == 0 || i == code.size()) return std::nullopt;
  int value = 0;
  for (std::size_t k = i; k < code.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(code[k]))) return std::nullopt;
    if (value > 100000) return std::nullopt;
    value = value * 10 + (code[k] - '0');
  }
  if (code[i] == '0' || value < 1) return std::nullopt;
  return std::make_pair(std::string(code.substr(0, i)), value);
}

const std::vector<std::string>& required_inputs() {
  static const std::vector<std::string> ids{"PPIA", "FSS", "MFP", "CM", "PBW",
                                            "PMS",  "FCPA", "FO", "FOIS"};
  return ids;
}

const std::vector<std::string>& required_outputs() {
  static const std::vector<std::string> ids{
      "FWT",    "FWS",    "FWUP",    "FWL",   "FFS",   "FWUFL",   "FWUSL",   "FWTFL",
      "FWHC",   "FWHH",   "FWHM",    "FWOS",  "FWRP",  "FWRAP",   "FWRAA",   "FWRANG",
      "INST",   "CMINS",  "INSBLM",  "INSMLM", "INSTLM", "INSHC",  "INSHW",   "INSMLAH",
      "INSMA",  "INSMAP", "INSMATH", "INSMAMAT", "INSMOD", "POEM"};
  return ids;
}

FeatureCatalog::FeatureCatalog(std::string version, std::vector<FeatureDef> features)
    : version_(std::move(version)), features_(std::move(features)) {
  std::set<std::string> seen_codes;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const FeatureDef& f = features_[i];
    if (!is_upper_alpha(f.id)) throw ValidationError("feature id '" + f.id + "' must be uppercase alphabetic");
    if (!index_.emplace(f.id, i).second) throw ValidationError("duplicate feature " + f.id);
    if (f.codes.empty()) throw ValidationError("feature " + f.id + " has no codes");
    for (std::size_t k = 0; k < f.codes.size(); ++k) {
      const std::string& code = f.codes[k].code;
      if (!seen_codes.insert(code).second) throw ValidationError("duplicate code " + code);
      auto parts = split_code(code);
      if (!parts || parts->first != f.id) {
        throw ValidationError("code " + code + " does not belong to feature " + f.id);
      }
      if (parts->second != static_cast<int>(k) + 1) {
        throw ValidationError("non-contiguous codes in " + f.id + ": expected " + f.id +
                              std::to_string(k + 1) + ", found " + code);
      }
    }
  }

  int inputs = 0;
  for (const auto& f : features_) inputs += f.kind == FeatureKind::input ? 1 : 0;
  for (const auto& id : required_inputs()) {
    const FeatureDef* f = find(id);
    if (f == nullptr) throw ValidationError("missing required feature " + id);
    if (f->kind != FeatureKind::input) throw ValidationError(id + " must be an input feature");
  }
  if (inputs != static_cast<int>(required_inputs().size())) {
    throw ValidationError("catalog must contain exactly " + std::to_string(required_inputs().size()) +
                          " input features");
  }
  for (const auto& id : required_outputs()) {
    const FeatureDef* f = find(id);
    if (f == nullptr) throw ValidationError("missing required feature " + id);
    if (f->kind != FeatureKind::output) throw ValidationError(id + " must be an output feature");
  }
  for (const auto& f : features_) {
    const bool want = required_multivalued().count(f.id) > 0;
    if (f.multivalued != want) {
      throw ValidationError(f.id + (want ? " must be multivalued" : " must be single-valued"));
    }
  }
}

const FeatureDef* FeatureCatalog::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &features_[it->second];
}

const FeatureDef& FeatureCatalog::at(std::string_view id) const {
  const FeatureDef* f = find(id);
  if (f == nullptr) throw NotFoundError("unknown feature " + std::string(id));
  return *f;
}

const FeatureDef* FeatureCatalog::feature_of_code(std::string_view code) const {
  auto parts = split_code(code);
  if (!parts) return nullptr;
  const FeatureDef* f = find(parts->first);
  return (f != nullptr && f->has_code(code)) ? f : nullptr;
}

std::vector<const FeatureDef*> FeatureCatalog::inputs() const {
  std::vector<const FeatureDef*> out;
  for (const auto& f : features_)
    if (f.kind == FeatureKind::input) out.push_back(&f);
  return out;
}

std::vector<const FeatureDef*> FeatureCatalog::outputs() const {
  std::vector<const FeatureDef*> out;
  for (const auto& f : features_)
    if (f.kind == FeatureKind::output) out.push_back(&f);
  return out;
}

FeatureCatalog load_catalog(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed document: ") + e.what());
  }
  try {
    std::vector<FeatureDef> features;
    for (const auto& jf : doc.at("features")) {
      FeatureDef f;
      f.id = jf.at("id").get<std::string>();
      f.name = jf.value("name", f.id);
      f.kind = parse_kind(jf.at("kind").get<std::string>());
      f.group = parse_group(jf.at("group").get<std::string>());
      f.multivalued = jf.value("multivalued", false);
      for (const auto& jc : jf.at("codes")) {
        f.codes.push_back({jc.at("code").get<std::string>(), jc.value("description", std::string{}),
                           jc.value("notes", std::string{})});
      }
      features.push_back(std::move(f));
    }
    return FeatureCatalog(doc.at("version").get<std::string>(), std::move(features));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed document: ") + e.what());
  }
}

FeatureCatalog load_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open catalog file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_catalog(buffer.str());
}

json catalog_to_json(const FeatureCatalog& catalog) {
  json features = json::array();
  for (const auto& f : catalog.features()) {
    json codes = json::array();
    for (const auto& c : f.codes) {
      json jc{{"code", c.code}, {"description", c.description}};
      if (!c.notes.empty()) jc["notes"] = c.notes;
      codes.push_back(std::move(jc));
    }
    features.push_back({{"id", f.id},
                        {"name", f.name},
                        {"kind", to_string(f.kind)},
                        {"group", to_string(f.group)},
                        {"multivalued", f.multivalued},
                        {"codes", std::move(codes)}});
  }
  return {{"version", catalog.version()}, {"features", std::move(features)}};
}

void Prescription::set(const std::string& feature, CodeSet codes, DecisionSource source) {
  values[feature] = std::move(codes);
  sources[feature] = std::move(source);
}

ValidationReport validate_profile(const PatientProfile& profile, const FeatureCatalog& catalog,
                                  ValidationMode mode) {
  ValidationReport report;
  for (const auto& [feature, codes] : profile.values) {
    check_codes(feature, codes, catalog, FeatureKind::input, report);
  }
  if (mode == ValidationMode::strict) {
    for (const FeatureDef* f : catalog.inputs()) {
      if (profile.values.count(f->id) == 0) report.error(f->id, "missing feature " + f->id);
    }
  }
  for (const auto& [code, side] : profile.laterality) {
    auto it = profile.values.find("MFP");
    if (it == profile.values.end() || it->second.count(code) == 0) {
      report.error("MFP", "laterality given for " + code + " which is not in the profile's MFP");
    }
  }
  return report;
}

ValidationReport validate_prescription(const Prescription& rx, const FeatureCatalog& catalog,
                                       ValidationMode mode) {
  ValidationReport report;
  if (rx.version < 1) report.error("version", "prescription version must be >= 1");
  for (const auto& [feature, codes] : rx.values) {
    check_codes(feature, codes, catalog, FeatureKind::output, report);
    if (rx.sources.count(feature) == 0) report.error(feature, "no decision source for " + feature);
  }
  for (const auto& [feature, source] : rx.sources) {
    if (rx.values.count(feature) == 0) report.error(feature, "decision source without value for " + feature);
    if (source.confidence.has_value() != (source.origin == Origin::model)) {
      report.error(feature, "confidence must be present exactly for MODEL sources");
    }
    if (source.confidence && (*source.confidence < 0.0 || *source.confidence > 1.0)) {
      report.error(feature, "confidence outside [0, 1]");
    }
  }
  if (mode == ValidationMode::strict) {
    for (const FeatureDef* f : catalog.outputs()) {
      if (rx.values.count(f->id) == 0) report.error(f->id, "missing feature " + f->id);
    }
  }
  return report;
}

std::string to_string(FeatureKind kind) { return kind == FeatureKind::input ? "input" : "output"; }

std::string to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::person: return "person";
    case FeatureGroup::diagnosis: return "diagnosis";
    case FeatureGroup::fund: return "fund";
    case FeatureGroup::footwear: return "footwear";
    case FeatureGroup::insole: return "insole";
    case FeatureGroup::evaluation: return "evaluation";
  }
  return "person";
}

std::string to_string(Origin origin) {
  switch (origin) {
    case Origin::rule: return "RULE";
    case Origin::model: return "MODEL";
    case Origin::default_value: return "DEFAULT";
    case Origin::clinician: return "CLINICIAN";
  }
  return "CLINICIAN";
}

std::string to_string(Laterality laterality) {
  switch (laterality) {
    case Laterality::left: return "left";
    case Laterality::right: return "right";
    case Laterality::bilateral: return "bilateral";
  }
  return "bilateral";
}

void to_json(json& j, const PatientProfile& p) {
  json values = json::object();
  for (const auto& [feature, codes] : p.values) values[feature] = codes;
  j = json{{"patient_id", p.patient_id}, {"values", std::move(values)}};
  if (!p.laterality.empty()) {
    json lat = json::object();
    for (const auto& [code, side] : p.laterality) lat[code] = to_string(side);
    j["laterality"] = std::move(lat);
  }
  if (!p.free_notes.empty()) j["free_notes"] = p.free_notes;
}

void from_json(const json& j, PatientProfile& p) {
  p = PatientProfile{};
  p.patient_id = j.value("patient_id", std::string{});
  for (const auto& [feature, codes] : j.at("values").items()) p.values[feature] = codes_from_json(codes);
  if (j.contains("laterality")) {
    for (const auto& [code, side] : j.at("laterality").items()) {
      p.laterality[code] = parse_laterality(side.get<std::string>());
    }
  }
  p.free_notes = j.value("free_notes", std::string{});
}

void to_json(json& j, const DecisionSource& s) {
  j = json{{"origin", to_string(s.origin)}};
  if (s.origin == Origin::rule) j["rule"] = s.detail;
  if (s.origin == Origin::model) j["model"] = s.detail;
  if (s.confidence) j["confidence"] = *s.confidence;
  if (!s.timestamp.empty()) j["timestamp"] = s.timestamp;
}

void from_json(const json& j, DecisionSource& s) {
  s = DecisionSource{};
  s.origin = parse_origin(j.at("origin").get<std::string>());
  if (s.origin == Origin::rule) s.detail = j.value("rule", std::string{});
  if (s.origin == Origin::model) s.detail = j.value("model", std::string{});
  if (j.contains("confidence")) s.confidence = j.at("confidence").get<double>();
  s.timestamp = j.value("timestamp", std::string{});
}

void to_json(json& j, const Prescription& rx) {
  json values = json::object();
  for (const auto& [feature, codes] : rx.values) values[feature] = codes;
  json sources = json::object();
  for (const auto& [feature, source] : rx.sources) sources[feature] = source;
  j = json{{"version", rx.version}, {"values", std::move(values)}, {"sources", std::move(sources)}};
}

void from_json(const json& j, Prescription& rx) {
  rx = Prescription{};
  rx.version = j.value("version", 1);
  for (const auto& [feature, codes] : j.at("values").items()) rx.values[feature] = codes_from_json(codes);
  if (j.contains("sources")) {
    for (const auto& [feature, source] : j.at("sources").items()) {
      rx.sources[feature] = source.get<DecisionSource>();
    }
  } else {
    for (const auto& [feature, codes] : rx.values) rx.sources[feature] = DecisionSource::clinician();
  }
}

}  // namespace pedocds::taxonomy
