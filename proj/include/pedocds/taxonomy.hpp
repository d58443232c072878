#pragma once

// Coded feature space for footwear and insole prescription: the catalog of
// input/output features, patient profiles over the inputs and prescriptions
// over the outputs.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pedocds/validation.hpp"

namespace pedocds::taxonomy {

enum class FeatureKind { input, output };
enum class FeatureGroup { person, diagnosis, fund, footwear, insole, evaluation };

struct CodeDef {
  std::string code;
  std::string description;
  std::string notes;

  bool operator==(const CodeDef&) const = default;
};

struct FeatureDef {
  std::string id;
  std::string name;
  FeatureKind kind = FeatureKind::input;
  FeatureGroup group = FeatureGroup::person;
  bool multivalued = false;
  std::vector<CodeDef> codes;

  bool has_code(std::string_view code) const;
  bool operator==(const FeatureDef&) const = default;
};

/// A set of codes for one feature. std::set keeps lexicographic order,
/// which is also the serialization order.
using CodeSet = std::set<std::string>;

/// Immutable after construction. Construction enforces every catalog invariant.
class FeatureCatalog {
 public:
  FeatureCatalog(std::string version, std::vector<FeatureDef> features);

  const std::string& version() const noexcept { return version_; }
  const std::vector<FeatureDef>& features() const noexcept { return features_; }

  const FeatureDef* find(std::string_view id) const;
  const FeatureDef& at(std::string_view id) const;  // throws NotFoundError

  /// Resolves a code through its alphabetic prefix ("FCPA4" -> FCPA).
  const FeatureDef* feature_of_code(std::string_view code) const;

  std::vector<const FeatureDef*> inputs() const;
  std::vector<const FeatureDef*> outputs() const;

  bool operator==(const FeatureCatalog&) const = default;

 private:
  std::string version_;
  std::vector<FeatureDef> features_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// The nine decision inputs and thirty decision outputs every catalog must carry.
const std::vector<std::string>& required_inputs();
const std::vector<std::string>& required_outputs();

FeatureCatalog load_catalog(std::string_view document);
FeatureCatalog load_catalog_file(const std::string& path);
nlohmann::json catalog_to_json(const FeatureCatalog& catalog);

/// Splits "FCPA4" into ("FCPA", 4); nullopt when the string is not PREFIX+INT.
std::optional<std::pair<std::string, int>> split_code(std::string_view code);

enum class Laterality { left, right, bilateral };

struct PatientProfile {
  std::string patient_id;
  std::map<std::string, CodeSet> values;
  std::map<std::string, Laterality> laterality;  // keyed by code, MFP only
  std::string free_notes;

  bool operator==(const PatientProfile&) const = default;
};

enum class Origin { rule, model, default_value, clinician };

struct DecisionSource {
  Origin origin = Origin::clinician;
  std::string detail;  // rule name or model id
  std::optional<double> confidence;
  std::string timestamp;

  static DecisionSource rule(std::string name) { return {Origin::rule, std::move(name), {}, {}}; }
  static DecisionSource model(std::string id, double confidence) {
    return {Origin::model, std::move(id), confidence, {}};
  }
  static DecisionSource fallback() { return {Origin::default_value, {}, {}, {}}; }
  static DecisionSource clinician() { return {Origin::clinician, {}, {}, {}}; }

  bool operator==(const DecisionSource&) const = default;
};

struct Prescription {
  std::map<std::string, CodeSet> values;
  std::map<std::string, DecisionSource> sources;
  int version = 1;

  void set(const std::string& feature, CodeSet codes, DecisionSource source);
  bool operator==(const Prescription&) const = default;
};

enum class ValidationMode { strict, partial };

ValidationReport validate_profile(const PatientProfile& profile, const FeatureCatalog& catalog,
                                  ValidationMode mode = ValidationMode::strict);

/// Strict mode additionally requires every output feature of the catalog.
ValidationReport validate_prescription(const Prescription& rx, const FeatureCatalog& catalog,
                                       ValidationMode mode = ValidationMode::partial);

std::string to_string(FeatureKind kind);
std::string to_string(FeatureGroup group);
std::string to_string(Origin origin);
std::string to_string(Laterality laterality);

void to_json(nlohmann::json& j, const PatientProfile& p);
void from_json(const nlohmann::json& j, PatientProfile& p);
void to_json(nlohmann::json& j, const DecisionSource& s);
void from_json(const nlohmann::json& j, DecisionSource& s);
void to_json(nlohmann::json& j, const Prescription& rx);
void from_json(const nlohmann::json& j, Prescription& rx);

}  // namespace pedocds::taxonomy
