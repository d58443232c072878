#pragma once

// Per-output-feature decision trees and random forests over coded profiles,
// and the composition of rules and models into a full prescription.
//
// Every internal node tests one input code for membership in the profile
// ("FCPA4 in profile[FCPA]?"), which handles single- and multivalued inputs
// alike. Candidate tests are enumerated in catalog order, then code order;
// the first candidate wins an impurity tie.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "pedocds/ruledsl.hpp"
#include "pedocds/taxonomy.hpp"

namespace pedocds::recommender {

using taxonomy::CodeSet;
using taxonomy::FeatureCatalog;
using taxonomy::PatientProfile;
using taxonomy::Prescription;

struct CaseRecord {
  PatientProfile profile;
  Prescription outcome;
};

struct Dataset {
  std::vector<CaseRecord> records;
  std::string catalog_version;
};

/// Reads a JSON array of {profile, outcome} documents and validates every
/// record against the catalog. Outcomes may leave features unspecified.
Dataset load_dataset(const nlohmann::json& document, const FeatureCatalog& catalog);
Dataset load_dataset_file(const std::string& path, const FeatureCatalog& catalog);
nlohmann::json dataset_to_json(const Dataset& dataset);

/// Records whose outcome specifies `target`.
Dataset with_target(const Dataset& dataset, const std::string& target);

struct TreeParams {
  int max_depth = 32;
  int min_samples_leaf = 1;

  bool operator==(const TreeParams&) const = default;
};

struct ForestParams {
  int n_trees = 25;
  double feature_subsample = 0.5;  // fraction of input features offered at each node
  bool bootstrap = true;
  TreeParams tree;

  bool operator==(const ForestParams&) const = default;
};

/// Class label of a code set: codes joined by '+', e.g. "INSMOD1+INSMOD3".
std::string label_of(const CodeSet& codes);
CodeSet codes_of(const std::string& label);

/// Gini impurity 1 - sum p_k^2 over the class counts.
double gini(const std::map<std::string, int>& counts);

struct SplitTest {
  std::string feature;
  std::string code;

  bool operator==(const SplitTest&) const = default;
};

struct TreeNode {
  std::optional<SplitTest> test;  // set iff internal
  int absent = -1;                // child taken when the code is not in the profile
  int present = -1;
  std::map<std::string, int> class_counts;
  std::string prediction;         // majority label, ties to the smallest label

  int samples() const;
  bool is_leaf() const noexcept { return !test.has_value(); }
  bool operator==(const TreeNode&) const = default;
};

struct Prediction {
  CodeSet codes;
  std::string label;
  double confidence = 0.0;

  bool operator==(const Prediction&) const = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::string target, TreeParams params, std::vector<TreeNode> nodes);

  const std::string& target() const noexcept { return target_; }
  const TreeParams& params() const noexcept { return params_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  const TreeNode& leaf_for(const PatientProfile& profile) const;
  Prediction predict(const PatientProfile& profile) const;
  int depth() const;
  int leaf_count() const;

  bool operator==(const DecisionTree&) const = default;

 private:
  std::string target_;
  TreeParams params_;
  std::vector<TreeNode> nodes_;  // root at index 0
};

struct Forest {
  std::string target;
  std::uint64_t seed = 0;
  ForestParams params;
  std::vector<DecisionTree> trees;

  /// Majority vote; ties to the smallest label; confidence is the vote fraction.
  Prediction predict(const PatientProfile& profile) const;
  bool operator==(const Forest&) const = default;
};

DecisionTree train_tree(const Dataset& dataset, const std::string& target, const TreeParams& params,
                        const FeatureCatalog& catalog);

Forest train_forest(const Dataset& dataset, const std::string& target, const ForestParams& params,
                    std::uint64_t seed, const FeatureCatalog& catalog);

struct Model {
  std::string id;
  std::variant<DecisionTree, Forest> body;

  const std::string& target() const;
  Prediction predict(const PatientProfile& profile) const;
  bool operator==(const Model&) const = default;
};

enum class ModelKind { tree, forest };

struct TrainingSpec {
  ModelKind kind = ModelKind::tree;
  TreeParams tree;
  ForestParams forest;
  std::uint64_t seed = 42;
};

Model train_model(const Dataset& dataset, const std::string& target, const TrainingSpec& spec,
                  const FeatureCatalog& catalog);

/// One model per target, each trained on the records that specify it.
std::map<std::string, Model> train_models(const Dataset& dataset, const std::vector<std::string>& targets,
                                          const TrainingSpec& spec, const FeatureCatalog& catalog);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

struct Policy {
  double threshold = 0.5;
  std::map<std::string, std::string> defaults;  // output feature -> fallback code
};

Policy policy_from_json(const nlohmann::json& j);
nlohmann::json policy_to_json(const Policy& policy);

struct Recommendation {
  Prescription prescription;
  ruledsl::Trace trace;
  std::set<std::string> abstained;
};

/// Rules first; models fill what rules left unresolved when confident enough;
/// then policy defaults; anything left is abstained.
Recommendation recommend(const PatientProfile& profile, const ruledsl::RuleSet& rules,
                         const std::map<std::string, Model>& models, const Policy& policy,
                         const FeatureCatalog& catalog);

nlohmann::json recommendation_to_json(const Recommendation& rec);

enum class Protocol { resubstitution, leave_one_out };

Protocol parse_protocol(const std::string& name);

struct AccuracyRow {
  std::string feature;
  std::optional<double> accuracy;  // absent when too few records specify the feature
  int evaluated = 0;
};

struct AccuracyTable {
  std::vector<AccuracyRow> rows;
  double macro_average = 0.0;

  const AccuracyRow* find(const std::string& feature) const;
};

AccuracyTable evaluate_models(const Dataset& dataset, Protocol protocol, const TrainingSpec& spec,
                              const FeatureCatalog& catalog, std::vector<std::string> targets = {});

nlohmann::json accuracy_to_json(const AccuracyTable& table);

}  // namespace pedocds::recommender
