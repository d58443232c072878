#include "pedocds/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "pedocds/error.hpp"

namespace pedocds::recommender {

using nlohmann::json;
using taxonomy::FeatureDef;

Dataset load_dataset(const json& document, const FeatureCatalog& catalog) {
  if (!document.is_array()) throw ValidationError("dataset must be a JSON array of {profile, outcome}");
  Dataset ds;
  ds.catalog_version = catalog.version();
  std::size_t index = 0;
  for (const auto& item : document) {
    CaseRecord rec;
    try {
      rec.profile = item.at("profile").get<PatientProfile>();
      rec.outcome = item.at("outcome").get<Prescription>();
    } catch (const json::exception& e) {
      throw ValidationError("dataset record " + std::to_string(index) + ": " + e.what());
    }
    auto pr = taxonomy::validate_profile(rec.profile, catalog, taxonomy::ValidationMode::partial);
    auto rr = taxonomy::validate_prescription(rec.outcome, catalog);
    if (!pr.ok() || !rr.ok()) {
      const auto& f = !pr.ok() ? pr.findings().front() : rr.findings().front();
      throw ValidationError("dataset record " + std::to_string(index) + ": " + f.message);
    }
    ds.records.push_back(std::move(rec));
    ++index;
  }
  return ds;
}

Dataset load_dataset_file(const std::string& path, const FeatureCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open dataset file " + path);
  try {
    return load_dataset(json::parse(in), catalog);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed dataset: ") + e.what());
  }
}

json dataset_to_json(const Dataset& dataset) {
  json out = json::array();
  for (const auto& rec : dataset.records) {
    json values = json::object();
    for (const auto& [feature, codes] : rec.outcome.values) values[feature] = codes;
    out.push_back({{"profile", rec.profile}, {"outcome", {{"values", std::move(values)}}}});
  }
  return out;
}

Dataset with_target(const Dataset& dataset, const std::string& target) {
  Dataset out;
  out.catalog_version = dataset.catalog_version;
  for (const auto& rec : dataset.records) {
    if (rec.outcome.values.count(target) > 0) out.records.push_back(rec);
  }
  return out;
}

std::string label_of(const CodeSet& codes) {
  std::string out;
  for (const auto& c : codes) out += (out.empty() ? "" : "+") + c;
  return out;
}

CodeSet codes_of(const std::string& label) {
  CodeSet out;
  std::stringstream in(label);
  std::string code;
  while (std::getline(in, code, '+'))
    if (!code.empty()) out.insert(code);
  return out;
}

double gini(const std::map<std::string, int>& counts) {
  double n = 0.0;
  for (const auto& [label, c] : counts) n += c;
  if (n == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (const auto& [label, c] : counts) sum_sq += (c / n) * (c / n);
  return 1.0 - sum_sq;
}

int TreeNode::samples() const {
  int n = 0;
  for (const auto& [label, c] : class_counts) n += c;
  return n;
}

namespace {

std::string majority(const std::map<std::string, int>& counts) {
  std::string best;
  int best_count = -1;
  for (const auto& [label, c] : counts) {
    if (c > best_count) {
      best = label;
      best_count = c;
    }
  }
  return best;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Weighted Gini compared exactly: minimizing
///   (nL/n) G_L + (nR/n) G_R  =  1 - (S_L/nL + S_R/nR)/n,   S = sum of squared counts,
/// is maximizing S_L/nL + S_R/nR = (S_L nR + S_R nL) / (nL nR).
struct SplitScore {
  __int128 numerator = 0;
  __int128 denominator = 1;

  bool better_than(const SplitScore& other) const {
    return numerator * other.denominator > other.numerator * denominator;
  }
};

__int128 sum_squares(const std::map<std::string, int>& counts) {
  __int128 s = 0;
  for (const auto& [label, c] : counts) s += static_cast<__int128>(c) * c;
  return s;
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& ds, const std::string& target, const TreeParams& params,
              const FeatureCatalog& catalog, std::mt19937_64* rng, std::size_t features_per_node)
      : ds_(ds), params_(params), rng_(rng), features_per_node_(features_per_node) {
    for (const FeatureDef* f : catalog.inputs()) inputs_.push_back(f);
    for (const auto& rec : ds.records) labels_.push_back(label_of(rec.outcome.values.at(target)));
  }

  std::vector<TreeNode> build(const std::vector<std::size_t>& sample) {
    nodes_.clear();
    grow(sample, 0);
    return std::move(nodes_);
  }

 private:
  bool member(std::size_t record, const FeatureDef& f, const std::string& code) const {
    const auto& values = ds_.records[record].profile.values;
    auto it = values.find(f.id);
    return it != values.end() && it->second.count(code) > 0;
  }

  std::vector<const FeatureDef*> candidate_features() {
    if (rng_ == nullptr || features_per_node_ >= inputs_.size()) return inputs_;
    std::vector<std::size_t> idx(inputs_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < features_per_node_; ++i) {
      std::size_t j = i + static_cast<std::size_t>(bounded(*rng_, idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(features_per_node_);
    std::sort(idx.begin(), idx.end());
    std::vector<const FeatureDef*> out;
    for (std::size_t i : idx) out.push_back(inputs_[i]);
    return out;
  }

  int grow(const std::vector<std::size_t>& sample, int depth) {
    TreeNode node;
    for (std::size_t r : sample) ++node.class_counts[labels_[r]];
    node.prediction = majority(node.class_counts);
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);

    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_samples_leaf));
    if (node.class_counts.size() <= 1 || depth >= params_.max_depth || sample.size() < 2 * min_leaf) {
      return index;
    }

    std::optional<SplitTest> best;
    SplitScore best_score{-1, 1};
    for (const FeatureDef* f : candidate_features()) {
      for (const auto& code : f->codes) {
        std::map<std::string, int> present, absent;
        std::size_t n_present = 0;
        for (std::size_t r : sample) {
          if (member(r, *f, code.code)) {
            ++present[labels_[r]];
            ++n_present;
          } else {
            ++absent[labels_[r]];
          }
        }
        const std::size_t n_absent = sample.size() - n_present;
        if (n_present < min_leaf || n_absent < min_leaf) continue;
        SplitScore score{sum_squares(present) * static_cast<__int128>(n_absent) +
                             sum_squares(absent) * static_cast<__int128>(n_present),
                         static_cast<__int128>(n_present) * static_cast<__int128>(n_absent)};
        if (!best || score.better_than(best_score)) {
          best = SplitTest{f->id, code.code};
          best_score = score;
        }
      }
    }
    if (!best) return index;

    const FeatureDef& f = **std::find_if(inputs_.begin(), inputs_.end(),
                                         [&](const FeatureDef* d) { return d->id == best->feature; });
    std::vector<std::size_t> present, absent;
    for (std::size_t r : sample) (member(r, f, best->code) ? present : absent).push_back(r);

    nodes_[index].test = best;
    const int absent_child = grow(absent, depth + 1);
    const int present_child = grow(present, depth + 1);
    nodes_[index].absent = absent_child;
    nodes_[index].present = present_child;
    return index;
  }

  const Dataset& ds_;
  TreeParams params_;
  std::mt19937_64* rng_;
  std::size_t features_per_node_;
  std::vector<const FeatureDef*> inputs_;
  std::vector<std::string> labels_;
  std::vector<TreeNode> nodes_;
};

void check_training_input(const Dataset& dataset, const std::string& target, const FeatureCatalog& catalog) {
  if (dataset.records.empty()) throw ValidationError("empty dataset");
  const FeatureDef* f = catalog.find(target);
  if (f == nullptr || f->kind != taxonomy::FeatureKind::output) {
    throw ValidationError("unknown output feature " + target);
  }
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    if (dataset.records[i].outcome.values.count(target) == 0) {
      throw ValidationError("target " + target + " absent from record " + std::to_string(i));
    }
  }
}

json tree_params_json(const TreeParams& p) {
  return {{"max_depth", p.max_depth}, {"min_samples_leaf", p.min_samples_leaf}, {"impurity", "gini"}};
}

TreeParams tree_params_from(const json& j) {
  TreeParams p;
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  return p;
}

json tree_to_json(const DecisionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json jn{{"counts", n.class_counts}, {"prediction", n.prediction}};
    if (n.test) {
      jn["feature"] = n.test->feature;
      jn["code"] = n.test->code;
      jn["absent"] = n.absent;
      jn["present"] = n.present;
    }
    nodes.push_back(std::move(jn));
  }
  return {{"target", tree.target()}, {"params", tree_params_json(tree.params())}, {"nodes", std::move(nodes)}};
}

DecisionTree tree_from_json(const json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.class_counts = jn.at("counts").get<std::map<std::string, int>>();
    n.prediction = jn.at("prediction").get<std::string>();
    if (jn.contains("feature")) {
      n.test = SplitTest{jn.at("feature").get<std::string>(), jn.at("code").get<std::string>()};
      n.absent = jn.at("absent").get<int>();
      n.present = jn.at("present").get<int>();
    }
    nodes.push_back(std::move(n));
  }
  return DecisionTree(j.at("target").get<std::string>(), tree_params_from(j.at("params")), std::move(nodes));
}

}  // namespace

DecisionTree::DecisionTree(std::string target, TreeParams params, std::vector<TreeNode> nodes)
    : target_(std::move(target)), params_(params), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ValidationError("tree without nodes");
  for (const auto& n : nodes_) {
    if (n.class_counts.empty()) throw ValidationError("tree node without class counts");
    if (!n.test) continue;
    const int size = static_cast<int>(nodes_.size());
    if (n.absent <= 0 || n.present <= 0 || n.absent >= size || n.present >= size) {
      throw ValidationError("tree node with invalid child index");
    }
  }
}

const TreeNode& DecisionTree::leaf_for(const PatientProfile& profile) const {
  const TreeNode* node = &nodes_.front();
  while (node->test) {
    auto it = profile.values.find(node->test->feature);
    const bool present = it != profile.values.end() && it->second.count(node->test->code) > 0;
    node = &nodes_[static_cast<std::size_t>(present ? node->present : node->absent)];
  }
  return *node;
}

Prediction DecisionTree::predict(const PatientProfile& profile) const {
  const TreeNode& leaf = leaf_for(profile);
  return {codes_of(leaf.prediction), leaf.prediction,
          static_cast<double>(leaf.class_counts.at(leaf.prediction)) / leaf.samples()};
}

int DecisionTree::depth() const {
  std::vector<int> level(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].test) {
      level[static_cast<std::size_t>(nodes_[i].absent)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].present)] = level[i] + 1;
    }
  }
  return deepest;
}

int DecisionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

Prediction Forest::predict(const PatientProfile& profile) const {
  std::map<std::string, int> votes;
  for (const auto& tree : trees) ++votes[tree.predict(profile).label];
  const std::string winner = majority(votes);
  return {codes_of(winner), winner, static_cast<double>(votes[winner]) / static_cast<double>(trees.size())};
}

DecisionTree train_tree(const Dataset& dataset, const std::string& target, const TreeParams& params,
                        const FeatureCatalog& catalog) {
  check_training_input(dataset, target, catalog);
  std::vector<std::size_t> sample(dataset.records.size());
  for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = i;
  TreeBuilder builder(dataset, target, params, catalog, nullptr, 0);
  return DecisionTree(target, params, builder.build(sample));
}

Forest train_forest(const Dataset& dataset, const std::string& target, const ForestParams& params,
                    std::uint64_t seed, const FeatureCatalog& catalog) {
  if (params.n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (!(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0)) {
    throw ValidationError("feature_subsample must be in (0, 1]");
  }
  check_training_input(dataset, target, catalog);

  const std::size_t n_inputs = catalog.inputs().size();
  const auto per_node = static_cast<std::size_t>(
      std::ceil(params.feature_subsample * static_cast<double>(n_inputs) - 1e-12));

  Forest forest;
  forest.target = target;
  forest.seed = seed;
  forest.params = params;
  std::mt19937_64 rng(seed);
  const std::size_t n = dataset.records.size();
  for (int t = 0; t < params.n_trees; ++t) {
    std::vector<std::size_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = params.bootstrap ? static_cast<std::size_t>(bounded(rng, n)) : i;
    std::sort(sample.begin(), sample.end());
    TreeBuilder builder(dataset, target, params.tree, catalog, &rng, std::max<std::size_t>(1, per_node));
    forest.trees.emplace_back(target, params.tree, builder.build(sample));
  }
  return forest;
}

const std::string& Model::target() const {
  return std::visit([](const auto& m) -> const std::string& {
    if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DecisionTree>) {
      return m.target();
    } else {
      return m.target;
    }
  }, body);
}

Prediction Model::predict(const PatientProfile& profile) const {
  return std::visit([&](const auto& m) { return m.predict(profile); }, body);
}

Model train_model(const Dataset& dataset, const std::string& target, const TrainingSpec& spec,
                  const FeatureCatalog& catalog) {
  if (spec.kind == ModelKind::tree) {
    return {"tree-" + target, train_tree(dataset, target, spec.tree, catalog)};
  }
  return {"forest-" + target + "-s" + std::to_string(spec.seed),
          train_forest(dataset, target, spec.forest, spec.seed, catalog)};
}

std::map<std::string, Model> train_models(const Dataset& dataset, const std::vector<std::string>& targets,
                                          const TrainingSpec& spec, const FeatureCatalog& catalog) {
  std::map<std::string, Model> out;
  for (const auto& target : targets) {
    Dataset subset = with_target(dataset, target);
    if (subset.records.empty()) throw ValidationError("no record specifies target " + target);
    out.emplace(target, train_model(subset, target, spec, catalog));
  }
  return out;
}

json model_to_json(const Model& model) {
  if (const auto* tree = std::get_if<DecisionTree>(&model.body)) {
    json j = tree_to_json(*tree);
    j["kind"] = "tree";
    j["id"] = model.id;
    return j;
  }
  const Forest& forest = std::get<Forest>(model.body);
  json trees = json::array();
  for (const auto& t : forest.trees) trees.push_back(tree_to_json(t));
  return {{"kind", "forest"},
          {"id", model.id},
          {"target", forest.target},
          {"seed", forest.seed},
          {"params",
           {{"n_trees", forest.params.n_trees},
            {"feature_subsample", forest.params.feature_subsample},
            {"bootstrap", forest.params.bootstrap},
            {"tree", tree_params_json(forest.params.tree)}}},
          {"trees", std::move(trees)}};
}

Model model_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "tree") return {j.at("id").get<std::string>(), tree_from_json(j)};
    if (kind != "forest") throw ValidationError("unknown model kind '" + kind + "'");
    Forest forest;
    forest.target = j.at("target").get<std::string>();
    forest.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("params");
    forest.params.n_trees = p.at("n_trees").get<int>();
    forest.params.feature_subsample = p.at("feature_subsample").get<double>();
    forest.params.bootstrap = p.at("bootstrap").get<bool>();
    forest.params.tree = tree_params_from(p.at("tree"));
    for (const auto& t : j.at("trees")) forest.trees.push_back(tree_from_json(t));
    if (forest.trees.empty()) throw ValidationError("forest without trees");
    for (const auto& t : forest.trees) {
      if (t.target() != forest.target) throw ValidationError("forest trees disagree on target");
    }
    return {j.at("id").get<std::string>(), std::move(forest)};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
}

Policy policy_from_json(const json& j) {
  Policy p;
  p.threshold = j.value("threshold", p.threshold);
  if (p.threshold < 0.0 || p.threshold > 1.0) throw ValidationError("policy threshold must be in [0, 1]");
  if (j.contains("defaults")) p.defaults = j.at("defaults").get<std::map<std::string, std::string>>();
  return p;
}

json policy_to_json(const Policy& policy) {
  return {{"threshold", policy.threshold}, {"defaults", policy.defaults}};
}

Recommendation recommend(const PatientProfile& profile, const ruledsl::RuleSet& rules,
                         const std::map<std::string, Model>& models, const Policy& policy,
                         const FeatureCatalog& catalog) {
  ruledsl::Evaluation eval = ruledsl::evaluate(rules, profile, catalog);
  Recommendation rec;
  rec.trace = std::move(eval.trace);
  for (const FeatureDef* f : catalog.outputs()) {
    auto ruled = eval.partial.values.find(f->id);
    if (ruled != eval.partial.values.end()) {
      rec.prescription.set(f->id, ruled->second, eval.partial.sources.at(f->id));
      continue;
    }
    if (auto m = models.find(f->id); m != models.end()) {
      Prediction p = m->second.predict(profile);
      if (p.confidence >= policy.threshold) {
        rec.prescription.set(f->id, p.codes, taxonomy::DecisionSource::model(m->second.id, p.confidence));
        continue;
      }
    }
    if (auto d = policy.defaults.find(f->id); d != policy.defaults.end() && f->has_code(d->second)) {
      rec.prescription.set(f->id, {d->second}, taxonomy::DecisionSource::fallback());
      continue;
    }
    rec.abstained.insert(f->id);
  }
  return rec;
}

json recommendation_to_json(const Recommendation& rec) {
  return {{"prescription", rec.prescription}, {"abstained", rec.abstained}, {"trace", rec.trace}};
}

Protocol parse_protocol(const std::string& name) {
  if (name == "resubstitution" || name == "resub") return Protocol::resubstitution;
  if (name == "leave-one-out" || name == "loo") return Protocol::leave_one_out;
  throw ValidationError("unknown evaluation protocol '" + name + "'");
}

const AccuracyRow* AccuracyTable::find(const std::string& feature) const {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const AccuracyRow& r) { return r.feature == feature; });
  return it == rows.end() ? nullptr : &*it;
}

AccuracyTable evaluate_models(const Dataset& dataset, Protocol protocol, const TrainingSpec& spec,
                              const FeatureCatalog& catalog, std::vector<std::string> targets) {
  if (protocol == Protocol::leave_one_out && dataset.records.size() < 2) {
    throw ValidationError("leave-one-out needs at least 2 records");
  }
  if (dataset.records.empty()) throw ValidationError("empty dataset");
  if (targets.empty()) {
    for (const FeatureDef* f : catalog.outputs()) targets.push_back(f->id);
  }
  AccuracyTable table;
  double sum = 0.0;
  int counted = 0;
  for (const auto& target : targets) {
    Dataset subset = with_target(dataset, target);
    AccuracyRow row{target, std::nullopt, 0};
    const std::size_t n = subset.records.size();
    const std::size_t minimum = protocol == Protocol::leave_one_out ? 2 : 1;
    if (n >= minimum) {
      int correct = 0;
      if (protocol == Protocol::resubstitution) {
        Model m = train_model(subset, target, spec, catalog);
        for (const auto& rec : subset.records) correct += m.predict(rec.profile).codes == rec.outcome.values.at(target);
      } else {
        for (std::size_t held = 0; held < n; ++held) {
          Dataset rest;
          rest.catalog_version = subset.catalog_version;
          for (std::size_t i = 0; i < n; ++i)
            if (i != held) rest.records.push_back(subset.records[i]);
          Model m = train_model(rest, target, spec, catalog);
          const auto& rec = subset.records[held];
          correct += m.predict(rec.profile).codes == rec.outcome.values.at(target);
        }
      }
      row.evaluated = static_cast<int>(n);
      row.accuracy = static_cast<double>(correct) / static_cast<double>(n);
      sum += *row.accuracy;
      ++counted;
    }
    table.rows.push_back(std::move(row));
  }
  table.macro_average = counted > 0 ? sum / counted : 0.0;
  return table;
}

json accuracy_to_json(const AccuracyTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json jr{{"feature", r.feature}, {"evaluated", r.evaluated}};
    jr["accuracy"] = r.accuracy ? json(*r.accuracy) : json("n/a");
    rows.push_back(std::move(jr));
  }
  return {{"rows", std::move(rows)}, {"macro_average", table.macro_average}};
}

}  // namespace pedocds::recommender
