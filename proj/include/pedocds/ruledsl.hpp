#pragma once

// Declarative prescription rules.
//
//   ruleset  = { rule } ;
//   rule     = "rule" STRING [ "priority" INT ] [ "provenance" STRING ] ":"
//              "if" expr "then" assign { "," assign } ;
//   expr     = term { ("and" | "or") term } ;      "and" binds tighter than "or"
//   term     = [ "not" ] ( FEATURE "==" CODE
//                        | FEATURE "in" "{" CODE { "," CODE } "}"
//                        | "(" expr ")" ) ;
//   assign   = FEATURE ":=" CODE { "+" CODE } ;
//
// A rule fires when its condition holds. Equality and set membership over a
// multivalued feature test for a non-empty intersection with the profile's codes.

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pedocds/taxonomy.hpp"

namespace pedocds::ruledsl {

/// Boolean condition tree. Chains of one connective are kept n-ary, so
/// `a and b and c` is a single conjunction with three operands, while a
/// parenthesized sub-expression stays a separate node.
struct BoolExpr {
  enum class Kind { equals, in_set, negation, conjunction, disjunction };

  Kind kind = Kind::equals;
  std::string feature;             // equals / in_set
  std::vector<std::string> codes;  // equals: one code; in_set: codes as written
  std::vector<BoolExpr> operands;  // negation: one; conjunction/disjunction: two or more

  static BoolExpr equals(std::string feature, std::string code);
  static BoolExpr in_set(std::string feature, std::vector<std::string> codes);
  static BoolExpr negate(BoolExpr operand);
  static BoolExpr all_of(std::vector<BoolExpr> operands);
  static BoolExpr any_of(std::vector<BoolExpr> operands);

  bool is_leaf() const noexcept { return kind == Kind::equals || kind == Kind::in_set; }
  /// Leaves have depth 0; every connective adds one level.
  int depth() const;
  bool operator==(const BoolExpr&) const = default;
};

struct Assignment {
  std::string feature;
  std::vector<std::string> codes;

  bool operator==(const Assignment&) const = default;
};

struct Rule {
  std::string name;
  int priority = 0;
  std::string provenance;
  BoolExpr condition;
  std::vector<Assignment> conclusions;

  bool operator==(const Rule&) const = default;
};

struct RuleSet {
  std::vector<Rule> rules;
  std::string catalog_version;

  const Rule* find(std::string_view name) const;
  bool operator==(const RuleSet&) const = default;
};

/// Parses and checks `text` against `catalog`. Throws ParseError carrying
/// the line and column of the offending token.
RuleSet parse_rules(std::string_view text, const taxonomy::FeatureCatalog& catalog);
RuleSet load_rules_file(const std::string& path, const taxonomy::FeatureCatalog& catalog);

/// Checks a programmatically built rule set (same checks the parser applies).
void check_rules(const RuleSet& rules, const taxonomy::FeatureCatalog& catalog);

std::string print_expr(const BoolExpr& expr);
std::string print_rule(const Rule& rule);
std::string print_rules(const RuleSet& rules);

bool holds(const BoolExpr& expr, const taxonomy::PatientProfile& profile);

/// Features referenced anywhere in a condition.
std::set<std::string> condition_features(const BoolExpr& expr);

struct RuleOutcome {
  std::string rule;
  bool fired = false;
  bool winning = false;
  std::string provenance;

  bool operator==(const RuleOutcome&) const = default;
};

struct Trace {
  /// Every output feature of the catalog, with the rules that conclude it.
  std::map<std::string, std::vector<RuleOutcome>> considered;
  std::set<std::string> unresolved;

  const RuleOutcome* winner(const std::string& feature) const;
  bool operator==(const Trace&) const = default;
};

struct Evaluation {
  taxonomy::Prescription partial;
  Trace trace;
};

/// Winner per output feature: the fired rule with the highest priority, ties
/// to the earliest declared. Throws ValidationError on a catalog version mismatch.
Evaluation evaluate(const RuleSet& rules, const taxonomy::PatientProfile& profile,
                    const taxonomy::FeatureCatalog& catalog);

/// Human-readable account of how `feature` was (or was not) resolved.
/// Throws NotFoundError for a feature the trace does not know.
std::string explain(const Trace& trace, const std::string& feature);

void to_json(nlohmann::json& j, const Trace& trace);

}  // namespace pedocds::ruledsl
