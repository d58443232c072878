#include "pedocds/ruledsl.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>

#include "pedocds/error.hpp"

namespace pedocds::ruledsl {

using taxonomy::FeatureCatalog;
using taxonomy::FeatureDef;
using taxonomy::FeatureKind;
using taxonomy::PatientProfile;

BoolExpr BoolExpr::equals(std::string feature, std::string code) {
  BoolExpr e;
  e.kind = Kind::equals;
  e.feature = std::move(feature);
  e.codes = {std::move(code)};
  return e;
}

BoolExpr BoolExpr::in_set(std::string feature, std::vector<std::string> codes) {
  BoolExpr e;
  e.kind = Kind::in_set;
  e.feature = std::move(feature);
  e.codes = std::move(codes);
  return e;
}

BoolExpr BoolExpr::negate(BoolExpr operand) {
  BoolExpr e;
  e.kind = Kind::negation;
  e.operands.push_back(std::move(operand));
  return e;
}

BoolExpr BoolExpr::all_of(std::vector<BoolExpr> operands) {
  if (operands.size() == 1) return std::move(operands.front());
  BoolExpr e;
  e.kind = Kind::conjunction;
  e.operands = std::move(operands);
  return e;
}

BoolExpr BoolExpr::any_of(std::vector<BoolExpr> operands) {
  if (operands.size() == 1) return std::move(operands.front());
  BoolExpr e;
  e.kind = Kind::disjunction;
  e.operands = std::move(operands);
  return e;
}

int BoolExpr::depth() const {
  if (is_leaf()) return 0;
  int deepest = 0;
  for (const auto& op : operands) deepest = std::max(deepest, op.depth());
  return deepest + 1;
}

const Rule* RuleSet::find(std::string_view name) const {
  auto it = std::find_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.name == name; });
  return it == rules.end() ? nullptr : &*it;
}

namespace {

enum class Tok { word, string, integer, eq, assign, lbrace, rbrace, lparen, rparen, comma, plus, colon, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t line = 1;
  std::size_t column = 1;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::end: return "end of input";
    case Tok::string: return "string \"" + t.text + "\"";
    default: return "'" + t.text + "'";
  }
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.column = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      t.kind = Tok::word;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + 1;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      t.kind = Tok::integer;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (c == '"') {
      advance(1);
      t.kind = Tok::string;
      bool closed = false;
      while (i < src.size()) {
        char d = src[i];
        if (d == '"') {
          advance(1);
          closed = true;
          break;
        }
        if (d == '\n') break;
        if (d == '\\' && i + 1 < src.size()) {
          char e = src[i + 1];
          if (e == 'n') t.text += '\n';
          else if (e == '"' || e == '\\') t.text += e;
          else throw ParseError(std::string("unknown escape \\") + e, line, col);
          advance(2);
          continue;
        }
        t.text += d;
        advance(1);
      }
      if (!closed) throw ParseError("unterminated string", t.line, t.column);
    } else if (src.substr(i, 2) == "==") {
      t.kind = Tok::eq;
      t.text = "==";
      advance(2);
    } else if (src.substr(i, 2) == ":=") {
      t.kind = Tok::assign;
      t.text = ":=";
      advance(2);
    } else {
      static const std::string singles = "{}(),+:";
      static const Tok kinds[] = {Tok::lbrace, Tok::rbrace, Tok::lparen, Tok::rparen,
                                  Tok::comma,  Tok::plus,   Tok::colon};
      auto pos = singles.find(c);
      if (pos == std::string::npos) throw ParseError(std::string("unexpected character '") + c + "'", line, col);
      t.kind = kinds[pos];
      t.text = std::string(1, c);
      advance(1);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, const FeatureCatalog& catalog)
      : tokens_(std::move(tokens)), catalog_(catalog) {}

  RuleSet parse() {
    RuleSet rs;
    rs.catalog_version = catalog_.version();
    while (peek().kind != Tok::end) {
      const Token& start = peek();
      Rule r = rule();
      if (rs.find(r.name) != nullptr) throw ParseError("duplicate rule name \"" + r.name + "\"", start.line, start.column);
      rs.rules.push_back(std::move(r));
    }
    return rs;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_ == tokens_.size() - 1 ? pos_ : pos_++]; }

  [[noreturn]] void fail(const Token& at, const std::string& message) const {
    throw ParseError(message, at.line, at.column);
  }

  bool at_keyword(std::string_view kw) const { return peek().kind == Tok::word && peek().text == kw; }

  void keyword(std::string_view kw) {
    if (!at_keyword(kw)) fail(peek(), "expected '" + std::string(kw) + "', found " + describe(peek()));
    next();
  }

  const Token& expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) fail(peek(), "expected " + what + ", found " + describe(peek()));
    return next();
  }

  static bool is_keyword(const std::string& w) {
    static const std::set<std::string> kws{"rule", "priority", "provenance", "if", "then", "and", "or", "not", "in"};
    return kws.count(w) > 0;
  }

  const FeatureDef& feature(FeatureKind expected) {
    const Token& t = peek();
    if (t.kind != Tok::word || is_keyword(t.text)) fail(t, "expected feature, found " + describe(t));
    next();
    const FeatureDef* f = catalog_.find(t.text);
    if (f == nullptr) fail(t, "unknown feature " + t.text);
    if (f->kind != expected) fail(t, t.text + " is an " + taxonomy::to_string(f->kind) + " feature");
    return *f;
  }

  std::string code(const FeatureDef& f) {
    const Token& t = peek();
    if (t.kind != Tok::word || is_keyword(t.text)) fail(t, "expected code, found " + describe(t));
    next();
    if (!f.has_code(t.text)) fail(t, "code " + t.text + " not in feature " + f.id);
    return t.text;
  }

  Rule rule() {
    keyword("rule");
    Rule r;
    r.name = expect(Tok::string, "rule name").text;
    if (at_keyword("priority")) {
      next();
      const Token& n = expect(Tok::integer, "integer priority");
      try {
        r.priority = std::stoi(n.text);
      } catch (const std::exception&) {
        fail(n, "priority out of range");
      }
    }
    if (at_keyword("provenance")) {
      next();
      r.provenance = expect(Tok::string, "provenance string").text;
    }
    expect(Tok::colon, "':'");
    keyword("if");
    r.condition = expr();
    keyword("then");
    r.conclusions.push_back(assign(r));
    while (peek().kind == Tok::comma) {
      next();
      r.conclusions.push_back(assign(r));
    }
    return r;
  }

  BoolExpr expr() {
    std::vector<BoolExpr> alternatives{conjunction()};
    while (at_keyword("or")) {
      next();
      alternatives.push_back(conjunction());
    }
    return BoolExpr::any_of(std::move(alternatives));
  }

  BoolExpr conjunction() {
    std::vector<BoolExpr> terms{term()};
    while (at_keyword("and")) {
      next();
      terms.push_back(term());
    }
    return BoolExpr::all_of(std::move(terms));
  }

  BoolExpr term() {
    if (at_keyword("not")) {
      next();
      return BoolExpr::negate(atom());
    }
    return atom();
  }

  BoolExpr atom() {
    if (peek().kind == Tok::lparen) {
      next();
      BoolExpr inner = expr();
      expect(Tok::rparen, "')'");
      return inner;
    }
    const FeatureDef& f = feature(FeatureKind::input);
    if (peek().kind == Tok::eq) {
      next();
      return BoolExpr::equals(f.id, code(f));
    }
    if (at_keyword("in")) {
      next();
      expect(Tok::lbrace, "'{'");
      std::vector<std::string> codes{code(f)};
      while (peek().kind == Tok::comma) {
        next();
        codes.push_back(code(f));
      }
      expect(Tok::rbrace, "'}'");
      return BoolExpr::in_set(f.id, std::move(codes));
    }
    fail(peek(), "expected '==' or 'in', found " + describe(peek()));
  }

  Assignment assign(const Rule& r) {
    const Token& at = peek();
    const FeatureDef& f = feature(FeatureKind::output);
    for (const auto& existing : r.conclusions) {
      if (existing.feature == f.id) fail(at, f.id + " assigned twice in rule \"" + r.name + "\"");
    }
    expect(Tok::assign, "':='");
    Assignment a;
    a.feature = f.id;
    a.codes.push_back(code(f));
    while (peek().kind == Tok::plus) {
      const Token& plus = next();
      if (!f.multivalued) fail(plus, f.id + " is single-valued");
      const Token& ct = peek();
      std::string c = code(f);
      if (std::find(a.codes.begin(), a.codes.end(), c) != a.codes.end()) fail(ct, "duplicate code " + c);
      a.codes.push_back(std::move(c));
    }
    return a;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const FeatureCatalog& catalog_;
};

void check_expr(const BoolExpr& e, const FeatureCatalog& catalog, const std::string& rule) {
  if (e.is_leaf()) {
    const FeatureDef* f = catalog.find(e.feature);
    if (f == nullptr) throw ValidationError("rule \"" + rule + "\": unknown feature " + e.feature);
    if (f->kind != FeatureKind::input) throw ValidationError("rule \"" + rule + "\": " + e.feature + " is an output feature");
    if (e.codes.empty() || (e.kind == BoolExpr::Kind::equals && e.codes.size() != 1)) {
      throw ValidationError("rule \"" + rule + "\": malformed leaf on " + e.feature);
    }
    for (const auto& c : e.codes) {
      if (!f->has_code(c)) throw ValidationError("rule \"" + rule + "\": code " + c + " not in feature " + e.feature);
    }
    return;
  }
  const std::size_t want = e.kind == BoolExpr::Kind::negation ? 1 : 2;
  if (e.kind == BoolExpr::Kind::negation ? e.operands.size() != 1 : e.operands.size() < want) {
    throw ValidationError("rule \"" + rule + "\": malformed connective");
  }
  for (const auto& op : e.operands) check_expr(op, catalog, rule);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string print_operand(const BoolExpr& e) {
  if (e.is_leaf() || e.kind == BoolExpr::Kind::negation) return print_expr(e);
  return "(" + print_expr(e) + ")";
}

void collect_features(const BoolExpr& e, std::set<std::string>& out) {
  if (e.is_leaf()) out.insert(e.feature);
  for (const auto& op : e.operands) collect_features(op, out);
}

}  // namespace

RuleSet parse_rules(std::string_view text, const FeatureCatalog& catalog) {
  return Parser(tokenize(text), catalog).parse();
}

RuleSet load_rules_file(const std::string& path, const FeatureCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open rule file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_rules(buffer.str(), catalog);
}

void check_rules(const RuleSet& rules, const FeatureCatalog& catalog) {
  std::set<std::string> names;
  for (const auto& r : rules.rules) {
    if (!names.insert(r.name).second) throw ValidationError("duplicate rule name \"" + r.name + "\"");
    check_expr(r.condition, catalog, r.name);
    if (r.conclusions.empty()) throw ValidationError("rule \"" + r.name + "\" concludes nothing");
    std::set<std::string> assigned;
    for (const auto& a : r.conclusions) {
      const FeatureDef* f = catalog.find(a.feature);
      if (f == nullptr) throw ValidationError("rule \"" + r.name + "\": unknown feature " + a.feature);
      if (f->kind != FeatureKind::output) throw ValidationError(a.feature + " is an input feature");
      if (!assigned.insert(a.feature).second) throw ValidationError(a.feature + " assigned twice in rule \"" + r.name + "\"");
      if (a.codes.empty()) throw ValidationError("rule \"" + r.name + "\": empty assignment to " + a.feature);
      if (!f->multivalued && a.codes.size() > 1) throw ValidationError(a.feature + " is single-valued");
      for (const auto& c : a.codes) {
        if (!f->has_code(c)) throw ValidationError("code " + c + " not in feature " + a.feature);
      }
    }
  }
}

std::string print_expr(const BoolExpr& e) {
  using Kind = BoolExpr::Kind;
  switch (e.kind) {
    case Kind::equals:
      return e.feature + " == " + e.codes.front();
    case Kind::in_set: {
      std::string out = e.feature + " in {";
      for (std::size_t i = 0; i < e.codes.size(); ++i) out += (i ? ", " : "") + e.codes[i];
      return out + "}";
    }
    case Kind::negation: {
      const BoolExpr& op = e.operands.front();
      return "not " + (op.is_leaf() ? print_expr(op) : "(" + print_expr(op) + ")");
    }
    case Kind::conjunction:
    case Kind::disjunction: {
      const std::string sep = e.kind == Kind::conjunction ? " and " : " or ";
      std::string out;
      for (std::size_t i = 0; i < e.operands.size(); ++i) out += (i ? sep : "") + print_operand(e.operands[i]);
      return out;
    }
  }
  return {};
}

std::string print_rule(const Rule& r) {
  std::string out = "rule " + quote(r.name);
  if (r.priority != 0) out += " priority " + std::to_string(r.priority);
  if (!r.provenance.empty()) out += " provenance " + quote(r.provenance);
  out += ":\n  if " + print_expr(r.condition) + "\n  then ";
  for (std::size_t i = 0; i < r.conclusions.size(); ++i) {
    const auto& a = r.conclusions[i];
    out += (i ? ", " : "") + a.feature + " := ";
    for (std::size_t k = 0; k < a.codes.size(); ++k) out += (k ? " + " : "") + a.codes[k];
  }
  return out + "\n";
}

std::string print_rules(const RuleSet& rules) {
  std::string out;
  for (std::size_t i = 0; i < rules.rules.size(); ++i) out += (i ? "\n" : "") + print_rule(rules.rules[i]);
  return out;
}

bool holds(const BoolExpr& e, const PatientProfile& profile) {
  using Kind = BoolExpr::Kind;
  switch (e.kind) {
    case Kind::equals:
    case Kind::in_set: {
      auto it = profile.values.find(e.feature);
      if (it == profile.values.end()) return false;
      return std::any_of(e.codes.begin(), e.codes.end(),
                         [&](const std::string& c) { return it->second.count(c) > 0; });
    }
    case Kind::negation:
      return !holds(e.operands.front(), profile);
    case Kind::conjunction:
      return std::all_of(e.operands.begin(), e.operands.end(),
                         [&](const BoolExpr& op) { return holds(op, profile); });
    case Kind::disjunction:
      return std::any_of(e.operands.begin(), e.operands.end(),
                         [&](const BoolExpr& op) { return holds(op, profile); });
  }
  return false;
}

std::set<std::string> condition_features(const BoolExpr& expr) {
  std::set<std::string> out;
  collect_features(expr, out);
  return out;
}

const RuleOutcome* Trace::winner(const std::string& feature) const {
  auto it = considered.find(feature);
  if (it == considered.end()) return nullptr;
  for (const auto& o : it->second)
    if (o.winning) return &o;
  return nullptr;
}

Evaluation evaluate(const RuleSet& rules, const PatientProfile& profile, const FeatureCatalog& catalog) {
  if (rules.catalog_version != catalog.version()) {
    throw ValidationError("catalog version mismatch: rules built for '" + rules.catalog_version +
                          "', catalog is '" + catalog.version() + "'");
  }
  std::vector<bool> fired(rules.rules.size());
  for (std::size_t i = 0; i < rules.rules.size(); ++i) fired[i] = holds(rules.rules[i].condition, profile);

  Evaluation out;
  for (const FeatureDef* f : catalog.outputs()) {
    auto& outcomes = out.trace.considered[f->id];
    std::optional<std::size_t> best;
    const Assignment* best_assignment = nullptr;
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
      const Rule& r = rules.rules[i];
      auto a = std::find_if(r.conclusions.begin(), r.conclusions.end(),
                            [&](const Assignment& x) { return x.feature == f->id; });
      if (a == r.conclusions.end()) continue;
      outcomes.push_back({r.name, fired[i], false, r.provenance});
      if (fired[i] && (!best || r.priority > rules.rules[*best].priority)) {
        best = i;
        best_assignment = &*a;
      }
    }
    if (!best) {
      out.trace.unresolved.insert(f->id);
      continue;
    }
    for (auto& o : outcomes) o.winning = o.rule == rules.rules[*best].name;
    out.partial.set(f->id, taxonomy::CodeSet(best_assignment->codes.begin(), best_assignment->codes.end()),
                    taxonomy::DecisionSource::rule(rules.rules[*best].name));
  }
  return out;
}

std::string explain(const Trace& trace, const std::string& feature) {
  auto it = trace.considered.find(feature);
  if (it == trace.considered.end()) throw NotFoundError("unknown feature " + feature);
  std::ostringstream out;
  const RuleOutcome* win = trace.winner(feature);
  if (win != nullptr) {
    out << feature << ": resolved by rule \"" << win->rule << "\"";
    if (!win->provenance.empty()) out << " (" << win->provenance << ")";
    out << "\n";
  } else {
    out << feature << ": unresolved: no rule fired\n";
  }
  if (it->second.empty()) out << "  no rule concludes " << feature << "\n";
  for (const auto& o : it->second) {
    out << "  - \"" << o.rule << "\": " << (o.fired ? "fired" : "did not fire");
    if (o.winning) out << ", winning";
    out << "\n";
  }
  return out.str();
}

void to_json(nlohmann::json& j, const Trace& trace) {
  nlohmann::json considered = nlohmann::json::object();
  for (const auto& [feature, outcomes] : trace.considered) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& o : outcomes) {
      list.push_back({{"rule", o.rule}, {"fired", o.fired}, {"winning", o.winning}});
    }
    considered[feature] = std::move(list);
  }
  j = nlohmann::json{{"considered", std::move(considered)}, {"unresolved", trace.unresolved}};
}

}  // namespace pedocds::ruledsl
