#include "goalforge/goal_lang.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace goalforge {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// StateSchema
// ---------------------------------------------------------------------------

StateSchema::StateSchema(std::vector<StateField> fields) : fields_(std::move(fields)) {
  std::set<std::string> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw Error(ErrorKind::InvalidConfig, "schema field with empty name");
    if (!seen.insert(f.name).second) {
      throw Error(ErrorKind::InvalidConfig, "duplicate schema field '" + f.name + "'");
    }
    if (f.min && f.max && !(*f.min < *f.max)) {
      throw Error(ErrorKind::DegenerateRange, "schema field '" + f.name + "' needs min < max");
    }
  }
}

std::optional<std::size_t> StateSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  return std::nullopt;
}

StateSchema StateSchema::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("fields") || !doc["fields"].is_array()) {
    throw Error(ErrorKind::InvalidConfig, "schema must be an object with a 'fields' array");
  }
  std::vector<StateField> fields;
  for (const auto& entry : doc["fields"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw Error(ErrorKind::InvalidConfig, "schema field needs a string 'name'");
    }
    StateField f;
    f.name = entry["name"].get<std::string>();
    if (entry.contains("min") && !entry["min"].is_null()) f.min = entry["min"].get<double>();
    if (entry.contains("max") && !entry["max"].is_null()) f.max = entry["max"].get<double>();
    fields.push_back(std::move(f));
  }
  return StateSchema(std::move(fields));
}

StateSchema StateSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open schema file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string StateSchema::to_json_text() const {
  json fields = json::array();
  for (const auto& f : fields_) {
    json entry = {{"name", f.name}};
    if (f.min) entry["min"] = *f.min;
    if (f.max) entry["max"] = *f.max;
    fields.push_back(std::move(entry));
  }
  return json{{"fields", fields}}.dump(2);
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::KwReach: return "reach";
    case TokenKind::KwDrive: return "drive";
    case TokenKind::KwAvoid: return "avoid";
    case TokenKind::KwMinimize: return "minimize";
    case TokenKind::KwMaximize: return "maximize";
    case TokenKind::KwAnd: return "and";
    case TokenKind::KwOr: return "or";
    case TokenKind::KwThen: return "then";
    case TokenKind::KwUntil: return "until";
    case TokenKind::KwIn: return "in";
    case TokenKind::KwRange: return "Goal.Range";
    case TokenKind::KwRangeAbove: return "Goal.RangeAbove";
    case TokenKind::KwRangeBelow: return "Goal.RangeBelow";
    case TokenKind::Ident: return "identifier";
    case TokenKind::Number: return "number";
    case TokenKind::Colon: return "':'";
    case TokenKind::Comma: return "','";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::Dot: return "'.'";
    case TokenKind::Plus: return "'+'";
    case TokenKind::Minus: return "'-'";
    case TokenKind::Star: return "'*'";
  }
  return "?";
}

namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
        continue;
      }
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      SourceSpan start = here();
      if (is_ident_start(c)) {
        out.push_back(word(start));
      } else if (is_digit(c)) {
        out.push_back(numeral(start));
      } else {
        TokenKind kind;
        switch (c) {
          case ':': kind = TokenKind::Colon; break;
          case ',': kind = TokenKind::Comma; break;
          case '(': kind = TokenKind::LParen; break;
          case ')': kind = TokenKind::RParen; break;
          case '.': kind = TokenKind::Dot; break;
          case '+': kind = TokenKind::Plus; break;
          case '-': kind = TokenKind::Minus; break;
          case '*': kind = TokenKind::Star; break;
          default: {
            start.length = utf8_length(c);
            throw Error(ErrorKind::IllegalCharacter,
                        "illegal character '" + std::string(text_.substr(pos_, start.length)) + "'",
                        start);
          }
        }
        advance();
        start.length = 1;
        out.push_back(Token{kind, std::string(1, c), 0.0, start});
      }
    }
    return out;
  }

 private:
  static std::size_t utf8_length(char lead) {
    auto b = static_cast<unsigned char>(lead);
    if (b >= 0xF0) return 4;
    if (b >= 0xE0) return 3;
    if (b >= 0xC0) return 2;
    return 1;
  }

  SourceSpan here() const { return SourceSpan{pos_, 0, line_, column_}; }

  void advance() {
    char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++column_;
    }
  }

  std::string_view scan_ident() {
    std::size_t begin = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) advance();
    return text_.substr(begin, pos_ - begin);
  }

  Token word(SourceSpan start) {
    std::string_view id = scan_ident();
    if (id == "Goal" && pos_ + 1 < text_.size() && text_[pos_] == '.' &&
        is_ident_start(text_[pos_ + 1])) {
      // Goal.Range / Goal.RangeAbove / Goal.RangeBelow are single keywords.
      std::size_t save_pos = pos_, save_line = line_, save_col = column_;
      advance();
      std::string_view member = scan_ident();
      std::optional<TokenKind> kind;
      if (member == "Range") kind = TokenKind::KwRange;
      if (member == "RangeAbove") kind = TokenKind::KwRangeAbove;
      if (member == "RangeBelow") kind = TokenKind::KwRangeBelow;
      if (kind) {
        start.length = pos_ - start.offset;
        return Token{*kind, std::string(text_.substr(start.offset, start.length)), 0.0, start};
      }
      pos_ = save_pos;
      line_ = save_line;
      column_ = save_col;
    }
    start.length = id.size();
    TokenKind kind = TokenKind::Ident;
    if (id == "reach") kind = TokenKind::KwReach;
    else if (id == "drive") kind = TokenKind::KwDrive;
    else if (id == "avoid") kind = TokenKind::KwAvoid;
    else if (id == "minimize") kind = TokenKind::KwMinimize;
    else if (id == "maximize") kind = TokenKind::KwMaximize;
    else if (id == "and") kind = TokenKind::KwAnd;
    else if (id == "or") kind = TokenKind::KwOr;
    else if (id == "then") kind = TokenKind::KwThen;
    else if (id == "until") kind = TokenKind::KwUntil;
    else if (id == "in") kind = TokenKind::KwIn;
    return Token{kind, std::string(id), 0.0, start};
  }

  [[noreturn]] void unterminated(SourceSpan start) {
    start.length = pos_ - start.offset;
    throw Error(ErrorKind::UnterminatedNumeral,
                "unterminated numeral '" + std::string(text_.substr(start.offset, start.length)) + "'",
                start);
  }

  Token numeral(SourceSpan start) {
    while (pos_ < text_.size() && is_digit(text_[pos_])) advance();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      advance();
      if (pos_ >= text_.size() || !is_digit(text_[pos_])) unterminated(start);
      while (pos_ < text_.size() && is_digit(text_[pos_])) advance();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      advance();
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) advance();
      if (pos_ >= text_.size() || !is_digit(text_[pos_])) unterminated(start);
      while (pos_ < text_.size() && is_digit(text_[pos_])) advance();
    }
    if (pos_ < text_.size() && is_ident_start(text_[pos_])) {
      advance();
      unterminated(start);
    }
    start.length = pos_ - start.offset;
    std::string lexeme(text_.substr(start.offset, start.length));
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), value);
    if (ec != std::errc() || ptr != lexeme.data() + lexeme.size() || !std::isfinite(value)) {
      throw Error(ErrorKind::UnterminatedNumeral, "numeral out of range '" + lexeme + "'", start);
    }
    return Token{TokenKind::Number, std::move(lexeme), value, start};
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view text) { return Lexer(text).run(); }

// ---------------------------------------------------------------------------
// StateExpr
// ---------------------------------------------------------------------------

namespace {

using ExprNode = StateExpr::Node;
using ExprKind = StateExpr::Kind;

double eval_node(const ExprNode& n, const Eigen::Ref<const Eigen::VectorXd>& s) {
  switch (n.kind) {
    case ExprKind::Field: return s(static_cast<Eigen::Index>(n.field));
    case ExprKind::Constant: return n.value;
    case ExprKind::Negate: return -eval_node(*n.args[0], s);
    case ExprKind::Add: return eval_node(*n.args[0], s) + eval_node(*n.args[1], s);
    case ExprKind::Subtract: return eval_node(*n.args[0], s) - eval_node(*n.args[1], s);
    case ExprKind::Multiply: return eval_node(*n.args[0], s) * eval_node(*n.args[1], s);
    case ExprKind::Abs: return std::abs(eval_node(*n.args[0], s));
    case ExprKind::Norm: {
      double sq = 0.0;
      for (const auto& a : n.args) {
        double v = eval_node(*a, s);
        sq += v * v;
      }
      return std::sqrt(sq);
    }
  }
  return 0.0;
}

Interval abs_interval(Interval a) {
  if (a.lo >= 0) return a;
  if (a.hi <= 0) return {-a.hi, -a.lo};
  return {0.0, std::max(-a.lo, a.hi)};
}

Interval bounds_node(const ExprNode& n, std::span<const Interval> ranges) {
  switch (n.kind) {
    case ExprKind::Field: return ranges[n.field];
    case ExprKind::Constant: return {n.value, n.value};
    case ExprKind::Negate: {
      auto a = bounds_node(*n.args[0], ranges);
      return {-a.hi, -a.lo};
    }
    case ExprKind::Add: {
      auto a = bounds_node(*n.args[0], ranges), b = bounds_node(*n.args[1], ranges);
      return {a.lo + b.lo, a.hi + b.hi};
    }
    case ExprKind::Subtract: {
      auto a = bounds_node(*n.args[0], ranges), b = bounds_node(*n.args[1], ranges);
      return {a.lo - b.hi, a.hi - b.lo};
    }
    case ExprKind::Multiply: {
      auto a = bounds_node(*n.args[0], ranges), b = bounds_node(*n.args[1], ranges);
      double p[] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
      return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
    }
    case ExprKind::Abs: return abs_interval(bounds_node(*n.args[0], ranges));
    case ExprKind::Norm: {
      double lo = 0.0, hi = 0.0;
      for (const auto& a : n.args) {
        auto m = abs_interval(bounds_node(*a, ranges));
        lo += m.lo * m.lo;
        hi += m.hi * m.hi;
      }
      return {std::sqrt(lo), std::sqrt(hi)};
    }
  }
  return {};
}

void collect_fields(const ExprNode& n, std::vector<std::size_t>& out) {
  if (n.kind == ExprKind::Field) out.push_back(n.field);
  for (const auto& a : n.args) collect_fields(*a, out);
}

int expr_precedence(ExprKind k) {
  switch (k) {
    case ExprKind::Add:
    case ExprKind::Subtract: return 1;
    case ExprKind::Multiply: return 2;
    case ExprKind::Negate: return 3;
    default: return 4;
  }
}

void print_node(const ExprNode& n, std::string& out);

void print_operand(const ExprNode& n, int min_prec, std::string& out) {
  bool parens = expr_precedence(n.kind) < min_prec;
  if (parens) out += '(';
  print_node(n, out);
  if (parens) out += ')';
}

void print_node(const ExprNode& n, std::string& out) {
  switch (n.kind) {
    case ExprKind::Field: out += "s." + n.field_name; break;
    case ExprKind::Constant: out += format_number(n.value); break;
    case ExprKind::Negate:
      out += '-';
      print_operand(*n.args[0], 4, out);
      break;
    case ExprKind::Add:
    case ExprKind::Subtract:
      print_operand(*n.args[0], 1, out);
      out += n.kind == ExprKind::Add ? " + " : " - ";
      print_operand(*n.args[1], 2, out);
      break;
    case ExprKind::Multiply:
      print_operand(*n.args[0], 2, out);
      out += " * ";
      print_operand(*n.args[1], 3, out);
      break;
    case ExprKind::Abs:
      out += "abs(";
      print_node(*n.args[0], out);
      out += ')';
      break;
    case ExprKind::Norm:
      out += "norm(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print_node(*n.args[i], out);
      }
      out += ')';
      break;
  }
}

void sexpr_node(const ExprNode& n, std::string& out) {
  auto list = [&](std::string_view head) {
    out += '(';
    out += head;
    for (const auto& a : n.args) {
      out += ' ';
      sexpr_node(*a, out);
    }
    out += ')';
  };
  switch (n.kind) {
    case ExprKind::Field: out += "s." + n.field_name; break;
    case ExprKind::Constant: out += format_number(n.value); break;
    case ExprKind::Negate: list("neg"); break;
    case ExprKind::Add: list("+"); break;
    case ExprKind::Subtract: list("-"); break;
    case ExprKind::Multiply: list("*"); break;
    case ExprKind::Abs: list("abs"); break;
    case ExprKind::Norm: list("norm"); break;
  }
}

bool nodes_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  if (a.kind == ExprKind::Field && a.field != b.field) return false;
  if (a.kind == ExprKind::Constant && a.value != b.value) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!nodes_equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

}  // namespace

StateExpr StateExpr::field(std::size_t index, std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Field;
  n->field = index;
  n->field_name = std::move(name);
  return StateExpr(std::move(n));
}

StateExpr StateExpr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Constant;
  n->value = value;
  return StateExpr(std::move(n));
}

StateExpr StateExpr::unary(Kind kind, StateExpr arg) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->args.push_back(arg.root_);
  return StateExpr(std::move(n));
}

StateExpr StateExpr::binary(Kind kind, StateExpr lhs, StateExpr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->args = {lhs.root_, rhs.root_};
  return StateExpr(std::move(n));
}

StateExpr StateExpr::norm(std::vector<StateExpr> args) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Norm;
  for (auto& a : args) n->args.push_back(a.root_);
  return StateExpr(std::move(n));
}

double StateExpr::evaluate(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return eval_node(*root_, state);
}

Eigen::VectorXd StateExpr::norm_components(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  if (root_->kind != Kind::Norm) return Eigen::VectorXd::Constant(1, eval_node(*root_, state));
  Eigen::VectorXd v(static_cast<Eigen::Index>(root_->args.size()));
  for (std::size_t i = 0; i < root_->args.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = eval_node(*root_->args[i], state);
  }
  return v;
}

Interval StateExpr::bounds(std::span<const Interval> field_ranges) const {
  return bounds_node(*root_, field_ranges);
}

std::vector<std::size_t> StateExpr::fields() const {
  std::vector<std::size_t> out;
  collect_fields(*root_, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string StateExpr::to_string() const {
  std::string out;
  print_node(*root_, out);
  return out;
}

std::string StateExpr::to_sexpr() const {
  std::string out;
  sexpr_node(*root_, out);
  return out;
}

bool operator==(const StateExpr& a, const StateExpr& b) {
  if (!a.root_ || !b.root_) return a.root_ == b.root_;
  return nodes_equal(*a.root_, *b.root_);
}

// ---------------------------------------------------------------------------
// Goals
// ---------------------------------------------------------------------------

Range Range::closed(double lower, double upper) { return Range{Kind::Closed, lower, upper}; }
Range Range::above(double lower) { return Range{Kind::AboveOnly, lower, std::nullopt}; }
Range Range::below(double upper) { return Range{Kind::BelowOnly, std::nullopt, upper}; }

bool Range::contains(double x) const {
  switch (kind) {
    case Kind::Closed: return x > *lower && x < *upper;
    case Kind::AboveOnly: return x > *lower;
    case Kind::BelowOnly: return x < *upper;
  }
  return false;
}

std::string Range::to_string() const {
  switch (kind) {
    case Kind::Closed: return "Goal.Range(" + format_number(*lower) + ", " + format_number(*upper) + ")";
    case Kind::AboveOnly: return "Goal.RangeAbove(" + format_number(*lower) + ")";
    case Kind::BelowOnly: return "Goal.RangeBelow(" + format_number(*upper) + ")";
  }
  return {};
}

std::string_view to_string(GoalOperator op) {
  switch (op) {
    case GoalOperator::Reach: return "reach";
    case GoalOperator::Drive: return "drive";
    case GoalOperator::Avoid: return "avoid";
    case GoalOperator::Minimize: return "minimize";
    case GoalOperator::Maximize: return "maximize";
  }
  return "?";
}

std::string_view to_string(Combinator op) {
  switch (op) {
    case Combinator::And: return "and";
    case Combinator::Or: return "or";
    case Combinator::Then: return "then";
    case Combinator::Until: return "until";
  }
  return "?";
}

bool operator==(const GoalAtom& a, const GoalAtom& b) {
  return a.op == b.op && a.name == b.name && a.expr == b.expr && a.range == b.range;
}

GoalNodePtr make_goal(GoalAtom atom) {
  return std::make_shared<const GoalNode>(GoalNode{std::move(atom)});
}

GoalNodePtr make_goal(Combinator op, GoalNodePtr lhs, GoalNodePtr rhs) {
  return std::make_shared<const GoalNode>(GoalNode{GoalCombination{op, std::move(lhs), std::move(rhs)}});
}

bool structurally_equal(const GoalNode& a, const GoalNode& b) {
  if (a.is_atom() != b.is_atom()) return false;
  if (a.is_atom()) return a.atom() == b.atom();
  const auto& ca = a.combination();
  const auto& cb = b.combination();
  return ca.op == cb.op && structurally_equal(*ca.lhs, *cb.lhs) &&
         structurally_equal(*ca.rhs, *cb.rhs);
}

namespace {

void collect_atoms(const GoalNode& n, std::vector<GoalAtom>& out) {
  if (n.is_atom()) {
    out.push_back(n.atom());
    return;
  }
  collect_atoms(*n.combination().lhs, out);
  collect_atoms(*n.combination().rhs, out);
}

}  // namespace

GoalProgram::GoalProgram(GoalNodePtr root, StateSchema schema)
    : root_(std::move(root)), schema_(std::move(schema)) {
  collect_atoms(*root_, atoms_);
  std::set<std::string> names;
  for (const auto& a : atoms_) {
    if (!names.insert(a.name).second) {
      throw Error(ErrorKind::DuplicateGoalName, "goal name '" + a.name + "' is used twice", a.span);
    }
  }
}

const GoalAtom* GoalProgram::find_atom(std::string_view name) const {
  for (const auto& a : atoms_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(std::span<const Token> tokens, const StateSchema& schema)
      : tokens_(tokens), schema_(schema) {}

  GoalNodePtr program() {
    if (tokens_.empty()) fail_here("expected a goal, found end of input");
    auto root = until_expr();
    if (pos_ < tokens_.size()) fail_here("expected 'and', 'or', 'then' or 'until'");
    return root;
  }

 private:
  const Token* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }
  bool at(TokenKind k) const { return pos_ < tokens_.size() && tokens_[pos_].kind == k; }

  SourceSpan span_here() const {
    if (pos_ < tokens_.size()) return tokens_[pos_].span;
    SourceSpan s = tokens_.empty() ? SourceSpan{} : tokens_.back().span;
    s.offset += s.length;
    s.column += s.length;
    s.length = 0;
    return s;
  }

  [[noreturn]] void fail_here(const std::string& message) const {
    std::string found = pos_ < tokens_.size() ? "'" + tokens_[pos_].text + "'" : "end of input";
    throw Error(ErrorKind::UnexpectedToken, message + " (found " + found + ")", span_here());
  }

  const Token& expect(TokenKind k) {
    if (!at(k)) fail_here("expected " + std::string(to_string(k)));
    return tokens_[pos_++];
  }

  GoalNodePtr until_expr() { return binary_level(0); }

  // Levels: 0 until, 1 then, 2 or, 3 and, 4 atom.
  GoalNodePtr binary_level(int level) {
    static constexpr TokenKind kOps[] = {TokenKind::KwUntil, TokenKind::KwThen, TokenKind::KwOr,
                                         TokenKind::KwAnd};
    static constexpr Combinator kCombs[] = {Combinator::Until, Combinator::Then, Combinator::Or,
                                            Combinator::And};
    if (level == 4) return atom();
    auto lhs = binary_level(level + 1);
    while (at(kOps[level])) {
      ++pos_;
      auto rhs = binary_level(level + 1);
      lhs = make_goal(kCombs[level], lhs, rhs);
    }
    return lhs;
  }

  GoalNodePtr atom() {
    if (at(TokenKind::LParen)) {
      ++pos_;
      auto inner = until_expr();
      expect(TokenKind::RParen);
      return inner;
    }
    return goal();
  }

  GoalNodePtr goal() {
    const Token* t = peek();
    GoalOperator op;
    if (!t) fail_here("expected a goal operator");
    switch (t->kind) {
      case TokenKind::KwReach: op = GoalOperator::Reach; break;
      case TokenKind::KwDrive: op = GoalOperator::Drive; break;
      case TokenKind::KwAvoid: op = GoalOperator::Avoid; break;
      case TokenKind::KwMinimize: op = GoalOperator::Minimize; break;
      case TokenKind::KwMaximize: op = GoalOperator::Maximize; break;
      default: fail_here("expected reach, drive, avoid, minimize or maximize");
    }
    SourceSpan start = t->span;
    ++pos_;
    const Token& name = expect(TokenKind::Ident);
    expect(TokenKind::Colon);
    StateExpr expr = sum();
    expect(TokenKind::KwIn);
    SourceSpan range_span = span_here();
    Range range = parse_range();
    SourceSpan last = tokens_[pos_ - 1].span;
    range_span.length = last.offset + last.length - range_span.offset;

    if (op == GoalOperator::Minimize && range.kind == Range::Kind::AboveOnly) {
      throw Error(ErrorKind::InvalidRange,
                  "minimize needs Goal.RangeBelow or Goal.Range, not Goal.RangeAbove", range_span);
    }
    if (op == GoalOperator::Maximize && range.kind == Range::Kind::BelowOnly) {
      throw Error(ErrorKind::InvalidRange,
                  "maximize needs Goal.RangeAbove or Goal.Range, not Goal.RangeBelow", range_span);
    }

    GoalAtom atom;
    atom.op = op;
    atom.name = name.text;
    atom.expr = std::move(expr);
    atom.range = range;
    atom.span = start;
    atom.span.length = last.offset + last.length - start.offset;
    if (!names_.insert(atom.name).second) {
      throw Error(ErrorKind::DuplicateGoalName, "goal name '" + atom.name + "' is used twice",
                  name.span);
    }
    return make_goal(std::move(atom));
  }

  double signed_number() {
    bool negative = false;
    if (at(TokenKind::Minus)) {
      negative = true;
      ++pos_;
    }
    double v = expect(TokenKind::Number).number;
    return negative ? -v : v;
  }

  Range parse_range() {
    SourceSpan start = span_here();
    if (at(TokenKind::KwRange)) {
      ++pos_;
      expect(TokenKind::LParen);
      double lo = signed_number();
      expect(TokenKind::Comma);
      double hi = signed_number();
      expect(TokenKind::RParen);
      if (!(lo < hi)) {
        SourceSpan last = tokens_[pos_ - 1].span;
        start.length = last.offset + last.length - start.offset;
        throw Error(ErrorKind::InvalidRange,
                    "Goal.Range needs lower < upper, got " + format_number(lo) + " and " +
                        format_number(hi),
                    start);
      }
      return Range::closed(lo, hi);
    }
    if (at(TokenKind::KwRangeAbove) || at(TokenKind::KwRangeBelow)) {
      bool above = at(TokenKind::KwRangeAbove);
      ++pos_;
      expect(TokenKind::LParen);
      double v = signed_number();
      expect(TokenKind::RParen);
      return above ? Range::above(v) : Range::below(v);
    }
    fail_here("expected Goal.Range, Goal.RangeAbove or Goal.RangeBelow");
  }

  StateExpr sum() {
    StateExpr lhs = product();
    while (at(TokenKind::Plus) || at(TokenKind::Minus)) {
      auto kind = at(TokenKind::Plus) ? StateExpr::Kind::Add : StateExpr::Kind::Subtract;
      ++pos_;
      lhs = StateExpr::binary(kind, lhs, product());
    }
    return lhs;
  }

  StateExpr product() {
    StateExpr lhs = unary();
    while (at(TokenKind::Star)) {
      ++pos_;
      lhs = StateExpr::binary(StateExpr::Kind::Multiply, lhs, unary());
    }
    return lhs;
  }

  StateExpr unary() {
    if (at(TokenKind::Minus)) {
      ++pos_;
      if (at(TokenKind::Number)) return StateExpr::constant(-tokens_[pos_++].number);
      return StateExpr::unary(StateExpr::Kind::Negate, unary());
    }
    return primary();
  }

  StateExpr primary() {
    if (at(TokenKind::Number)) return StateExpr::constant(tokens_[pos_++].number);
    if (at(TokenKind::LParen)) {
      ++pos_;
      StateExpr inner = sum();
      expect(TokenKind::RParen);
      return inner;
    }
    if (!at(TokenKind::Ident)) fail_here("expected a state expression");
    const Token& id = tokens_[pos_++];
    bool is_call = at(TokenKind::LParen);
    if (is_call && id.text == "abs") {
      ++pos_;
      StateExpr arg = sum();
      expect(TokenKind::RParen);
      return StateExpr::unary(StateExpr::Kind::Abs, arg);
    }
    if (is_call && id.text == "norm") {
      ++pos_;
      std::vector<StateExpr> args{sum()};
      while (at(TokenKind::Comma)) {
        ++pos_;
        args.push_back(sum());
      }
      expect(TokenKind::RParen);
      return StateExpr::norm(std::move(args));
    }
    if (is_call) {
      throw Error(ErrorKind::UnexpectedToken, "unknown function '" + id.text + "'", id.span);
    }
    const Token* field_tok = &id;
    if (at(TokenKind::Dot)) {
      if (id.text != "s") {
        throw Error(ErrorKind::UnexpectedToken,
                    "state references are written s.<field>, not " + id.text + ".<field>", id.span);
      }
      ++pos_;
      field_tok = &expect(TokenKind::Ident);
    }
    auto index = schema_.index_of(field_tok->text);
    if (!index) {
      throw Error(ErrorKind::UnknownStateField,
                  "state field '" + field_tok->text + "' is not declared in the schema",
                  field_tok->span);
    }
    return StateExpr::field(*index, field_tok->text);
  }

  std::span<const Token> tokens_;
  const StateSchema& schema_;
  std::size_t pos_ = 0;
  std::set<std::string> names_;
};

int goal_precedence(Combinator op) {
  switch (op) {
    case Combinator::Until: return 0;
    case Combinator::Then: return 1;
    case Combinator::Or: return 2;
    case Combinator::And: return 3;
  }
  return 0;
}

void print_goal(const GoalNode& n, std::string& out) {
  if (n.is_atom()) {
    const auto& a = n.atom();
    out += std::string(to_string(a.op)) + " " + a.name + ": " + a.expr.to_string() + " in " +
           a.range.to_string();
    return;
  }
  const auto& c = n.combination();
  int prec = goal_precedence(c.op);
  auto operand = [&](const GoalNode& child, bool right) {
    bool parens = !child.is_atom() && (goal_precedence(child.combination().op) < prec ||
                                       (right && goal_precedence(child.combination().op) == prec));
    if (parens) out += '(';
    print_goal(child, out);
    if (parens) out += ')';
  };
  operand(*c.lhs, false);
  out += " " + std::string(to_string(c.op)) + " ";
  operand(*c.rhs, true);
}

}  // namespace

GoalProgram parse(std::span<const Token> tokens, const StateSchema& schema) {
  Parser p(tokens, schema);
  return GoalProgram(p.program(), schema);
}

GoalProgram parse_program(std::string_view text, const StateSchema& schema) {
  auto tokens = tokenize(text);
  return parse(tokens, schema);
}

std::string pretty_print(const GoalNode& node) {
  std::string out;
  print_goal(node, out);
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace goalforge
