#include <doctest.h>

#include "goalforge/goal_lang.hpp"
#include "program_gen.hpp"

using namespace goalforge;

namespace {

StateSchema plate_schema() {
  return StateSchema({{"x", -0.1125, 0.1125}, {"y", -0.1125, 0.1125}, {"d", 0.0, 0.2}, {"p", 0.0, 60.0}});
}

ErrorKind error_of(std::string_view text, const StateSchema& schema) {
  try {
    parse_program(text, schema);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error for: " << text);
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("tokenize splits goal syntax into keywords, identifiers and numbers") {
  auto tokens = tokenize("reach Target: s.x in Goal.Range(2, 50)");
  std::vector<TokenKind> kinds;
  for (const auto& t : tokens) kinds.push_back(t.kind);
  std::vector<TokenKind> expected{TokenKind::KwReach, TokenKind::Ident,   TokenKind::Colon,  TokenKind::Ident,
                                  TokenKind::Dot,     TokenKind::Ident,   TokenKind::KwIn,   TokenKind::KwRange,
                                  TokenKind::LParen,  TokenKind::Number,  TokenKind::Comma,  TokenKind::Number,
                                  TokenKind::RParen};
  CHECK(kinds == expected);
  CHECK(tokens[1].text == "Target");
  CHECK(tokens[9].number == 2.0);
  CHECK(tokens[11].number == 50.0);
  CHECK(tokens[11].span.column == 36);
}

TEST_CASE("tokenize accepts empty input and comments") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("   # just a comment\n").empty());
  CHECK(tokenize("drive # c\n A").size() == 2);
}

TEST_CASE("tokenize reports illegal characters and malformed numerals") {
  auto kind = [](std::string_view text) {
    try {
      tokenize(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind("reach A: s.x in $") == ErrorKind::IllegalCharacter);
  CHECK(kind("Goal.Range(2., 3)") == ErrorKind::UnterminatedNumeral);
  CHECK(kind("Goal.Range(1e, 3)") == ErrorKind::UnterminatedNumeral);
  CHECK(kind("Goal.Range(2x, 3)") == ErrorKind::UnterminatedNumeral);
}

TEST_CASE("missing comma in a range is an unexpected token at the second number") {
  StateSchema schema({{"x", 0.0, 60.0}});
  try {
    parse_program("reach T: x in Goal.Range(2 50)", schema);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnexpectedToken);
    REQUIRE(e.span());
    CHECK(e.span()->line == 1);
    CHECK(e.span()->column == 28);
  }
}

TEST_CASE("drive and avoid on a norm parse into a conjunction") {
  auto program = parse_program(
      "drive BallNearCenter: norm(s.x, s.y) in Goal.Range(0, 0.005) and avoid FallOff: norm(s.x, s.y) in "
      "Goal.RangeAbove(0.1125)",
      plate_schema());
  const auto& root = program.root();
  REQUIRE_FALSE(root.is_atom());
  CHECK(root.combination().op == Combinator::And);
  const auto& drive = root.combination().lhs->atom();
  const auto& avoid = root.combination().rhs->atom();
  CHECK(drive.op == GoalOperator::Drive);
  CHECK(drive.name == "BallNearCenter");
  CHECK(drive.expr.kind() == StateExpr::Kind::Norm);
  CHECK(drive.range == Range::closed(0.0, 0.005));
  CHECK(avoid.op == GoalOperator::Avoid);
  CHECK(avoid.range == Range::above(0.1125));
  CHECK(program.atoms().size() == 2);
}

TEST_CASE("minimize with a below-only range") {
  auto program = parse_program("minimize D: s.d in Goal.RangeBelow(0.01125)", plate_schema());
  REQUIRE(program.root().is_atom());
  CHECK(program.root().atom().op == GoalOperator::Minimize);
  CHECK(program.root().atom().range == Range::below(0.01125));
}

TEST_CASE("validation errors") {
  StateSchema schema({{"x", 0.0, 60.0}});
  CHECK(error_of("maximize P: s.p in Goal.Range(2, 50)", schema) == ErrorKind::UnknownStateField);
  CHECK(error_of("minimize A: s.x in Goal.RangeAbove(2)", schema) == ErrorKind::InvalidRange);
  CHECK(error_of("maximize A: s.x in Goal.RangeBelow(2)", schema) == ErrorKind::InvalidRange);
  CHECK(error_of("reach A: s.x in Goal.Range(5, 5)", schema) == ErrorKind::InvalidRange);
  CHECK(error_of("reach A: s.x in Goal.Range(6, 5)", schema) == ErrorKind::InvalidRange);
  CHECK(error_of("reach A: x in Goal.Range(1, 2) and avoid A: x in Goal.RangeAbove(9)", schema) ==
        ErrorKind::DuplicateGoalName);
  CHECK(error_of("reach A: t.x in Goal.Range(1, 2)", schema) == ErrorKind::UnexpectedToken);
  CHECK(error_of("reach A: x in Goal.Range(1, 2) and", schema) == ErrorKind::UnexpectedToken);
  CHECK(error_of("(reach A: x in Goal.Range(1, 2)", schema) == ErrorKind::UnexpectedToken);
  CHECK(error_of("", schema) == ErrorKind::UnexpectedToken);
}

TEST_CASE("precedence: until < then < or < and, left associative") {
  StateSchema schema({{"x", 0.0, 10.0}});
  auto g = [](const char* name) { return std::string("reach ") + name + ": x in Goal.RangeAbove(1)"; };
  auto text = g("A") + " until " + g("B") + " then " + g("C") + " or " + g("D") + " and " + g("E");
  auto program = parse_program(text, schema);
  const auto& top = program.root().combination();
  CHECK(top.op == Combinator::Until);
  CHECK(top.lhs->atom().name == "A");
  const auto& then = top.rhs->combination();
  CHECK(then.op == Combinator::Then);
  CHECK(then.lhs->atom().name == "B");
  const auto& orr = then.rhs->combination();
  CHECK(orr.op == Combinator::Or);
  CHECK(orr.lhs->atom().name == "C");
  CHECK(orr.rhs->combination().op == Combinator::And);

  auto left = parse_program(g("A") + " then " + g("B") + " then " + g("C"), schema);
  CHECK(left.root().combination().lhs->combination().op == Combinator::Then);
  CHECK(left.root().combination().rhs->atom().name == "C");

  auto grouped = parse_program(g("A") + " and (" + g("B") + " or " + g("C") + ")", schema);
  CHECK(grouped.root().combination().op == Combinator::And);
  CHECK(grouped.root().combination().rhs->combination().op == Combinator::Or);
}

TEST_CASE("state expressions evaluate and print") {
  StateSchema schema({{"a", -1.0, 3.0}, {"b", 0.0, 2.0}});
  auto program = parse_program("reach R: abs(s.a - 2 * b) + -1 in Goal.RangeBelow(4)", schema);
  const auto& expr = program.root().atom().expr;
  Eigen::Vector2d s(1.0, 2.0);
  CHECK(expr.evaluate(s) == doctest::Approx(2.0));
  CHECK(expr.fields() == std::vector<std::size_t>{0, 1});
  std::vector<Interval> ranges{{-1.0, 3.0}, {0.0, 2.0}};
  auto box = expr.bounds(ranges);
  CHECK(box.lo == doctest::Approx(-1.0));
  CHECK(box.hi == doctest::Approx(4.0));
  CHECK(parse_program("reach R: " + expr.to_string() + " in Goal.RangeBelow(4)", schema).root().atom().expr == expr);
}

TEST_CASE("pretty print round-trips generated programs") {
  testing::ProgramGenerator gen(7, {.max_atoms = 4, .allow_until = true});
  auto schema = testing::grid_schema();
  for (int i = 0; i < 500; ++i) {
    auto text = gen.program();
    auto first = parse_program(text, schema);
    auto printed = pretty_print(first);
    auto second = parse_program(printed, schema);
    INFO(text);
    INFO(printed);
    CHECK(structurally_equal(first.root(), second.root()));
    CHECK(pretty_print(second) == printed);
  }
}

TEST_CASE("parse errors carry spans inside the input") {
  StateSchema schema({{"x", 0.0, 10.0}});
  const std::vector<std::string> bad{
      "reach A: x in Goal.Range(1 2)", "reach A: q in Goal.Range(1, 2)", "reach A x in Goal.Range(1, 2)",
      "reach A: x in Goal.Range(3, 2)", "reach A: x in Goal.Range(1, 2) or or", "reach A: x in @",
      "reach A: x in Goal.Range(1, 2) and avoid A: x in Goal.RangeAbove(9)"};
  for (const auto& text : bad) {
    try {
      parse_program(text, schema);
      FAIL("no error for " << text);
    } catch (const Error& e) {
      INFO(text);
      REQUIRE(e.span());
      CHECK(e.span()->offset + e.span()->length <= text.size());
    }
  }
}

TEST_CASE("parse is deterministic") {
  testing::ProgramGenerator gen(11);
  auto schema = testing::grid_schema();
  for (int i = 0; i < 50; ++i) {
    auto text = gen.program();
    CHECK(structurally_equal(parse_program(text, schema).root(), parse_program(text, schema).root()));
  }
}

TEST_CASE("schema json round trip") {
  auto schema = StateSchema::from_json_text(R"({"fields":[{"name":"level","min":0,"max":1},{"name":"v"}]})");
  CHECK(schema.size() == 2);
  CHECK(schema.field(0).max == 1.0);
  CHECK_FALSE(schema.field(1).min.has_value());
  CHECK(StateSchema::from_json_text(schema.to_json_text()) == schema);
}
