#include <doctest.h>

#include <random>
#include <regex>

#include "goalforge/sfspa.hpp"
#include "program_gen.hpp"

using namespace goalforge;

namespace {

StateSchema line_schema() { return StateSchema({{"x", -10.0, 10.0}, {"y", -10.0, 10.0}}); }

GoalProgram program(std::string_view text) { return parse_program(text, line_schema()); }

Sfspa compile(std::string_view text) { return build(program(text)); }

std::vector<Eigen::VectorXd> line_trace(std::initializer_list<double> xs) {
  std::vector<Eigen::VectorXd> out;
  for (double x : xs) out.push_back(Eigen::Vector2d(x, 0.0));
  return out;
}

std::size_t count_traps(const Sfspa& a) {
  std::size_t n = 0;
  for (StateId q = 0; q < a.size(); ++q) n += a.is_trap(q);
  return n;
}

std::vector<std::vector<Eigen::VectorXd>> all_line_traces(int length, std::initializer_list<double> values) {
  std::vector<std::vector<Eigen::VectorXd>> out{{}};
  for (int i = 0; i < length; ++i) {
    std::vector<std::vector<Eigen::VectorXd>> next;
    for (const auto& prefix : out) {
      for (double v : values) {
        auto t = prefix;
        t.push_back(Eigen::Vector2d(v, 0.0));
        next.push_back(std::move(t));
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("drive template") {
  auto a = compile("drive A: x in Goal.Range(2, 4)");
  CHECK(a.size() == 2);
  CHECK(a.edges().size() == 4);
  CHECK_FALSE(a.is_accepting(a.initial()));
  StateId qf = 1 - a.initial();
  CHECK(a.is_accepting(qf));
  REQUIRE(a.self_loop(qf));
  CHECK(a.self_loop(qf)->guard.to_sexpr() == "(pred A (in s.x 2 4))");
  CHECK(a.self_loop(a.initial())->guard.to_sexpr() == "(not (pred A (in s.x 2 4)))");
}

TEST_CASE("reach template ends in a terminal state") {
  auto a = compile("reach A: x in Goal.Range(2, 4)");
  CHECK(a.size() == 2);
  CHECK(a.edges().size() == 2);
  CHECK(a.outgoing(1).empty());
  CHECK(a.is_terminal(1));
}

TEST_CASE("avoid template accepts initially and traps on entry") {
  auto a = compile("avoid R: x in Goal.RangeAbove(5)");
  CHECK(a.is_accepting(a.initial()));
  CHECK(a.is_trap(1));
  CHECK(a.next(a.initial(), Eigen::Vector2d(6, 0)) == 1);
  CHECK(a.next(a.initial(), Eigen::Vector2d(4, 0)) == a.initial());
}

TEST_CASE("templates match hand-built automata") {
  auto p = Predicate::from_goal(program("minimize M: x in Goal.RangeBelow(1)").root().atom());
  Formula yes = Formula::predicate(p), no = Formula::negation(yes);
  Sfspa expected({p}, {{"q0", false, false}, {"qF", true, false}}, {{0, 0, no}, {0, 1, yes}, {1, 1, yes}, {1, 0, no}},
                 0);
  CHECK(isomorphic(compile("minimize M: x in Goal.RangeBelow(1)"), expected));
}

TEST_CASE("drive and avoid product has two live states and one trap") {
  auto a = compile("drive A: x in Goal.Range(0, 2) and avoid R: x in Goal.RangeAbove(5)");
  CHECK(a.size() == 3);
  CHECK(count_traps(a) == 1);

  // Hand enumeration of the pair automaton: (q0,safe) (qF,safe) and trap.
  auto pa = Predicate::from_goal(program("drive A: x in Goal.Range(0, 2)").root().atom());
  auto pr = Predicate::from_goal(program("avoid R: x in Goal.RangeAbove(5)").root().atom());
  Formula A = Formula::predicate(pa), R = Formula::predicate(pr);
  Formula nA = Formula::negation(A), nR = Formula::negation(R);
  Sfspa expected({pa, pr}, {{"seek", false, false}, {"hold", true, false}, {"trap", false, true}},
                 {{0, 0, Formula::conjunction(nA, nR)},
                  {0, 1, Formula::conjunction(A, nR)},
                  {0, 2, R},
                  {1, 1, Formula::conjunction(A, nR)},
                  {1, 0, Formula::conjunction(nA, nR)},
                  {1, 2, R}},
                 0);
  CHECK(isomorphic(a, expected));
}

TEST_CASE("product with an always-accepting automaton is the identity") {
  auto a = compile("drive A: x in Goal.Range(0, 2) then reach B: x in Goal.RangeAbove(5)");
  Sfspa always({}, {{"any", true, false}}, {{0, 0, Formula::truth()}}, 0);
  CHECK(isomorphic(product(a, always, ProductMode::And), a));
  CHECK(isomorphic(product(always, a, ProductMode::And), a));
}

TEST_CASE("reach or reach over disjoint regions") {
  auto a = compile("reach A: x in Goal.Range(-4, -2) or reach B: x in Goal.Range(2, 4)");
  for (const auto& trace : all_line_traces(4, {-3, 0, 3})) {
    bool entered = false;
    for (const auto& s : trace) entered = entered || std::abs(s(0)) == 3.0;
    CHECK(accepts(a, trace) == entered);
  }
}

TEST_CASE("reach then reach has three live states") {
  auto a = compile("reach A: x in Goal.Range(0, 2) then reach B: x in Goal.Range(4, 6)");
  CHECK(a.size() == 3);
  CHECK(count_traps(a) == 0);
  std::size_t terminal = 0;
  for (StateId q = 0; q < a.size(); ++q) terminal += a.is_terminal(q);
  CHECK(terminal == 1);
  CHECK(accepts(a, line_trace({1, 5})));
  // B must hold strictly after A is first met.
  CHECK_FALSE(accepts(a, line_trace({5, 1})));
  CHECK_FALSE(accepts(a, line_trace({1})));
}

TEST_CASE("reach then avoid accepts in the safe phase") {
  auto text = "reach A: x in Goal.Range(0, 2) then avoid R: x in Goal.RangeAbove(5)";
  auto a = compile(text);
  auto f = translate(program(text));
  std::size_t accepting = 0;
  for (StateId q = 0; q < a.size(); ++q) accepting += a.is_accepting(q);
  CHECK(accepting == 1);
  for (const auto& trace : all_line_traces(5, {-1, 1, 3, 6})) {
    CHECK(accepts(a, trace) == trace_satisfies(f, trace));
  }
}

TEST_CASE("a trap in the first phase traps the chain") {
  auto a = compile("avoid R: x in Goal.RangeAbove(5) then reach B: x in Goal.Range(0, 2)");
  CHECK(count_traps(a) <= 1);
  auto b = compile("reach A: x in Goal.Range(0, 2) until reach B: x in Goal.RangeAbove(5)");
  auto c = compile("(reach A: x in Goal.Range(0, 2) until reach B: x in Goal.RangeAbove(5)) then reach C: x in "
                   "Goal.Range(-9, -8)");
  CHECK(count_traps(c) == 1);
  CHECK_FALSE(accepts(c, line_trace({1, -3, 6, -8.5})));
  CHECK(accepts(c, line_trace({1, 6, -8.5})));
  CHECK_FALSE(accepts(b, line_trace({1, -3, 6})));
}

TEST_CASE("until automaton") {
  auto text = "reach B: x in Goal.RangeAbove(0) until reach A: x in Goal.Range(4, 6)";
  auto a = compile(text);
  CHECK(a.size() == 3);
  CHECK(count_traps(a) == 1);
  CHECK(accepts(a, line_trace({1, 2, 3, 5})));
  CHECK_FALSE(accepts(a, line_trace({1, -1, 5})));
  CHECK(accepts(a, line_trace({5, -1, -1})));

  auto f = translate(program(text));
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> step(-1, 1), start(-2, 6);
  for (int i = 0; i < 500; ++i) {
    std::vector<Eigen::VectorXd> trace;
    double x = start(rng);
    for (int k = 0; k < 12; ++k) {
      trace.push_back(Eigen::Vector2d(x, 0));
      x += step(rng);
    }
    CHECK(accepts(a, trace) == trace_satisfies(f, trace));
  }
  CHECK_THROWS_AS(compile("(reach A: x in Goal.RangeAbove(0) and reach C: y in Goal.RangeAbove(0)) until reach B: x "
                          "in Goal.Range(4, 6)"),
                  Error);
}

TEST_CASE("accepts follows the run") {
  auto drive = compile("drive A: x in Goal.Range(2, 4)");
  CHECK(accepts(drive, line_trace({0, 1, 3})));
  CHECK_FALSE(accepts(drive, line_trace({3, 3, 0})));
  auto avoid = compile("avoid R: x in Goal.RangeAbove(5)");
  CHECK_FALSE(accepts(avoid, line_trace({0, 6, 0})));
  CHECK(accepts(avoid, line_trace({0, 1, 0})));
  auto both = compile("drive A: x in Goal.Range(2, 4) and avoid R: x in Goal.RangeAbove(5)");
  auto trace = line_trace({0, 3, 3, 1});
  CHECK_FALSE(accepts(both, trace));
  CHECK(trace_satisfies(translate(program("drive A: x in Goal.Range(2, 4) and avoid R: x in Goal.RangeAbove(5)")),
                        trace) == false);
  CHECK_THROWS_AS(accepts(both, std::span<const Eigen::VectorXd>{}), Error);
}

TEST_CASE("automaton run history") {
  auto a = compile("drive A: x in Goal.Range(2, 4)");
  AutomatonRun run(a);
  REQUIRE(run.history().size() == 1);
  CHECK(run.history()[0].state == a.initial());
  auto stay = run.advance(Eigen::Vector2d(0, 0));
  REQUIRE(stay);
  CHECK(a.edges()[*stay].is_self_loop());
  auto move = run.advance(Eigen::Vector2d(3, 0));
  REQUIRE(move);
  CHECK_FALSE(a.edges()[*move].is_self_loop());
  CHECK(a.is_accepting(run.current()));
  CHECK(run.history().size() == 3);
  run.reset();
  CHECK(run.history().size() == 1);
  CHECK(run.current() == a.initial());
}

TEST_CASE("malformed automata are rejected") {
  auto p = Predicate::from_goal(program("reach A: x in Goal.Range(2, 4)").root().atom());
  Formula A = Formula::predicate(p);
  CHECK_THROWS_AS(Sfspa({p}, {{"q0", false, false}}, {{0, 0, A}}, 3), Error);
  CHECK_THROWS_AS(Sfspa({p}, {{"q0", false, false}, {"t", false, true}}, {{1, 0, A}}, 0), Error);
  try {
    Sfspa({p}, {{"q0", false, false}, {"q1", true, false}}, {{0, 0, Formula::truth()}, {0, 1, A}}, 0);
    FAIL("overlap accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PredicateOverlap);
  }
  CHECK_THROWS_AS(Sfspa({p}, {{"q0", false, false}}, {{0, 0, Formula::eventually(A)}}, 0), Error);
}

TEST_CASE("oracle equivalence on random programs") {
  testing::ProgramGenerator gen(2024);
  auto schema = testing::grid_schema();
  int pairs = 0;
  for (int i = 0; i < 300; ++i) {
    auto text = gen.program();
    auto prog = parse_program(text, schema);
    auto a = build(prog);
    auto f = translate(prog);
    for (int k = 0; k < 10; ++k) {
      auto trace = gen.trace();
      INFO(text);
      CHECK(accepts(a, trace) == trace_satisfies(f, trace));
      ++pairs;
    }
  }
  CHECK(pairs == 3000);
}

TEST_CASE("constructed automata pass the structural checks") {
  testing::ProgramGenerator gen(99, {.max_atoms = 3, .allow_until = true});
  auto schema = testing::grid_schema();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::vector<Eigen::VectorXd> states;
  for (int i = 0; i < 1000; ++i) states.push_back(Eigen::Vector2d(coord(rng), coord(rng)));
  for (int i = 0; i < 200; ++i) {
    auto text = gen.program();
    auto a = build(parse_program(text, schema));
    INFO(text);
    auto report = check_structure(a);
    CHECK(report.ok());
    auto det = check_determinism(a, states);
    CHECK(det.overlaps == 0);
    CHECK(det.gaps == 0);
  }
}

TEST_CASE("products commute up to isomorphism") {
  testing::ProgramGenerator gen(123, {.max_atoms = 2});
  auto schema = testing::grid_schema();
  for (int i = 0; i < 100; ++i) {
    auto left = build(parse_program(gen.program(), schema));
    auto right_program = gen.program();
    // Rename so the two sides never share goal names.
    right_program = std::regex_replace(right_program, std::regex(" G([0-9]+):"), " H$1:");
    auto right = build(parse_program(right_program, schema));
    for (auto mode : {ProductMode::And, ProductMode::Or}) {
      auto ab = product(left, right, mode);
      auto ba = product(right, left, mode);
      CHECK(ab.size() <= 16);
      CHECK(isomorphic(ab, ba));
    }
  }
}

TEST_CASE("json, dot and hash exports") {
  auto a = compile("drive A: x in Goal.Range(0, 2) and avoid R: x in Goal.RangeAbove(5)");
  auto json = a.to_json();
  CHECK(json.find("\"format\": \"goalforge-sfspa\"") != std::string::npos);
  CHECK(json.find("\"guard_text\"") != std::string::npos);
  auto dot = a.to_dot();
  CHECK(dot.find("doublecircle") != std::string::npos);
  CHECK(dot.find("filled") != std::string::npos);
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() == compile("drive A: x in Goal.Range(0, 2) and avoid R: x in Goal.RangeAbove(5)").hash());
  CHECK(a.hash() != compile("drive A: x in Goal.Range(0, 3) and avoid R: x in Goal.RangeAbove(5)").hash());
}
