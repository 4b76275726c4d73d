#include "goalforge/sfspa.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

namespace goalforge {

namespace {

// Valuation-level constructions enumerate 2^atoms letters.
constexpr std::size_t kMaxAtoms = 10;

std::uint64_t letter_count(std::size_t atoms) { return std::uint64_t{1} << atoms; }

// ---------------------------------------------------------------------------
// Guard helpers
// ---------------------------------------------------------------------------

bool eval_guard(const Formula& f, std::uint64_t valuation,
                const std::unordered_map<std::string, std::size_t>& index) {
  switch (f.op()) {
    case Formula::Op::True: return true;
    case Formula::Op::Pred: {
      auto it = index.find(f.pred().name());
      if (it == index.end()) {
        throw Error(ErrorKind::MalformedAutomaton, "guard refers to unknown atom '" + f.pred().name() + "'");
      }
      return (valuation >> it->second) & 1u;
    }
    case Formula::Op::Not: return !eval_guard(f.child(0), valuation, index);
    case Formula::Op::And:
      return eval_guard(f.child(0), valuation, index) && eval_guard(f.child(1), valuation, index);
    case Formula::Op::Or:
      return eval_guard(f.child(0), valuation, index) || eval_guard(f.child(1), valuation, index);
    default:
      throw Error(ErrorKind::TemporalNodePresent, "edge guard " + f.to_sexpr() + " has a temporal operator");
  }
}

std::string guard_text(const Formula& f) {
  switch (f.op()) {
    case Formula::Op::True: return "true";
    case Formula::Op::Pred: return f.pred().name();
    case Formula::Op::Not: {
      const Formula& c = f.child(0);
      if (c.op() == Formula::Op::Pred) return "!" + c.pred().name();
      return "!(" + guard_text(c) + ")";
    }
    case Formula::Op::And: {
      auto side = [](const Formula& c) {
        return c.op() == Formula::Op::Or ? "(" + guard_text(c) + ")" : guard_text(c);
      };
      return side(f.child(0)) + " & " + side(f.child(1));
    }
    case Formula::Op::Or: return guard_text(f.child(0)) + " | " + guard_text(f.child(1));
    default: return f.to_sexpr();
  }
}

nlohmann::json guard_json(const Formula& f) {
  switch (f.op()) {
    case Formula::Op::True: return {{"op", "true"}};
    case Formula::Op::Pred: return {{"op", "pred"}, {"name", f.pred().name()}};
    case Formula::Op::Not: return {{"op", "not"}, {"args", {guard_json(f.child(0))}}};
    case Formula::Op::And:
      return {{"op", "and"}, {"args", {guard_json(f.child(0)), guard_json(f.child(1))}}};
    case Formula::Op::Or:
      return {{"op", "or"}, {"args", {guard_json(f.child(0)), guard_json(f.child(1))}}};
    default: return {{"op", f.to_sexpr()}};
  }
}

// Two-level minimisation (Quine-McCluskey primes, essential + greedy cover).
struct Cube {
  std::uint64_t value;
  std::uint64_t mask;  // set bits are free
  bool operator<(const Cube& o) const { return mask != o.mask ? mask < o.mask : value < o.value; }
  bool operator==(const Cube&) const = default;
  bool covers(std::uint64_t m) const { return (m & ~mask) == value; }
};

std::vector<Cube> prime_implicants(const std::vector<std::uint64_t>& minterms) {
  std::set<Cube> current;
  for (auto m : minterms) current.insert(Cube{m, 0});
  std::vector<Cube> primes;
  while (!current.empty()) {
    std::set<Cube> next;
    std::set<Cube> used;
    std::vector<Cube> cubes(current.begin(), current.end());
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      for (std::size_t j = i + 1; j < cubes.size() && cubes[j].mask == cubes[i].mask; ++j) {
        std::uint64_t diff = cubes[i].value ^ cubes[j].value;
        if (std::popcount(diff) == 1) {
          next.insert(Cube{cubes[i].value & ~diff, cubes[i].mask | diff});
          used.insert(cubes[i]);
          used.insert(cubes[j]);
        }
      }
    }
    for (const auto& c : cubes) {
      if (!used.count(c)) primes.push_back(c);
    }
    current = std::move(next);
  }
  return primes;
}

std::vector<Cube> minimal_cover(const std::vector<std::uint64_t>& minterms) {
  auto primes = prime_implicants(minterms);
  std::set<std::uint64_t> uncovered(minterms.begin(), minterms.end());
  std::vector<Cube> chosen;
  auto take = [&](const Cube& c) {
    chosen.push_back(c);
    for (auto it = uncovered.begin(); it != uncovered.end();) {
      it = c.covers(*it) ? uncovered.erase(it) : std::next(it);
    }
  };
  for (auto m : minterms) {
    const Cube* only = nullptr;
    int count = 0;
    for (const auto& p : primes) {
      if (p.covers(m)) {
        ++count;
        only = &p;
      }
    }
    if (count == 1 && uncovered.count(m) &&
        std::find(chosen.begin(), chosen.end(), *only) == chosen.end()) {
      take(*only);
    }
  }
  while (!uncovered.empty()) {
    const Cube* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& p : primes) {
      std::size_t n = 0;
      for (auto m : uncovered) n += p.covers(m);
      if (n > best_count) {
        best_count = n;
        best = &p;
      }
    }
    take(*best);
  }
  std::sort(chosen.begin(), chosen.end(), [](const Cube& a, const Cube& b) {
    return std::popcount(a.mask) != std::popcount(b.mask) ? std::popcount(a.mask) > std::popcount(b.mask)
                                                          : a.value < b.value;
  });
  return chosen;
}

Formula fold(std::vector<Formula> parts, bool conjunction) {
  Formula acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    acc = conjunction ? Formula::conjunction(acc, parts[i]) : Formula::disjunction(acc, parts[i]);
  }
  return acc;
}

Formula guard_from_minterms(const std::vector<std::uint64_t>& minterms, const std::vector<Predicate>& atoms) {
  if (minterms.size() == letter_count(atoms.size())) return Formula::truth();
  std::vector<Formula> terms;
  for (const auto& cube : minimal_cover(minterms)) {
    std::vector<Formula> lits;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if ((cube.mask >> i) & 1u) continue;
      Formula p = Formula::predicate(atoms[i]);
      lits.push_back(((cube.value >> i) & 1u) ? p : Formula::negation(p));
    }
    terms.push_back(lits.empty() ? Formula::truth() : fold(std::move(lits), true));
  }
  return fold(std::move(terms), false);
}

// ---------------------------------------------------------------------------
// Explicit letter-level automaton used by the constructions
// ---------------------------------------------------------------------------

struct Dfa {
  std::vector<Predicate> atoms;
  std::vector<std::string> labels;
  std::vector<char> accepting;
  std::vector<std::vector<std::uint32_t>> delta;  // [state][letter]
  std::uint32_t initial = 0;

  std::size_t size() const { return labels.size(); }
  std::uint64_t letters() const { return letter_count(atoms.size()); }

  bool sink(std::uint32_t q) const {
    return std::all_of(delta[q].begin(), delta[q].end(), [q](std::uint32_t t) { return t == q; });
  }
  bool terminal(std::uint32_t q) const { return accepting[q] && sink(q); }
  bool trap(std::uint32_t q) const { return !accepting[q] && sink(q); }

  std::uint32_t add(std::string label, bool acc) {
    labels.push_back(std::move(label));
    accepting.push_back(acc);
    delta.emplace_back();
    return static_cast<std::uint32_t>(labels.size() - 1);
  }
};

std::vector<Predicate> merge_atoms(const std::vector<Predicate>& a, const std::vector<Predicate>& b) {
  std::map<std::string, Predicate> byname;
  for (const auto* list : {&a, &b}) {
    for (const auto& p : *list) {
      auto [it, inserted] = byname.emplace(p.name(), p);
      if (!inserted && !(it->second == p)) {
        throw Error(ErrorKind::MalformedAutomaton, "atom '" + p.name() + "' has two different predicates");
      }
    }
  }
  if (byname.size() > kMaxAtoms) {
    throw Error(ErrorKind::UnsupportedOperand,
                "automaton construction supports at most " + std::to_string(kMaxAtoms) + " goals");
  }
  std::vector<Predicate> out;
  for (auto& [name, p] : byname) out.push_back(p);
  return out;
}

// Maps letters over `wide` to letters over the subset `narrow`.
std::vector<std::uint64_t> projection(const std::vector<Predicate>& wide, const std::vector<Predicate>& narrow) {
  std::vector<std::size_t> pos;
  for (const auto& p : narrow) {
    auto it = std::find_if(wide.begin(), wide.end(), [&](const Predicate& w) { return w.name() == p.name(); });
    pos.push_back(static_cast<std::size_t>(it - wide.begin()));
  }
  std::vector<std::uint64_t> out(letter_count(wide.size()));
  for (std::uint64_t v = 0; v < out.size(); ++v) {
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) u |= ((v >> pos[i]) & 1u) << i;
    out[v] = u;
  }
  return out;
}

Dfa to_dfa(const Sfspa& a, const std::vector<Predicate>& atoms) {
  Dfa d;
  d.atoms = atoms;
  d.initial = static_cast<std::uint32_t>(a.initial());
  auto proj = projection(atoms, a.atoms());
  // Own-letter transition table first; guards are evaluated once per letter.
  const std::uint64_t own = letter_count(a.atoms().size());
  for (StateId q = 0; q < a.size(); ++q) {
    d.add(a.states()[q].label, a.is_accepting(q));
    std::vector<std::uint32_t> row(own, static_cast<std::uint32_t>(q));
    if (!a.is_trap(q) && !a.is_terminal(q)) {
      for (std::uint64_t u = 0; u < own; ++u) {
        for (auto ei : a.outgoing(q)) {
          const Edge& e = a.edges()[ei];
          if (a.guard_holds(e.guard, u)) {
            row[u] = static_cast<std::uint32_t>(e.to);
            break;
          }
        }
      }
    }
    d.delta.back().resize(d.letters());
    for (std::uint64_t v = 0; v < d.letters(); ++v) d.delta.back()[v] = row[proj[v]];
  }
  return d;
}

// Reachable part, Moore partition refinement, canonical BFS numbering.
Dfa minimize(const Dfa& in) {
  const std::uint64_t letters = in.letters();
  std::vector<std::uint32_t> order{in.initial};
  std::vector<int> seen(in.size(), -1);
  seen[in.initial] = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::uint64_t v = 0; v < letters; ++v) {
      auto t = in.delta[order[i]][v];
      if (seen[t] < 0) {
        seen[t] = static_cast<int>(order.size());
        order.push_back(t);
      }
    }
  }

  std::vector<std::uint32_t> cls(in.size(), 0);
  std::size_t classes = 0;
  {
    std::map<bool, std::uint32_t> ids;
    for (auto q : order) {
      auto [it, ins] = ids.emplace(in.accepting[q] != 0, static_cast<std::uint32_t>(ids.size()));
      cls[q] = it->second;
    }
    classes = ids.size();
  }
  while (true) {
    std::map<std::vector<std::uint32_t>, std::uint32_t> ids;
    std::vector<std::uint32_t> next(in.size(), 0);
    for (auto q : order) {
      std::vector<std::uint32_t> sig;
      sig.reserve(letters + 1);
      sig.push_back(cls[q]);
      for (std::uint64_t v = 0; v < letters; ++v) sig.push_back(cls[in.delta[q][v]]);
      auto [it, ins] = ids.emplace(std::move(sig), static_cast<std::uint32_t>(ids.size()));
      next[q] = it->second;
    }
    cls = std::move(next);
    if (ids.size() == classes) break;
    classes = ids.size();
  }

  // Canonical numbering by BFS over classes.
  std::vector<std::uint32_t> rep(classes, UINT32_MAX);
  for (auto q : order) {
    if (rep[cls[q]] == UINT32_MAX) rep[cls[q]] = q;
  }
  Dfa out;
  out.atoms = in.atoms;
  std::vector<int> number(classes, -1);
  std::vector<std::uint32_t> queue{cls[in.initial]};
  number[cls[in.initial]] = 0;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    auto c = queue[i];
    auto q = rep[c];
    out.add(in.labels[q], in.accepting[q] != 0);
    for (std::uint64_t v = 0; v < letters; ++v) {
      auto tc = cls[in.delta[q][v]];
      if (number[tc] < 0) {
        number[tc] = static_cast<int>(queue.size());
        queue.push_back(tc);
      }
    }
  }
  for (std::size_t i = 0; i < queue.size(); ++i) {
    auto q = rep[queue[i]];
    auto& row = out.delta[i];
    row.resize(letters);
    for (std::uint64_t v = 0; v < letters; ++v) row[v] = static_cast<std::uint32_t>(number[cls[in.delta[q][v]]]);
  }
  out.initial = 0;
  return out;
}

Sfspa to_sfspa(const Dfa& d) {
  std::vector<AutomatonState> states;
  std::vector<Edge> edges;
  for (std::uint32_t q = 0; q < d.size(); ++q) {
    AutomatonState st{d.labels[q], d.accepting[q] != 0, d.trap(q)};
    if (d.terminal(q)) st.label = st.label.empty() ? "done" : st.label;
    states.push_back(st);
  }
  for (std::uint32_t q = 0; q < d.size(); ++q) {
    if (d.sink(q)) continue;
    std::map<std::uint32_t, std::vector<std::uint64_t>> by_target;
    for (std::uint64_t v = 0; v < d.letters(); ++v) by_target[d.delta[q][v]].push_back(v);
    if (auto it = by_target.find(q); it != by_target.end()) {
      edges.push_back(Edge{q, q, guard_from_minterms(it->second, d.atoms)});
    }
    for (const auto& [t, minterms] : by_target) {
      if (t != q) edges.push_back(Edge{q, t, guard_from_minterms(minterms, d.atoms)});
    }
  }
  return Sfspa(d.atoms, std::move(states), std::move(edges), d.initial);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sfspa
// ---------------------------------------------------------------------------

Sfspa::Sfspa(std::vector<Predicate> atoms, std::vector<AutomatonState> states, std::vector<Edge> edges,
             StateId initial)
    : atoms_(std::move(atoms)), states_(std::move(states)), edges_(std::move(edges)), initial_(initial) {
  if (states_.empty() || initial_ >= states_.size()) {
    throw Error(ErrorKind::MalformedAutomaton, "initial state out of range");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!index.emplace(atoms_[i].name(), i).second) {
      throw Error(ErrorKind::MalformedAutomaton, "duplicate atom '" + atoms_[i].name() + "'");
    }
  }
  outgoing_.assign(states_.size(), {});
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.from >= states_.size() || e.to >= states_.size()) {
      throw Error(ErrorKind::MalformedAutomaton, "edge refers to a missing state");
    }
    if (!e.guard.is_boolean()) {
      throw Error(ErrorKind::TemporalNodePresent, "edge guard " + e.guard.to_sexpr() + " has a temporal operator");
    }
    if (states_[e.from].trap) {
      throw Error(ErrorKind::MalformedAutomaton, "trap state '" + states_[e.from].label + "' has an outgoing edge");
    }
    outgoing_[e.from].push_back(i);
  }
  for (auto& out : outgoing_) {
    std::stable_sort(out.begin(), out.end(), [this](std::size_t a, std::size_t b) {
      return edges_[a].is_self_loop() && !edges_[b].is_self_loop();
    });
  }
  for (const auto& st : states_) {
    if (st.trap && st.accepting) {
      throw Error(ErrorKind::MalformedAutomaton, "state '" + st.label + "' is both trap and accepting");
    }
  }
  if (atoms_.size() <= 16) {
    for (StateId q = 0; q < states_.size(); ++q) {
      for (std::uint64_t v = 0; v < letter_count(atoms_.size()); ++v) {
        int enabled = 0;
        for (auto ei : outgoing_[q]) enabled += eval_guard(edges_[ei].guard, v, index);
        if (enabled > 1) {
          throw Error(ErrorKind::PredicateOverlap,
                      "outgoing guards of state '" + states_[q].label + "' are not mutually exclusive");
        }
      }
    }
  }
}

const Edge* Sfspa::self_loop(StateId q) const {
  for (auto ei : outgoing_.at(q)) {
    if (edges_[ei].is_self_loop()) return &edges_[ei];
  }
  return nullptr;
}

std::optional<std::size_t> Sfspa::atom_index(std::string_view name) const {
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i].name() == name) return i;
  }
  return std::nullopt;
}

bool Sfspa::guard_holds(const Formula& guard, std::uint64_t valuation) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < atoms_.size(); ++i) index.emplace(atoms_[i].name(), i);
  return eval_guard(guard, valuation, index);
}

const Edge* Sfspa::enabled_edge(StateId q, const Eigen::Ref<const Eigen::VectorXd>& state) const {
  for (auto ei : outgoing_.at(q)) {
    if (holds_bool(edges_[ei].guard, state)) return &edges_[ei];
  }
  return nullptr;
}

StateId Sfspa::next(StateId q, const Eigen::Ref<const Eigen::VectorXd>& state) const {
  const Edge* e = enabled_edge(q, state);
  return e ? e->to : q;
}

std::string Sfspa::to_json() const {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& p : atoms_) {
    nlohmann::json a = {{"name", p.name()}, {"expr", p.expr().to_sexpr()}};
    switch (p.relation()) {
      case Predicate::Relation::InRange:
        a["relation"] = "in";
        a["lower"] = *p.range().lower;
        a["upper"] = *p.range().upper;
        break;
      case Predicate::Relation::LessThan:
        a["relation"] = "<";
        a["upper"] = *p.range().upper;
        break;
      case Predicate::Relation::GreaterThan:
        a["relation"] = ">";
        a["lower"] = *p.range().lower;
        break;
    }
    if (p.region_radius()) a["region_radius"] = *p.region_radius();
    atoms.push_back(std::move(a));
  }
  nlohmann::json states = nlohmann::json::array();
  for (StateId q = 0; q < states_.size(); ++q) {
    states.push_back({{"id", q},
                      {"label", states_[q].label},
                      {"accepting", states_[q].accepting},
                      {"trap", states_[q].trap},
                      {"terminal", is_terminal(q)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : edges_) {
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"self_loop", e.is_self_loop()},
                     {"guard", guard_json(e.guard)},
                     {"guard_text", guard_text(e.guard)}});
  }
  nlohmann::json doc = {{"format", "goalforge-sfspa"}, {"version", 1},     {"atoms", atoms},
                        {"initial", initial_},         {"states", states}, {"edges", edges}};
  return doc.dump(2);
}

std::string Sfspa::to_dot() const {
  std::string out = "digraph sfspa {\n  rankdir=LR;\n  node [shape=circle];\n  start [shape=point];\n";
  for (StateId q = 0; q < states_.size(); ++q) {
    const auto& st = states_[q];
    std::string attrs = "label=\"" + st.label + "\"";
    if (st.accepting) attrs += ", shape=doublecircle";
    if (st.trap) attrs += ", style=filled, fillcolor=gray70";
    out += "  q" + std::to_string(q) + " [" + attrs + "];\n";
  }
  out += "  start -> q" + std::to_string(initial_) + ";\n";
  for (const auto& e : edges_) {
    out += "  q" + std::to_string(e.from) + " -> q" + std::to_string(e.to) + " [label=\"" +
           guard_text(e.guard) + "\"];\n";
  }
  out += "}\n";
  return out;
}

std::string Sfspa::hash() const {
  auto compact = nlohmann::json::parse(to_json()).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(compact)));
  return buf;
}

// ---------------------------------------------------------------------------
// Constructions
// ---------------------------------------------------------------------------

Sfspa build_template(const GoalAtom& atom) {
  Predicate p = Predicate::from_goal(atom);
  Formula yes = Formula::predicate(p);
  Formula no = Formula::negation(yes);
  switch (atom.op) {
    case GoalOperator::Reach:
      return Sfspa({p}, {{"q0", false, false}, {"qF", true, false}}, {{0, 0, no}, {0, 1, yes}}, 0);
    case GoalOperator::Drive:
    case GoalOperator::Minimize:
    case GoalOperator::Maximize:
      return Sfspa({p}, {{"q0", false, false}, {"qF", true, false}},
                   {{0, 0, no}, {0, 1, yes}, {1, 1, yes}, {1, 0, no}}, 0);
    case GoalOperator::Avoid:
      return Sfspa({p}, {{"q0", true, false}, {"Tr", false, true}}, {{0, 0, no}, {0, 1, yes}}, 0);
  }
  throw Error(ErrorKind::MalformedAutomaton, "unknown goal operator");
}

Sfspa product(const Sfspa& a, const Sfspa& b, ProductMode mode) {
  auto atoms = merge_atoms(a.atoms(), b.atoms());
  Dfa da = to_dfa(a, atoms), db = to_dfa(b, atoms);
  Dfa out;
  out.atoms = atoms;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> ids;
  std::deque<std::pair<std::uint32_t, std::uint32_t>> queue;
  auto intern = [&](std::uint32_t qa, std::uint32_t qb) {
    auto key = std::make_pair(qa, qb);
    if (auto it = ids.find(key); it != ids.end()) return it->second;
    bool acc = mode == ProductMode::And ? (da.accepting[qa] && db.accepting[qb])
                                        : (da.accepting[qa] || db.accepting[qb]);
    auto id = out.add("(" + da.labels[qa] + "," + db.labels[qb] + ")", acc);
    ids.emplace(key, id);
    queue.push_back(key);
    return id;
  };
  out.initial = intern(da.initial, db.initial);
  while (!queue.empty()) {
    auto [qa, qb] = queue.front();
    queue.pop_front();
    auto id = ids.at({qa, qb});
    std::vector<std::uint32_t> row(out.letters());
    for (std::uint64_t v = 0; v < out.letters(); ++v) row[v] = intern(da.delta[qa][v], db.delta[qb][v]);
    out.delta[id] = std::move(row);
  }
  return to_sfspa(minimize(out));
}

Sfspa chain_then(const Sfspa& a, const Sfspa& b) {
  auto atoms = merge_atoms(a.atoms(), b.atoms());
  Dfa da = to_dfa(a, atoms), db = to_dfa(b, atoms);
  Dfa out;
  out.atoms = atoms;

  // Keys: {0, {q}} phase one in a-state q; {1, S} phase two with live
  // b-instances S; {2, {}} trap.
  using Key = std::pair<int, std::vector<std::uint32_t>>;
  std::map<Key, std::uint32_t> ids;
  std::deque<Key> queue;
  auto intern = [&](const Key& key) {
    if (auto it = ids.find(key); it != ids.end()) return it->second;
    std::string label;
    bool acc = false;
    if (key.first == 0) {
      label = "a:" + da.labels[key.second[0]];
    } else if (key.first == 1) {
      label = "b:{";
      for (std::size_t i = 0; i < key.second.size(); ++i) {
        label += (i ? "," : "") + db.labels[key.second[i]];
        acc = acc || db.accepting[key.second[i]];
      }
      label += "}";
    } else {
      label = "Tr";
    }
    auto id = out.add(label, acc);
    ids.emplace(key, id);
    queue.push_back(key);
    return id;
  };

  const Key trap{2, {}};
  const Key handoff{1, {}};
  // A goal already met by the empty segment hands off before the first step.
  const bool skip = da.accepting[da.delta[da.initial][0]] != 0;
  out.initial = intern(skip ? handoff : Key{0, {da.initial}});

  while (!queue.empty()) {
    Key key = queue.front();
    queue.pop_front();
    auto id = ids.at(key);
    std::vector<std::uint32_t> row(out.letters());
    for (std::uint64_t v = 0; v < out.letters(); ++v) {
      if (key.first == 2) {
        row[v] = id;
      } else if (key.first == 0) {
        auto qa = da.delta[key.second[0]][v];
        if (da.accepting[qa]) row[v] = intern(handoff);
        else if (da.trap(qa)) row[v] = intern(trap);
        else row[v] = intern(Key{0, {qa}});
      } else {
        std::set<std::uint32_t> live;
        live.insert(db.delta[db.initial][v]);
        for (auto qb : key.second) live.insert(db.delta[qb][v]);
        std::vector<std::uint32_t> kept;
        bool done = false;
        for (auto qb : live) {
          if (db.terminal(qb)) done = true;
          if (!db.trap(qb)) kept.push_back(qb);
        }
        // Once some instance is irrevocably accepted, keep only that one.
        if (done) {
          for (auto qb : kept) {
            if (db.terminal(qb)) {
              kept = {qb};
              break;
            }
          }
        }
        row[v] = intern(Key{1, kept});
      }
    }
    out.delta[id] = std::move(row);
  }
  return to_sfspa(minimize(out));
}

Sfspa build_until(const GoalNode& hold, const GoalNode& goal) {
  if (!hold.is_atom() || !goal.is_atom()) {
    throw Error(ErrorKind::UnsupportedOperand, "until supports single goals on both sides");
  }
  Predicate pb = Predicate::from_goal(hold.atom());
  Predicate pa = Predicate::from_goal(goal.atom());
  Formula b = Formula::predicate(pb), a = Formula::predicate(pa);
  return Sfspa({pb, pa}, {{"q0", false, false}, {"qF", true, false}, {"Tr", false, true}},
               {{0, 0, Formula::conjunction(b, Formula::negation(a))},
                {0, 1, a},
                {0, 2, Formula::conjunction(Formula::negation(b), Formula::negation(a))}},
               0);
}

Sfspa build(const GoalNode& node) {
  if (node.is_atom()) return build_template(node.atom());
  const auto& c = node.combination();
  switch (c.op) {
    case Combinator::And: return product(build(*c.lhs), build(*c.rhs), ProductMode::And);
    case Combinator::Or: return product(build(*c.lhs), build(*c.rhs), ProductMode::Or);
    case Combinator::Then: return chain_then(build(*c.lhs), build(*c.rhs));
    case Combinator::Until: return build_until(*c.lhs, *c.rhs);
  }
  throw Error(ErrorKind::MalformedAutomaton, "unknown combinator");
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

bool accepts(const Sfspa& automaton, std::span<const Eigen::VectorXd> trace) {
  if (trace.empty()) throw Error(ErrorKind::EmptyTrace, "trace must hold at least one state");
  StateId q = automaton.initial();
  for (const auto& s : trace) {
    q = automaton.next(q, s);
    if (automaton.is_trap(q)) return false;
    if (automaton.is_terminal(q)) return true;
  }
  return automaton.is_accepting(q);
}

AutomatonRun::AutomatonRun(const Sfspa& automaton) : automaton_(&automaton), current_(automaton.initial()) {
  reset();
}

void AutomatonRun::reset() {
  current_ = automaton_->initial();
  history_.clear();
  history_.push_back(Entry{0, current_, std::nullopt});
}

std::optional<std::size_t> AutomatonRun::advance(const Eigen::Ref<const Eigen::VectorXd>& state) {
  std::optional<std::size_t> taken;
  if (!automaton_->is_trap(current_) && !automaton_->is_terminal(current_)) {
    if (const Edge* e = automaton_->enabled_edge(current_, state)) {
      taken = static_cast<std::size_t>(e - automaton_->edges().data());
      current_ = e->to;
    }
  }
  history_.push_back(Entry{history_.size(), current_, taken});
  return taken;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

StructuralReport check_structure(const Sfspa& automaton) {
  StructuralReport report;
  for (StateId q = 0; q < automaton.size(); ++q) {
    const auto& st = automaton.states()[q];
    const std::string name = "state " + std::to_string(q) + " '" + st.label + "'";
    if (st.trap) {
      if (!automaton.outgoing(q).empty()) report.violations.push_back(name + ": trap has outgoing edges");
      continue;
    }
    if (automaton.is_terminal(q)) continue;
    if (!automaton.self_loop(q)) report.violations.push_back(name + ": no self-loop edge");
  }
  return report;
}

DeterminismReport check_determinism(const Sfspa& automaton, std::span<const Eigen::VectorXd> states) {
  DeterminismReport r;
  for (const auto& s : states) {
    for (StateId q = 0; q < automaton.size(); ++q) {
      if (automaton.is_trap(q) || automaton.is_terminal(q)) continue;
      ++r.samples;
      std::size_t enabled = 0;
      for (auto ei : automaton.outgoing(q)) enabled += holds_bool(automaton.edges()[ei].guard, s);
      if (enabled > 1) ++r.overlaps;
      if (enabled == 0) ++r.gaps;
    }
  }
  return r;
}

bool isomorphic(const Sfspa& a, const Sfspa& b) {
  if (a.atoms().size() != b.atoms().size()) return false;
  for (const auto& p : a.atoms()) {
    auto j = b.atom_index(p.name());
    if (!j || !(b.atoms()[*j] == p)) return false;
  }
  auto atoms = merge_atoms(a.atoms(), b.atoms());
  Dfa da = to_dfa(a, atoms), db = to_dfa(b, atoms);
  std::vector<int> map_ab(da.size(), -1), map_ba(db.size(), -1);
  std::deque<std::pair<std::uint32_t, std::uint32_t>> queue{{da.initial, db.initial}};
  map_ab[da.initial] = static_cast<int>(db.initial);
  map_ba[db.initial] = static_cast<int>(da.initial);
  std::size_t matched = 1;
  while (!queue.empty()) {
    auto [qa, qb] = queue.front();
    queue.pop_front();
    if (a.is_accepting(qa) != b.is_accepting(qb) || a.is_trap(qa) != b.is_trap(qb) ||
        a.is_terminal(qa) != b.is_terminal(qb)) {
      return false;
    }
    for (std::uint64_t v = 0; v < da.letters(); ++v) {
      auto ta = da.delta[qa][v], tb = db.delta[qb][v];
      if (map_ab[ta] < 0 && map_ba[tb] < 0) {
        map_ab[ta] = static_cast<int>(tb);
        map_ba[tb] = static_cast<int>(ta);
        ++matched;
        queue.emplace_back(ta, tb);
      } else if (map_ab[ta] != static_cast<int>(tb) || map_ba[tb] != static_cast<int>(ta)) {
        return false;
      }
    }
  }
  auto reachable = [](const Dfa& d) {
    std::set<std::uint32_t> seen{d.initial};
    std::deque<std::uint32_t> q{d.initial};
    while (!q.empty()) {
      auto s = q.front();
      q.pop_front();
      for (auto t : d.delta[s]) {
        if (seen.insert(t).second) q.push_back(t);
      }
    }
    return seen.size();
  };
  return matched == reachable(da) && matched == reachable(db);
}

}  // namespace goalforge
