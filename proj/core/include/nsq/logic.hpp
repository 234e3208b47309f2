#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsq {

/// Interned identifier. Names starting with an uppercase letter denote
/// variables, anything else denotes a constant or predicate symbol.
class Symbol {
 public:
  Symbol() : id_(kInvalid) {}

  /// Interns `name`. Throws std::invalid_argument unless the name matches
  /// [A-Za-z_][A-Za-z0-9_]*.
  static Symbol intern(std::string_view name);

  /// Creates a fresh variable that no parse can collide with. Used when
  /// standardizing clauses apart during resolution.
  static Symbol fresh_variable();

  const std::string& name() const;
  bool is_variable() const;
  bool valid() const { return id_ != kInvalid; }

  bool operator==(const Symbol&) const = default;
  bool operator!=(const Symbol&) const = default;
  /// Orders by interning id; stable within a process run.
  bool operator<(const Symbol& o) const { return id_ < o.id_; }

 private:
  static constexpr uint32_t kInvalid = 0xffffffffu;
  explicit Symbol(uint32_t id) : id_(id) {}
  uint32_t id_;
};

/// A flat term: either a constant or a variable. There are no function
/// symbols, so a term is fully described by its symbol.
struct Term {
  Symbol sym;

  Term() = default;
  explicit Term(Symbol s) : sym(s) {}
  static Term constant(std::string_view name);
  static Term variable(std::string_view name);

  bool is_variable() const { return sym.is_variable(); }
  bool operator==(const Term&) const = default;
  bool operator<(const Term& o) const { return sym < o.sym; }
};

/// Predicate applied to flat terms. A ground literal is an atom.
struct Literal {
  Symbol predicate;
  std::vector<Term> args;

  Literal() = default;
  Literal(Symbol pred, std::vector<Term> a) : predicate(pred), args(std::move(a)) {}

  bool is_ground() const;
  size_t arity() const { return args.size(); }
  bool operator==(const Literal&) const = default;
  bool operator<(const Literal& o) const;
};

/// Definite clause `head :- body`. Facts have an empty body and must be
/// ground; rules must be range-restricted (every head variable occurs in
/// the body).
struct HornClause {
  Literal head;
  std::vector<Literal> body;

  HornClause() = default;
  HornClause(Literal h, std::vector<Literal> b) : head(std::move(h)), body(std::move(b)) {}

  bool is_fact() const { return body.empty(); }
  bool is_range_restricted() const;
  bool operator==(const HornClause&) const = default;
};

/// Variable bindings produced by unification. Kept normalized: every
/// binding maps a variable directly to its fully resolved term, so applying
/// a substitution twice equals applying it once.
class Substitution {
 public:
  /// Follows binding chains until a constant or an unbound variable remains.
  Term resolve(Term t) const;

  /// Binds `var` to the already-resolved `value`. Binding a variable to
  /// itself is a no-op. Returns false if `var` is already bound to a
  /// different resolved term.
  bool bind(Symbol var, Term value);

  Literal apply(const Literal& l) const;
  HornClause apply(const HornClause& c) const;

  /// Rewrites every binding to its resolved form and drops identity bindings.
  void normalize();

  bool empty() const { return bindings_.empty(); }
  size_t size() const { return bindings_.size(); }
  const std::map<Symbol, Term>& bindings() const { return bindings_; }

 private:
  std::map<Symbol, Term> bindings_;
};

/// Most general unifier of two literals given an initial substitution.
/// Predicates and arities must match exactly. Occurs-check is trivial for
/// flat terms but the variable/variable case is still guarded.
std::optional<Substitution> unify(const Literal& a, const Literal& b,
                                  const Substitution& start = {});

/// Renames all variables in `c` to fresh ones.
HornClause rename_apart(const HornClause& c);

// ── textual rule format ────────────────────────────────────────────────

struct SourcePos {
  int line = 0;
  int column = 0;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(SourcePos pos, const std::string& msg);
  SourcePos pos;
};

/// Parses `pred(arg, ...)` or a bare 0-ary `pred`.
Literal parse_literal(std::string_view text);

/// Parses a single `head :- b1, b2.` rule or `fact.`.
HornClause parse_clause(std::string_view text);

/// Parses a whole rule file: clauses terminated by `.`, `%` line comments.
std::vector<HornClause> parse_program(std::string_view text);

std::string render(const Term& t);
std::string render(const Literal& l);
std::string render(const HornClause& c);
std::string render(const Substitution& s);

/// Canonical alpha-renamed rendering: variables become V0, V1, ... in order
/// of first occurrence. Two clauses are alpha-equivalent iff their keys match.
std::string alpha_key(const HornClause& c);

/// Validates range restriction, throwing std::invalid_argument on violation.
void validate_clause(const HornClause& c);

// ── discrete entailment ────────────────────────────────────────────────

/// SLD backward chaining: clauses tried in the order given, leftmost goal
/// first, each clause application nested at most `depth_max` deep. Depth
/// exhaustion counts as failure.
bool entails(std::span<const HornClause> kb, const Literal& goal, int depth_max);

/// Like `entails` but reports the clauses applied along the first proof
/// found, in application order (indices into `kb`).
std::optional<std::vector<size_t>> entails_with_path(std::span<const HornClause> kb,
                                                     const Literal& goal, int depth_max);

}  // namespace nsq
