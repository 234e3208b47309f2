#include "nsq/logic.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <deque>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nsq {

// ── symbol interning ───────────────────────────────────────────────────

namespace {

struct SymbolTable {
  std::mutex mu;
  std::deque<std::string> names;  // deque keeps string addresses stable
  std::vector<bool> variable;
  std::unordered_map<std::string_view, uint32_t> index;

  static SymbolTable& instance() {
    static SymbolTable t;
    return t;
  }

  uint32_t add(std::string_view name, bool is_var) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    names.emplace_back(name);
    variable.push_back(is_var);
    uint32_t id = static_cast<uint32_t>(names.size() - 1);
    index.emplace(std::string_view(names.back()), id);
    return id;
  }
};

bool valid_symbol_name(std::string_view name) {
  if (name.empty()) return false;
  char c0 = name[0];
  if (!(std::isalpha(static_cast<unsigned char>(c0)) || c0 == '_')) return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

bool variable_name(std::string_view name) {
  return std::isupper(static_cast<unsigned char>(name[0])) != 0;
}

}  // namespace

Symbol Symbol::intern(std::string_view name) {
  if (!valid_symbol_name(name))
    throw std::invalid_argument("invalid symbol name: '" + std::string(name) + "'");
  return Symbol(SymbolTable::instance().add(name, variable_name(name)));
}

Symbol Symbol::fresh_variable() {
  static std::atomic<uint64_t> counter{0};
  uint64_t n = counter.fetch_add(1);
  // '#' cannot appear in parsed identifiers, so no collision is possible.
  std::string name = "V#" + std::to_string(n);
  return Symbol(SymbolTable::instance().add(name, true));
}

const std::string& Symbol::name() const {
  static const std::string invalid = "<invalid>";
  if (!valid()) return invalid;
  return SymbolTable::instance().names[id_];
}

bool Symbol::is_variable() const {
  if (!valid()) return false;
  return SymbolTable::instance().variable[id_];
}

Term Term::constant(std::string_view name) {
  Term t{Symbol::intern(name)};
  if (t.is_variable())
    throw std::invalid_argument("constant name must not start uppercase: '" +
                                std::string(name) + "'");
  return t;
}

Term Term::variable(std::string_view name) {
  Term t{Symbol::intern(name)};
  if (!t.is_variable())
    throw std::invalid_argument("variable name must start uppercase: '" +
                                std::string(name) + "'");
  return t;
}

bool Literal::is_ground() const {
  return std::none_of(args.begin(), args.end(),
                      [](const Term& t) { return t.is_variable(); });
}

bool Literal::operator<(const Literal& o) const {
  if (predicate != o.predicate) return predicate < o.predicate;
  return args < o.args;
}

bool HornClause::is_range_restricted() const {
  std::set<Symbol> body_vars;
  for (const auto& l : body)
    for (const auto& t : l.args)
      if (t.is_variable()) body_vars.insert(t.sym);
  for (const auto& t : head.args)
    if (t.is_variable() && !body_vars.count(t.sym)) return false;
  return true;
}

void validate_clause(const HornClause& c) {
  if (!c.is_range_restricted()) {
    std::set<Symbol> body_vars;
    for (const auto& l : c.body)
      for (const auto& t : l.args)
        if (t.is_variable()) body_vars.insert(t.sym);
    for (const auto& t : c.head.args)
      if (t.is_variable() && !body_vars.count(t.sym))
        throw std::invalid_argument("unbound head variable '" + t.sym.name() +
                                    "' in clause " + render(c));
  }
}

// ── substitution ───────────────────────────────────────────────────────

Term Substitution::resolve(Term t) const {
  while (t.is_variable()) {
    auto it = bindings_.find(t.sym);
    if (it == bindings_.end()) return t;
    t = it->second;
  }
  return t;
}

bool Substitution::bind(Symbol var, Term value) {
  if (value.is_variable() && value.sym == var) return true;
  auto it = bindings_.find(var);
  if (it != bindings_.end()) return resolve(it->second) == resolve(value);
  bindings_.emplace(var, value);
  return true;
}

Literal Substitution::apply(const Literal& l) const {
  Literal out;
  out.predicate = l.predicate;
  out.args.reserve(l.args.size());
  for (const auto& t : l.args) out.args.push_back(resolve(t));
  return out;
}

HornClause Substitution::apply(const HornClause& c) const {
  HornClause out;
  out.head = apply(c.head);
  out.body.reserve(c.body.size());
  for (const auto& l : c.body) out.body.push_back(apply(l));
  return out;
}

void Substitution::normalize() {
  std::map<Symbol, Term> resolved;
  for (const auto& [var, value] : bindings_) {
    Term r = resolve(value);
    if (r.is_variable() && r.sym == var) continue;
    resolved.emplace(var, r);
  }
  bindings_ = std::move(resolved);
}

std::optional<Substitution> unify(const Literal& a, const Literal& b,
                                  const Substitution& start) {
  if (a.predicate != b.predicate || a.args.size() != b.args.size()) return std::nullopt;
  Substitution theta = start;
  for (size_t i = 0; i < a.args.size(); ++i) {
    Term ra = theta.resolve(a.args[i]);
    Term rb = theta.resolve(b.args[i]);
    if (ra == rb) continue;
    if (ra.is_variable()) {
      if (!theta.bind(ra.sym, rb)) return std::nullopt;
    } else if (rb.is_variable()) {
      if (!theta.bind(rb.sym, ra)) return std::nullopt;
    } else {
      return std::nullopt;  // distinct constants
    }
  }
  theta.normalize();
  return theta;
}

HornClause rename_apart(const HornClause& c) {
  std::map<Symbol, Term> fresh;
  auto rename = [&fresh](const Literal& l) {
    Literal out;
    out.predicate = l.predicate;
    out.args.reserve(l.args.size());
    for (const auto& t : l.args) {
      if (!t.is_variable()) {
        out.args.push_back(t);
        continue;
      }
      auto it = fresh.find(t.sym);
      if (it == fresh.end()) it = fresh.emplace(t.sym, Term{Symbol::fresh_variable()}).first;
      out.args.push_back(it->second);
    }
    return out;
  };
  HornClause out;
  out.head = rename(c.head);
  out.body.reserve(c.body.size());
  for (const auto& l : c.body) out.body.push_back(rename(l));
  return out;
}

// ── rendering ──────────────────────────────────────────────────────────

std::string render(const Term& t) { return t.sym.name(); }

std::string render(const Literal& l) {
  std::string out = l.predicate.name();
  if (l.args.empty()) return out;
  out += '(';
  for (size_t i = 0; i < l.args.size(); ++i) {
    if (i) out += ", ";
    out += render(l.args[i]);
  }
  out += ')';
  return out;
}

std::string render(const HornClause& c) {
  std::string out = render(c.head);
  if (!c.body.empty()) {
    out += " :- ";
    for (size_t i = 0; i < c.body.size(); ++i) {
      if (i) out += ", ";
      out += render(c.body[i]);
    }
  }
  out += '.';
  return out;
}

std::string render(const Substitution& s) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [var, value] : s.bindings())
    entries.emplace_back(var.name(), value.sym.name());
  std::sort(entries.begin(), entries.end());
  std::string out = "{";
  for (size_t i = 0; i < entries.size(); ++i) {
    if (i) out += ", ";
    out += entries[i].first + "/" + entries[i].second;
  }
  out += '}';
  return out;
}

std::string alpha_key(const HornClause& c) {
  std::map<Symbol, std::string> names;
  auto renamed = [&names](const Literal& l) {
    Literal out = l;
    for (auto& t : out.args) {
      if (!t.is_variable()) continue;
      auto it = names.find(t.sym);
      if (it == names.end())
        it = names.emplace(t.sym, "V" + std::to_string(names.size())).first;
      t = Term{Symbol::intern(it->second)};
    }
    return out;
  };
  HornClause r;
  r.head = renamed(c.head);
  for (const auto& l : c.body) r.body.push_back(renamed(l));
  return render(r);
}

// ── parser ─────────────────────────────────────────────────────────────

ParseError::ParseError(SourcePos p, const std::string& msg)
    : std::runtime_error("line " + std::to_string(p.line) + ", col " +
                         std::to_string(p.column) + ": " + msg),
      pos(p) {}

namespace {

class Lexer {
 public:
  enum class Tok { Ident, LParen, RParen, Comma, Neck, Dot, End };

  explicit Lexer(std::string_view text) : text_(text) { advance(); }

  Tok tok() const { return tok_; }
  const std::string& ident() const { return ident_; }
  SourcePos pos() const { return tok_pos_; }

  void advance() {
    skip_ws_and_comments();
    tok_pos_ = cur_pos();
    if (at_end()) {
      tok_ = Tok::End;
      return;
    }
    char c = text_[i_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = i_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[i_])) ||
                           text_[i_] == '_'))
        take();
      ident_ = std::string(text_.substr(start, i_ - start));
      tok_ = Tok::Ident;
      return;
    }
    switch (c) {
      case '(': take(); tok_ = Tok::LParen; return;
      case ')': take(); tok_ = Tok::RParen; return;
      case ',': take(); tok_ = Tok::Comma; return;
      case '.': take(); tok_ = Tok::Dot; return;
      case ':':
        take();
        if (at_end() || text_[i_] != '-')
          throw ParseError(tok_pos_, "expected '-' after ':'");
        take();
        tok_ = Tok::Neck;
        return;
      default:
        throw ParseError(tok_pos_, std::string("unexpected character '") + c + "'");
    }
  }

 private:
  bool at_end() const { return i_ >= text_.size(); }
  SourcePos cur_pos() const { return {line_, col_}; }

  void take() {
    if (text_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skip_ws_and_comments() {
    while (!at_end()) {
      char c = text_[i_];
      if (c == '%') {
        while (!at_end() && text_[i_] != '\n') take();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        take();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
  Tok tok_ = Tok::End;
  std::string ident_;
  SourcePos tok_pos_;
};

Literal parse_literal_from(Lexer& lex) {
  if (lex.tok() != Lexer::Tok::Ident)
    throw ParseError(lex.pos(), "expected predicate name");
  Literal lit;
  lit.predicate = Symbol::intern(lex.ident());
  lex.advance();
  if (lex.tok() != Lexer::Tok::LParen) return lit;  // 0-ary
  lex.advance();
  if (lex.tok() == Lexer::Tok::RParen)
    throw ParseError(lex.pos(), "empty argument list; omit parentheses for 0-ary literals");
  while (true) {
    if (lex.tok() != Lexer::Tok::Ident)
      throw ParseError(lex.pos(), "expected argument name");
    lit.args.push_back(Term{Symbol::intern(lex.ident())});
    lex.advance();
    if (lex.tok() == Lexer::Tok::Comma) {
      lex.advance();
      continue;
    }
    if (lex.tok() == Lexer::Tok::RParen) {
      lex.advance();
      return lit;
    }
    throw ParseError(lex.pos(), "expected ',' or ')' in argument list");
  }
}

HornClause parse_clause_from(Lexer& lex) {
  SourcePos start = lex.pos();
  HornClause clause;
  clause.head = parse_literal_from(lex);
  if (lex.tok() == Lexer::Tok::Neck) {
    lex.advance();
    while (true) {
      clause.body.push_back(parse_literal_from(lex));
      if (lex.tok() == Lexer::Tok::Comma) {
        lex.advance();
        continue;
      }
      break;
    }
  }
  if (lex.tok() != Lexer::Tok::Dot)
    throw ParseError(lex.pos(), "expected '.' at end of clause");
  lex.advance();
  if (!clause.is_range_restricted()) {
    std::set<Symbol> body_vars;
    for (const auto& l : clause.body)
      for (const auto& t : l.args)
        if (t.is_variable()) body_vars.insert(t.sym);
    for (const auto& t : clause.head.args)
      if (t.is_variable() && !body_vars.count(t.sym))
        throw ParseError(start, "unbound head variable '" + t.sym.name() + "'");
  }
  return clause;
}

}  // namespace

Literal parse_literal(std::string_view text) {
  Lexer lex(text);
  Literal lit = parse_literal_from(lex);
  if (lex.tok() != Lexer::Tok::End && lex.tok() != Lexer::Tok::Dot)
    throw ParseError(lex.pos(), "trailing input after literal");
  return lit;
}

HornClause parse_clause(std::string_view text) {
  Lexer lex(text);
  HornClause c = parse_clause_from(lex);
  if (lex.tok() != Lexer::Tok::End)
    throw ParseError(lex.pos(), "trailing input after clause");
  return c;
}

std::vector<HornClause> parse_program(std::string_view text) {
  Lexer lex(text);
  std::vector<HornClause> out;
  while (lex.tok() != Lexer::Tok::End) out.push_back(parse_clause_from(lex));
  return out;
}

// ── SLD resolution ─────────────────────────────────────────────────────

namespace {

// Goal stack entry: a literal plus the depth budget it must be proven within.
struct PendingGoal {
  Literal lit;
  int depth;
};

bool sld_solve(std::span<const HornClause> kb, std::vector<PendingGoal> goals,
               const Substitution& theta, std::vector<size_t>* path) {
  if (goals.empty()) return true;
  PendingGoal g = goals.back();
  goals.pop_back();
  if (g.depth <= 0) return false;
  Literal goal = theta.apply(g.lit);
  for (size_t ci = 0; ci < kb.size(); ++ci) {
    HornClause clause = rename_apart(kb[ci]);
    auto unified = unify(goal, clause.head, theta);
    if (!unified) continue;
    std::vector<PendingGoal> next = goals;
    // push body in reverse so the leftmost body literal is proven first
    for (auto it = clause.body.rbegin(); it != clause.body.rend(); ++it)
      next.push_back({*it, g.depth - 1});
    size_t mark = path ? path->size() : 0;
    if (path) path->push_back(ci);
    if (sld_solve(kb, std::move(next), *unified, path)) return true;
    if (path) path->resize(mark);
  }
  return false;
}

}  // namespace

bool entails(std::span<const HornClause> kb, const Literal& goal, int depth_max) {
  std::vector<PendingGoal> goals{{goal, depth_max}};
  return sld_solve(kb, std::move(goals), Substitution{}, nullptr);
}

std::optional<std::vector<size_t>> entails_with_path(std::span<const HornClause> kb,
                                                     const Literal& goal, int depth_max) {
  std::vector<size_t> path;
  std::vector<PendingGoal> goals{{goal, depth_max}};
  if (sld_solve(kb, std::move(goals), Substitution{}, &path)) return path;
  return std::nullopt;
}

}  // namespace nsq
