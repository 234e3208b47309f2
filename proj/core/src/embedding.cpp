#include "nsq/embedding.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "nsq/rng.hpp"

namespace nsq {

EmbeddingTable::EmbeddingTable(size_t dim, uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
}

EmbeddingTable EmbeddingTable::one_hot(std::span<const Symbol> vocab) {
  if (vocab.empty()) throw std::invalid_argument("one_hot requires a non-empty vocabulary");
  EmbeddingTable t(vocab.size(), 0);
  t.lazy_init_ = false;
  std::vector<Symbol> sorted(vocab.begin(), vocab.end());
  std::sort(sorted.begin(), sorted.end(),
            [](Symbol a, Symbol b) { return a.name() < b.name(); });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  t.dim_ = sorted.size();
  for (size_t i = 0; i < sorted.size(); ++i) {
    std::vector<double> v(sorted.size(), 0.0);
    v[i] = 1.0;
    t.vectors_.emplace(sorted[i], std::move(v));
  }
  return t;
}

EmbeddingTable::EmbeddingTable(const EmbeddingTable& o) {
  std::lock_guard<std::mutex> lock(o.mu_);
  dim_ = o.dim_;
  seed_ = o.seed_;
  lazy_init_ = o.lazy_init_;
  vectors_ = o.vectors_;
}

EmbeddingTable& EmbeddingTable::operator=(const EmbeddingTable& o) {
  if (this == &o) return *this;
  std::scoped_lock lock(mu_, o.mu_);
  dim_ = o.dim_;
  seed_ = o.seed_;
  lazy_init_ = o.lazy_init_;
  vectors_ = o.vectors_;
  return *this;
}

std::vector<double> EmbeddingTable::initial_vector(std::string_view name) const {
  Rng rng(seed_ ^ Rng::hash(name.data(), name.size()));
  std::vector<double> v(dim_);
  for (double& x : v) x = rng.uniform(-0.1, 0.1);
  return v;
}

const std::vector<double>& EmbeddingTable::lookup(Symbol s) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = vectors_.find(s);
  if (it != vectors_.end()) return it->second;
  if (!lazy_init_)
    throw std::out_of_range("no embedding for symbol '" + s.name() + "'");
  return vectors_.emplace(s, initial_vector(s.name())).first->second;
}

bool EmbeddingTable::has(Symbol s) const {
  std::lock_guard<std::mutex> lock(mu_);
  return vectors_.count(s) > 0;
}

void EmbeddingTable::set(Symbol s, std::vector<double> v) {
  if (v.size() != dim_)
    throw std::invalid_argument("embedding for '" + s.name() + "' has wrong dimension");
  std::lock_guard<std::mutex> lock(mu_);
  vectors_[s] = std::move(v);
}

void EmbeddingTable::ensure_vocabulary(std::span<const HornClause> kb) {
  auto split = split_vocabulary(kb);
  for (Symbol s : split.predicates) lookup(s);
  for (Symbol s : split.constants) lookup(s);
}

std::vector<Symbol> EmbeddingTable::vocabulary() const {
  std::vector<Symbol> out;
  {
    std::lock_guard<std::mutex> lock(mu_);
    out.reserve(vectors_.size());
    for (const auto& [s, v] : vectors_) out.push_back(s);
  }
  std::sort(out.begin(), out.end(),
            [](Symbol a, Symbol b) { return a.name() < b.name(); });
  return out;
}

std::string EmbeddingTable::serialize() const {
  std::ostringstream out;
  auto vocab = vocabulary();
  out << "dim " << dim_ << " seed " << seed_ << " lazy " << (lazy_init_ ? 1 : 0)
      << " vocab " << vocab.size() << "\n";
  char buf[40];
  for (Symbol s : vocab) {
    out << s.name();
    for (double x : lookup(s)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

EmbeddingTable EmbeddingTable::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string kw_dim, kw_seed, kw_lazy, kw_vocab;
  size_t dim = 0, vocab = 0;
  uint64_t seed = 0;
  int lazy = 1;
  in >> kw_dim >> dim >> kw_seed >> seed >> kw_lazy >> lazy >> kw_vocab >> vocab;
  if (!in || kw_dim != "dim" || kw_seed != "seed" || kw_lazy != "lazy" ||
      kw_vocab != "vocab")
    throw std::invalid_argument("malformed embedding table header");
  EmbeddingTable t(dim, seed);
  t.lazy_init_ = lazy != 0;
  for (size_t i = 0; i < vocab; ++i) {
    std::string name;
    in >> name;
    std::vector<double> v(dim);
    for (double& x : v) in >> x;
    if (!in) throw std::invalid_argument("truncated embedding table");
    t.vectors_.emplace(Symbol::intern(name), std::move(v));
  }
  return t;
}

VocabularySplit split_vocabulary(std::span<const HornClause> kb) {
  VocabularySplit out;
  auto scan = [&out](const Literal& l) {
    out.predicates.insert(l.predicate);
    for (const auto& t : l.args)
      if (!t.is_variable()) out.constants.insert(t.sym);
  };
  for (const auto& c : kb) {
    scan(c.head);
    for (const auto& l : c.body) scan(l);
  }
  return out;
}

}  // namespace nsq
