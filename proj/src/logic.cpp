#include "cdft/logic.hpp"

#include <algorithm>

#include "cdft/error.hpp"

namespace cdft {

Signature::Signature(std::vector<PredicateDecl> decls) : decls_(std::move(decls)) {
  for (std::size_t i = 0; i < decls_.size(); ++i) {
    auto [it, inserted] = index_.emplace(decls_[i].name, i);
    if (!inserted) {
      throw ConfigError("duplicate predicate declaration '" + decls_[i].name + "'");
    }
  }
}

std::optional<std::size_t> Signature::arity(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return decls_[it->second].arity;
}

std::string to_string(const GroundAtom& atom) {
  std::string out = atom.positive ? "" : "!";
  out += atom.predicate;
  out += '(';
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ',';
    out += atom.args[i].value;
  }
  out += ')';
  return out;
}

GroundingSet::GroundingSet() : signature_(std::make_shared<Signature>()) {}

GroundingSet::GroundingSet(std::shared_ptr<const Signature> signature,
                           std::vector<GroundAtom> atoms,
                           std::vector<ObjectId> extra_objects)
    : signature_(signature ? std::move(signature) : std::make_shared<Signature>()) {
  std::set<ObjectId> objects(extra_objects.begin(), extra_objects.end());
  for (const auto& atom : atoms) {
    auto arity = signature_->arity(atom.predicate);
    if (!arity) {
      throw ConfigError("unknown predicate '" + atom.predicate + "' in grounding " +
                        to_string(atom));
    }
    if (*arity != atom.args.size()) {
      throw ConfigError("arity mismatch in grounding " + to_string(atom) + ": '" +
                        atom.predicate + "' takes " + std::to_string(*arity) +
                        " argument(s)");
    }
    objects.insert(atom.args.begin(), atom.args.end());
  }
  universe_.assign(objects.begin(), objects.end());

  std::set<GroundAtom> negated;
  for (auto& atom : atoms) {
    std::vector<std::uint32_t> idx;
    idx.reserve(atom.args.size());
    for (const auto& a : atom.args) idx.push_back(*index_of(a));
    if (atom.positive) {
      if (facts_[atom.predicate].insert(std::move(idx)).second) ++fact_count_;
    } else {
      negated.insert(atom);
    }
  }
  for (const auto& atom : negated) {
    GroundAtom pos = atom;
    pos.positive = true;
    if (contains(pos)) {
      throw ContradictionError("contradictory grounding: " + to_string(pos) +
                               " is asserted with both polarities");
    }
  }
  negated_.assign(negated.begin(), negated.end());
}

std::optional<std::uint32_t> GroundingSet::index_of(const ObjectId& id) const {
  auto it = std::lower_bound(universe_.begin(), universe_.end(), id);
  if (it == universe_.end() || *it != id) return std::nullopt;
  return static_cast<std::uint32_t>(it - universe_.begin());
}

const std::set<std::vector<std::uint32_t>>* GroundingSet::facts_for(
    std::string_view predicate) const {
  auto it = facts_.find(predicate);
  return it == facts_.end() ? nullptr : &it->second;
}

bool GroundingSet::holds(std::string_view predicate,
                         std::span<const std::uint32_t> object_indices) const {
  const auto* facts = facts_for(predicate);
  if (!facts) return false;
  return facts->contains(
      std::vector<std::uint32_t>(object_indices.begin(), object_indices.end()));
}

bool GroundingSet::contains(const GroundAtom& atom) const {
  std::vector<std::uint32_t> idx;
  idx.reserve(atom.args.size());
  for (const auto& a : atom.args) {
    auto i = index_of(a);
    if (!i) return false;
    idx.push_back(*i);
  }
  return holds(atom.predicate, idx);
}

std::vector<GroundAtom> GroundingSet::positive_atoms() const {
  std::vector<GroundAtom> out;
  out.reserve(fact_count_);
  for (const auto& [pred, tuples] : facts_) {
    for (const auto& tuple : tuples) {
      GroundAtom atom{pred, {}, true};
      for (auto i : tuple) atom.args.push_back(universe_[i]);
      out.push_back(std::move(atom));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool operator==(const GroundingSet& a, const GroundingSet& b) {
  return a.universe_ == b.universe_ && a.facts_ == b.facts_ &&
         a.negated_ == b.negated_;
}

void validate(const AssertionTemplate& tmpl, const Signature& signature) {
  auto fail = [&](const std::string& why) {
    throw MalformedTemplate("malformed assertion '" + tmpl.id + "': " + why);
  };
  if (tmpl.vars.empty()) fail("no variables");
  if (tmpl.body.empty()) fail("empty body");
  std::set<std::string_view> declared;
  for (const auto& v : tmpl.vars) {
    if (!declared.insert(v).second) fail("variable '" + v + "' listed twice");
  }
  std::set<std::string_view> used;
  for (const auto& atom : tmpl.body) {
    auto arity = signature.arity(atom.predicate);
    if (!arity) fail("unknown predicate '" + atom.predicate + "'");
    if (*arity != atom.args.size()) {
      fail("'" + atom.predicate + "' takes " + std::to_string(*arity) +
           " argument(s), body uses " + std::to_string(atom.args.size()));
    }
    for (const auto& a : atom.args) {
      if (!declared.contains(a)) fail("variable '" + a + "' is not declared");
      used.insert(a);
    }
  }
  for (const auto& v : tmpl.vars) {
    if (!used.contains(v)) fail("variable '" + v + "' does not occur in the body");
  }
}

namespace {

struct CompiledAtom {
  const std::set<std::vector<std::uint32_t>>* facts;
  std::vector<std::size_t> slots;  // variable positions
  bool positive;
};

class Search {
 public:
  Search(const AssertionTemplate& tmpl, const GroundingSet& g)
      : universe_size_(g.universe().size()),
        by_depth_(tmpl.vars.size() + 1),
        binding_(tmpl.vars.size()),
        used_(universe_size_, false) {
    for (const auto& atom : tmpl.body) {
      CompiledAtom c{g.facts_for(atom.predicate), {}, atom.positive};
      std::size_t ready = 0;
      for (const auto& a : atom.args) {
        auto pos = static_cast<std::size_t>(
            std::find(tmpl.vars.begin(), tmpl.vars.end(), a) - tmpl.vars.begin());
        c.slots.push_back(pos);
        ready = std::max(ready, pos + 1);
      }
      by_depth_[ready].push_back(std::move(c));
    }
  }

  bool run() {
    if (!check(0)) return false;
    return extend(0);
  }

  const std::vector<std::uint32_t>& binding() const { return binding_; }

 private:
  bool check(std::size_t depth) {
    for (const auto& atom : by_depth_[depth]) {
      bool present = false;
      if (atom.facts) {
        scratch_.clear();
        for (auto s : atom.slots) scratch_.push_back(binding_[s]);
        present = atom.facts->contains(scratch_);
      }
      if (present != atom.positive) return false;
    }
    return true;
  }

  bool extend(std::size_t var) {
    if (var == binding_.size()) return true;
    for (std::uint32_t obj = 0; obj < universe_size_; ++obj) {
      if (used_[obj]) continue;
      binding_[var] = obj;
      if (!check(var + 1)) continue;
      used_[obj] = true;
      bool found = extend(var + 1);
      used_[obj] = false;
      if (found) return true;
    }
    return false;
  }

  std::size_t universe_size_;
  std::vector<std::vector<CompiledAtom>> by_depth_;
  std::vector<std::uint32_t> binding_;
  std::vector<bool> used_;
  std::vector<std::uint32_t> scratch_;
};

}  // namespace

SatisfactionResult satisfy(const AssertionTemplate& tmpl,
                           const GroundingSet& grounding) {
  validate(tmpl, grounding.signature());
  if (tmpl.vars.size() > grounding.universe().size()) return {};
  Search search(tmpl, grounding);
  if (!search.run()) return {};
  Witness w;
  w.reserve(tmpl.vars.size());
  for (std::size_t i = 0; i < tmpl.vars.size(); ++i) {
    w.emplace_back(tmpl.vars[i], grounding.universe()[search.binding()[i]]);
  }
  return {true, std::move(w)};
}

std::vector<GroundAtom> instantiate(const AssertionTemplate& tmpl,
                                    const Witness& witness) {
  std::vector<GroundAtom> out;
  out.reserve(tmpl.body.size());
  for (const auto& atom : tmpl.body) {
    GroundAtom g{atom.predicate, {}, atom.positive};
    for (const auto& var : atom.args) {
      auto it = std::find_if(witness.begin(), witness.end(),
                             [&](const auto& b) { return b.first == var; });
      g.args.push_back(it == witness.end() ? ObjectId{var} : it->second);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::string describe(const AssertionTemplate& tmpl, const Witness& witness) {
  if (tmpl.gloss.empty()) {
    std::string out;
    for (const auto& atom : instantiate(tmpl, witness)) {
      if (!out.empty()) out += " & ";
      out += to_string(atom);
    }
    return out;
  }
  std::string out;
  const std::string& g = tmpl.gloss;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == '{') {
      auto close = g.find('}', i);
      if (close != std::string::npos) {
        std::string var = g.substr(i + 1, close - i - 1);
        auto it = std::find_if(witness.begin(), witness.end(),
                               [&](const auto& b) { return b.first == var; });
        if (it != witness.end()) {
          out += it->second.value;
          i = close;
          continue;
        }
      }
    }
    out += g[i];
  }
  return out;
}

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::main ? "main" : "aux";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "main") return TaskKind::main;
  if (text == "aux" || text == "auxiliary") return TaskKind::aux;
  throw ConfigError("unknown task kind '" + std::string(text) +
                    "' (expected main or aux)");
}

}  // namespace cdft
