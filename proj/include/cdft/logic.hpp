#pragma once

// Finite-domain grounded logic: predicate signatures, ground atoms,
// closed-world grounding sets and conjunctive-query satisfaction.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cdft {

/// Opaque pseudo-ID of a tracked object ("car1", "ped3", ...).
struct ObjectId {
  std::string value;

  friend auto operator<=>(const ObjectId&, const ObjectId&) = default;
};

struct PredicateDecl {
  std::string name;
  std::size_t arity = 0;

  friend bool operator==(const PredicateDecl&, const PredicateDecl&) = default;
};

/// Immutable set of predicate declarations, kept in declaration order.
class Signature {
 public:
  Signature() = default;
  /// Throws ConfigError on a duplicate name.
  explicit Signature(std::vector<PredicateDecl> decls);

  std::optional<std::size_t> arity(std::string_view name) const;
  bool contains(std::string_view name) const { return arity(name).has_value(); }
  const std::vector<PredicateDecl>& decls() const { return decls_; }
  std::size_t size() const { return decls_.size(); }

  friend bool operator==(const Signature& a, const Signature& b) {
    return a.decls_ == b.decls_;
  }

 private:
  std::vector<PredicateDecl> decls_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct GroundAtom {
  std::string predicate;
  std::vector<ObjectId> args;
  bool positive = true;

  friend auto operator<=>(const GroundAtom&, const GroundAtom&) = default;
};

/// `move_behind(car1,car2)`; negated atoms get a leading `!`.
std::string to_string(const GroundAtom& atom);

/// Facts observed in one segment. Closed world: an atom that is not present
/// is false. Explicitly negated atoms are remembered (for printing and the
/// contradiction check) but contribute nothing to satisfaction.
class GroundingSet {
 public:
  GroundingSet();

  /// Validates every atom against `signature`. Throws ConfigError for an
  /// unknown predicate or arity mismatch and ContradictionError when an atom
  /// appears with both polarities. Duplicates collapse. `extra_objects` widen
  /// the universe beyond the objects mentioned by atoms.
  GroundingSet(std::shared_ptr<const Signature> signature,
               std::vector<GroundAtom> atoms,
               std::vector<ObjectId> extra_objects = {});

  const Signature& signature() const { return *signature_; }
  const std::shared_ptr<const Signature>& signature_ptr() const {
    return signature_;
  }

  /// Sorted ascending; object indices used by `holds` refer to this order.
  const std::vector<ObjectId>& universe() const { return universe_; }
  std::optional<std::uint32_t> index_of(const ObjectId& id) const;

  bool holds(std::string_view predicate,
             std::span<const std::uint32_t> object_indices) const;
  /// Truth value of the atom's positive form under the closed world.
  bool contains(const GroundAtom& atom) const;

  /// Positive facts for one predicate (as universe indices), or nullptr.
  const std::set<std::vector<std::uint32_t>>* facts_for(
      std::string_view predicate) const;

  /// Positive atoms in sorted order.
  std::vector<GroundAtom> positive_atoms() const;
  /// Explicitly negated atoms in sorted order (stored with positive = false).
  const std::vector<GroundAtom>& negated_atoms() const { return negated_; }

  std::size_t fact_count() const { return fact_count_; }
  bool empty() const { return fact_count_ == 0 && negated_.empty(); }

  friend bool operator==(const GroundingSet& a, const GroundingSet& b);

 private:
  std::shared_ptr<const Signature> signature_;
  std::vector<ObjectId> universe_;
  std::map<std::string, std::set<std::vector<std::uint32_t>>, std::less<>>
      facts_;
  std::vector<GroundAtom> negated_;
  std::size_t fact_count_ = 0;
};

struct TemplateAtom {
  std::string predicate;
  std::vector<std::string> args;  // variable names
  bool positive = true;

  friend bool operator==(const TemplateAtom&, const TemplateAtom&) = default;
};

/// A proxy activity in logic form: an existentially quantified conjunction
/// of (possibly negated) atoms over object variables.
struct AssertionTemplate {
  std::string id;
  std::vector<std::string> vars;
  std::vector<TemplateAtom> body;
  /// Optional human phrasing with `{Var}` placeholders, used in reports.
  std::string gloss;

  friend bool operator==(const AssertionTemplate&,
                         const AssertionTemplate&) = default;
};

/// Checks the structural invariants and arities against `signature`.
/// Throws MalformedTemplate naming the template and the offending atom.
void validate(const AssertionTemplate& tmpl, const Signature& signature);

/// Variable bindings in the template's variable order.
using Witness = std::vector<std::pair<std::string, ObjectId>>;

struct SatisfactionResult {
  bool satisfied = false;
  std::optional<Witness> witness;

  friend bool operator==(const SatisfactionResult&,
                         const SatisfactionResult&) = default;
};

/// Searches for an injective assignment of universe objects to the template
/// variables under which every positive atom is present and every negated
/// atom is absent. Variables are bound in declaration order and objects are
/// tried in universe order, so the witness is the lexicographically first.
/// Throws MalformedTemplate when the template does not fit the signature.
SatisfactionResult satisfy(const AssertionTemplate& tmpl,
                           const GroundingSet& grounding);

/// Body atoms with the witness substituted for the variables.
std::vector<GroundAtom> instantiate(const AssertionTemplate& tmpl,
                                    const Witness& witness);

/// The gloss (or, when empty, the instantiated body) with objects filled in.
std::string describe(const AssertionTemplate& tmpl, const Witness& witness);

enum class TaskKind { main, aux };

std::string_view to_string(TaskKind kind);
/// Accepts "main", "aux" and "auxiliary". Throws ConfigError otherwise.
TaskKind parse_task_kind(std::string_view text);

using ClassId = int;

/// A class of one task requires all of a set of proxy assertions.
struct Implication {
  ClassId class_id = 0;
  TaskKind kind = TaskKind::main;
  std::vector<std::string> required;  // sorted, unique

  friend bool operator==(const Implication&, const Implication&) = default;
};

}  // namespace cdft
