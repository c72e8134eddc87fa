#pragma once

// Text formats for the rules database and segment groundings.
//
// Rules file, one statement per line, `#` starts a comment:
//
//   pred move_behind/2
//   assert behind(X,Y): move_behind(X,Y) "{X} and {Y} moving one behind another"
//   assert parked(X): car(X) & !car_moving(X)
//   class main 1 "Car hit by another from behind"
//   class aux 7 extra "Car & motorcycle moving next to one another"
//   proxy behind, parked
//   implies main 1 => behind, very_close
//
// Groundings file, one atom per line, `!` marks an explicitly negated atom:
//
//   move_behind(car1,car2)
//   !car_moving(car7)

#include <string>
#include <string_view>

#include "cdft/logic.hpp"
#include "cdft/rules.hpp"

namespace cdft {

/// Throws ParseError (syntax) or SemanticError (cross-reference) carrying the
/// 1-based line and column of the offending token.
RulesDb parse_rules(std::string_view text);

/// Throws ParseError / SemanticError for unknown predicates and arity
/// mismatches, ContradictionError when an atom is given with both polarities.
GroundingSet parse_groundings(std::string_view text, const RulesDb& rules);

std::string print_rules(const RulesDb& db);
std::string print_groundings(const GroundingSet& grounding);

/// Reads a whole file; throws ConfigError when it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace cdft
