#include "cdft/rules_dsl.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cdft/error.hpp"

namespace cdft {
namespace {

enum class Tok { word, string, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t col = 0;  // 1-based
};

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

bool is_identifier(std::string_view w) {
  return !w.empty() && !(w[0] >= '0' && w[0] <= '9');
}

bool is_integer(std::string_view w) {
  return !w.empty() &&
         std::all_of(w.begin(), w.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string describe_token(const Token& t) {
  switch (t.kind) {
    case Tok::end: return "end of line";
    case Tok::string: return "string literal";
    default: return "'" + t.text + "'";
  }
}

std::vector<Token> tokenize(std::string_view line, std::size_t lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      break;
    } else if (is_word_char(c)) {
      std::size_t start = i;
      while (i < line.size() && is_word_char(line[i])) ++i;
      out.push_back({Tok::word, std::string(line.substr(start, i - start)), start + 1});
    } else if (c == '"') {
      std::size_t start = i++;
      std::string value;
      bool closed = false;
      while (i < line.size()) {
        char d = line[i++];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d == '\\') {
          if (i >= line.size()) break;
          char e = line[i++];
          if (e == '"' || e == '\\') {
            value += e;
          } else if (e == 'n') {
            value += '\n';
          } else {
            throw ParseError(lineno, i - 1,
                             std::string("unknown escape '\\") + e + "' in string");
          }
        } else {
          value += d;
        }
      }
      if (!closed) throw ParseError(lineno, start + 1, "unterminated string literal");
      out.push_back({Tok::string, std::move(value), start + 1});
    } else if (c == '=' && i + 1 < line.size() && line[i + 1] == '>') {
      out.push_back({Tok::punct, "=>", i + 1});
      i += 2;
    } else if (std::string_view("/(),:&!").find(c) != std::string_view::npos) {
      out.push_back({Tok::punct, std::string(1, c), i + 1});
      ++i;
    } else {
      auto byte = static_cast<unsigned char>(c);
      std::string shown = (byte >= 0x20 && byte < 0x7f)
                              ? "'" + std::string(1, c) + "'"
                              : "byte 0x" + [&] {
                                  const char* hex = "0123456789abcdef";
                                  return std::string{hex[byte >> 4], hex[byte & 15]};
                                }();
      throw ParseError(lineno, i + 1, "unexpected character " + shown);
    }
  }
  out.push_back({Tok::end, "", line.size() + 1});
  return out;
}

class Cursor {
 public:
  Cursor(std::vector<Token> tokens, std::size_t line)
      : tokens_(std::move(tokens)), line_(line) {}

  const Token& peek() const { return tokens_[pos_]; }
  bool at_end() const { return peek().kind == Tok::end; }
  std::size_t line() const { return line_; }

  bool peek_punct(std::string_view p) const {
    return peek().kind == Tok::punct && peek().text == p;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    throw ParseError(line_, peek().col,
                     "expected " + expected + ", found " + describe_token(peek()));
  }

  Token identifier(const std::string& what) {
    if (peek().kind != Tok::word || !is_identifier(peek().text)) fail(what);
    return tokens_[pos_++];
  }

  Token word(const std::string& what) {
    if (peek().kind != Tok::word) fail(what);
    return tokens_[pos_++];
  }

  Token string(const std::string& what) {
    if (peek().kind != Tok::string) fail(what);
    return tokens_[pos_++];
  }

  void punct(std::string_view p) {
    if (!peek_punct(p)) fail("'" + std::string(p) + "'");
    ++pos_;
  }

  bool accept_punct(std::string_view p) {
    if (!peek_punct(p)) return false;
    ++pos_;
    return true;
  }

  bool accept_word(std::string_view w) {
    if (peek().kind != Tok::word || peek().text != w) return false;
    ++pos_;
    return true;
  }

  std::size_t non_negative(const std::string& what) {
    if (peek().kind != Tok::word || !is_integer(peek().text)) fail(what);
    const auto& text = peek().text;
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() ||
        value > 1'000'000) {
      throw ParseError(line_, peek().col, what + " out of range: " + text);
    }
    ++pos_;
    return value;
  }

  void end() {
    if (!at_end()) fail("end of line");
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t lineno = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    auto stop = nl == std::string_view::npos ? text.size() : nl;
    fn(text.substr(start, stop - start), lineno);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
    ++lineno;
  }
}

struct AtomSyntax {
  TemplateAtom atom;
  std::size_t col = 0;
};

AtomSyntax parse_atom(Cursor& cur, bool objects) {
  AtomSyntax out;
  out.col = cur.peek().col;
  if (cur.accept_punct("!")) out.atom.positive = false;
  out.atom.predicate = cur.identifier("predicate name").text;
  if (cur.accept_punct("(")) {
    if (!cur.peek_punct(")")) {
      do {
        auto arg = objects ? cur.word("object id") : cur.identifier("variable name");
        out.atom.args.push_back(arg.text);
      } while (cur.accept_punct(","));
    }
    cur.punct(")");
  }
  return out;
}

std::string class_label(TaskKind kind, ClassId id) {
  return std::string(to_string(kind)) + " class " + std::to_string(id);
}

void check_atom(const Signature& sig, const AtomSyntax& a, std::size_t line) {
  auto arity = sig.arity(a.atom.predicate);
  if (!arity) {
    throw SemanticError(line, a.col, "unknown predicate '" + a.atom.predicate + "'");
  }
  if (*arity != a.atom.args.size()) {
    throw SemanticError(line, a.col,
                        "arity mismatch: '" + a.atom.predicate + "' takes " +
                            std::to_string(*arity) + " argument(s), got " +
                            std::to_string(a.atom.args.size()));
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  out += '"';
  return out;
}

}  // namespace

RulesDb parse_rules(std::string_view text) {
  std::vector<PredicateDecl> preds;
  std::set<std::string> pred_names;
  RulesDb db;
  // Checks that need the whole document, run in statement order.
  std::vector<std::function<void(const Signature&)>> deferred;
  std::map<std::pair<TaskKind, ClassId>, std::size_t> class_lines;
  std::set<std::pair<TaskKind, ClassId>> implied;

  for_each_line(text, [&](std::string_view raw, std::size_t lineno) {
    Cursor cur(tokenize(raw, lineno), lineno);
    if (cur.at_end()) return;
    auto keyword = cur.word("statement keyword (pred, assert, class, proxy, implies)");
    const auto& kw = keyword.text;

    if (kw == "pred") {
      auto name = cur.identifier("predicate name");
      cur.punct("/");
      auto arity = cur.non_negative("arity");
      cur.end();
      if (!pred_names.insert(name.text).second) {
        throw SemanticError(lineno, name.col,
                            "duplicate predicate declaration '" + name.text + "'");
      }
      preds.push_back({name.text, arity});
    } else if (kw == "assert") {
      auto id = cur.identifier("assertion id");
      AssertionTemplate tmpl;
      tmpl.id = id.text;
      cur.punct("(");
      std::vector<Token> var_tokens;
      do {
        var_tokens.push_back(cur.identifier("variable name"));
      } while (cur.accept_punct(","));
      cur.punct(")");
      cur.punct(":");
      std::vector<AtomSyntax> atoms;
      do {
        atoms.push_back(parse_atom(cur, false));
      } while (cur.accept_punct("&"));
      if (cur.peek().kind == Tok::string) tmpl.gloss = cur.string("gloss").text;
      cur.end();

      std::set<std::string> vars;
      for (const auto& v : var_tokens) {
        if (!vars.insert(v.text).second) {
          throw SemanticError(lineno, v.col, "variable '" + v.text + "' listed twice");
        }
        tmpl.vars.push_back(v.text);
      }
      std::set<std::string> used;
      for (const auto& a : atoms) {
        for (const auto& arg : a.atom.args) {
          if (!vars.contains(arg)) {
            throw SemanticError(lineno, a.col,
                                "variable '" + arg + "' is not declared in '" +
                                    tmpl.id + "'");
          }
          used.insert(arg);
        }
        tmpl.body.push_back(a.atom);
      }
      for (const auto& v : var_tokens) {
        if (!used.contains(v.text)) {
          throw SemanticError(lineno, v.col,
                              "variable '" + v.text + "' does not occur in the body");
        }
      }
      if (db.assertions.contains(tmpl.id)) {
        throw SemanticError(lineno, id.col, "duplicate assertion id '" + tmpl.id + "'");
      }
      deferred.push_back([atoms, lineno](const Signature& sig) {
        for (const auto& a : atoms) check_atom(sig, a, lineno);
      });
      db.assertions.emplace(tmpl.id, std::move(tmpl));
    } else if (kw == "class") {
      auto kind_tok = cur.word("main or aux");
      if (kind_tok.text != "main" && kind_tok.text != "aux") {
        throw ParseError(lineno, kind_tok.col,
                         "expected main or aux, found '" + kind_tok.text + "'");
      }
      TaskKind kind = parse_task_kind(kind_tok.text);
      auto id_col = cur.peek().col;
      auto id = static_cast<ClassId>(cur.non_negative("class id"));
      bool extra = false;
      auto extra_col = cur.peek().col;
      if (cur.accept_word("extra")) extra = true;
      auto desc = cur.string("quoted class description");
      cur.end();
      if (id == 0) throw SemanticError(lineno, id_col, "class ids start at 1");
      if (extra && kind == TaskKind::main) {
        throw SemanticError(lineno, extra_col, "only aux classes may be flagged extra");
      }
      if (!class_lines.emplace(std::pair{kind, id}, lineno).second) {
        throw SemanticError(lineno, id_col, "duplicate " + class_label(kind, id));
      }
      auto& list = kind == TaskKind::main ? db.task.main_classes : db.task.aux_classes;
      list.push_back({id, desc.text, extra});
    } else if (kw == "proxy") {
      std::vector<Token> ids;
      do {
        ids.push_back(cur.identifier("assertion id"));
      } while (cur.accept_punct(","));
      cur.end();
      for (const auto& t : ids) {
        if (std::find(db.task.proxy_ids.begin(), db.task.proxy_ids.end(), t.text) !=
            db.task.proxy_ids.end()) {
          throw SemanticError(lineno, t.col, "proxy id '" + t.text + "' listed twice");
        }
        db.task.proxy_ids.push_back(t.text);
      }
      deferred.push_back([&db, ids, lineno](const Signature&) {
        for (const auto& t : ids) {
          if (!db.assertions.contains(t.text)) {
            throw SemanticError(lineno, t.col,
                                "proxy id '" + t.text + "' is not a declared assertion");
          }
        }
      });
    } else if (kw == "implies") {
      auto kind_tok = cur.word("main or aux");
      if (kind_tok.text != "main" && kind_tok.text != "aux") {
        throw ParseError(lineno, kind_tok.col,
                         "expected main or aux, found '" + kind_tok.text + "'");
      }
      TaskKind kind = parse_task_kind(kind_tok.text);
      auto id_col = cur.peek().col;
      auto id = static_cast<ClassId>(cur.non_negative("class id"));
      cur.punct("=>");
      std::vector<Token> ids;
      do {
        ids.push_back(cur.identifier("assertion id"));
      } while (cur.accept_punct(","));
      cur.end();
      Implication imp{id, kind, {}};
      std::set<std::string> seen;
      for (const auto& t : ids) {
        if (!seen.insert(t.text).second) {
          throw SemanticError(lineno, t.col,
                              "assertion '" + t.text + "' listed twice in implication");
        }
      }
      imp.required.assign(seen.begin(), seen.end());
      if (!implied.insert({kind, id}).second) {
        throw SemanticError(lineno, id_col,
                            "duplicate implication for " + class_label(kind, id));
      }
      deferred.push_back([&db, &class_lines, ids, kind, id, id_col,
                          lineno](const Signature&) {
        if (!class_lines.contains({kind, id})) {
          throw SemanticError(lineno, id_col,
                              "implication references undeclared " +
                                  class_label(kind, id));
        }
        for (const auto& t : ids) {
          if (!db.assertions.contains(t.text)) {
            throw SemanticError(lineno, t.col, "unknown assertion id '" + t.text + "'");
          }
        }
      });
      db.implications.push_back(std::move(imp));
    } else {
      throw ParseError(lineno, keyword.col,
                       "expected statement keyword (pred, assert, class, proxy, "
                       "implies), found '" + kw + "'");
    }
  });

  auto sig = std::make_shared<const Signature>(std::move(preds));
  for (auto& check : deferred) check(*sig);

  for (const auto& m : db.task.main_classes) {
    const auto* a = db.task.find(TaskKind::aux, m.id);
    if (!a || a->extra) {
      throw SemanticError(class_lines.at({TaskKind::main, m.id}), 0,
                          "class-count mismatch: main class " + std::to_string(m.id) +
                              " has no aux partner");
    }
  }
  for (const auto& a : db.task.aux_classes) {
    if (!a.extra && !db.task.find(TaskKind::main, a.id)) {
      throw SemanticError(class_lines.at({TaskKind::aux, a.id}), 0,
                          "class-count mismatch: aux class " + std::to_string(a.id) +
                              " has no main partner (flag it extra)");
    }
  }

  db.signature = std::move(sig);
  try {
    db.validate();
  } catch (const ConfigError& e) {
    throw SemanticError(0, 0, e.what());
  }
  return db;
}

GroundingSet parse_groundings(std::string_view text, const RulesDb& rules) {
  std::vector<GroundAtom> atoms;
  std::map<GroundAtom, std::size_t> seen;  // positive form -> polarity line
  std::map<GroundAtom, bool> polarity;

  for_each_line(text, [&](std::string_view raw, std::size_t lineno) {
    Cursor cur(tokenize(raw, lineno), lineno);
    if (cur.at_end()) return;
    auto a = parse_atom(cur, true);
    cur.end();
    check_atom(*rules.signature, a, lineno);
    GroundAtom g{a.atom.predicate, {}, a.atom.positive};
    for (auto& arg : a.atom.args) g.args.push_back(ObjectId{arg});
    GroundAtom key = g;
    key.positive = true;
    auto [it, inserted] = polarity.emplace(key, g.positive);
    if (!inserted && it->second != g.positive) {
      throw ContradictionError("line " + std::to_string(lineno) +
                               ": contradictory grounding: " + to_string(key) +
                               " is asserted with both polarities (first on line " +
                               std::to_string(seen.at(key)) + ")");
    }
    seen.emplace(key, lineno);
    atoms.push_back(std::move(g));
  });
  return GroundingSet(rules.signature, std::move(atoms));
}

std::string print_rules(const RulesDb& db) {
  std::ostringstream out;
  out << "# cdft rules\n";
  for (const auto& p : db.signature->decls()) {
    out << "pred " << p.name << '/' << p.arity << '\n';
  }
  for (const auto& [id, tmpl] : db.assertions) {
    out << "assert " << id << '(';
    for (std::size_t i = 0; i < tmpl.vars.size(); ++i) {
      out << (i ? "," : "") << tmpl.vars[i];
    }
    out << "):";
    for (std::size_t i = 0; i < tmpl.body.size(); ++i) {
      const auto& atom = tmpl.body[i];
      out << (i ? " & " : " ") << (atom.positive ? "" : "!") << atom.predicate << '(';
      for (std::size_t j = 0; j < atom.args.size(); ++j) {
        out << (j ? "," : "") << atom.args[j];
      }
      out << ')';
    }
    if (!tmpl.gloss.empty()) out << ' ' << quote(tmpl.gloss);
    out << '\n';
  }
  for (TaskKind kind : {TaskKind::main, TaskKind::aux}) {
    for (const auto& c : db.task.classes(kind)) {
      out << "class " << to_string(kind) << ' ' << c.id << (c.extra ? " extra " : " ")
          << quote(c.description) << '\n';
    }
  }
  if (!db.task.proxy_ids.empty()) {
    out << "proxy ";
    for (std::size_t i = 0; i < db.task.proxy_ids.size(); ++i) {
      out << (i ? ", " : "") << db.task.proxy_ids[i];
    }
    out << '\n';
  }
  for (const auto& imp : db.implications) {
    out << "implies " << to_string(imp.kind) << ' ' << imp.class_id << " => ";
    for (std::size_t i = 0; i < imp.required.size(); ++i) {
      out << (i ? ", " : "") << imp.required[i];
    }
    out << '\n';
  }
  return out.str();
}

std::string print_groundings(const GroundingSet& grounding) {
  std::string out;
  for (const auto& atom : grounding.positive_atoms()) out += to_string(atom) + "\n";
  for (const auto& atom : grounding.negated_atoms()) out += to_string(atom) + "\n";
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace cdft
