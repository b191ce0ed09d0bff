#include "dsiforge/rules.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "dsiforge/error.hpp"

namespace dsi {

std::string lexicon_predicate_name(std::string_view key) {
  std::string name = "Has";
  bool upper = true;
  for (char c : key) {
    if (c == '_' || c == '-' || c == ' ') {
      upper = true;
      continue;
    }
    name.push_back(upper ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
    upper = false;
  }
  return name + "Word";
}

void PredicateSchema::add(PredicateInfo info) {
  std::string key = info.name;
  preds_[key] = std::move(info);
}

const PredicateInfo* PredicateSchema::find(std::string_view name) const {
  auto it = preds_.find(name);
  return it == preds_.end() ? nullptr : &it->second;
}

PredicateSchema PredicateSchema::standard(const std::vector<std::string>& lexicon_keys) {
  using enum ArgType;
  PredicateSchema s;
  s.add({"State", {kUtterance, kClass}, true});
  s.add({"FirstUtt", {kUtterance}, false});
  s.add({"LastUtt", {kUtterance}, false});
  s.add({"PrevUtt", {kUtterance, kUtterance}, false});
  s.add({"HasWord", {kUtterance, kClass}, false});
  for (const std::string& key : lexicon_keys) {
    s.add({lexicon_predicate_name(key), {kUtterance}, false});
  }
  return s;
}

namespace {

enum class Tok { kNumber, kIdent, kColon, kArrow, kAnd, kOr, kNot, kLParen, kRParen, kComma, kDot, kEnd };

std::string_view tok_name(Tok t) {
  switch (t) {
    case Tok::kNumber: return "number";
    case Tok::kIdent: return "identifier";
    case Tok::kColon: return "':'";
    case Tok::kArrow: return "'->'";
    case Tok::kAnd: return "'&'";
    case Tok::kOr: return "'|'";
    case Tok::kNot: return "'!'";
    case Tok::kLParen: return "'('";
    case Tok::kRParen: return "')'";
    case Tok::kComma: return "','";
    case Tok::kDot: return "'.'";
    case Tok::kEnd: return "end of input";
  }
  return "?";
}

struct Token {
  Tok kind = Tok::kEnd;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space_and_comments();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::kEnd;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      const bool signed_number =
          c == '-' && pos_ + 1 < src_.size() &&
          (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.');
      if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && next_is_digit()) ||
          signed_number) {
        t.kind = Tok::kNumber;
        t.text = number();
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::kIdent;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          t.text.push_back(src_[pos_]);
          advance();
        }
      } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
        t.kind = Tok::kArrow;
        t.text = "->";
        advance();
        advance();
      } else {
        switch (c) {
          case ':': t.kind = Tok::kColon; break;
          case '&': t.kind = Tok::kAnd; break;
          case '|': t.kind = Tok::kOr; break;
          case '!': t.kind = Tok::kNot; break;
          case '(': t.kind = Tok::kLParen; break;
          case ')': t.kind = Tok::kRParen; break;
          case ',': t.kind = Tok::kComma; break;
          case '.': t.kind = Tok::kDot; break;
          default:
            throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
        }
        t.text = std::string(1, c);
        advance();
      }
      out.push_back(std::move(t));
    }
  }

 private:
  bool next_is_digit() const {
    return pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]));
  }

  std::string number() {
    std::string s;
    auto take_digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        s.push_back(src_[pos_]);
        advance();
      }
    };
    if (src_[pos_] == '-') {
      s.push_back('-');
      advance();
    }
    take_digits();
    if (pos_ < src_.size() && src_[pos_] == '.' && next_is_digit()) {
      s.push_back('.');
      advance();
      take_digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      int save_col = col_;
      std::string exp = "e";
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
        exp.push_back(src_[pos_]);
        advance();
      }
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        s += exp;
        take_digits();
      } else {
        pos_ = save;
        col_ = save_col;
      }
    }
    return s;
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, const PredicateSchema& schema)
      : toks_(std::move(toks)), schema_(schema) {}

  RuleSet run() {
    RuleSet rs;
    while (peek().kind != Tok::kEnd) rs.rules.push_back(rule());
    return rs;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_++]; }

  [[noreturn]] void fail(const Token& at, const std::string& what) {
    throw ParseError(what, at.line, at.column);
  }

  const Token& expect(Tok kind, std::string_view context) {
    const Token& t = peek();
    if (t.kind != kind) {
      fail(t, "expected " + std::string(tok_name(kind)) + " " + std::string(context) +
                  ", found " + describe(t));
    }
    return take();
  }

  static std::string describe(const Token& t) {
    if (t.kind == Tok::kEnd) return "end of input";
    return std::string(tok_name(t.kind)) + " '" + t.text + "'";
  }

  RuleTemplate rule() {
    RuleTemplate r;
    const Token& start = peek();
    r.location = {start.line, start.column};
    if (start.kind == Tok::kNumber) {
      const Token& w = take();
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(w.text.data(), w.text.data() + w.text.size(), value);
      if (ec != std::errc() || ptr != w.text.data() + w.text.size() || !std::isfinite(value)) {
        fail(w, "malformed weight '" + w.text + "'");
      }
      if (value < 0.0) fail(w, "negative rule weight " + w.text);
      r.weight = value;
      expect(Tok::kColon, "after rule weight");
    }
    r.body.push_back(literal());
    while (peek().kind == Tok::kAnd) {
      take();
      r.body.push_back(literal());
    }
    expect(Tok::kArrow, "between rule body and head");
    r.head.push_back(literal());
    while (peek().kind == Tok::kOr) {
      take();
      r.head.push_back(literal());
    }
    expect(Tok::kDot, "at end of rule");
    check_variables(r, start);
    return r;
  }

  Literal literal() {
    Literal lit;
    if (peek().kind == Tok::kNot) {
      take();
      lit.negated = true;
    }
    const Token& name = peek();
    if (name.kind != Tok::kIdent) fail(name, "expected a literal, found " + describe(name));
    take();
    lit.predicate = name.text;
    const PredicateInfo* info = schema_.find(name.text);
    if (info == nullptr) fail(name, "unknown predicate '" + name.text + "'");
    expect(Tok::kLParen, "after predicate name");
    do {
      const Token& a = peek();
      if (a.kind != Tok::kIdent) fail(a, "expected an argument, found " + describe(a));
      take();
      Argument arg;
      arg.name = a.text;
      arg.variable = std::isupper(static_cast<unsigned char>(a.text[0])) != 0;
      if (!arg.variable && !std::islower(static_cast<unsigned char>(a.text[0]))) {
        fail(a, "argument '" + a.text + "' must start with a letter");
      }
      const std::size_t idx = lit.args.size();
      if (idx < info->args.size() && !arg.variable && info->args[idx] == ArgType::kUtterance) {
        fail(a, "predicate '" + info->name + "' argument " + std::to_string(idx + 1) +
                    " is an utterance and must be a variable");
      }
      lit.args.push_back(std::move(arg));
    } while (peek().kind == Tok::kComma && (take(), true));
    if (lit.args.size() != info->args.size()) {
      fail(name, "predicate '" + info->name + "' expects " + std::to_string(info->args.size()) +
                     " argument(s), got " + std::to_string(lit.args.size()));
    }
    expect(Tok::kRParen, "after arguments");
    return lit;
  }

  void check_variables(const RuleTemplate& r, const Token& at) {
    std::map<std::string, ArgType> types;
    auto visit = [&](const Literal& lit) {
      const PredicateInfo* info = schema_.find(lit.predicate);
      for (std::size_t i = 0; i < lit.args.size(); ++i) {
        if (!lit.args[i].variable) continue;
        auto [it, inserted] = types.emplace(lit.args[i].name, info->args[i]);
        if (!inserted && it->second != info->args[i]) {
          fail(at, "variable '" + lit.args[i].name +
                       "' is used both as an utterance and as a class");
        }
      }
    };
    std::set<std::string> body_vars;
    for (const Literal& lit : r.body) {
      visit(lit);
      for (const Argument& a : lit.args) {
        if (a.variable) body_vars.insert(a.name);
      }
    }
    for (const Literal& lit : r.head) {
      visit(lit);
      for (const Argument& a : lit.args) {
        if (a.variable && !body_vars.count(a.name)) {
          fail(at, "head variable '" + a.name + "' does not appear in the rule body");
        }
      }
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const PredicateSchema& schema_;
};

std::string format_weight(double w) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, w);
  std::string s(buf, ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

RuleSet parse_ruleset(std::string_view text, const PredicateSchema& schema) {
  return Parser(Lexer(text).run(), schema).run();
}

std::string format_literal(const Literal& lit) {
  std::string s = lit.negated ? "!" : "";
  s += lit.predicate + "(";
  for (std::size_t i = 0; i < lit.args.size(); ++i) {
    if (i) s += ", ";
    s += lit.args[i].name;
  }
  return s + ")";
}

std::string format_rule(const RuleTemplate& rule) {
  std::string s = format_weight(rule.weight) + ": ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) s += " & ";
    s += format_literal(rule.body[i]);
  }
  s += " -> ";
  for (std::size_t i = 0; i < rule.head.size(); ++i) {
    if (i) s += " | ";
    s += format_literal(rule.head[i]);
  }
  return s + " .";
}

std::string format_ruleset(const RuleSet& rules) {
  std::string s;
  for (const RuleTemplate& r : rules.rules) s += format_rule(r) + "\n";
  return s;
}

}  // namespace dsi
