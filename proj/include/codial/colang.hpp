#pragma once

// Colang 2 flavored emission of a GuardrailProgram, and a syntax checker for
// the subset the emitter (and the code-generation pathway) targets:
//
//   import <name>
//   flow <words>            (top level, indented body)
//   activate <words> | await <words> | await Name(arg=expr, ...)
//   $var = expr | $var = ..."instruction" | $var = await Name(...)
//   if expr / elif expr / else / while expr     (indented bodies, no `end`)
//   bot say "text {$var}" | user said "text" [or user said "..."]* | user said something
//   <words> (flow reference) | pass | break | continue | return [expr]
//
// Indentation is two spaces per level.

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "codial/program.hpp"
#include "codial/util.hpp"

namespace codial::colang {

// ---------------------------------------------------------------------------
// Syntax checker

struct SyntaxError {
  int line = 0;
  std::string message;
  bool operator==(const SyntaxError&) const = default;
};

struct CheckResult {
  std::vector<SyntaxError> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

enum class Tok { var, ident, keyword, number, string, nld, op, lparen, rparen, comma, assign, end };

struct Token {
  Tok kind;
  std::string text;
};

struct LexError {
  std::string message;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Validates `{...}` interpolations inside a string literal: only `{$name}`.
inline std::optional<std::string> check_interpolation(const std::string& body) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    auto close = body.find('}', i);
    if (close == std::string::npos) return "unterminated '{' in string";
    auto inner = body.substr(i + 1, close - i - 1);
    bool ok = inner.size() >= 2 && inner[0] == '$' && is_ident_start(inner[1]);
    for (std::size_t k = 2; ok && k < inner.size(); ++k) ok = is_ident_char(inner[k]);
    if (!ok) return "unsupported interpolation '{" + inner + "}'";
    i = close;
  }
  return std::nullopt;
}

inline std::vector<Token> lex(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto read_string = [&](std::size_t& pos) {
    std::string body;
    ++pos;
    while (pos < s.size() && s[pos] != '"') {
      if (s[pos] == '\\') {
        if (pos + 1 >= s.size()) throw LexError{"dangling escape"};
        body.push_back(s[pos]);
        ++pos;
      }
      body.push_back(s[pos]);
      ++pos;
    }
    if (pos >= s.size()) throw LexError{"unterminated string"};
    ++pos;
    if (auto err = check_interpolation(body)) throw LexError{*err};
    return body;
  };
  while (i < s.size()) {
    char c = s[i];
    if (c == ' ') { ++i; continue; }
    if (c == '#') break;
    if (c == '"') { out.push_back({Tok::string, read_string(i)}); continue; }
    if (s.compare(i, 3, "...") == 0) {
      i += 3;
      if (i >= s.size() || s[i] != '"') throw LexError{"'...' must be followed by a string"};
      out.push_back({Tok::nld, read_string(i)});
      continue;
    }
    if (c == '$') {
      std::size_t b = ++i;
      if (i >= s.size() || !is_ident_start(s[i])) throw LexError{"bad variable name"};
      while (i < s.size() && is_ident_char(s[i])) ++i;
      out.push_back({Tok::var, s.substr(b, i - b)});
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t b = i;
      while (i < s.size() && (is_ident_char(s[i]) || s[i] == '.')) ++i;
      auto w = s.substr(b, i - b);
      static const std::vector<std::string> kw{"and", "or", "not", "in", "None", "True", "False"};
      out.push_back({std::find(kw.begin(), kw.end(), w) != kw.end() ? Tok::keyword : Tok::ident, w});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t b = i++;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      out.push_back({Tok::number, s.substr(b, i - b)});
      continue;
    }
    if (c == '(') { out.push_back({Tok::lparen, "("}); ++i; continue; }
    if (c == ')') { out.push_back({Tok::rparen, ")"}); ++i; continue; }
    if (c == ',') { out.push_back({Tok::comma, ","}); ++i; continue; }
    if (s.compare(i, 2, "==") == 0 || s.compare(i, 2, "!=") == 0 || s.compare(i, 2, "<=") == 0 ||
        s.compare(i, 2, ">=") == 0) {
      out.push_back({Tok::op, s.substr(i, 2)});
      i += 2;
      continue;
    }
    if (c == '<' || c == '>') { out.push_back({Tok::op, std::string(1, c)}); ++i; continue; }
    if (c == '=') { out.push_back({Tok::assign, "="}); ++i; continue; }
    if (c == '[' || c == '{') throw LexError{std::string("unsupported '") + c + "'"};
    throw LexError{std::string("unexpected character '") + c + "'"};
  }
  out.push_back({Tok::end, ""});
  return out;
}

struct ParseError {
  std::string message;
};

class ExprParser {
 public:
  explicit ExprParser(const std::vector<Token>& t, std::size_t pos = 0) : t_(t), pos_(pos) {}

  void expression() { or_expr(); }
  std::size_t pos() const { return pos_; }
  const Token& peek() const { return t_[pos_]; }
  void expect_end() {
    if (peek().kind != Tok::end) throw ParseError{"unexpected '" + peek().text + "'"};
  }

 private:
  bool accept_kw(const char* k) {
    if (peek().kind == Tok::keyword && peek().text == k) {
      ++pos_;
      return true;
    }
    return false;
  }
  void or_expr() {
    and_expr();
    while (accept_kw("or")) and_expr();
  }
  void and_expr() {
    not_expr();
    while (accept_kw("and")) not_expr();
  }
  void not_expr() {
    if (accept_kw("not")) return not_expr();
    comparison();
  }
  void comparison() {
    primary();
    if (peek().kind == Tok::op || (peek().kind == Tok::keyword && peek().text == "in")) {
      ++pos_;
      primary();
    }
  }
  void primary() {
    const Token& tk = peek();
    switch (tk.kind) {
      case Tok::var:
      case Tok::number:
      case Tok::string:
      case Tok::nld: ++pos_; return;
      case Tok::keyword:
        if (tk.text == "None" || tk.text == "True" || tk.text == "False") {
          ++pos_;
          return;
        }
        break;
      case Tok::lparen:
        ++pos_;
        or_expr();
        if (peek().kind != Tok::rparen) throw ParseError{"missing ')'"};
        ++pos_;
        return;
      default: break;
    }
    throw ParseError{tk.kind == Tok::end ? "expected expression" : "unexpected '" + tk.text + "' in expression"};
  }

  const std::vector<Token>& t_;
  std::size_t pos_;
};

// `Name(arg=expr, ...)` starting at pos; returns true when the tokens match.
inline void action_call(const std::vector<Token>& t, std::size_t pos) {
  if (t[pos].kind != Tok::ident || t[pos + 1].kind != Tok::lparen) throw ParseError{"expected action call"};
  pos += 2;
  if (t[pos].kind != Tok::rparen) {
    while (true) {
      if (t[pos].kind != Tok::ident || t[pos + 1].kind != Tok::assign) throw ParseError{"expected keyword argument"};
      ExprParser p(t, pos + 2);
      p.expression();
      pos = p.pos();
      if (t[pos].kind == Tok::comma) {
        ++pos;
        continue;
      }
      break;
    }
    if (t[pos].kind != Tok::rparen) throw ParseError{"missing ')' in action call"};
  }
  if (t[pos + 1].kind != Tok::end) throw ParseError{"unexpected tokens after action call"};
}

inline bool all_words(const std::string& s) {
  auto ws = util::words(s);
  if (ws.empty()) return false;
  for (char c : s)
    if (!(is_ident_char(c) || c == ' ')) return false;
  return true;
}

inline void check_user_said(const std::string& rest) {
  if (rest == "something") return;
  // "text" [or user said "text"]*
  auto toks = lex(rest);
  std::size_t i = 0;
  while (true) {
    if (toks[i].kind != Tok::string) throw ParseError{"expected quoted utterance after 'user said'"};
    ++i;
    if (toks[i].kind == Tok::end) return;
    auto at = [&](std::size_t k) -> const Token& { return toks[std::min(k, toks.size() - 1)]; };
    if (!(at(i).kind == Tok::keyword && at(i).text == "or" && at(i + 1).text == "user" && at(i + 2).text == "said"))
      throw ParseError{"expected 'or user said'"};
    i += 3;
  }
}

inline void check_statement(const std::string& s) {
  if (s == "pass" || s == "break" || s == "continue" || s == "return") return;
  if (s == "end" || util::starts_with(s, "end ") || s == "endif" || s == "endwhile")
    throw ParseError{"unsupported 'end' tag"};
  if (util::starts_with(s, "return ")) {
    auto t = lex(s.substr(7));
    ExprParser p(t);
    p.expression();
    p.expect_end();
    return;
  }
  if (util::starts_with(s, "activate ")) {
    if (!all_words(s.substr(9))) throw ParseError{"bad flow name after 'activate'"};
    return;
  }
  if (util::starts_with(s, "await ")) {
    auto rest = s.substr(6);
    if (all_words(rest)) return;
    action_call(lex(rest), 0);
    return;
  }
  if (util::starts_with(s, "bot say ")) {
    auto t = lex(s.substr(8));
    if (t[0].kind != Tok::string || t[1].kind != Tok::end) throw ParseError{"'bot say' takes one quoted string"};
    return;
  }
  if (util::starts_with(s, "user said ")) return check_user_said(s.substr(10));
  if (s.front() == '$') {
    auto t = lex(s);
    if (t[0].kind != Tok::var || t[1].kind != Tok::assign) throw ParseError{"expected assignment"};
    if (t[2].kind == Tok::ident && t[2].text == "await") return action_call(t, 3);
    ExprParser p(t, 2);
    p.expression();
    p.expect_end();
    return;
  }
  if (all_words(s)) return;  // flow reference, e.g. "user expressed greeting"
  throw ParseError{"unrecognized statement"};
}

}  // namespace detail

inline CheckResult check_syntax(std::string_view text) {
  CheckResult out;
  struct Frame {
    int indent;
    bool is_if;  // last closed block at this level was an if/elif
  };
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(std::move(cur));
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
  }

  int expected_body = -1;     // indent required on the next code line, -1 if none
  std::vector<int> stack{0};  // open block indents
  std::map<int, bool> if_open;  // indent -> previous sibling was if/elif
  int flows = 0;
  int last_line = 0;
  auto err = [&](int line, std::string msg) { out.errors.push_back({line, std::move(msg)}); };

  for (std::size_t idx = 0; idx < lines.size(); ++idx) {
    int line_no = static_cast<int>(idx) + 1;
    const std::string& raw = lines[idx];
    auto first = raw.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    if (raw.find('\t') != std::string::npos) {
      err(line_no, "tab character");
      continue;
    }
    std::string s = raw.substr(first);
    while (!s.empty() && s.back() == ' ') s.pop_back();
    if (s.front() == '#') continue;
    int indent = static_cast<int>(first);
    last_line = line_no;
    if (indent % 2) {
      err(line_no, "indentation is not a multiple of two spaces");
      continue;
    }
    if (expected_body >= 0) {
      if (indent != expected_body) {
        err(line_no, "expected an indented block");
        if (indent > expected_body) continue;
      } else {
        stack.push_back(indent);
      }
      expected_body = -1;
    }
    if (indent > stack.back()) {
      err(line_no, "unexpected indentation");
      continue;
    }
    while (indent < stack.back()) {
      if_open.erase(stack.back());
      stack.pop_back();
    }
    if (indent != stack.back()) {
      err(line_no, "inconsistent dedent");
      continue;
    }

    std::string head = s.substr(0, s.find(' '));
    bool is_block = false, sibling_if = false;
    try {
      if (indent == 0) {
        if (head == "import") {
          if (!detail::all_words(s.substr(6))) throw detail::ParseError{"bad import"};
        } else if (head == "flow") {
          if (s.size() <= 5 || !detail::all_words(s.substr(5))) throw detail::ParseError{"bad flow name"};
          ++flows;
          is_block = true;
        } else {
          throw detail::ParseError{"only 'import' and 'flow' are allowed at top level"};
        }
      } else if (head == "if" || head == "elif" || head == "while") {
        if (head == "elif" && !if_open[indent]) throw detail::ParseError{"'elif' without 'if'"};
        auto t = detail::lex(s.substr(head.size()));
        detail::ExprParser p(t);
        p.expression();
        p.expect_end();
        is_block = true;
        sibling_if = head != "while";
      } else if (s == "else") {
        if (!if_open[indent]) throw detail::ParseError{"'else' without 'if'"};
        is_block = true;
      } else {
        detail::check_statement(s);
      }
    } catch (const detail::ParseError& e) {
      err(line_no, e.message);
    } catch (const detail::LexError& e) {
      err(line_no, e.message);
    }
    if_open[indent] = sibling_if;
    if (is_block) {
      expected_body = indent + 2;
      if_open.erase(indent + 2);
    }
  }
  if (expected_body >= 0) err(last_line, "block has no body");
  if (flows == 0) err(0, "no flow defined");
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    if (c == '{' || c == '}') continue;  // interpolation braces are emitted explicitly
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string action_name(std::string_view function) {
  std::string out;
  bool up = true;
  for (char c : function) {
    if (!is_ident_char(c) || c == '_') {
      up = true;
      continue;
    }
    out.push_back(up ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
    up = false;
  }
  return out + "Action";
}

inline std::string literal(const json& v) {
  if (v.is_null()) return "None";
  if (v.is_boolean()) return v.get<bool>() ? "True" : "False";
  if (v.is_string()) return quote(v.get<std::string>());
  return v.dump();
}

class Emitter {
 public:
  explicit Emitter(const ir::GuardrailProgram& p) : p_(p) {}

  std::string run() {
    line(0, "# Guardrail program generated from a CHIEF dialogue flow");
    line(0, "# source graph sha256: " + p_.source_graph_hash);
    line(0, "# start node: " + p_.start_node);
    line(0, "import core");
    line(0, "import llm");
    blank();
    for (const auto& intent : p_.intent_table) emit_intent(intent);
    emit_fallback_flow();
    emit_main();
    return out_.str();
  }

 private:
  void line(int indent, const std::string& s) { out_ << std::string(static_cast<std::size_t>(indent) * 2, ' ') << s << '\n'; }
  void blank() { out_ << '\n'; }

  void emit_intent(const ir::IntentEntry& intent) {
    line(0, "flow user expressed " + intent.name);
    std::vector<std::string> said;
    for (const auto& t : intent.trigger_examples) said.push_back("user said " + quote(t));
    if (said.empty()) said.push_back("user said " + quote(intent.name));
    line(1, util::join(said, " or "));
    blank();
    line(0, "flow " + intent.name);
    line(1, "user expressed " + intent.name);
    line(1, "bot say " + quote(intent.response_template));
    blank();
  }

  void emit_fallback_flow() {
    std::vector<std::string> names;
    for (const auto& f : p_.fallback_policy.actions) names.push_back(f.name);
    ir::for_each_check(p_.nap_tree, [&](const ir::DecisionNode& d) { names.push_back(d.node_id); });
    line(0, "flow generate fallback action");
    line(1, "# fallback actions: " + util::join(names, ", "));
    line(1, "$choice = ..." + quote("Considering the conversation history, choose the best next action from: " +
                                     util::join(names, ", ") + ". Answer with the action name only."));
    bool first = true;
    for (const auto& f : p_.fallback_policy.actions) {
      if (f.name == p_.fallback_policy.default_action) continue;
      line(1, std::string(first ? "if" : "elif") + " $choice == " + quote(f.name));
      line(2, "bot say " + quote(f.response_template));
      first = false;
    }
    const auto* def = p_.fallback(p_.fallback_policy.default_action);
    std::string text = def ? def->response_template : "Sorry, I can't help with that.";
    if (first) {
      line(1, "bot say " + quote(text));
    } else {
      line(1, "else");
      line(2, "bot say " + quote(text));
    }
    blank();
  }

  void emit_main() {
    line(0, "flow main");
    line(1, "activate llm continuation");
    for (const auto& intent : p_.intent_table) line(1, "activate " + intent.name);
    line(1, "# init: slots are None, action helpers None, inform/answered helpers False");
    for (const auto& e : p_.init_block) line(1, "$" + e.var + " = " + literal(e.value));
    line(1, "while True");
    line(2, "await user said something");
    line(2, "# DST: update all slots");
    for (const auto& e : p_.dst_table) {
      line(2, "$previous = $" + e.slot);
      line(2, "$" + e.slot + " = ..." + quote(e.instruction));
      if (e.invalidates.empty()) continue;
      line(2, "if $" + e.slot + " != $previous");
      for (const auto& h : e.invalidates) {
        auto ref = ir::parse_helper(h);
        line(3, "$" + h + " = " + literal(ref ? ir::helper_reset_value(ref->kind) : json(nullptr)));
      }
    }
    emit_confirmations();
    bool chained = false;
    ir::for_each_check(p_.nap_tree, [&](const ir::DecisionNode& d) {
      chained = chained || d.action.kind == ir::NodeKind::external_action;
    });
    int base = 2;
    if (chained) {
      line(2, "# NAP, walked again after an external action ran");
      line(2, "$walk = True");
      line(2, "while $walk");
      line(3, "$walk = False");
      base = 3;
    } else {
      line(2, "# NAP");
    }
    line(base, "$next_action = None");
    for (const auto& root : p_.nap_tree) {
      line(base, "if $next_action == None");
      emit_check(root, base + 1);
    }
    line(2, "if $next_action == None");
    line(3, "# no guard matched: let the agent model pick an action");
    line(3, "await generate fallback action");
  }

  void emit_confirmations() {
    bool header = false;
    ir::for_each_check(p_.nap_tree, [&](const ir::DecisionNode& d) {
      if (d.action.kind != ir::NodeKind::inform || !d.action.confirm_question) return;
      if (!header) line(2, "# confirmations: read the user's answer to a pending question");
      header = true;
      auto inform = ir::helper_name(ir::HelperKind::inform, d.node_id);
      auto answered = ir::helper_name(ir::HelperKind::answered, d.node_id);
      line(2, "if $" + inform + " == True and $" + answered + " == False");
      line(3, "$" + answered + " = ..." +
                  quote("The assistant asked: " + *d.action.confirm_question +
                        " Did the user answer yes, no, or something else? Answer yes, no or other."));
    });
  }

  std::string expr(const ir::Predicate& p, std::map<std::string, std::string>& nld_vars) {
    using Op = ir::Predicate::Op;
    auto group = [&](const ir::Predicate& c) {
      auto s = expr(c, nld_vars);
      return (c.op == Op::and_ || c.op == Op::or_) ? "(" + s + ")" : s;
    };
    switch (p.op) {
      case Op::always: return "True";
      case Op::is_null: return "$" + p.var + " == None";
      case Op::not_null: return "$" + p.var + " != None";
      case Op::equals: return "$" + p.var + " == " + literal(p.value);
      case Op::not_: return "not " + group(p.args.at(0));
      case Op::and_:
      case Op::or_: {
        std::vector<std::string> parts;
        for (const auto& a : p.args) parts.push_back(group(a));
        return util::join(parts, p.op == Op::and_ ? " and " : " or ");
      }
      case Op::nld: return "$" + nld_vars.at(p.text);
    }
    return "True";
  }

  void collect_nld(const ir::Predicate& p, const std::string& base, std::map<std::string, std::string>& vars,
                   int indent) {
    if (p.op == ir::Predicate::Op::nld && !vars.count(p.text)) {
      auto name = base + "_" + std::to_string(vars.size());
      vars[p.text] = name;
      line(indent, "$" + name + " = ..." + quote(p.text + " Answer True or False."));
    }
    for (const auto& a : p.args) collect_nld(a, base, vars, indent);
  }

  std::string render_template(const std::string& text) {
    // [name] placeholders become {$var} interpolations when `name` is a slot
    // or the output of an external action.
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '[') {
        auto close = text.find(']', i);
        if (close != std::string::npos) {
          auto name = text.substr(i + 1, close - i - 1);
          if (auto var = placeholder_var(name)) {
            out += "{$" + *var + "}";
            i = close;
            continue;
          }
        }
      }
      if (text[i] == '"' || text[i] == '\\') out.push_back('\\');
      if (text[i] == '{' || text[i] == '}') continue;
      out.push_back(text[i]);
    }
    return "\"" + out + "\"";
  }

  std::optional<std::string> placeholder_var(const std::string& name) {
    if (p_.dst_entry(name)) return name;
    std::optional<std::string> found;
    ir::for_each_check(p_.nap_tree, [&](const ir::DecisionNode& d) {
      if (!found && d.action.kind == ir::NodeKind::external_action && d.action.output == name)
        found = ir::helper_name(ir::HelperKind::action, d.node_id);
    });
    return found;
  }

  void emit_action(const ir::DecisionNode& d, int indent) {
    const auto& a = d.action;
    switch (a.kind) {
      case ir::NodeKind::request: {
        line(indent, "bot say " + quote(ir::request_text(a, [](const std::string&) { return true; })));
        break;
      }
      case ir::NodeKind::external_action: {
        std::vector<std::string> args;
        for (const auto& [param, slot] : a.params) args.push_back(param + "=$" + slot);
        line(indent, "$" + ir::helper_name(ir::HelperKind::action, d.node_id) + " = await " + action_name(a.function) + "(" +
                         util::join(args, ", ") + ")");
        line(indent, "$walk = True");
        break;
      }
      case ir::NodeKind::inform: {
        line(indent, "bot say " + render_template(a.template_text));
        line(indent, "$" + ir::helper_name(ir::HelperKind::inform, d.node_id) + " = True");
        if (a.confirm_question) {
          line(indent, "bot say " + quote(*a.confirm_question));
          line(indent, "$" + ir::helper_name(ir::HelperKind::answered, d.node_id) + " = False");
        }
        break;
      }
    }
    line(indent, "$next_action = " + quote(d.node_id));
  }

  void emit_check(const ir::DecisionNode& d, int indent) {
    line(indent, "# node " + d.node_id + " (" + chief::to_string(d.action.kind) + ")");
    std::map<std::string, std::string> nld_vars;
    collect_nld(d.guard, "rule_" + d.node_id, nld_vars, indent);
    line(indent, "if " + expr(d.guard, nld_vars));
    emit_action(d, indent + 1);
    if (d.branches.empty()) return;
    line(indent, "else");
    emit_branches(d, 0, indent + 1);
  }

  void emit_target(const ir::Branch& b, int indent) {
    if (!b.child.empty()) return emit_check(b.child.front(), indent);
    line(indent, "# continue at node " + b.target + " (checked elsewhere)");
    line(indent, "pass");
  }

  void emit_branches(const ir::DecisionNode& d, std::size_t i, int indent) {
    const ir::Branch& b = d.branches[i];
    if (!b.condition) return emit_target(b, indent);
    auto var = "edge_" + d.node_id + "_" + std::to_string(i);
    line(indent, "$" + var + " = ..." + quote("Is the following true: " + *b.condition + "? Answer True or False."));
    line(indent, "if $" + var);
    emit_target(b, indent + 1);
    if (i + 1 < d.branches.size()) {
      line(indent, "else");
      emit_branches(d, i + 1, indent + 1);
    }
  }

  const ir::GuardrailProgram& p_;
  std::ostringstream out_;
};

}  // namespace detail

inline std::string emit_colang(const ir::GuardrailProgram& p) { return detail::Emitter(p).run(); }

}  // namespace codial::colang
