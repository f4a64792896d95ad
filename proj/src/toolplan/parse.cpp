#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>

#include "stratus/toolplan.hpp"

namespace stratus::plan {

nlohmann::json Diagnostic::to_json() const {
  return {{"code", code}, {"message", message}, {"line", line}, {"col", col}};
}

PlanError::PlanError(Diagnostic d)
    : Error(d.code, d.line > 0 ? d.message + " at " + std::to_string(d.line) + ":" + std::to_string(d.col)
                               : d.message),
      diag_(std::move(d)) {}

namespace {

enum class Tok {
  integer, real, string, ident,
  kw_let, kw_true, kw_false, kw_and, kw_or, kw_not,
  lparen, rparen, lbracket, rbracket, comma, semicolon, assign,
  plus, minus, star, slash, lt, le, gt, ge, eq, ne,
  end
};

struct Token {
  Tok kind;
  std::string text;
  Position pos;
  std::int64_t int_value = 0;
  double real_value = 0.0;
};

[[noreturn]] void fail(const char* code, const std::string& message, Position pos) {
  throw PlanError(Diagnostic{code, message, pos.line, pos.col});
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      const Position pos{line_, col_};
      if (at_ >= src_.size()) {
        out.push_back({Tok::end, "", pos});
        return out;
      }
      const char c = src_[at_];
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && at_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[at_ + 1])))) {
        out.push_back(number(pos));
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        out.push_back(word(pos));
      } else if (c == '"') {
        out.push_back(string(pos));
      } else {
        out.push_back(punct(pos));
      }
    }
  }

 private:
  char advance() {
    const char c = src_[at_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (at_ < src_.size()) {
      const char c = src_[at_];
      if (c == '#') {
        while (at_ < src_.size() && src_[at_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  Token number(Position pos) {
    const std::size_t begin = at_;
    bool is_real = false;
    while (at_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[at_]))) advance();
    if (at_ < src_.size() && src_[at_] == '.') {
      is_real = true;
      advance();
      while (at_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[at_]))) advance();
    }
    if (at_ < src_.size() && (src_[at_] == 'e' || src_[at_] == 'E')) {
      is_real = true;
      advance();
      if (at_ < src_.size() && (src_[at_] == '+' || src_[at_] == '-')) advance();
      if (at_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[at_])))
        fail("lex_error", "malformed exponent in number", pos);
      while (at_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[at_]))) advance();
    }
    if (at_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[at_])) || src_[at_] == '_'))
      fail("lex_error", "identifier cannot start with a digit", pos);
    const std::string text(src_.substr(begin, at_ - begin));
    Token t{is_real ? Tok::real : Tok::integer, text, pos};
    if (is_real) {
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.real_value);
      if (ec != std::errc() || !std::isfinite(t.real_value))
        fail("lex_error", "number '" + text + "' out of range", pos);
    } else {
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.int_value);
      if (ec != std::errc()) fail("lex_error", "integer '" + text + "' out of range", pos);
    }
    return t;
  }

  Token word(Position pos) {
    const std::size_t begin = at_;
    while (at_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[at_])) || src_[at_] == '_'))
      advance();
    const std::string text(src_.substr(begin, at_ - begin));
    Tok kind = Tok::ident;
    if (text == "let") kind = Tok::kw_let;
    else if (text == "true") kind = Tok::kw_true;
    else if (text == "false") kind = Tok::kw_false;
    else if (text == "and") kind = Tok::kw_and;
    else if (text == "or") kind = Tok::kw_or;
    else if (text == "not") kind = Tok::kw_not;
    return {kind, text, pos};
  }

  Token string(Position pos) {
    advance();  // opening quote
    std::string value;
    for (;;) {
      if (at_ >= src_.size() || src_[at_] == '\n') fail("lex_error", "unterminated string literal", pos);
      const char c = advance();
      if (c == '"') break;
      if (c == '\\') {
        if (at_ >= src_.size()) fail("lex_error", "unterminated string literal", pos);
        const char e = advance();
        switch (e) {
          case 'n': value.push_back('\n'); break;
          case 't': value.push_back('\t'); break;
          case '"': value.push_back('"'); break;
          case '\\': value.push_back('\\'); break;
          default: fail("lex_error", std::string("unknown escape '\\") + e + "'", {line_, col_ - 2});
        }
      } else {
        value.push_back(c);
      }
    }
    return {Tok::string, value, pos};
  }

  Token punct(Position pos) {
    const char c = advance();
    auto two = [&](char next, Tok yes, Tok no) {
      if (at_ < src_.size() && src_[at_] == next) {
        advance();
        return Token{yes, "", pos};
      }
      return Token{no, "", pos};
    };
    switch (c) {
      case '(': return {Tok::lparen, "(", pos};
      case ')': return {Tok::rparen, ")", pos};
      case '[': return {Tok::lbracket, "[", pos};
      case ']': return {Tok::rbracket, "]", pos};
      case ',': return {Tok::comma, ",", pos};
      case ';': return {Tok::semicolon, ";", pos};
      case '+': return {Tok::plus, "+", pos};
      case '-': return {Tok::minus, "-", pos};
      case '*': return {Tok::star, "*", pos};
      case '/': return {Tok::slash, "/", pos};
      case '<': return two('=', Tok::le, Tok::lt);
      case '>': return two('=', Tok::ge, Tok::gt);
      case '=': return two('=', Tok::eq, Tok::assign);
      case '!':
        if (at_ < src_.size() && src_[at_] == '=') {
          advance();
          return {Tok::ne, "!=", pos};
        }
        break;
      default: break;
    }
    fail("lex_error", std::string("unexpected character '") + c + "'", pos);
  }

  std::string_view src_;
  std::size_t at_ = 0;
  int line_ = 1;
  int col_ = 1;
};

const char* spelling(Tok t) {
  switch (t) {
    case Tok::plus: return "+";
    case Tok::minus: return "-";
    case Tok::star: return "*";
    case Tok::slash: return "/";
    case Tok::lt: return "<";
    case Tok::le: return "<=";
    case Tok::gt: return ">";
    case Tok::ge: return ">=";
    case Tok::eq: return "==";
    case Tok::ne: return "!=";
    case Tok::kw_and: return "and";
    case Tok::kw_or: return "or";
    case Tok::kw_not: return "not";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbracket: return "'['";
    case Tok::rbracket: return "']'";
    case Tok::comma: return "','";
    case Tok::semicolon: return "';'";
    case Tok::assign: return "'='";
    case Tok::end: return "end of input";
    default: return "token";
  }
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, const std::set<std::string>& env_names)
      : toks_(std::move(tokens)), scope_(env_names) {}

  ToolProgram program() {
    ToolProgram p;
    while (peek().kind == Tok::kw_let) {
      const Position pos = next().pos;
      const Token name = expect(Tok::ident, "binding name");
      if (find_builtin(name.text)) fail("syntax_error", "'" + name.text + "' is a builtin name", name.pos);
      expect(Tok::assign, "'='");
      ExprPtr value = expr();
      expect(Tok::semicolon, "';'");
      scope_.insert(name.text);
      p.lets.push_back({name.text, std::move(value), pos});
    }
    if (peek().kind == Tok::end) fail("syntax_error", "program has no result expression", peek().pos);
    p.result = expr();
    if (peek().kind == Tok::semicolon) next();
    if (peek().kind != Tok::end) unexpected("end of input");
    return p;
  }

 private:
  const Token& peek() const { return toks_[at_]; }
  const Token& next() { return toks_[at_++]; }

  [[noreturn]] void unexpected(const std::string& wanted) {
    const Token& t = peek();
    std::string got = t.kind == Tok::ident || t.kind == Tok::integer || t.kind == Tok::real
                          ? "'" + t.text + "'"
                          : t.kind == Tok::string ? "string literal" : spelling(t.kind);
    fail("syntax_error", "expected " + wanted + " but found " + got, t.pos);
  }

  const Token& expect(Tok kind, const std::string& wanted) {
    if (peek().kind != kind) unexpected(wanted);
    return next();
  }

  static ExprPtr make_op(Expr::Kind kind, std::string op, Position pos, std::vector<ExprPtr> args) {
    auto e = std::make_shared<Expr>();
    e->kind = kind;
    e->text = std::move(op);
    e->pos = pos;
    e->args = std::move(args);
    return e;
  }

  ExprPtr expr() { return or_expr(); }

  ExprPtr or_expr() {
    ExprPtr lhs = and_expr();
    while (peek().kind == Tok::kw_or) {
      const Position pos = next().pos;
      lhs = make_op(Expr::Kind::binary, "or", pos, {lhs, and_expr()});
    }
    return lhs;
  }

  ExprPtr and_expr() {
    ExprPtr lhs = not_expr();
    while (peek().kind == Tok::kw_and) {
      const Position pos = next().pos;
      lhs = make_op(Expr::Kind::binary, "and", pos, {lhs, not_expr()});
    }
    return lhs;
  }

  ExprPtr not_expr() {
    if (peek().kind == Tok::kw_not) {
      const Position pos = next().pos;
      return make_op(Expr::Kind::unary, "not", pos, {not_expr()});
    }
    return comparison();
  }

  ExprPtr comparison() {
    ExprPtr lhs = additive();
    switch (peek().kind) {
      case Tok::lt: case Tok::le: case Tok::gt: case Tok::ge: case Tok::eq: case Tok::ne: {
        const Token& op = next();
        return make_op(Expr::Kind::binary, spelling(op.kind), op.pos, {lhs, additive()});
      }
      default:
        return lhs;
    }
  }

  ExprPtr additive() {
    ExprPtr lhs = term();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const Token& op = next();
      lhs = make_op(Expr::Kind::binary, spelling(op.kind), op.pos, {lhs, term()});
    }
    return lhs;
  }

  ExprPtr term() {
    ExprPtr lhs = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const Token& op = next();
      lhs = make_op(Expr::Kind::binary, spelling(op.kind), op.pos, {lhs, unary()});
    }
    return lhs;
  }

  ExprPtr unary() {
    if (peek().kind == Tok::minus) {
      const Position pos = next().pos;
      return make_op(Expr::Kind::unary, "-", pos, {unary()});
    }
    return primary();
  }

  std::vector<ExprPtr> items(Tok close, const char* close_name) {
    std::vector<ExprPtr> out;
    if (peek().kind == close) {
      next();
      return out;
    }
    for (;;) {
      out.push_back(expr());
      if (peek().kind == Tok::comma) {
        next();
        continue;
      }
      expect(close, std::string("',' or ") + close_name);
      return out;
    }
  }

  ExprPtr primary() {
    const Token& t = peek();
    auto e = std::make_shared<Expr>();
    e->pos = t.pos;
    switch (t.kind) {
      case Tok::integer:
        e->kind = Expr::Kind::integer;
        e->int_value = next().int_value;
        return e;
      case Tok::real:
        e->kind = Expr::Kind::real;
        e->real_value = next().real_value;
        return e;
      case Tok::string:
        e->kind = Expr::Kind::string;
        e->text = next().text;
        return e;
      case Tok::kw_true:
      case Tok::kw_false:
        e->kind = Expr::Kind::boolean;
        e->bool_value = next().kind == Tok::kw_true;
        return e;
      case Tok::lbracket:
        next();
        e->kind = Expr::Kind::list;
        e->args = items(Tok::rbracket, "']'");
        return e;
      case Tok::lparen: {
        next();
        ExprPtr inner = expr();
        expect(Tok::rparen, "')'");
        return inner;
      }
      case Tok::ident: {
        const Token name = next();
        e->text = name.text;
        if (peek().kind == Tok::lparen) {
          next();
          e->kind = Expr::Kind::call;
          const BuiltinInfo* info = find_builtin(name.text);
          if (!info) fail("unknown_identifier", "unknown function '" + name.text + "'", name.pos);
          e->args = items(Tok::rparen, "')'");
          const int n = static_cast<int>(e->args.size());
          if (n < info->min_arity || n > info->max_arity)
            fail("arity_mismatch",
                 name.text + " takes " +
                     (info->min_arity == info->max_arity
                          ? std::to_string(info->min_arity)
                          : std::to_string(info->min_arity) + " to " + std::to_string(info->max_arity)) +
                     " argument(s), got " + std::to_string(n),
                 name.pos);
          return e;
        }
        e->kind = Expr::Kind::variable;
        if (!scope_.count(name.text)) {
          if (find_builtin(name.text))
            fail("syntax_error", "builtin '" + name.text + "' must be called with parentheses", name.pos);
          fail("unknown_identifier", "unknown identifier '" + name.text + "'", name.pos);
        }
        return e;
      }
      default:
        unexpected("an expression");
    }
  }

  std::vector<Token> toks_;
  std::size_t at_ = 0;
  std::set<std::string> scope_;
};

// Shortest round-trip spelling that still lexes as a real.
std::string real_literal(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

void print_expr(const Expr& e, std::string& out) {
  switch (e.kind) {
    case Expr::Kind::integer: out += std::to_string(e.int_value); break;
    case Expr::Kind::real: out += real_literal(e.real_value); break;
    case Expr::Kind::string: out += quote(e.text); break;
    case Expr::Kind::boolean: out += e.bool_value ? "true" : "false"; break;
    case Expr::Kind::variable: out += e.text; break;
    case Expr::Kind::unary:
      out += e.text == "not" ? "(not " : "(-";
      print_expr(*e.args[0], out);
      out += ")";
      break;
    case Expr::Kind::binary:
      out += "(";
      print_expr(*e.args[0], out);
      out += " " + e.text + " ";
      print_expr(*e.args[1], out);
      out += ")";
      break;
    case Expr::Kind::call:
    case Expr::Kind::list: {
      const bool call = e.kind == Expr::Kind::call;
      out += call ? e.text + "(" : "[";
      for (std::size_t k = 0; k < e.args.size(); ++k) {
        if (k) out += ", ";
        print_expr(*e.args[k], out);
      }
      out += call ? ")" : "]";
      break;
    }
  }
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.text != b.text || a.int_value != b.int_value ||
      a.bool_value != b.bool_value || a.args.size() != b.args.size())
    return false;
  if (a.kind == Expr::Kind::real && std::bit_cast<std::uint64_t>(a.real_value) !=
                                        std::bit_cast<std::uint64_t>(b.real_value))
    return false;
  for (std::size_t k = 0; k < a.args.size(); ++k)
    if (!expr_equal(*a.args[k], *b.args[k])) return false;
  return true;
}

void collect_tools(const Expr& e, std::set<ToolKind>& out) {
  if (e.kind == Expr::Kind::call) {
    if (const auto* info = find_builtin(e.text)) out.insert(info->tools.begin(), info->tools.end());
    // A region given by name or feature needs the geolocator at run time.
    // Points are the only region that is statically known not to.
    if ((e.text == "sel" || e.text == "apply") && e.args.size() >= 2) {
      const Expr& last = *e.args.back();
      const bool is_point = last.kind == Expr::Kind::call && (last.text == "point" || last.text == "latlon");
      if (!is_point) out.insert(ToolKind::geolocator);
    }
  }
  for (const auto& a : e.args) collect_tools(*a, out);
}

}  // namespace

ToolProgram parse(std::string_view source, const std::set<std::string>& env_names) {
  if (source.size() > kMaxSourceBytes)
    throw PlanError({"too_large", "program exceeds " + std::to_string(kMaxSourceBytes) + " bytes", 1, 1});
  Parser parser(Lexer(source).run(), env_names);
  ToolProgram p = parser.program();
  p.source = std::string(source);
  return p;
}

std::string pretty_print(const ToolProgram& program) {
  std::string out;
  for (const auto& b : program.lets) {
    out += "let " + b.name + " = ";
    print_expr(*b.value, out);
    out += ";\n";
  }
  print_expr(*program.result, out);
  out += "\n";
  return out;
}

bool ast_equal(const ToolProgram& a, const ToolProgram& b) {
  if (a.lets.size() != b.lets.size()) return false;
  for (std::size_t k = 0; k < a.lets.size(); ++k)
    if (a.lets[k].name != b.lets[k].name || !expr_equal(*a.lets[k].value, *b.lets[k].value)) return false;
  return expr_equal(*a.result, *b.result);
}

std::vector<ToolKind> required_tools(const ToolProgram& program) {
  std::set<ToolKind> kinds;
  for (const auto& b : program.lets) collect_tools(*b.value, kinds);
  collect_tools(*program.result, kinds);
  return {kinds.begin(), kinds.end()};
}

}  // namespace stratus::plan
