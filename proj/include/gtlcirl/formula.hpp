#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"

namespace gtlcirl {

enum class Comparison { ge, gt, le, lt };

/// Boolean predicate on an edge label, gating neighbor eligibility.
struct EdgeProp
{
  std::string feature; // empty means "true"
  Comparison op = Comparison::ge;
  double value = 0.0;

  static EdgeProp always_true() { return {}; }
  bool is_true() const noexcept { return feature.empty(); }

  bool holds(double x) const noexcept
  {
    switch (op) {
    case Comparison::ge:
      return x >= value;
    case Comparison::gt:
      return x > value;
    case Comparison::le:
      return x <= value;
    case Comparison::lt:
      return x < value;
    }
    return false;
  }

  friend bool operator==(const EdgeProp&, const EdgeProp&) = default;
};

struct FormulaNode;

/// Immutable, shared GTL formula over the (F,G)-fragment.
class Formula
{
public:
  Formula() = default;
  explicit Formula(std::shared_ptr<const FormulaNode> node) : node_(std::move(node)) {}

  const FormulaNode& node() const { return *node_; }
  bool empty() const noexcept { return !node_; }

  friend bool operator==(const Formula& a, const Formula& b);

private:
  std::shared_ptr<const FormulaNode> node_;
};

using GtlFormula = Formula;

/// f(x) >= threshold
struct Atomic
{
  std::string feature;
  double threshold = 0.0;
  friend bool operator==(const Atomic&, const Atomic&) = default;
};

struct Not
{
  Formula inner;
  friend bool operator==(const Not&, const Not&) = default;
};

struct And
{
  Formula left, right;
  friend bool operator==(const And&, const And&) = default;
};

struct Or
{
  Formula left, right;
  friend bool operator==(const Or&, const Or&) = default;
};

/// At least `n` nodes reachable along edges matching edge_props satisfy inner.
struct ExistsN
{
  int n = 1;
  std::vector<EdgeProp> edge_props;
  Formula inner;
  friend bool operator==(const ExistsN&, const ExistsN&) = default;
};

/// Some node of the graph satisfies inner (written "EV").
struct ExistsNode
{
  Formula inner;
  friend bool operator==(const ExistsNode&, const ExistsNode&) = default;
};

struct Eventually
{
  int a = 0, b = 0;
  Formula inner;
  friend bool operator==(const Eventually&, const Eventually&) = default;
};

struct Always
{
  int a = 0, b = 0;
  Formula inner;
  friend bool operator==(const Always&, const Always&) = default;
};

struct FormulaNode
{
  std::variant<Atomic, Not, And, Or, ExistsN, ExistsNode, Eventually, Always> v;
};

inline bool operator==(const Formula& a, const Formula& b)
{
  if (a.node_ == b.node_)
    return true;
  if (!a.node_ || !b.node_)
    return false;
  return a.node_->v == b.node_->v;
}

namespace make {

inline Formula node(auto&& alt) { return Formula(std::make_shared<FormulaNode>(FormulaNode{std::forward<decltype(alt)>(alt)})); }

inline Formula atomic(std::string feature, double threshold) { return node(Atomic{std::move(feature), threshold}); }
inline Formula negation(Formula f) { return node(Not{std::move(f)}); }
inline Formula conj(Formula l, Formula r) { return node(And{std::move(l), std::move(r)}); }
inline Formula disj(Formula l, Formula r) { return node(Or{std::move(l), std::move(r)}); }
inline Formula exists(int n, std::vector<EdgeProp> props, Formula f)
{
  if (n < 1)
    throw GtlError("exists: count must be >= 1");
  if (props.empty())
    throw GtlError("exists: needs at least one edge proposition");
  return node(ExistsN{n, std::move(props), std::move(f)});
}
inline Formula exists_node(Formula f) { return node(ExistsNode{std::move(f)}); }
inline Formula eventually(int a, int b, Formula f)
{
  if (a < 0 || b < a)
    throw GtlError("eventually: invalid window");
  return node(Eventually{a, b, std::move(f)});
}
inline Formula always(int a, int b, Formula f)
{
  if (a < 0 || b < a)
    throw GtlError("always: invalid window");
  return node(Always{a, b, std::move(f)});
}

} // namespace make

template <class... Ts>
struct overloaded : Ts...
{
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Maximum look-ahead of a formula in steps.
inline int horizon(const Formula& f)
{
  return std::visit(overloaded{
                        [](const Atomic&) { return 0; },
                        [](const Not& x) { return horizon(x.inner); },
                        [](const And& x) { return std::max(horizon(x.left), horizon(x.right)); },
                        [](const Or& x) { return std::max(horizon(x.left), horizon(x.right)); },
                        [](const ExistsN& x) { return horizon(x.inner); },
                        [](const ExistsNode& x) { return horizon(x.inner); },
                        [](const Eventually& x) { return x.b + horizon(x.inner); },
                        [](const Always& x) { return x.b + horizon(x.inner); },
                    },
                    f.node().v);
}

inline int depth(const Formula& f)
{
  return std::visit(overloaded{
                        [](const Atomic&) { return 0; },
                        [](const Not& x) { return 1 + depth(x.inner); },
                        [](const And& x) { return 1 + std::max(depth(x.left), depth(x.right)); },
                        [](const Or& x) { return 1 + std::max(depth(x.left), depth(x.right)); },
                        [](const ExistsN& x) { return 1 + depth(x.inner); },
                        [](const ExistsNode& x) { return 1 + depth(x.inner); },
                        [](const Eventually& x) { return 1 + depth(x.inner); },
                        [](const Always& x) { return 1 + depth(x.inner); },
                    },
                    f.node().v);
}

// ---------------------------------------------------------------------------
// Printing

inline std::string to_string(Comparison op)
{
  switch (op) {
  case Comparison::ge:
    return ">=";
  case Comparison::gt:
    return ">";
  case Comparison::le:
    return "<=";
  case Comparison::lt:
    return "<";
  }
  return "?";
}

inline std::string to_string(const EdgeProp& p)
{
  if (p.is_true())
    return "true";
  return p.feature + to_string(p.op) + format_real(p.value);
}

inline std::string to_string(const Formula& f)
{
  return std::visit(overloaded{
                        [](const Atomic& x) { return "(" + x.feature + " >= " + format_real(x.threshold) + ")"; },
                        [](const Not& x) -> std::string {
                          if (auto* at = std::get_if<Atomic>(&x.inner.node().v))
                            return "(" + at->feature + " < " + format_real(at->threshold) + ")";
                          return "!" + to_string(x.inner);
                        },
                        [](const And& x) { return "(" + to_string(x.left) + " & " + to_string(x.right) + ")"; },
                        [](const Or& x) { return "(" + to_string(x.left) + " | " + to_string(x.right) + ")"; },
                        [](const ExistsN& x) {
                          std::string s = "E" + std::to_string(x.n) + "{";
                          for (std::size_t i = 0; i < x.edge_props.size(); ++i)
                            s += (i ? "," : "") + to_string(x.edge_props[i]);
                          return s + "}" + to_string(x.inner);
                        },
                        [](const ExistsNode& x) { return "EV " + to_string(x.inner); },
                        [](const Eventually& x) {
                          return "F[" + std::to_string(x.a) + "," + std::to_string(x.b) + "]" + to_string(x.inner);
                        },
                        [](const Always& x) {
                          return "G[" + std::to_string(x.a) + "," + std::to_string(x.b) + "]" + to_string(x.inner);
                        },
                    },
                    f.node().v);
}

// ---------------------------------------------------------------------------
// Parsing

struct ParseOptions
{
  /// Replace an inverted window [a,b] with [a,a] instead of rejecting it.
  bool clamp_inverted_windows = false;
};

namespace detail {

enum class Tok { ident, number, lparen, rparen, lbracket, rbracket, lbrace, rbrace, comma, bang, amp, bar, cmp, end };

struct Token
{
  Tok kind;
  std::string text;
  int line;
  int column;
};

inline std::vector<Token> lex(std::string_view src)
{
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else
        ++col;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    const int l = line, cl = col;
    auto single = [&](Tok k) {
      out.push_back({k, std::string(1, c), l, cl});
      advance(1);
    };
    switch (c) {
    case '(':
      single(Tok::lparen);
      continue;
    case ')':
      single(Tok::rparen);
      continue;
    case '[':
      single(Tok::lbracket);
      continue;
    case ']':
      single(Tok::rbracket);
      continue;
    case '{':
      single(Tok::lbrace);
      continue;
    case '}':
      single(Tok::rbrace);
      continue;
    case ',':
      single(Tok::comma);
      continue;
    case '!':
      single(Tok::bang);
      continue;
    case '&':
      single(Tok::amp);
      continue;
    case '|':
      single(Tok::bar);
      continue;
    default:
      break;
    }
    if (c == '>' || c == '<' || c == '=') {
      std::size_t n = (i + 1 < src.size() && src[i + 1] == '=' && c != '=') ? 2 : 1;
      out.push_back({Tok::cmp, std::string(src.substr(i, n)), l, cl});
      advance(n);
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      out.push_back({Tok::ident, std::string(src.substr(i, j - i)), l, cl});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') {
      std::size_t j = i + 1;
      while (j < src.size()) {
        const char d = src[j];
        if (std::isdigit(static_cast<unsigned char>(d)) || d == '.')
          ++j;
        else if ((d == 'e' || d == 'E') && j + 1 < src.size())
          j += (src[j + 1] == '-' || src[j + 1] == '+') ? 2 : 1;
        else
          break;
      }
      out.push_back({Tok::number, std::string(src.substr(i, j - i)), l, cl});
      advance(j - i);
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", l, cl);
  }
  out.push_back({Tok::end, "", line, col});
  return out;
}

inline bool is_unbounded_keyword(std::string_view s) { return s == "U" || s == "X" || s == "W" || s == "R"; }

class Parser
{
public:
  Parser(std::string_view src, ParseOptions opts) : toks_(lex(src)), opts_(opts) {}

  Formula parse()
  {
    Formula f = disjunction();
    if (peek().kind != Tok::end)
      fail("unexpected '" + peek().text + "' after formula");
    return f;
  }

private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const Token& take() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  [[noreturn]] void fail(const std::string& msg, const Token* at = nullptr) const
  {
    const Token& t = at ? *at : peek();
    throw ParseError(msg, t.line, t.column);
  }

  const Token& expect(Tok kind, const char* what)
  {
    if (peek().kind != kind)
      fail(std::string("expected ") + what + (peek().kind == Tok::end ? " at end of input" : ", got '" + peek().text + "'"));
    return take();
  }

  void reject_unbounded_infix()
  {
    if (peek().kind == Tok::ident && is_unbounded_keyword(peek().text))
      fail("unbounded temporal operator '" + peek().text + "' is not supported");
  }

  Formula disjunction()
  {
    Formula f = conjunction();
    while (peek().kind == Tok::bar) {
      take();
      f = make::disj(f, conjunction());
    }
    reject_unbounded_infix();
    return f;
  }

  Formula conjunction()
  {
    Formula f = unary();
    while (peek().kind == Tok::amp) {
      take();
      f = make::conj(f, unary());
    }
    reject_unbounded_infix();
    return f;
  }

  int bound()
  {
    const Token& t = peek();
    if (t.kind != Tok::number)
      fail("expected integer time bound");
    take();
    if (!t.text.empty() && t.text.front() == '-')
      fail("negative time bound " + t.text, &t);
    if (t.text.find_first_not_of("+0123456789") != std::string::npos)
      fail("time bound must be an integer step, got " + t.text, &t);
    return std::stoi(t.text);
  }

  std::pair<int, int> window()
  {
    const Token& open = expect(Tok::lbracket, "'['");
    int a = bound();
    expect(Tok::comma, "','");
    int b = bound();
    expect(Tok::rbracket, "']'");
    if (b < a) {
      if (!opts_.clamp_inverted_windows)
        fail("inverted interval bounds [" + std::to_string(a) + "," + std::to_string(b) + "]", &open);
      b = a;
    }
    return {a, b};
  }

  double number()
  {
    const Token& t = expect(Tok::number, "number");
    auto v = parse_real(t.text);
    if (!v)
      fail("malformed number '" + t.text + "'", &t);
    return *v;
  }

  EdgeProp edge_prop()
  {
    const Token& name = expect(Tok::ident, "edge proposition");
    if (name.text == "true")
      return EdgeProp::always_true();
    const Token& op = expect(Tok::cmp, "comparison");
    EdgeProp p;
    p.feature = name.text;
    if (op.text == ">=")
      p.op = Comparison::ge;
    else if (op.text == ">")
      p.op = Comparison::gt;
    else if (op.text == "<=")
      p.op = Comparison::le;
    else if (op.text == "<")
      p.op = Comparison::lt;
    else
      fail("edge propositions take >=, >, <= or <", &op);
    p.value = number();
    return p;
  }

  Formula unary()
  {
    const Token& t = peek();
    if (t.kind == Tok::bang) {
      take();
      return make::negation(unary());
    }
    if (t.kind == Tok::ident) {
      if (t.text == "F" || t.text == "G") {
        take();
        if (peek().kind != Tok::lbracket)
          fail("unbounded temporal operator '" + t.text + "': a window [a,b] is required", &t);
        auto [a, b] = window();
        Formula inner = unary();
        return t.text == "F" ? make::eventually(a, b, inner) : make::always(a, b, inner);
      }
      if (t.text == "EV") {
        take();
        return make::exists_node(unary());
      }
      if (t.text.size() > 1 && t.text[0] == 'E' &&
          t.text.find_first_not_of("0123456789", 1) == std::string::npos) {
        take();
        const int n = std::stoi(t.text.substr(1));
        if (n < 1)
          fail("neighbor count must be >= 1", &t);
        expect(Tok::lbrace, "'{'");
        std::vector<EdgeProp> props{edge_prop()};
        while (peek().kind == Tok::comma) {
          take();
          props.push_back(edge_prop());
        }
        expect(Tok::rbrace, "'}'");
        return make::exists(n, std::move(props), unary());
      }
      if (is_unbounded_keyword(t.text))
        fail("unbounded temporal operator '" + t.text + "' is not supported");
      fail("unexpected identifier '" + t.text + "'; atoms are written (name op value)");
    }
    if (t.kind == Tok::lparen) {
      if (peek(1).kind == Tok::ident && peek(2).kind == Tok::cmp)
        return atom();
      take();
      Formula f = disjunction();
      expect(Tok::rparen, "')'");
      return f;
    }
    fail(t.kind == Tok::end ? "unexpected end of formula" : "unexpected '" + t.text + "'");
  }

  Formula atom()
  {
    expect(Tok::lparen, "'('");
    const Token& name = expect(Tok::ident, "feature name");
    const Token& op = expect(Tok::cmp, "comparison");
    const Token& num = peek();
    const double c = number();
    expect(Tok::rparen, "')'");
    if (op.text == ">=" || op.text == ">")
      return make::atomic(name.text, c);
    if (op.text == "<" || op.text == "<=")
      return make::negation(make::atomic(name.text, c));
    // Boolean features are embedded as 0.0/1.0; equality is tested against
    // the midpoint so both outcomes carry a nonzero margin of 0.5.
    if (c == 1.0)
      return make::atomic(name.text, 0.5);
    if (c == 0.0)
      return make::negation(make::atomic(name.text, 0.5));
    fail("'=' is only defined for boolean features (0 or 1)", &num);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  ParseOptions opts_;
};

} // namespace detail

inline Formula parse_formula(std::string_view text, ParseOptions opts = {})
{
  return detail::Parser(text, opts).parse();
}

} // namespace gtlcirl
