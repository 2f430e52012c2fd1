#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgflow/errors.hpp"

namespace cgflow {

// Arithmetic expression over named variables, used for synthetic SCM
// mechanisms. Supports + - * / with the usual precedence, unary minus,
// numeric literals, and a fixed function set.
class Expr {
 public:
  using Ptr = std::shared_ptr<Expr>;
  using Env = std::map<std::string, double>;

  enum class Kind { Number, Variable, Unary, Binary, Call };

  Kind kind;
  double number = 0.0;
  std::string name;  // variable or function name
  char op = 0;
  std::vector<Ptr> args;

  double eval(const Env& env) const {
    switch (kind) {
      case Kind::Number:
        return number;
      case Kind::Variable: {
        auto it = env.find(name);
        if (it == env.end()) throw ScmParseError("unbound variable '" + name + "'");
        return it->second;
      }
      case Kind::Unary:
        return op == '-' ? -args[0]->eval(env) : args[0]->eval(env);
      case Kind::Binary: {
        const double a = args[0]->eval(env);
        const double b = args[1]->eval(env);
        switch (op) {
          case '+': return a + b;
          case '-': return a - b;
          case '*': return a * b;
          case '/': return a / b;
        }
        throw ScmParseError("bad operator");
      }
      case Kind::Call:
        return call(env);
    }
    throw ScmParseError("bad expression node");
  }

  void collect_variables(std::set<std::string>& out) const {
    if (kind == Kind::Variable) out.insert(name);
    for (const auto& a : args) a->collect_variables(out);
  }

  // Affine form {constant, coefficient per variable} when the expression
  // is linear in all variables; nullopt otherwise.
  struct Affine {
    double constant = 0.0;
    std::map<std::string, double> coeff;
  };

  std::optional<Affine> affine() const {
    switch (kind) {
      case Kind::Number:
        return Affine{number, {}};
      case Kind::Variable: {
        Affine a;
        a.coeff[name] = 1.0;
        return a;
      }
      case Kind::Unary: {
        auto a = args[0]->affine();
        if (!a) return std::nullopt;
        if (op == '-') {
          a->constant = -a->constant;
          for (auto& [k, v] : a->coeff) v = -v;
        }
        return a;
      }
      case Kind::Binary: {
        auto a = args[0]->affine();
        auto b = args[1]->affine();
        if (!a || !b) return std::nullopt;
        if (op == '+' || op == '-') {
          const double s = op == '+' ? 1.0 : -1.0;
          a->constant += s * b->constant;
          for (const auto& [k, v] : b->coeff) a->coeff[k] += s * v;
          return a;
        }
        if (op == '*') {
          if (b->coeff.empty()) {
            a->constant *= b->constant;
            for (auto& [k, v] : a->coeff) v *= b->constant;
            return a;
          }
          if (a->coeff.empty()) {
            b->constant *= a->constant;
            for (auto& [k, v] : b->coeff) v *= a->constant;
            return b;
          }
          return std::nullopt;
        }
        if (op == '/') {
          if (!b->coeff.empty() || b->constant == 0.0) return std::nullopt;
          a->constant /= b->constant;
          for (auto& [k, v] : a->coeff) v /= b->constant;
          return a;
        }
        return std::nullopt;
      }
      case Kind::Call:
        return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  double call(const Env& env) const {
    auto a = [&](std::size_t i) { return args[i]->eval(env); };
    if (name == "step") return a(0) > 0.0 ? 1.0 : 0.0;
    if (name == "tanh") return std::tanh(a(0));
    if (name == "exp") return std::exp(a(0));
    if (name == "log") return std::log(a(0));
    if (name == "abs") return std::abs(a(0));
    if (name == "sqrt") return std::sqrt(a(0));
    if (name == "round") return std::round(a(0));
    if (name == "floor") return std::floor(a(0));
    if (name == "sigmoid") return 1.0 / (1.0 + std::exp(-a(0)));
    if (name == "min") return std::min(a(0), a(1));
    if (name == "max") return std::max(a(0), a(1));
    if (name == "clamp") return std::min(a(2), std::max(a(1), a(0)));
    throw ScmParseError("unknown function '" + name + "'");
  }
};

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(const std::string& text) : text_(text) {}

  Expr::Ptr parse() {
    auto e = sum();
    skip_ws();
    if (pos_ != text_.size())
      throw ScmParseError("trailing characters in expression '" + text_ + "'");
    return e;
  }

 private:
  Expr::Ptr sum() {
    auto left = product();
    for (;;) {
      skip_ws();
      if (peek() == '+' || peek() == '-') {
        const char op = take();
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Binary;
        node->op = op;
        node->args = {left, product()};
        left = node;
      } else {
        return left;
      }
    }
  }

  Expr::Ptr product() {
    auto left = unary();
    for (;;) {
      skip_ws();
      if (peek() == '*' || peek() == '/') {
        const char op = take();
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Binary;
        node->op = op;
        node->args = {left, unary()};
        left = node;
      } else {
        return left;
      }
    }
  }

  Expr::Ptr unary() {
    skip_ws();
    if (peek() == '-' || peek() == '+') {
      const char op = take();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::Unary;
      node->op = op;
      node->args = {unary()};
      return node;
    }
    return atom();
  }

  Expr::Ptr atom() {
    skip_ws();
    const char c = peek();
    if (c == '(') {
      take();
      auto e = sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ScmParseError("unexpected character '" + std::string(1, c) + "' in expression");
  }

  Expr::Ptr number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
      ++pos_;
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Number;
    try {
      node->number = std::stod(text_.substr(start, pos_ - start));
    } catch (const std::exception&) {
      throw ScmParseError("bad number in expression '" + text_ + "'");
    }
    return node;
  }

  Expr::Ptr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name = text_.substr(start, pos_ - start);
    skip_ws();
    if (peek() == '(') {
      take();
      auto node = std::make_shared<Expr>();
      node->kind = Expr::Kind::Call;
      node->name = name;
      skip_ws();
      if (peek() != ')') {
        node->args.push_back(sum());
        skip_ws();
        while (peek() == ',') {
          take();
          node->args.push_back(sum());
          skip_ws();
        }
      }
      expect(')');
      const std::size_t arity = name == "min" || name == "max" ? 2 : name == "clamp" ? 3 : 1;
      if (node->args.size() != arity)
        throw ScmParseError("function '" + name + "' expects " + std::to_string(arity) +
                            " arguments");
      return node;
    }
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Variable;
    node->name = name;
    return node;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  char take() { return text_[pos_++]; }
  void expect(char c) {
    skip_ws();
    if (peek() != c)
      throw ScmParseError("expected '" + std::string(1, c) + "' in expression '" + text_ + "'");
    take();
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr::Ptr parse_expr(const std::string& text) { return detail::ExprParser(text).parse(); }

}  // namespace cgflow
