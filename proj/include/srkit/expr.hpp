#pragma once

// Minimal arithmetic expression language for model definition files.
// Grammar: + - * / ^ (right-assoc), unary minus, parentheses, numeric
// literals, variables q1..qn.  Expressions compile to a little stack program
// so frame evaluation inside integrator loops stays cheap.

#include <cstdint>
#include <string>
#include <vector>

#include "srkit/types.hpp"

namespace srkit {

class Expr {
  public:
    /// Parse `src` with variables q1..q<nvars>; throws ConfigError with the
    /// offending position on malformed input.
    static Expr parse(const std::string& src, int nvars);

    double eval(const Vec& q) const;
    bool empty() const { return prog_.empty(); }

  private:
    enum class Op : std::uint8_t { Push, Load, Add, Sub, Mul, Div, Pow, Neg };
    struct Instr {
        Op op;
        double value = 0.0;  // Push
        int var = 0;         // Load
    };
    std::vector<Instr> prog_;

    friend class ExprParser;
};

}  // namespace srkit
