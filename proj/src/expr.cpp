#include "srkit/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "srkit/errors.hpp"

namespace srkit {

namespace {

struct Token {
    enum Kind { Number, Var, Plus, Minus, Star, Slash, Caret, LParen, RParen, End } kind;
    double value = 0.0;
    int var = 0;
    size_t pos = 0;
};

}  // namespace

class ExprParser {
  public:
    ExprParser(const std::string& src, int nvars) : src_(src), nvars_(nvars) { advance(); }

    Expr run() {
        Expr e;
        prog_ = &e.prog_;
        expression();
        expect(Token::End, "end of input");
        // the evaluator uses a fixed stack; reject absurdly deep programs
        int depth = 0, peak = 0;
        for (const auto& in : e.prog_) {
            if (in.op == Expr::Op::Push || in.op == Expr::Op::Load)
                peak = std::max(peak, ++depth);
            else if (in.op != Expr::Op::Neg)
                --depth;
        }
        if (peak > 60) fail("expression too deep", 0);
        return e;
    }

  private:
    const std::string& src_;
    int nvars_;
    size_t cursor_ = 0;
    Token tok_;
    std::vector<Expr::Instr>* prog_ = nullptr;

    [[noreturn]] void fail(const std::string& msg, size_t pos) {
        throw ConfigError("expression error at position " + std::to_string(pos) + ": " + msg +
                          " in \"" + src_ + "\"");
    }

    void advance() {
        while (cursor_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[cursor_])))
            ++cursor_;
        tok_.pos = cursor_;
        if (cursor_ >= src_.size()) {
            tok_.kind = Token::End;
            return;
        }
        char c = src_[cursor_];
        switch (c) {
            case '+': tok_.kind = Token::Plus; ++cursor_; return;
            case '-': tok_.kind = Token::Minus; ++cursor_; return;
            case '*': tok_.kind = Token::Star; ++cursor_; return;
            case '/': tok_.kind = Token::Slash; ++cursor_; return;
            case '^': tok_.kind = Token::Caret; ++cursor_; return;
            case '(': tok_.kind = Token::LParen; ++cursor_; return;
            case ')': tok_.kind = Token::RParen; ++cursor_; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            char* end = nullptr;
            tok_.value = std::strtod(src_.c_str() + cursor_, &end);
            if (end == src_.c_str() + cursor_) fail("bad numeric literal", cursor_);
            cursor_ = static_cast<size_t>(end - src_.c_str());
            tok_.kind = Token::Number;
            return;
        }
        if (c == 'q') {
            size_t j = cursor_ + 1, start = j;
            while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
            if (j == start) fail("expected index after 'q'", cursor_);
            int idx = std::atoi(src_.substr(start, j - start).c_str());
            if (idx < 1 || idx > nvars_)
                fail("variable q" + std::to_string(idx) + " out of range (1.." +
                         std::to_string(nvars_) + ")",
                     cursor_);
            tok_.kind = Token::Var;
            tok_.var = idx - 1;
            cursor_ = j;
            return;
        }
        fail(std::string("unexpected character '") + c + "'", cursor_);
    }

    void expect(Token::Kind k, const std::string& what) {
        if (tok_.kind != k) fail("expected " + what, tok_.pos);
    }

    void emit(Expr::Instr in) { prog_->push_back(in); }

    // expression := term (('+'|'-') term)*
    void expression() {
        term();
        while (tok_.kind == Token::Plus || tok_.kind == Token::Minus) {
            auto op = tok_.kind;
            advance();
            term();
            emit({op == Token::Plus ? Expr::Op::Add : Expr::Op::Sub});
        }
    }

    // term := factor (('*'|'/') factor)*
    void term() {
        factor();
        while (tok_.kind == Token::Star || tok_.kind == Token::Slash) {
            auto op = tok_.kind;
            advance();
            factor();
            emit({op == Token::Star ? Expr::Op::Mul : Expr::Op::Div});
        }
    }

    // factor := unary ('^' factor)?   -- right associative
    void factor() {
        unary();
        if (tok_.kind == Token::Caret) {
            advance();
            factor();
            emit({Expr::Op::Pow});
        }
    }

    void unary() {
        if (tok_.kind == Token::Minus) {
            advance();
            unary();
            emit({Expr::Op::Neg});
            return;
        }
        primary();
    }

    void primary() {
        switch (tok_.kind) {
            case Token::Number: {
                Expr::Instr in{Expr::Op::Push};
                in.value = tok_.value;
                emit(in);
                advance();
                return;
            }
            case Token::Var: {
                Expr::Instr in{Expr::Op::Load};
                in.var = tok_.var;
                emit(in);
                advance();
                return;
            }
            case Token::LParen: {
                advance();
                expression();
                expect(Token::RParen, "')'");
                advance();
                return;
            }
            default: fail("expected number, variable or '('", tok_.pos);
        }
    }
};

Expr Expr::parse(const std::string& src, int nvars) { return ExprParser(src, nvars).run(); }

double Expr::eval(const Vec& q) const {
    double stack[64];
    int sp = 0;
    for (const auto& in : prog_) {
        switch (in.op) {
            case Op::Push: stack[sp++] = in.value; break;
            case Op::Load: stack[sp++] = q[in.var]; break;
            case Op::Add: --sp; stack[sp - 1] += stack[sp]; break;
            case Op::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
            case Op::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
            case Op::Div: --sp; stack[sp - 1] /= stack[sp]; break;
            case Op::Pow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
            case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
        }
    }
    return sp == 1 ? stack[0] : 0.0;
}

}  // namespace srkit
