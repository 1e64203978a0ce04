#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "anvil/error.hpp"

namespace anvil {

// Symbolic integer expressions used for array indices, loop bounds,
// unit-id arithmetic and swizzles. The evaluation domain is nonnegative
// integers; division and modulo are only ever applied to nonnegative
// operands, so C semantics and floor semantics coincide.
enum class ExprOp { Const, Var, Add, Mul, Div, Mod, Shr, Shl, BitAnd, BitOr };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    ExprOp op = ExprOp::Const;
    long value = 0;       // Const
    std::string name;     // Var
    Expr lhs, rhs;        // binary ops
};

inline Expr iconst(long v) {
    auto n = std::make_shared<ExprNode>();
    n->op = ExprOp::Const;
    n->value = v;
    return n;
}

inline Expr ivar(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->op = ExprOp::Var;
    n->name = std::move(name);
    return n;
}

inline Expr ibin(ExprOp op, Expr a, Expr b) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

inline Expr iadd(Expr a, Expr b) { return ibin(ExprOp::Add, std::move(a), std::move(b)); }
inline Expr imul(Expr a, Expr b) { return ibin(ExprOp::Mul, std::move(a), std::move(b)); }
inline Expr idiv(Expr a, Expr b) { return ibin(ExprOp::Div, std::move(a), std::move(b)); }
inline Expr imod(Expr a, Expr b) { return ibin(ExprOp::Mod, std::move(a), std::move(b)); }
inline Expr ishr(Expr a, Expr b) { return ibin(ExprOp::Shr, std::move(a), std::move(b)); }
inline Expr ishl(Expr a, Expr b) { return ibin(ExprOp::Shl, std::move(a), std::move(b)); }
inline Expr iand(Expr a, Expr b) { return ibin(ExprOp::BitAnd, std::move(a), std::move(b)); }
inline Expr ior(Expr a, Expr b) { return ibin(ExprOp::BitOr, std::move(a), std::move(b)); }

inline bool is_const(const Expr& e, long v) { return e->op == ExprOp::Const && e->value == v; }

using Env = std::map<std::string, long>;

inline long eval(const Expr& e, const Env& env) {
    switch (e->op) {
        case ExprOp::Const: return e->value;
        case ExprOp::Var: {
            auto it = env.find(e->name);
            if (it == env.end()) fail(ErrorKind::UnboundVar, "no binding for '" + e->name + "'");
            return it->second;
        }
        default: break;
    }
    long a = eval(e->lhs, env);
    long b = eval(e->rhs, env);
    switch (e->op) {
        case ExprOp::Add: return a + b;
        case ExprOp::Mul: return a * b;
        case ExprOp::Div:
            if (b == 0) fail(ErrorKind::DivisionByZero, "division by zero");
            return a / b;
        case ExprOp::Mod:
            if (b == 0) fail(ErrorKind::DivisionByZero, "modulo by zero");
            return a % b;
        case ExprOp::Shr: return a >> b;
        case ExprOp::Shl: return a << b;
        case ExprOp::BitAnd: return a & b;
        case ExprOp::BitOr: return a | b;
        default: break;
    }
    fail(ErrorKind::UnboundVar, "malformed expression node");
}

namespace detail {

inline long fold(ExprOp op, long a, long b) {
    switch (op) {
        case ExprOp::Add: return a + b;
        case ExprOp::Mul: return a * b;
        case ExprOp::Div: return b == 0 ? 0 : a / b; // 0-divisor nodes are never constructed by the compiler
        case ExprOp::Mod: return b == 0 ? 0 : a % b;
        case ExprOp::Shr: return a >> b;
        case ExprOp::Shl: return a << b;
        case ExprOp::BitAnd: return a & b;
        case ExprOp::BitOr: return a | b;
        default: return 0;
    }
}

inline bool commutative(ExprOp op) {
    return op == ExprOp::Add || op == ExprOp::Mul || op == ExprOp::BitAnd || op == ExprOp::BitOr;
}

} // namespace detail

// Fixed, terminating rule list; no general rewriting. Guarantees at least:
// constant folding, 0*x=0, 1*x=x, x+0=x, (x*c1)*c2=x*(c1*c2), x/1=x, x%1=0.
inline Expr simplify(const Expr& e) {
    if (e->op == ExprOp::Const || e->op == ExprOp::Var) return e;

    Expr a = simplify(e->lhs);
    Expr b = simplify(e->rhs);
    ExprOp op = e->op;

    for (int round = 0; round < 8; ++round) {
        // fold two constants
        if (a->op == ExprOp::Const && b->op == ExprOp::Const)
            return iconst(detail::fold(op, a->value, b->value));
        // canonicalize constants to the right for commutative ops
        if (detail::commutative(op) && a->op == ExprOp::Const) std::swap(a, b);

        if (b->op == ExprOp::Const) {
            long c = b->value;
            switch (op) {
                case ExprOp::Add:
                    if (c == 0) return a;
                    // (x + c1) + c2 -> x + (c1 + c2)
                    if (a->op == ExprOp::Add && a->rhs->op == ExprOp::Const) {
                        b = iconst(a->rhs->value + c);
                        a = a->lhs;
                        continue;
                    }
                    break;
                case ExprOp::Mul:
                    if (c == 0) return iconst(0);
                    if (c == 1) return a;
                    // (x * c1) * c2 -> x * (c1 * c2)
                    if (a->op == ExprOp::Mul && a->rhs->op == ExprOp::Const) {
                        b = iconst(a->rhs->value * c);
                        a = a->lhs;
                        continue;
                    }
                    break;
                case ExprOp::Div:
                    if (c == 1) return a;
                    // (x * c1) / c2 -> x * (c1 / c2) when c2 divides c1 (exact on nonnegatives)
                    if (a->op == ExprOp::Mul && a->rhs->op == ExprOp::Const && c != 0 &&
                        a->rhs->value % c == 0)
                        return simplify(imul(a->lhs, iconst(a->rhs->value / c)));
                    break;
                case ExprOp::Mod:
                    if (c == 1) return iconst(0);
                    // (x * c1) % c2 -> 0 when c2 divides c1
                    if (a->op == ExprOp::Mul && a->rhs->op == ExprOp::Const && c != 0 &&
                        a->rhs->value % c == 0)
                        return iconst(0);
                    break;
                case ExprOp::Shr:
                case ExprOp::Shl:
                    if (c == 0) return a;
                    break;
                case ExprOp::BitAnd:
                    if (c == 0) return iconst(0);
                    break;
                case ExprOp::BitOr:
                    if (c == 0) return a;
                    break;
                default: break;
            }
        }
        if (a->op == ExprOp::Const) {
            long c = a->value;
            if (c == 0) {
                // non-commutative ops with zero on the left
                if (op == ExprOp::Div || op == ExprOp::Mod || op == ExprOp::Shr || op == ExprOp::Shl)
                    return iconst(0);
            }
        }
        break;
    }
    return ibin(op, a, b);
}

// Deterministic C rendering: full parenthesization except leaves,
// constants printed in decimal (hex inputs normalize away).
inline std::string emit_c(const Expr& e) {
    switch (e->op) {
        case ExprOp::Const: return std::to_string(e->value);
        case ExprOp::Var: return e->name;
        default: break;
    }
    const char* op = "?";
    switch (e->op) {
        case ExprOp::Add: op = "+"; break;
        case ExprOp::Mul: op = "*"; break;
        case ExprOp::Div: op = "/"; break;
        case ExprOp::Mod: op = "%"; break;
        case ExprOp::Shr: op = ">>"; break;
        case ExprOp::Shl: op = "<<"; break;
        case ExprOp::BitAnd: op = "&"; break;
        case ExprOp::BitOr: op = "|"; break;
        default: break;
    }
    return "(" + emit_c(e->lhs) + " " + op + " " + emit_c(e->rhs) + ")";
}

// Evaluates a swizzle expression (single free variable "id") at a unit id.
inline long apply_swizzle(const Expr& s, long id) {
    Env env;
    env["id"] = id;
    return eval(s, env);
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.get() == b.get()) return true;
    if (a->op != b->op) return false;
    switch (a->op) {
        case ExprOp::Const: return a->value == b->value;
        case ExprOp::Var: return a->name == b->name;
        default: return structurally_equal(a->lhs, b->lhs) && structurally_equal(a->rhs, b->rhs);
    }
}

} // namespace anvil
