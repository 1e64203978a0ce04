#include <catch_amalgamated.hpp>

#include "anvil/index_expr.hpp"
#include "anvil/matrix.hpp"

using namespace anvil;

namespace {

// maxwell-style lane permutation; built right-nested so the emitted text is
// pinned independently of any parser
Expr maxwell_swizzle() {
    Expr id = ivar("id");
    Expr a = iand(ishr(id, iconst(1)), iconst(0x07));
    Expr b = iand(id, iconst(0x30));
    Expr c = ishl(iand(id, iconst(0x01)), iconst(3));
    return ior(a, ior(b, c));
}

// depth-bounded random expression; divisors are nonzero constants so
// evaluation stays total
Expr random_expr(Rng& rng, int depth) {
    if (depth == 0 || rng.next() % 4 == 0) {
        if (rng.next() % 2) return iconst(static_cast<long>(rng.next() % 64));
        const char* vars[] = {"x", "y", "z"};
        return ivar(vars[rng.next() % 3]);
    }
    ExprOp ops[] = {ExprOp::Add, ExprOp::Mul, ExprOp::Div,    ExprOp::Mod,
                    ExprOp::Shr, ExprOp::Shl, ExprOp::BitAnd, ExprOp::BitOr};
    ExprOp op = ops[rng.next() % 8];
    Expr lhs = random_expr(rng, depth - 1);
    Expr rhs;
    if (op == ExprOp::Div || op == ExprOp::Mod) rhs = iconst(1 + static_cast<long>(rng.next() % 16));
    else if (op == ExprOp::Shr || op == ExprOp::Shl) rhs = iconst(static_cast<long>(rng.next() % 6));
    else rhs = random_expr(rng, depth - 1);
    return ibin(op, lhs, rhs);
}

} // namespace

TEST_CASE("simplify applies the required identities") {
    CHECK(is_const(simplify(imul(iconst(0), ivar("N"))), 0));
    CHECK(simplify(iadd(ivar("x"), iconst(0)))->name == "x");
    CHECK(simplify(imul(ivar("x"), iconst(1)))->name == "x");
    CHECK(simplify(idiv(ivar("x"), iconst(1)))->name == "x");
    CHECK(is_const(simplify(imod(ivar("x"), iconst(1))), 0));
    CHECK(is_const(simplify(iadd(iconst(3), iconst(4))), 7));

    Expr folded = simplify(imul(imul(ivar("t"), iconst(4)), iconst(8)));
    REQUIRE(folded->op == ExprOp::Mul);
    CHECK(folded->lhs->name == "t");
    CHECK(is_const(folded->rhs, 32));
    for (long t = 0; t <= 100; ++t) {
        Env env{{"t", t}};
        CHECK(eval(folded, env) == eval(imul(imul(ivar("t"), iconst(4)), iconst(8)), env));
    }
}

TEST_CASE("simplify soundness and idempotence on random expressions") {
    Rng rng(42);
    for (int i = 0; i < 10000; ++i) {
        Expr e = random_expr(rng, 6);
        Expr s = simplify(e);
        Expr s2 = simplify(s);
        CHECK(structurally_equal(s, s2));
        for (int j = 0; j < 10; ++j) {
            Env env{{"x", static_cast<long>(rng.next() % 1024)},
                    {"y", static_cast<long>(rng.next() % 1024)},
                    {"z", static_cast<long>(rng.next() % 1024)}};
            REQUIRE(eval(s, env) == eval(e, env));
        }
    }
}

TEST_CASE("emit_c renders deterministically with full parenthesization") {
    CHECK(emit_c(iconst(0)) == "0");
    Expr e = iadd(imul(ivar("blockIdx.x"), iconst(128)), ivar("row"));
    CHECK(emit_c(e) == "((blockIdx.x * 128) + row)");
    CHECK(emit_c(e) == emit_c(e));
    // hex constants from the source normalize to decimal
    CHECK(emit_c(maxwell_swizzle()) == "(((id >> 1) & 7) | ((id & 48) | ((id & 1) << 3)))");
}

TEST_CASE("eval follows integer semantics and reports unbound variables") {
    CHECK(eval(iconst(7), {}) == 7);
    Env env{{"id", 2}};
    CHECK(eval(maxwell_swizzle(), env) == 1);
    CHECK_THROWS_AS(eval(ivar("x"), {}), Error);
    try {
        eval(ivar("x"), {});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnboundVar);
    }
}

TEST_CASE("apply_swizzle evaluates over the id variable") {
    CHECK(apply_swizzle(ivar("id"), 13) == 13);
    CHECK(apply_swizzle(maxwell_swizzle(), 1) == 8);
    CHECK(apply_swizzle(maxwell_swizzle(), 2) == 1);
    CHECK_THROWS_AS(apply_swizzle(ivar("lane"), 0), Error);

    SECTION("maxwell swizzle permutes [0,64)") {
        std::vector<bool> seen(64, false);
        for (long id = 0; id < 64; ++id) {
            long t = apply_swizzle(maxwell_swizzle(), id);
            REQUIRE(t >= 0);
            REQUIRE(t < 64);
            REQUIRE_FALSE(seen[static_cast<size_t>(t)]);
            seen[static_cast<size_t>(t)] = true;
        }
    }
}
