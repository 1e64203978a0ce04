#pragma once

#include <cctype>
#include <cstring>
#include <string>
#include <vector>

#include "anvil/decomp.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// tokenizing
// ---------------------------------------------------------------------------

namespace script_detail {

struct Token {
    std::string text;
    int col = 0;
};

struct Line {
    int number = 0;
    std::vector<Token> tokens;
};

inline std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

[[noreturn]] inline void parse_fail(int line, int col, const std::string& msg) {
    fail(ErrorKind::ParseError,
         "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg);
}

inline std::vector<Line> tokenize(const std::string& text, std::vector<std::string>& raw_lines) {
    std::vector<Line> lines;
    raw_lines.clear();
    int number = 0;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string raw = text.substr(start, end - start);
        raw_lines.push_back(raw);
        ++number;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        Line line;
        line.number = number;
        size_t i = 0;
        while (i < raw.size()) {
            if (std::isspace(static_cast<unsigned char>(raw[i]))) {
                ++i;
                continue;
            }
            size_t j = i;
            while (j < raw.size() && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
            line.tokens.push_back({raw.substr(i, j - i), static_cast<int>(i) + 1});
            i = j;
        }
        if (!line.tokens.empty()) lines.push_back(std::move(line));
        if (end == text.size()) break;
        start = end + 1;
    }
    return lines;
}

// --- expression parsing (swizzles); one whitespace-free token --------------

struct ExprParser {
    const std::string& s;
    size_t pos = 0;
    int line, col;

    ExprParser(const std::string& text, int ln, int cl) : s(text), line(ln), col(cl) {}

    [[noreturn]] void err(const std::string& msg) { parse_fail(line, col, msg + " in '" + s + "'"); }

    bool eat(char c) {
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    bool eat2(const char* two) {
        if (pos + 1 < s.size() && s[pos] == two[0] && s[pos + 1] == two[1]) {
            pos += 2;
            return true;
        }
        return false;
    }

    Expr primary() {
        if (eat('(')) {
            Expr e = parse_or();
            if (!eat(')')) err("expected ')'");
            return e;
        }
        if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            size_t start = pos;
            long value = 0;
            if (s.compare(pos, 2, "0x") == 0 || s.compare(pos, 2, "0X") == 0) {
                pos += 2;
                while (pos < s.size() && std::isxdigit(static_cast<unsigned char>(s[pos]))) ++pos;
                value = std::stol(s.substr(start + 2, pos - start - 2), nullptr, 16);
            } else {
                while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
                value = std::stol(s.substr(start, pos - start));
            }
            return iconst(value);
        }
        if (pos < s.size() &&
            (std::isalpha(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) {
            size_t start = pos;
            while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) ||
                                      s[pos] == '_' || s[pos] == '.'))
                ++pos;
            return ivar(s.substr(start, pos - start));
        }
        err("expected an operand");
    }

    Expr parse_mul() {
        Expr e = primary();
        for (;;) {
            if (eat('*')) e = imul(e, primary());
            else if (eat('/')) e = idiv(e, primary());
            else if (eat('%')) e = imod(e, primary());
            else return e;
        }
    }
    Expr parse_add() {
        Expr e = parse_mul();
        while (eat('+')) e = iadd(e, parse_mul());
        return e;
    }
    Expr parse_shift() {
        Expr e = parse_add();
        for (;;) {
            if (eat2(">>")) e = ishr(e, parse_add());
            else if (eat2("<<")) e = ishl(e, parse_add());
            else return e;
        }
    }
    Expr parse_and() {
        Expr e = parse_shift();
        while (pos < s.size() && s[pos] == '&') {
            ++pos;
            e = iand(e, parse_shift());
        }
        return e;
    }
    Expr parse_or() {
        Expr e = parse_and();
        while (pos < s.size() && s[pos] == '|') {
            ++pos;
            e = ior(e, parse_and());
        }
        return e;
    }

    Expr parse() {
        Expr e = parse_or();
        if (pos != s.size()) err("trailing characters");
        return e;
    }
};

inline Expr parse_expr_token(const std::string& token, int line, int col) {
    return ExprParser(token, line, col).parse();
}

// Space-free rendering for swizzle tokens; reparses to the same tree.
inline std::string expr_token(const Expr& e) {
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
    return "(" + expr_token(e->lhs) + op + expr_token(e->rhs) + ")";
}

// --- atom parsing -----------------------------------------------------------

inline ComputeLevel parse_level(const std::string& tok, int line, int col) {
    std::string t = lower(tok);
    if (t == "kernel") return ComputeLevel::Kernel;
    if (t == "block" || t == "cta") return ComputeLevel::Block;
    if (t == "warp") return ComputeLevel::Warp;
    if (t == "thread" || t == "lane") return ComputeLevel::Thread;
    parse_fail(line, col, "unknown compute level '" + tok + "'");
}

inline MemLevel parse_mem(const std::string& tok, int line, int col) {
    std::string t = lower(tok);
    if (t == "gl") return MemLevel::gl();
    if (t == "sh") return MemLevel::sh();
    if (t == "rf") return MemLevel::rf();
    if (t == "fr") return MemLevel::fr();
    if (t.rfind("fr(", 0) == 0 || t.rfind("fr<", 0) == 0) {
        long dims[3] = {0, 0, 0};
        size_t p = 3;
        for (int d = 0; d < 3; ++d) {
            size_t q = p;
            while (q < t.size() && std::isdigit(static_cast<unsigned char>(t[q]))) ++q;
            if (q == p) parse_fail(line, col, "bad fragment geometry in '" + tok + "'");
            dims[d] = std::stol(t.substr(p, q - p));
            p = q + 1; // skip ',' or the closer
        }
        return MemLevel::fr(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                            static_cast<int>(dims[2]));
    }
    parse_fail(line, col, "unknown memory level '" + tok + "'");
}

inline Major parse_major(const std::string& tok, int line, int col) {
    std::string t = lower(tok);
    if (t == "rowmajor") return Major::RowMajor;
    if (t == "colmajor") return Major::ColMajor;
    parse_fail(line, col, "unknown layout '" + tok + "' (rowmajor|colmajor)");
}

inline ElemType parse_elem(const std::string& tok, int line, int col) {
    std::string t = lower(tok);
    if (t == "f32" || t == "float") return ElemType::F32;
    if (t == "f16" || t == "half") return ElemType::F16;
    parse_fail(line, col, "unknown element type '" + tok + "' (f32|f16)");
}

inline Operand parse_operand(const std::string& tok, int line, int col) {
    std::string t = lower(tok);
    if (t == "a") return Operand::A;
    if (t == "b") return Operand::B;
    if (t == "src") return Operand::Src;
    parse_fail(line, col, "unknown operand '" + tok + "' (a|b|src)");
}

} // namespace script_detail

// ---------------------------------------------------------------------------
// short-form parsing
// ---------------------------------------------------------------------------

// Parses the canonical short form, e.g. MatMul(128,128,8)(GL,SH,RF)(Block)
// or Move(16x16)(SH->FR)(Warp). Dims may reference M/N/K of a basis spec.
inline Spec parse_spec_short_form(const std::string& text, const Spec* basis = nullptr,
                                  int line = 0) {
    using namespace script_detail;
    size_t pos = 0;
    auto err = [&](const std::string& msg) { parse_fail(line, static_cast<int>(pos) + 1, msg); };
    auto expect = [&](char c) {
        if (pos >= text.size() || text[pos] != c) err(std::string("expected '") + c + "'");
        ++pos;
    };
    auto read_until = [&](const char* stops) {
        size_t start = pos;
        while (pos < text.size() && !strchr(stops, text[pos])) ++pos;
        return text.substr(start, pos - start);
    };
    auto dim_value = [&](const std::string& tok) -> long {
        if (basis) {
            std::string t = lower(tok);
            if (t == "m") return basis->m();
            if (t == "n") return basis->n();
            if (t == "k") return basis->k();
        }
        try {
            return std::stol(tok);
        } catch (...) {
            parse_fail(line, static_cast<int>(pos) + 1, "bad dimension '" + tok + "'");
        }
    };

    std::string head = lower(read_until("("));
    if (head == "matmul") {
        expect('(');
        long m = dim_value(read_until(","));
        expect(',');
        long n = dim_value(read_until(","));
        expect(',');
        long k = dim_value(read_until(")"));
        expect(')');
        expect('(');
        MemLevel ma = parse_mem(read_until(","), line, static_cast<int>(pos));
        expect(',');
        MemLevel mb = parse_mem(read_until(","), line, static_cast<int>(pos));
        expect(',');
        MemLevel mc = parse_mem(read_until(")"), line, static_cast<int>(pos));
        expect(')');
        expect('(');
        ComputeLevel level = parse_level(read_until(")"), line, static_cast<int>(pos));
        expect(')');
        if (pos != text.size()) err("trailing characters after short form");
        return make_matmul_spec(m, n, k, {}, {ma, mb, mc},
                                {Layout::col_major(), Layout::col_major(), Layout::col_major()},
                                level);
    }
    if (head == "move") {
        expect('(');
        long r = dim_value(read_until("x"));
        expect('x');
        long c = dim_value(read_until(")"));
        expect(')');
        expect('(');
        MemLevel ms = parse_mem(read_until("-"), line, static_cast<int>(pos));
        expect('-');
        expect('>');
        MemLevel md = parse_mem(read_until(")"), line, static_cast<int>(pos));
        expect(')');
        expect('(');
        ComputeLevel level = parse_level(read_until(")"), line, static_cast<int>(pos));
        expect(')');
        if (pos != text.size()) err("trailing characters after short form");
        MatrixRef src = make_matrix("SRC", r, c, ElemType::F32, ms, Layout::col_major());
        MatrixRef dst = make_matrix("DST", r, c, ElemType::F32, md, Layout::col_major());
        return make_move_spec(std::move(src), std::move(dst), level);
    }
    parse_fail(line, 1, "expected MatMul(...) or Move(...)");
}

// ---------------------------------------------------------------------------
// script parsing
// ---------------------------------------------------------------------------

struct MicroKernelSection {
    std::string name;
    std::string pattern_line; // as written (may use M/N/K symbols)
    std::vector<std::string> vars;
    std::string body;
    int line = 0;
};

struct ParsedScript {
    Spec root;
    NodePtr tree;
    MicroKernelSet micro_kernels;
    std::vector<MicroKernelSection> micro_kernel_sections;
};

namespace script_detail {

struct Cursor {
    const std::vector<Line>& lines;
    size_t idx = 0;

    bool done() const { return idx >= lines.size(); }
    const Line& peek() const { return lines[idx]; }
    const Line& next() { return lines[idx++]; }
};

// Applies root dim overrides before semantic resolution.
inline void apply_elems_layouts(Spec& root, const Line& line, size_t from) {
    size_t i = from;
    auto need = [&](size_t more, const char* what) {
        if (i + more > line.tokens.size())
            parse_fail(line.number, line.tokens.back().col, std::string("missing ") + what);
    };
    while (i < line.tokens.size()) {
        std::string key = lower(line.tokens[i].text);
        if (key == "elems") {
            size_t n = root.is_matmul() ? 3 : 2;
            need(n + 1, "element types");
            std::vector<ElemType> elems;
            for (size_t j = 0; j < n; ++j)
                elems.push_back(parse_elem(line.tokens[i + 1 + j].text, line.number,
                                           line.tokens[i + 1 + j].col));
            if (root.is_matmul()) {
                root.mm().a.elem = elems[0];
                root.mm().b.elem = elems[1];
                root.mm().c.elem = elems[2];
            } else {
                root.mv().src.elem = elems[0];
                root.mv().dst.elem = elems[1];
                if (elems[0] != elems[1])
                    parse_fail(line.number, line.tokens[i].col,
                               "move endpoints must share an element type");
            }
            i += n + 1;
        } else if (key == "layouts") {
            size_t n = root.is_matmul() ? 3 : 2;
            need(n + 1, "layouts");
            std::vector<Major> majors;
            for (size_t j = 0; j < n; ++j)
                majors.push_back(parse_major(line.tokens[i + 1 + j].text, line.number,
                                             line.tokens[i + 1 + j].col));
            if (root.is_matmul()) {
                root.mm().a.layout.major = majors[0];
                root.mm().b.layout.major = majors[1];
                root.mm().c.layout.major = majors[2];
            } else {
                root.mv().src.layout.major = majors[0];
                root.mv().dst.layout.major = majors[1];
            }
            i += n + 1;
        } else {
            parse_fail(line.number, line.tokens[i].col, "unexpected token '" + line.tokens[i].text + "'");
        }
    }
}

inline NodePtr parse_chain(Cursor& cur, const Spec& root, bool expect_close);

// Parses one step line (tokens already split); returns the node with child
// unset. `to` lines return nullptr after merging into `prev`.
inline NodePtr parse_step(Cursor& cur, const Line& line, const Spec& root, NodePtr prev_tile) {
    const auto& t = line.tokens;
    std::string head = lower(t[0].text);
    auto need_int = [&](size_t i, const char* what) -> long {
        if (i >= t.size()) parse_fail(line.number, t.back().col, std::string("missing ") + what);
        try {
            return std::stol(t[i].text);
        } catch (...) {
            parse_fail(line.number, t[i].col, std::string("bad ") + what + " '" + t[i].text + "'");
        }
    };
    auto need_tok = [&](size_t i, const char* what) -> const Token& {
        if (i >= t.size()) parse_fail(line.number, t.back().col, std::string("missing ") + what);
        return t[i];
    };

    if (head == "tile") {
        long r = need_int(1, "tile rows");
        long c = need_int(2, "tile cols");
        TileRefinements ref;
        size_t i = 3;
        while (i < t.size()) {
            std::string k = lower(t[i].text);
            if (k == ".to") {
                const Token& lv = need_tok(i + 1, "level");
                ref.to = parse_level(lv.text, line.number, lv.col);
                i += 2;
            } else if (k == ".layout") {
                const Token& mj = need_tok(i + 1, "layout");
                ref.layout = parse_major(mj.text, line.number, mj.col);
                i += 2;
            } else if (k == ".swizzle") {
                const Token& ex = need_tok(i + 1, "swizzle expression");
                ref.swizzle = parse_expr_token(ex.text, line.number, ex.col);
                i += 2;
            } else if (k == ".unroll") {
                ref.unroll = true;
                ++i;
            } else {
                parse_fail(line.number, t[i].col, "unknown tile refinement '" + t[i].text + "'");
            }
        }
        try {
            return n_tile(r, c, std::move(ref), nullptr, line.number);
        } catch (const Error& e) {
            parse_fail(line.number, t[0].col, e.what());
        }
    }

    if (head == "to") {
        const Token& lv = need_tok(1, "level");
        if (t.size() > 2) parse_fail(line.number, t[2].col, "unexpected token after 'to'");
        if (!prev_tile || prev_tile->kind != NodeKind::Tile || prev_tile->tile_ref.to)
            parse_fail(line.number, t[0].col, "'to' must follow a tile step without one");
        prev_tile->tile_ref.to = parse_level(lv.text, line.number, lv.col);
        return nullptr;
    }

    if (head == "split") {
        long k = need_int(1, "split size");
        SplitRefinements ref;
        size_t i = 2;
        while (i < t.size()) {
            std::string kw = lower(t[i].text);
            if (kw == ".unroll") ref.unroll = true;
            else if (kw == ".sync") ref.sync = true;
            else parse_fail(line.number, t[i].col, "unknown split refinement '" + t[i].text + "'");
            ++i;
        }
        return n_split(k, ref, nullptr, line.number);
    }

    if (head == "load") {
        Operand op = parse_operand(need_tok(1, "operand").text, line.number, t[1].col);
        MemLevel target = parse_mem(need_tok(2, "target level").text, line.number, t[2].col);
        LoadRefinements ref;
        size_t i = 3;
        bool open = false;
        while (i < t.size()) {
            std::string k = lower(t[i].text);
            if (k == "{") {
                open = true;
                if (i + 1 != t.size()) parse_fail(line.number, t[i + 1].col, "'{' ends the line");
                break;
            }
            if (k == ".storagelayout") {
                const Token& mj = need_tok(i + 1, "layout");
                ref.storage_layout = parse_major(mj.text, line.number, mj.col);
                i += 2;
            } else if (k == ".pad") {
                ref.pad = need_int(i + 1, "pad");
                i += 2;
            } else if (k == ".align") {
                ref.align = need_int(i + 1, "align");
                i += 2;
            } else if (k == ".nosync") {
                ref.no_sync = true;
                ++i;
            } else if (k == ".reusebuffer") {
                ref.reuse_buffer = true;
                ++i;
            } else {
                parse_fail(line.number, t[i].col, "unknown load refinement '" + t[i].text + "'");
            }
        }
        if (!open) parse_fail(line.number, t.back().col, "load needs a '{ ... }' move decomposition");
        NodePtr move = parse_chain(cur, root, /*expect_close=*/true);
        try {
            return n_load(op, target, std::move(move), std::move(ref), nullptr, ElemType::F32,
                          line.number);
        } catch (const Error& e) {
            parse_fail(line.number, t[0].col, e.what());
        }
    }

    if (head == "epilog") {
        MemLevel acc = parse_mem(need_tok(1, "accumulator level").text, line.number, t[1].col);
        if (t.size() < 3 || t[2].text != "{")
            parse_fail(line.number, t.back().col, "epilog needs '{ init { ... } store { ... } }'");
        auto sub_block = [&](const char* name) {
            if (cur.done()) parse_fail(line.number, 1, std::string("missing ") + name + " block");
            const Line& l = cur.next();
            if (lower(l.tokens[0].text) != name || l.tokens.size() != 2 || l.tokens[1].text != "{")
                parse_fail(l.number, l.tokens[0].col, std::string("expected '") + name + " {'");
            return parse_chain(cur, root, true);
        };
        NodePtr init = sub_block("init");
        NodePtr store = sub_block("store");
        if (cur.done() || cur.peek().tokens[0].text != "}")
            parse_fail(line.number, 1, "epilog block not closed");
        cur.next();
        return n_epilog(acc, std::move(init), std::move(store), nullptr, line.number);
    }

    if (head == "mmatile") {
        if (t.size() > 1) parse_fail(line.number, t[1].col, "mmaTile takes no arguments");
        return n_mma_tile(nullptr, line.number);
    }

    if (head == "done") {
        std::string mk;
        if (t.size() > 1) mk = t[1].text;
        if (t.size() > 2) parse_fail(line.number, t[2].col, "unexpected token after done");
        return n_done(mk, line.number);
    }

    parse_fail(line.number, t[0].col, "unknown step '" + t[0].text + "'");
}

inline NodePtr parse_chain(Cursor& cur, const Spec& root, bool expect_close) {
    std::vector<NodePtr> steps;
    bool closed = false;
    while (!cur.done()) {
        const Line& line = cur.peek();
        if (line.tokens[0].text == "}") {
            cur.next();
            closed = true;
            break;
        }
        cur.next();
        NodePtr prev = steps.empty() ? nullptr : steps.back();
        NodePtr node = parse_step(cur, line, root, prev);
        if (node) steps.push_back(std::move(node));
    }
    if (expect_close && !closed) {
        int ln = cur.lines.empty() ? 1 : cur.lines.back().number;
        parse_fail(ln, 1, "unterminated block ('}' missing)");
    }
    NodePtr chain;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        (*it)->child = std::move(chain);
        chain = std::move(*it);
    }
    return chain;
}

inline MicroKernel build_micro_kernel(const MicroKernelSection& sec, const Spec& root) {
    MicroKernel mk;
    mk.name = sec.name;
    mk.pattern = parse_spec_short_form(sec.pattern_line, &root, sec.line);
    mk.body = sec.body;
    mk.declared_vars = sec.vars;
    return mk;
}

} // namespace script_detail

// Parses a decomposition script into (root spec, tree, micro-kernels).
// Layout: a `spec <short-form>` header with optional elems/layouts groups,
// then micro-kernel sections, then the step chain.
inline ParsedScript parse_script(const std::string& text) {
    using namespace script_detail;
    std::vector<std::string> raw_lines;
    std::vector<Line> lines = tokenize(text, raw_lines);
    if (lines.empty()) fail(ErrorKind::ParseError, "line 1, col 1: empty script");

    Cursor cur{lines};
    const Line& header = cur.next();
    if (lower(header.tokens[0].text) != "spec" || header.tokens.size() < 2)
        parse_fail(header.number, header.tokens[0].col, "script must start with 'spec <short-form>'");

    ParsedScript out;
    out.root = parse_spec_short_form(header.tokens[1].text, nullptr, header.number);
    apply_elems_layouts(out.root, header, 2);

    // micro-kernel sections
    while (!cur.done() && lower(cur.peek().tokens[0].text) == "microkernel") {
        const Line& head = cur.next();
        if (head.tokens.size() != 2)
            parse_fail(head.number, head.tokens[0].col, "microkernel <name>");
        MicroKernelSection sec;
        sec.name = head.tokens[1].text;
        sec.line = head.number;
        if (cur.done() || lower(cur.peek().tokens[0].text) != "pattern")
            parse_fail(head.number, 1, "microkernel needs a 'pattern <short-form>' line");
        const Line& pat = cur.next();
        if (pat.tokens.size() != 2) parse_fail(pat.number, pat.tokens[0].col, "pattern <short-form>");
        sec.pattern_line = pat.tokens[1].text;
        if (!cur.done() && lower(cur.peek().tokens[0].text) == "vars") {
            const Line& vars = cur.next();
            for (size_t i = 1; i < vars.tokens.size(); ++i) sec.vars.push_back(vars.tokens[i].text);
        }
        if (cur.done() || cur.peek().tokens[0].text != "---")
            parse_fail(sec.line, 1, "microkernel body must be fenced with --- lines");
        int fence_line = cur.peek().number;
        cur.next();
        // verbatim body: consume raw lines until the closing fence
        int body_start = fence_line; // raw_lines is 0-based on line-1
        int body_end = -1;
        for (size_t r = static_cast<size_t>(body_start); r < raw_lines.size(); ++r) {
            if (raw_lines[r] == "---") {
                body_end = static_cast<int>(r);
                break;
            }
        }
        if (body_end < 0) parse_fail(fence_line, 1, "unterminated microkernel body");
        for (int r = body_start; r < body_end; ++r) {
            sec.body += raw_lines[static_cast<size_t>(r)];
            sec.body += '\n';
        }
        while (!cur.done() && cur.peek().number <= body_end + 1) cur.next();
        out.micro_kernels.register_kernel(build_micro_kernel(sec, out.root));
        out.micro_kernel_sections.push_back(std::move(sec));
    }

    out.tree = parse_chain(cur, out.root, /*expect_close=*/false);
    if (!out.tree) fail(ErrorKind::ParseError, "line 1, col 1: script has no decomposition steps");
    return out;
}

// ---------------------------------------------------------------------------
// canonical printing; parse(print(s)) == s for canonical scripts
// ---------------------------------------------------------------------------

namespace script_detail {

inline std::string mem_token(const MemLevel& m) { return lower(mem_name(m)); }
inline std::string level_token(ComputeLevel l) { return lower(level_name(l)); }
inline std::string major_token(Major m) { return m == Major::RowMajor ? "rowmajor" : "colmajor"; }

inline void print_chain(const NodePtr& node, std::string& out, int indent) {
    std::string pad(static_cast<size_t>(indent) * 2, ' ');
    for (const DecompNode* n = node.get(); n; n = n->child.get()) {
        switch (n->kind) {
            case NodeKind::Tile: {
                std::string l = pad + "tile " + std::to_string(n->tile_r) + " " +
                                std::to_string(n->tile_c);
                if (n->tile_ref.to) l += " .to " + level_token(*n->tile_ref.to);
                if (n->tile_ref.layout) l += " .layout " + major_token(*n->tile_ref.layout);
                if (n->tile_ref.swizzle) l += " .swizzle " + expr_token(n->tile_ref.swizzle);
                if (n->tile_ref.unroll) l += " .unroll";
                out += l + "\n";
                break;
            }
            case NodeKind::Split: {
                std::string l = pad + "split " + std::to_string(n->split_k);
                if (n->split_ref.unroll) l += " .unroll";
                if (n->split_ref.sync) l += " .sync";
                out += l + "\n";
                break;
            }
            case NodeKind::Load: {
                std::string l = pad + "load " + lower(operand_name(n->operand)) + " " +
                                mem_token(n->target);
                if (n->load_ref.storage_layout)
                    l += " .storagelayout " + major_token(*n->load_ref.storage_layout);
                if (n->load_ref.pad > 0) l += " .pad " + std::to_string(n->load_ref.pad);
                if (n->load_ref.align) l += " .align " + std::to_string(*n->load_ref.align);
                if (n->load_ref.no_sync) l += " .nosync";
                if (n->load_ref.reuse_buffer) l += " .reusebuffer";
                out += l + " {\n";
                print_chain(n->move_decomp, out, indent + 1);
                out += pad + "}\n";
                break;
            }
            case NodeKind::Epilog: {
                out += pad + "epilog " + mem_token(n->acc_level) + " {\n";
                out += pad + "  init {\n";
                print_chain(n->init_decomp, out, indent + 2);
                out += pad + "  }\n";
                out += pad + "  store {\n";
                print_chain(n->store_decomp, out, indent + 2);
                out += pad + "  }\n";
                out += pad + "}\n";
                break;
            }
            case NodeKind::MmaTile: out += pad + "mmatile\n"; break;
            case NodeKind::Done: {
                std::string l = pad + "done";
                if (!n->micro_kernel.empty()) l += " " + n->micro_kernel;
                out += l + "\n";
                break;
            }
        }
    }
}

} // namespace script_detail

inline std::string print_script(const ParsedScript& script) {
    using namespace script_detail;
    const Spec& root = script.root;
    std::string out = "spec " + spec_short_form(root);

    auto elems_default = [&] {
        if (root.is_matmul())
            return root.mm().a.elem == ElemType::F32 && root.mm().b.elem == ElemType::F32 &&
                   root.mm().c.elem == ElemType::F32;
        return root.mv().src.elem == ElemType::F32;
    };
    auto layouts_default = [&] {
        if (root.is_matmul())
            return root.mm().a.layout.major == Major::ColMajor &&
                   root.mm().b.layout.major == Major::ColMajor &&
                   root.mm().c.layout.major == Major::ColMajor;
        return root.mv().src.layout.major == Major::ColMajor &&
               root.mv().dst.layout.major == Major::ColMajor;
    };
    if (!elems_default()) {
        out += " elems";
        if (root.is_matmul())
            out += std::string(" ") + elem_name(root.mm().a.elem) + " " + elem_name(root.mm().b.elem) +
                   " " + elem_name(root.mm().c.elem);
        else
            out += std::string(" ") + elem_name(root.mv().src.elem) + " " +
                   elem_name(root.mv().dst.elem);
    }
    if (!layouts_default()) {
        out += " layouts";
        if (root.is_matmul())
            out += " " + major_token(root.mm().a.layout.major) + " " +
                   major_token(root.mm().b.layout.major) + " " +
                   major_token(root.mm().c.layout.major);
        else
            out += " " + major_token(root.mv().src.layout.major) + " " +
                   major_token(root.mv().dst.layout.major);
    }
    out += "\n";

    for (const auto& sec : script.micro_kernel_sections) {
        out += "\nmicrokernel " + sec.name + "\n";
        out += "pattern " + sec.pattern_line + "\n";
        if (!sec.vars.empty()) {
            out += "vars";
            for (const auto& v : sec.vars) out += " " + v;
            out += "\n";
        }
        out += "---\n" + sec.body + "---\n";
    }

    out += "\n";
    script_detail::print_chain(script.tree, out, 0);
    return out;
}

} // namespace anvil
