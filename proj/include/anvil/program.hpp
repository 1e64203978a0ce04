#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <variant>
#include <vector>

#include "anvil/decomp.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// buffer plan
// ---------------------------------------------------------------------------

enum class BufferRole { RootA, RootB, RootC, RootSrc, RootDst, OperandA, OperandB, Accum, Staging };

struct BufferDecl {
    int id = -1;
    std::string name;
    MemLevel mem;
    ElemType elem = ElemType::F32;
    long rows = 0, cols = 0;
    Layout layout;            // physical layout including pad
    long align_bytes = 4;
    ComputeLevel home = ComputeLevel::Kernel; // spec level at creation
    BufferRole role = BufferRole::Staging;
    bool is_root = false;
    bool reuse_requested = false;
    int alias_of = -1;        // storage shared with an earlier buffer (reuseBuffer)

    // per-owning-unit geometry; equals (rows, cols) unless a unit tiling
    // inside the defining decomposition shrank it
    long local_rows = 0, local_cols = 0;

    long row_stride() const { return layout.row_stride(rows, cols); }
    long col_stride() const { return layout.col_stride(rows, cols); }
    long extent() const { return layout.extent(rows, cols); }

    long local_row_stride() const { return layout.major == Major::RowMajor ? local_cols : 1; }
    long local_col_stride() const { return layout.major == Major::ColMajor ? local_rows : 1; }
    long local_extent() const { return local_rows * local_cols; }

    // true when elements live in per-thread registers but the buffer spans
    // a larger unit, so each cell has exactly one owning lane
    bool distributed_rf() const {
        return !is_root && mem.kind == MemKind::RF && home < ComputeLevel::Thread;
    }
    bool is_fragment() const { return !is_root && mem.kind == MemKind::FR; }
};

struct BufferPlan {
    std::vector<BufferDecl> buffers;
    long shared_bytes = 0; // alias-aware total per block

    const BufferDecl& at(int id) const { return buffers[static_cast<size_t>(id)]; }
    int storage_root(int id) const {
        while (buffers[static_cast<size_t>(id)].alias_of >= 0)
            id = buffers[static_cast<size_t>(id)].alias_of;
        return id;
    }
};

// ---------------------------------------------------------------------------
// lowered statements
// ---------------------------------------------------------------------------

struct ElemRef {
    int buf = -1;
    Expr row, col;   // logical coordinates within the buffer
    Expr lrow, lcol; // per-owning-unit coordinates (distributed buffers)
};

struct FragRef {
    int buf = -1;
    Expr row, col;   // logical base of the 16x16 tile
    Expr lrow, lcol;
};

struct Stmt;
using StmtList = std::vector<Stmt>;

struct LoopStmt {
    std::string var;
    long count = 0;
    StmtList body;
};
struct BarrierStmt {};
struct CopyStmt { ElemRef dst, src; };
struct ZeroStmt { ElemRef dst; };
struct FmaStmt { ElemRef c, a, b; };
struct WmmaFillStmt { FragRef frag; };
struct WmmaLoadStmt { FragRef frag; ElemRef src; };
struct WmmaStoreStmt { ElemRef dst; FragRef frag; };
struct WmmaMmaStmt { FragRef c, a, b; };
struct MicroKernelStmt {
    const MicroKernel* mk = nullptr;
    std::vector<std::pair<std::string, ElemRef>> operands; // A/B/C or SRC/DST
    long m = 0, n = 0, k = 0;
};
struct HmmaStmt { ElemRef a, b, c; };

struct Stmt {
    std::variant<LoopStmt, BarrierStmt, CopyStmt, ZeroStmt, FmaStmt, WmmaFillStmt, WmmaLoadStmt,
                 WmmaStoreStmt, WmmaMmaStmt, MicroKernelStmt, HmmaStmt>
        v;
};

struct Program {
    Spec root;
    LaunchConfig launch;
    BufferPlan plan;
    StmtList body;
    std::string entry_name;
    bool simulatable = true; // false once a micro-kernel or OPAQUE residual is emitted
    bool uses_wmma = false;
};

inline int count_barriers(const StmtList& body) {
    int n = 0;
    for (const auto& s : body) {
        if (std::holds_alternative<BarrierStmt>(s.v)) ++n;
        if (const auto* l = std::get_if<LoopStmt>(&s.v)) n += count_barriers(l->body);
    }
    return n;
}

// ---------------------------------------------------------------------------
// lowering
// ---------------------------------------------------------------------------

namespace detail {

inline Expr subst_var(const Expr& e, const std::string& name, const Expr& repl) {
    switch (e->op) {
        case ExprOp::Const: return e;
        case ExprOp::Var: return e->name == name ? repl : e;
        default: return ibin(e->op, subst_var(e->lhs, name, repl), subst_var(e->rhs, name, repl));
    }
}

struct View {
    int buf = -1;
    Expr row, col;
    Expr lrow, lcol;
    long rows = 0, cols = 0; // current slice dims
    bool defining = false;   // records local dims on the buffer at unit tilings

    View advanced(const Expr& dr, const Expr& dc, bool unit_offset) const {
        View v = *this;
        v.row = iadd(v.row, dr);
        v.col = iadd(v.col, dc);
        if (!unit_offset) {
            v.lrow = iadd(v.lrow, dr);
            v.lcol = iadd(v.lcol, dc);
        }
        return v;
    }
};

struct OpViews {
    View a, b, c; // MatMul: a,b,c. Move: a = src, c = dst.
};

struct BufUse {
    long first_pos = -1, last_pos = -1;
    std::vector<int> first_loops, last_loops;
};

struct LowerCtx {
    const MicroKernelSet* mks = nullptr;
    LaunchConfig launch;
    BufferPlan plan;
    int counter = 0;     // node counter: loop var suffixes, buffer depth
    bool simulatable = true;
    bool uses_wmma = false;

    // liveness bookkeeping for reuseBuffer
    long pos = 0;
    std::vector<int> loop_stack;
    std::vector<long> barrier_positions;
    std::vector<BufUse> uses; // indexed by buffer id

    void note_use(int buf) {
        auto& u = uses[static_cast<size_t>(buf)];
        if (u.first_pos < 0) {
            u.first_pos = pos;
            u.first_loops = loop_stack;
        }
        u.last_pos = pos;
        u.last_loops = loop_stack;
    }

    int add_buffer(BufferDecl d) {
        d.id = static_cast<int>(plan.buffers.size());
        if (d.local_rows == 0) {
            d.local_rows = d.rows;
            d.local_cols = d.cols;
        }
        plan.buffers.push_back(std::move(d));
        uses.emplace_back();
        return plan.buffers.back().id;
    }
};

inline ElemRef make_ref(LowerCtx& ctx, const View& v) {
    ctx.note_use(v.buf);
    return ElemRef{v.buf, simplify(v.row), simplify(v.col), simplify(v.lrow), simplify(v.lcol)};
}

inline FragRef make_frag(LowerCtx& ctx, const View& v) {
    ctx.note_use(v.buf);
    return FragRef{v.buf, simplify(v.row), simplify(v.col), simplify(v.lrow), simplify(v.lcol)};
}

enum class LowerMode { Normal, InitZero };

// Unit-id coordinate expressions for a .to(level) tiling.
inline void unit_coords(const LowerCtx& ctx, ComputeLevel level, long tiles_m, long tiles_n,
                        const TileRefinements& ref, Expr& row_u, Expr& col_u) {
    Major order = ref.layout.value_or(Major::RowMajor);
    if (level == ComputeLevel::Block && !ref.swizzle) {
        // block ids are two-dimensional; use the components directly
        row_u = ivar(order == Major::RowMajor ? "blockIdx.x" : "blockIdx.y");
        col_u = ivar(order == Major::RowMajor ? "blockIdx.y" : "blockIdx.x");
        return;
    }
    Expr u;
    if (level == ComputeLevel::Block) {
        u = iadd(ivar("blockIdx.x"), imul(ivar("blockIdx.y"), iconst(ctx.launch.grid_x)));
    } else if (level == ComputeLevel::Warp) {
        u = idiv(ivar("threadIdx.x"), iconst(kWarpWidth));
    } else {
        u = imod(ivar("threadIdx.x"), iconst(kWarpWidth));
    }
    if (ref.swizzle) u = subst_var(ref.swizzle, "id", u);
    if (order == Major::RowMajor) {
        row_u = imod(u, iconst(tiles_m));
        col_u = idiv(u, iconst(tiles_m));
    } else {
        col_u = imod(u, iconst(tiles_n));
        row_u = idiv(u, iconst(tiles_n));
    }
}

inline void lower_chain(LowerCtx& ctx, Spec spec, OpViews ops, const NodePtr& node, StmtList& out,
                        LowerMode mode);

// Applies a tile step's offsets to the operand views.
inline OpViews tile_views(const Spec& spec, const OpViews& ops, const Expr& row_u,
                          const Expr& col_u, long r, long c, bool unit_offset) {
    Expr dr = imul(row_u, iconst(r));
    Expr dc = imul(col_u, iconst(c));
    OpViews next = ops;
    if (spec.is_matmul()) {
        next.c = ops.c.advanced(dr, dc, unit_offset);
        next.a = ops.a.advanced(dr, iconst(0), unit_offset);
        next.b = ops.b.advanced(iconst(0), dc, unit_offset);
    } else {
        next.a = ops.a.advanced(dr, dc, unit_offset);
        next.c = ops.c.advanced(dr, dc, unit_offset);
    }
    auto update_dims = [&](View& v, long nr, long nc) {
        v.rows = nr;
        v.cols = nc;
    };
    if (spec.is_matmul()) {
        update_dims(next.c, r, c);
        update_dims(next.a, r, next.a.cols);
        update_dims(next.b, next.b.rows, c);
    } else {
        update_dims(next.a, r, c);
        update_dims(next.c, r, c);
    }
    return next;
}

inline void record_local_dims(LowerCtx& ctx, const OpViews& ops) {
    for (const View* v : {&ops.a, &ops.b, &ops.c}) {
        if (v->buf < 0 || !v->defining) continue;
        auto& buf = ctx.plan.buffers[static_cast<size_t>(v->buf)];
        buf.local_rows = v->rows;
        buf.local_cols = v->cols;
    }
}

inline void lower_tile(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                       StmtList& out, LowerMode mode) {
    long out_rows = spec.is_matmul() ? spec.m() : spec.mv().src.rows;
    long out_cols = spec.is_matmul() ? spec.n() : spec.mv().src.cols;
    long tiles_m = out_rows / n.tile_r;
    long tiles_n = out_cols / n.tile_c;
    Spec tiled = after_tile(spec, n.tile_r, n.tile_c);
    int idx = ctx.counter++;

    if (n.tile_ref.to) {
        tiled = after_to(tiled, *n.tile_ref.to);
        Expr row_u, col_u;
        unit_coords(ctx, *n.tile_ref.to, tiles_m, tiles_n, n.tile_ref, row_u, col_u);
        OpViews next = tile_views(spec, ops, row_u, col_u, n.tile_r, n.tile_c, /*unit=*/true);
        record_local_dims(ctx, next);
        lower_chain(ctx, tiled, next, n.child, out, mode);
        return;
    }
    if (n.tile_ref.unroll) {
        for (long i = 0; i < tiles_m; ++i)
            for (long j = 0; j < tiles_n; ++j) {
                OpViews next = tile_views(spec, ops, iconst(i), iconst(j), n.tile_r, n.tile_c, false);
                lower_chain(ctx, tiled, next, n.child, out, mode);
            }
        return;
    }
    std::string vr = "row" + std::to_string(idx);
    std::string vc = "col" + std::to_string(idx);
    OpViews next = tile_views(spec, ops, ivar(vr), ivar(vc), n.tile_r, n.tile_c, false);
    StmtList inner;
    ctx.loop_stack.push_back(idx);
    lower_chain(ctx, tiled, next, n.child, inner, mode);
    ctx.loop_stack.pop_back();
    LoopStmt col_loop{vc, tiles_n, std::move(inner)};
    StmtList mid;
    mid.push_back(Stmt{std::move(col_loop)});
    out.push_back(Stmt{LoopStmt{vr, tiles_m, std::move(mid)}});
}

inline void lower_split(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                        StmtList& out, LowerMode mode) {
    long chunks = spec.k() / n.split_k;
    Spec split = after_split(spec, n.split_k);
    int idx = ctx.counter++;

    auto advance = [&](const Expr& u) {
        OpViews next = ops;
        Expr dk = imul(u, iconst(n.split_k));
        next.a = ops.a.advanced(iconst(0), dk, false);
        next.b = ops.b.advanced(dk, iconst(0), false);
        next.a.cols = n.split_k;
        next.b.rows = n.split_k;
        return next;
    };

    if (n.split_ref.unroll) {
        for (long i = 0; i < chunks; ++i) {
            lower_chain(ctx, split, advance(iconst(i)), n.child, out, mode);
            if (n.split_ref.sync) {
                out.push_back(Stmt{BarrierStmt{}});
                ctx.barrier_positions.push_back(ctx.pos++);
            }
        }
        return;
    }
    std::string vk = "k" + std::to_string(idx);
    StmtList body;
    ctx.loop_stack.push_back(idx);
    lower_chain(ctx, split, advance(ivar(vk)), n.child, body, mode);
    if (n.split_ref.sync) {
        body.push_back(Stmt{BarrierStmt{}});
        ctx.barrier_positions.push_back(ctx.pos++);
    }
    ctx.loop_stack.pop_back();
    out.push_back(Stmt{LoopStmt{vk, chunks, std::move(body)}});
}

inline void lower_load(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                       StmtList& out, LowerMode mode) {
    const MatrixRef& ref = operand_ref(spec, n.operand);
    Layout dst_layout{n.load_ref.storage_layout.value_or(Major::ColMajor), n.load_ref.pad};

    BufferDecl d;
    d.mem = n.target;
    d.elem = ref.elem;
    d.rows = ref.rows;
    d.cols = ref.cols;
    d.layout = dst_layout;
    d.align_bytes = n.load_ref.align.value_or(byte_width(ref.elem));
    d.home = spec.level;
    d.reuse_requested = n.load_ref.reuse_buffer;
    switch (n.operand) {
        case Operand::A: d.role = BufferRole::OperandA; break;
        case Operand::B: d.role = BufferRole::OperandB; break;
        case Operand::Src: d.role = BufferRole::Staging; break;
    }
    std::string mem_suffix = mem_name(n.target);
    std::transform(mem_suffix.begin(), mem_suffix.end(), mem_suffix.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    d.name = std::string(operand_name(n.operand)) + "_" + mem_suffix + "_" + std::to_string(ctx.counter);
    int buf = ctx.add_buffer(std::move(d));
    ctx.counter++;

    const View& src_view = spec.is_matmul()
                               ? (n.operand == Operand::A ? ops.a : ops.b)
                               : ops.a;
    View dst_view{buf, iconst(0), iconst(0), iconst(0), iconst(0), ref.rows, ref.cols,
                  /*defining=*/true};

    Spec move = induced_move_spec(spec, n.operand, n.target, dst_layout);
    OpViews move_ops;
    move_ops.a = src_view;
    move_ops.a.defining = false;
    move_ops.c = dst_view;
    lower_chain(ctx, move, move_ops, n.move_decomp, out, mode);

    if (n.target.kind == MemKind::SH && !n.load_ref.no_sync) {
        out.push_back(Stmt{BarrierStmt{}});
        ctx.barrier_positions.push_back(ctx.pos++);
    }

    Spec loaded = after_load(spec, n.operand, n.target, dst_layout);
    OpViews next = ops;
    View fresh{buf, iconst(0), iconst(0), iconst(0), iconst(0), ref.rows, ref.cols, false};
    if (spec.is_matmul()) {
        (n.operand == Operand::A ? next.a : next.b) = fresh;
    } else {
        next.a = fresh;
    }
    lower_chain(ctx, loaded, next, n.child, out, mode);
}

inline void lower_epilog(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                         StmtList& out, LowerMode mode) {
    const MatrixRef& cref = spec.mm().c;
    BufferDecl d;
    d.mem = n.acc_level;
    d.elem = cref.elem;
    d.rows = cref.rows;
    d.cols = cref.cols;
    d.layout = Layout::col_major();
    d.align_bytes = byte_width(cref.elem);
    d.home = spec.level;
    d.role = BufferRole::Accum;
    std::string mem_suffix = n.acc_level.kind == MemKind::FR ? "fr" : "rf";
    d.name = "C_" + mem_suffix + "_" + std::to_string(ctx.counter);
    int buf = ctx.add_buffer(std::move(d));
    ctx.counter++;

    auto acc_view = [&](bool defining) {
        return View{buf, iconst(0), iconst(0), iconst(0), iconst(0), cref.rows, cref.cols, defining};
    };

    // init: zero-fill the accumulator
    OpViews init_ops;
    init_ops.a = acc_view(false);
    init_ops.c = acc_view(true);
    lower_chain(ctx, induced_init_move(spec, n.acc_level), init_ops, n.init_decomp, out,
                LowerMode::InitZero);

    // compute: the accumulating child implementation
    Spec after = after_epilog(spec, n.acc_level);
    OpViews compute = ops;
    compute.c = acc_view(false);
    lower_chain(ctx, after, compute, n.child, out, mode);

    // store: accumulator back to C's original location
    OpViews store_ops;
    store_ops.a = acc_view(false);
    store_ops.c = ops.c;
    store_ops.c.defining = false;
    lower_chain(ctx, induced_store_move(spec, n.acc_level), store_ops, n.store_decomp, out,
                LowerMode::Normal);
}

inline void lower_mma_tile(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                           StmtList& out, LowerMode mode) {
    Spec residual = after_mma_tile(spec);
    long chunks = spec.k() / 4;
    int idx = ctx.counter++;
    std::string vk = "k" + std::to_string(idx);
    OpViews next = ops;
    Expr dk = imul(ivar(vk), iconst(4));
    next.a = ops.a.advanced(iconst(0), dk, false);
    next.b = ops.b.advanced(dk, iconst(0), false);
    StmtList body;
    ctx.loop_stack.push_back(idx);
    lower_chain(ctx, residual, next, n.child, body, mode);
    ctx.loop_stack.pop_back();
    out.push_back(Stmt{LoopStmt{vk, chunks, std::move(body)}});
}

inline void lower_done(LowerCtx& ctx, const Spec& spec, const OpViews& ops, const DecompNode& n,
                       StmtList& out, LowerMode mode) {
    ResidualBinding binding = bind_done(spec, n.micro_kernel, *ctx.mks);
    ctx.pos++;

    if (binding.match.micro_kernel) {
        ctx.simulatable = false;
        MicroKernelStmt st;
        st.mk = binding.match.micro_kernel;
        if (spec.is_matmul()) {
            st.operands.emplace_back("A", make_ref(ctx, ops.a));
            st.operands.emplace_back("B", make_ref(ctx, ops.b));
            st.operands.emplace_back("C", make_ref(ctx, ops.c));
            st.m = spec.m();
            st.n = spec.n();
            st.k = spec.k();
        } else {
            st.operands.emplace_back("SRC", make_ref(ctx, ops.a));
            st.operands.emplace_back("DST", make_ref(ctx, ops.c));
            st.m = spec.mv().src.rows;
            st.n = spec.mv().src.cols;
        }
        out.push_back(Stmt{std::move(st)});
        return;
    }

    const Instruction& ins = *binding.match.instruction;
    switch (ins.sim) {
        case SimSemantics::FMA: {
            if (ins.kind == Spec::Kind::MatMul) {
                out.push_back(Stmt{FmaStmt{make_ref(ctx, ops.c), make_ref(ctx, ops.a),
                                           make_ref(ctx, ops.b)}});
            } else if (mode == LowerMode::InitZero) {
                out.push_back(Stmt{ZeroStmt{make_ref(ctx, ops.c)}});
            } else {
                out.push_back(Stmt{CopyStmt{make_ref(ctx, ops.c), make_ref(ctx, ops.a)}});
            }
            return;
        }
        case SimSemantics::WMMA_MMA:
            ctx.uses_wmma = true;
            out.push_back(Stmt{WmmaMmaStmt{make_frag(ctx, ops.c), make_frag(ctx, ops.a),
                                           make_frag(ctx, ops.b)}});
            return;
        case SimSemantics::WMMA_LOAD:
            ctx.uses_wmma = true;
            if (mode == LowerMode::InitZero) {
                out.push_back(Stmt{WmmaFillStmt{make_frag(ctx, ops.c)}});
            } else {
                out.push_back(Stmt{WmmaLoadStmt{make_frag(ctx, ops.c), make_ref(ctx, ops.a)}});
            }
            return;
        case SimSemantics::WMMA_STORE:
            ctx.uses_wmma = true;
            out.push_back(Stmt{WmmaStoreStmt{make_ref(ctx, ops.c), make_frag(ctx, ops.a)}});
            return;
        case SimSemantics::OPAQUE:
            ctx.simulatable = false;
            out.push_back(Stmt{HmmaStmt{make_ref(ctx, ops.a), make_ref(ctx, ops.b),
                                        make_ref(ctx, ops.c)}});
            return;
    }
}

inline void lower_chain(LowerCtx& ctx, Spec spec, OpViews ops, const NodePtr& node, StmtList& out,
                        LowerMode mode) {
    if (!node) fail(ErrorKind::InvalidTree, "chain ends without done");
    switch (node->kind) {
        case NodeKind::Tile: lower_tile(ctx, spec, ops, *node, out, mode); return;
        case NodeKind::Split: lower_split(ctx, spec, ops, *node, out, mode); return;
        case NodeKind::Load: lower_load(ctx, spec, ops, *node, out, mode); return;
        case NodeKind::Epilog: lower_epilog(ctx, spec, ops, *node, out, mode); return;
        case NodeKind::MmaTile: lower_mma_tile(ctx, spec, ops, *node, out, mode); return;
        case NodeKind::Done: lower_done(ctx, spec, ops, *node, out, mode); return;
    }
}

// reuseBuffer resolution: a requesting buffer may alias the storage of an
// earlier shared buffer whose uses all precede the requester's first use,
// with at least one barrier in between and no loop enclosing both (a loop
// iteration would interleave them).
inline void resolve_aliases(LowerCtx& ctx) {
    auto group_last = [&](int root) {
        BufUse acc;
        for (const auto& b : ctx.plan.buffers) {
            if (b.mem.kind != MemKind::SH) continue;
            if (ctx.plan.storage_root(b.id) != root) continue;
            const BufUse& u = ctx.uses[static_cast<size_t>(b.id)];
            if (u.last_pos > acc.last_pos) {
                acc.last_pos = u.last_pos;
                acc.last_loops = u.last_loops;
            }
        }
        return acc;
    };
    auto shares_loop = [](const std::vector<int>& x, const std::vector<int>& y) {
        for (int a : x)
            for (int b : y)
                if (a == b) return true;
        return false;
    };
    for (auto& b : ctx.plan.buffers) {
        if (!b.reuse_requested) continue;
        const BufUse& mine = ctx.uses[static_cast<size_t>(b.id)];
        int chosen = -1;
        for (const auto& cand : ctx.plan.buffers) {
            if (cand.id >= b.id || cand.mem.kind != MemKind::SH || cand.is_root) continue;
            if (cand.alias_of >= 0) continue; // groups are rooted at their first member
            if (cand.id == b.id) continue;
            BufUse last = group_last(cand.id);
            if (last.last_pos < 0 || mine.first_pos < 0) continue;
            if (last.last_pos >= mine.first_pos) continue;
            bool barrier_between = false;
            for (long p : ctx.barrier_positions)
                barrier_between = barrier_between || (p > last.last_pos && p < mine.first_pos);
            if (!barrier_between) continue;
            if (shares_loop(last.last_loops, mine.first_loops)) continue;
            chosen = cand.id;
            break;
        }
        if (chosen < 0)
            fail(ErrorKind::ReuseBufferUnavailable,
                 "no dead shared buffer is available for '" + b.name +
                     "' to reuse (needs a barrier-separated, loop-disjoint predecessor)");
        b.alias_of = chosen;
    }
}

inline long compute_shared_bytes(const LowerCtx& ctx) {
    long total = 0;
    for (const auto& b : ctx.plan.buffers) {
        if (b.mem.kind != MemKind::SH || b.alias_of >= 0) continue;
        long bytes = 0;
        for (const auto& m : ctx.plan.buffers) {
            if (m.mem.kind != MemKind::SH) continue;
            if (ctx.plan.storage_root(m.id) != b.id) continue;
            long inst = m.home == ComputeLevel::Warp ? ctx.launch.warps_per_block : 1;
            bytes = std::max(bytes, m.extent() * byte_width(m.elem) * inst);
        }
        total += bytes;
    }
    return total;
}

} // namespace detail

// Lowers a validated tree into the kernel program shared by the code
// generator and the simulator.
inline Program lower(const Spec& root, const NodePtr& tree,
                     const MicroKernelSet& mks = MicroKernelSet{}) {
    ValidationReport report = validate(root, tree, mks);
    if (!report.ok())
        fail(ErrorKind::InvalidTree, "cannot lower an invalid tree:\n" + report.to_string());

    detail::LowerCtx ctx;
    ctx.mks = &mks;
    ctx.launch = report.launch;

    detail::OpViews ops;
    auto root_view = [&](int id, const MatrixRef& m) {
        return detail::View{id, iconst(0), iconst(0), iconst(0), iconst(0), m.rows, m.cols, false};
    };
    auto add_root = [&](const MatrixRef& m, BufferRole role) {
        BufferDecl d;
        d.name = m.name;
        d.mem = m.mem;
        d.elem = m.elem;
        d.rows = m.rows;
        d.cols = m.cols;
        d.layout = m.layout;
        d.align_bytes = byte_width(m.elem);
        d.home = ComputeLevel::Kernel;
        d.role = role;
        d.is_root = true;
        return ctx.add_buffer(std::move(d));
    };

    Program prog;
    prog.root = root;
    prog.launch = report.launch;
    if (root.is_matmul()) {
        const auto& op = root.mm();
        ops.a = root_view(add_root(op.a, BufferRole::RootA), op.a);
        ops.b = root_view(add_root(op.b, BufferRole::RootB), op.b);
        ops.c = root_view(add_root(op.c, BufferRole::RootC), op.c);
        prog.entry_name = "matmul_" + std::to_string(root.m()) + "x" + std::to_string(root.n()) +
                          "x" + std::to_string(root.k());
    } else {
        const auto& op = root.mv();
        ops.a = root_view(add_root(op.src, BufferRole::RootSrc), op.src);
        ops.c = root_view(add_root(op.dst, BufferRole::RootDst), op.dst);
        prog.entry_name = "move_" + std::to_string(op.src.rows) + "x" + std::to_string(op.src.cols);
    }

    detail::lower_chain(ctx, root, ops, tree, prog.body, detail::LowerMode::Normal);
    detail::resolve_aliases(ctx);
    ctx.plan.shared_bytes = detail::compute_shared_bytes(ctx);

    prog.plan = std::move(ctx.plan);
    prog.simulatable = ctx.simulatable;
    prog.uses_wmma = ctx.uses_wmma;
    return prog;
}

// Shared-memory footprint reported alongside validation.
inline ValidationReport validate_with_plan(const Spec& root, const NodePtr& tree,
                                           const MicroKernelSet& mks = MicroKernelSet{}) {
    ValidationReport report = validate(root, tree, mks);
    if (report.ok()) {
        Program p = lower(root, tree, mks);
        report.shared_bytes = p.plan.shared_bytes;
    }
    return report;
}

} // namespace anvil
