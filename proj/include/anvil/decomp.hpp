#pragma once

#include <memory>
#include <string>
#include <vector>

#include "anvil/exec.hpp"
#include "anvil/index_expr.hpp"
#include "anvil/types.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// decomposition tree
// ---------------------------------------------------------------------------

enum class Operand { A, B, Src };

inline const char* operand_name(Operand o) {
    switch (o) {
        case Operand::A: return "A";
        case Operand::B: return "B";
        case Operand::Src: return "SRC";
    }
    return "?";
}

struct TileRefinements {
    std::optional<ComputeLevel> to;
    bool unroll = false;
    std::optional<Major> layout;  // unit-id to tile-coordinate order
    Expr swizzle;                 // over the single free variable "id"
};

struct LoadRefinements {
    bool no_sync = false;
    std::optional<Major> storage_layout;
    long pad = 0;
    std::optional<long> align; // bytes
    bool reuse_buffer = false;
};

struct SplitRefinements {
    bool unroll = false;
    bool sync = false;
};

enum class NodeKind { Tile, Split, Load, Epilog, MmaTile, Done };

// One node of the decomposition tree. A single struct with a kind tag keeps
// walking code simple; unused fields stay defaulted.
struct DecompNode;
using NodePtr = std::shared_ptr<DecompNode>;

struct DecompNode {
    NodeKind kind = NodeKind::Done;
    int src_line = 0; // script line, 0 when built programmatically

    // Tile
    long tile_r = 0, tile_c = 0;
    TileRefinements tile_ref;

    // Split
    long split_k = 0;
    SplitRefinements split_ref;

    // Load
    Operand operand = Operand::A;
    MemLevel target;
    NodePtr move_decomp;
    LoadRefinements load_ref;

    // Epilog
    MemLevel acc_level;
    NodePtr init_decomp, store_decomp;

    // Done
    std::string micro_kernel; // empty: match built-ins

    NodePtr child;
};

// --- construction helpers; refinement legality is enforced here -----------

inline void check_tile_refinements(const TileRefinements& r) {
    if ((r.layout || r.swizzle) && !r.to)
        fail(ErrorKind::InvalidRefinement, "layout/swizzle modify a parallel assignment and need .to");
    if (r.unroll && r.to)
        fail(ErrorKind::InvalidRefinement, "unroll applies to sequential tiles, not .to tiles");
}

inline void check_load_refinements(const LoadRefinements& r, const MemLevel& target, ElemType elem) {
    bool to_sh = target.kind == MemKind::SH;
    if (r.pad < 0) fail(ErrorKind::InvalidRefinement, "negative pad");
    if (r.pad > 0 && !to_sh) fail(ErrorKind::InvalidRefinement, "pad is only legal on SH loads");
    if (r.no_sync && !to_sh) fail(ErrorKind::InvalidRefinement, "noSync is only legal on SH loads");
    if (r.reuse_buffer && !to_sh)
        fail(ErrorKind::InvalidRefinement, "reuseBuffer is only legal on SH loads");
    if (r.align) {
        long a = *r.align;
        bool pow2 = a > 0 && (a & (a - 1)) == 0;
        if (!pow2 || 256 % a != 0 || a < byte_width(elem))
            fail(ErrorKind::InvalidRefinement,
                 "align must be a power of two dividing 256 and >= element size");
    }
}

inline NodePtr n_done(std::string micro_kernel = "", int line = 0) {
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::Done;
    n->micro_kernel = std::move(micro_kernel);
    n->src_line = line;
    return n;
}

inline NodePtr n_tile(long r, long c, TileRefinements ref, NodePtr child, int line = 0) {
    check_tile_refinements(ref);
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::Tile;
    n->tile_r = r;
    n->tile_c = c;
    n->tile_ref = std::move(ref);
    n->child = std::move(child);
    n->src_line = line;
    return n;
}

inline NodePtr n_tile(long r, long c, NodePtr child) { return n_tile(r, c, {}, std::move(child)); }

inline NodePtr n_split(long k, SplitRefinements ref, NodePtr child, int line = 0) {
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::Split;
    n->split_k = k;
    n->split_ref = ref;
    n->child = std::move(child);
    n->src_line = line;
    return n;
}

inline NodePtr n_load(Operand op, MemLevel target, NodePtr move_decomp, LoadRefinements ref,
                      NodePtr child, ElemType elem = ElemType::F32, int line = 0) {
    check_load_refinements(ref, target, elem);
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::Load;
    n->operand = op;
    n->target = target;
    n->move_decomp = std::move(move_decomp);
    n->load_ref = std::move(ref);
    n->child = std::move(child);
    n->src_line = line;
    return n;
}

inline NodePtr n_epilog(MemLevel acc, NodePtr init_decomp, NodePtr store_decomp, NodePtr child,
                        int line = 0) {
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::Epilog;
    n->acc_level = acc;
    n->init_decomp = std::move(init_decomp);
    n->store_decomp = std::move(store_decomp);
    n->child = std::move(child);
    n->src_line = line;
    return n;
}

inline NodePtr n_mma_tile(NodePtr child, int line = 0) {
    auto n = std::make_shared<DecompNode>();
    n->kind = NodeKind::MmaTile;
    n->child = std::move(child);
    n->src_line = line;
    return n;
}

// ---------------------------------------------------------------------------
// spec transformations (one per decomposition rule)
// ---------------------------------------------------------------------------

namespace detail {
inline void require_divides(long tile, long size, const std::string& dim) {
    if (tile < 1 || size % tile != 0)
        fail(ErrorKind::NonDivisible, "tile " + std::to_string(tile) + " does not evenly divide " +
                                          dim + "=" + std::to_string(size));
}
} // namespace detail

inline Spec after_tile(const Spec& s, long r, long c) {
    Spec out = s;
    if (s.is_matmul()) {
        detail::require_divides(r, s.m(), "M");
        detail::require_divides(c, s.n(), "N");
        out.mm().a.rows = r;
        out.mm().b.cols = c;
        out.mm().c.rows = r;
        out.mm().c.cols = c;
    } else {
        detail::require_divides(r, s.mv().src.rows, "rows");
        detail::require_divides(c, s.mv().src.cols, "cols");
        out.mv().src.rows = out.mv().dst.rows = r;
        out.mv().src.cols = out.mv().dst.cols = c;
    }
    return out;
}

// Assignments descend one level at a time: Kernel->Block, Block->Warp,
// Warp->Thread. Unit-count requirements are checked by validate, which
// knows the tile counts.
inline Spec after_to(const Spec& s, ComputeLevel level) {
    int cur = static_cast<int>(s.level);
    int nxt = static_cast<int>(level);
    if (nxt != cur + 1)
        fail(ErrorKind::HierarchyViolation, std::string("cannot assign ") + level_name(s.level) +
                                                "-level spec to " + level_name(level));
    Spec out = s;
    out.level = level;
    return out;
}

inline Spec after_split(const Spec& s, long k_block) {
    if (!s.is_matmul()) fail(ErrorKind::NotMatMul, "split applies only to MatMul specs");
    detail::require_divides(k_block, s.k(), "K");
    Spec out = s;
    out.mm().a.cols = k_block;
    out.mm().b.rows = k_block;
    return out;
}

inline const MatrixRef& operand_ref(const Spec& s, Operand op) {
    if (s.is_matmul()) {
        if (op == Operand::A) return s.mm().a;
        if (op == Operand::B) return s.mm().b;
        fail(ErrorKind::InvalidRefinement, "MatMul loads name operand A or B");
    }
    if (op == Operand::Src) return s.mv().src;
    fail(ErrorKind::InvalidRefinement, "Move loads name operand SRC");
}

inline MatrixRef& operand_ref(Spec& s, Operand op) {
    return const_cast<MatrixRef&>(operand_ref(static_cast<const Spec&>(s), op));
}

inline Spec after_load(const Spec& s, Operand op, MemLevel target, Layout dst_layout = Layout::col_major()) {
    const MatrixRef& ref = operand_ref(s, op);
    if (s.is_move() && op == Operand::Src) {
        // staging hop: SRC must move strictly toward DST's level
        int src = mem_rank(ref.mem.kind);
        int dst = mem_rank(s.mv().dst.mem.kind);
        int tgt = mem_rank(target.kind);
        bool ok = dst < src ? (dst <= tgt && tgt < src) : (src < tgt && tgt <= dst);
        if (!ok)
            fail(ErrorKind::UpwardLoad,
                 "staging " + mem_name(ref.mem) + " -> " + mem_name(target) +
                     " does not move SRC toward " + mem_name(s.mv().dst.mem));
    } else if (mem_rank(target.kind) <= mem_rank(ref.mem.kind)) {
        fail(ErrorKind::UpwardLoad, std::string("load must move ") + operand_name(op) +
                                        " strictly downward, " + mem_name(ref.mem) + " -> " +
                                        mem_name(target) + " is not");
    }
    Spec out = s;
    MatrixRef& r = operand_ref(out, op);
    r.mem = target;
    r.layout = dst_layout;
    return out;
}

// The Move spec induced by a load: current operand slice at the current
// level, moving from its memory to the target.
inline Spec induced_move_spec(const Spec& s, Operand op, MemLevel target,
                              Layout dst_layout = Layout::col_major()) {
    const MatrixRef& ref = operand_ref(s, op);
    MatrixRef src = ref;
    src.name = std::string(operand_name(op));
    MatrixRef dst = src;
    dst.name = src.name + "_dst";
    dst.mem = target;
    dst.layout = dst_layout;
    return make_move_spec(std::move(src), std::move(dst), s.level);
}

inline Spec after_epilog(const Spec& s, MemLevel acc) {
    if (!s.is_matmul()) fail(ErrorKind::NotMatMul, "epilog applies only to MatMul specs");
    if (s.mm().c.mem.kind != MemKind::GL)
        fail(ErrorKind::CNotInGL, "epilog expects C in GL, found " + mem_name(s.mm().c.mem));
    if (acc.kind != MemKind::RF && acc.kind != MemKind::FR)
        fail(ErrorKind::InvalidRefinement, "accumulator level must be RF or FR");
    Spec out = s;
    out.mm().c.mem = acc;
    out.mm().c.layout = Layout::col_major();
    out.accumulate = true;
    return out;
}

// Zero-fill of the fresh accumulator, expressed as a self-move so the init
// decomposition can be validated and matched like any other Move.
inline Spec induced_init_move(const Spec& s, MemLevel acc) {
    MatrixRef buf = s.mm().c;
    buf.name = "C_acc";
    buf.mem = acc;
    buf.layout = Layout::col_major();
    MatrixRef src = buf;
    src.name = "C_zero";
    return make_move_spec(std::move(src), std::move(buf), s.level);
}

inline Spec induced_store_move(const Spec& s, MemLevel acc) {
    MatrixRef src = s.mm().c;
    src.name = "C_acc";
    src.mem = acc;
    src.layout = Layout::col_major();
    MatrixRef dst = s.mm().c;
    dst.name = "C";
    return make_move_spec(std::move(src), std::move(dst), s.level);
}

// The HMMA.884.F16.TN executable spec. Its operand shapes are dictated by
// the instruction and deliberately do not satisfy the usual MatMul shape
// relations, so it is constructed from raw matrices.
inline Spec hmma_residual_spec() {
    Spec s;
    s.kind = Spec::Kind::MatMul;
    s.level = ComputeLevel::Thread;
    s.accumulate = true;
    s.op = MatMulOp{
        MatrixRef{"A", 1, 4, ElemType::F16, MemLevel::rf(), Layout::row_major()},
        MatrixRef{"B", 4, 1, ElemType::F16, MemLevel::rf(), Layout::col_major()},
        MatrixRef{"C", 1, 8, ElemType::F16, MemLevel::rf(), Layout::col_major()},
    };
    return s;
}

inline Spec after_mma_tile(const Spec& s) {
    auto reject = [&](const std::string& why) {
        fail(ErrorKind::PatternMismatch,
             "mmaTile expects MatMul(16,16,4k)(RF,RF,RF|FR)(Warp) with F16 operands; " + why +
                 " in " + spec_short_form(s));
    };
    if (!s.is_matmul()) reject("not a MatMul");
    if (s.level != ComputeLevel::Warp) reject("wrong level");
    if (s.m() != 16 || s.n() != 16) reject("wrong tile size");
    if (s.k() < 4 || s.k() % 4 != 0) reject("K must be a positive multiple of 4");
    const auto& op = s.mm();
    if (op.a.mem.kind != MemKind::RF || op.b.mem.kind != MemKind::RF) reject("A and B must be in RF");
    if (op.c.mem.kind != MemKind::RF && op.c.mem.kind != MemKind::FR) reject("C must be in RF or FR");
    if (op.a.elem != ElemType::F16 || op.b.elem != ElemType::F16 || op.c.elem != ElemType::F16)
        reject("operands must be F16");
    return hmma_residual_spec();
}

// Binds a residual spec to its executable: the named micro-kernel when one
// was supplied, otherwise a registered micro-kernel, otherwise a built-in.
inline ResidualBinding bind_done(const Spec& residual, const std::string& mk_name,
                                 const MicroKernelSet& mks,
                                 const std::vector<Instruction>& instrs = builtin_instructions()) {
    if (!mk_name.empty()) {
        const MicroKernel* mk = mks.find(mk_name);
        if (!mk)
            fail(ErrorKind::NoExecutableMatch, "micro-kernel '" + mk_name + "' is not registered");
        if (!mk->matches(residual))
            fail(ErrorKind::NoExecutableMatch,
                 "micro-kernel '" + mk_name + "' pattern " + spec_short_form(mk->pattern) +
                     " does not match residual " + spec_short_form(residual));
        return ResidualBinding{residual, Match{nullptr, mk}};
    }
    Match m = match_executable(residual, instrs, mks);
    if (!m) {
        std::string msg = "residual " + spec_short_form(residual) + " matches no executable; known patterns:";
        for (const auto& ins : instrs) msg += "\n  " + ins.name + " = " + ins.pattern_short_form();
        for (const auto& mk : mks.kernels) msg += "\n  " + mk.name + " = " + spec_short_form(mk.pattern);
        fail(ErrorKind::NoExecutableMatch, msg);
    }
    return ResidualBinding{residual, m};
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

struct Violation {
    ErrorKind kind;
    int step = 0; // preorder node index
    int line = 0; // script line when known
    std::string message;
};

struct LaunchConfig {
    long grid_x = 1, grid_y = 1;
    long warps_per_block = 1;
    long block_threads = 1;
};

struct ValidationReport {
    std::vector<Violation> violations;
    LaunchConfig launch;
    long shared_bytes = 0;

    bool ok() const { return violations.empty(); }

    std::string to_string() const {
        if (ok()) {
            return "valid; grid " + std::to_string(launch.grid_x) + "x" +
                   std::to_string(launch.grid_y) + ", " + std::to_string(launch.block_threads) +
                   " threads/block, " + std::to_string(shared_bytes) + " shared bytes";
        }
        std::string out;
        for (const auto& v : violations) {
            out += std::string(error_kind_name(v.kind)) + " at step " + std::to_string(v.step);
            if (v.line > 0) out += " (line " + std::to_string(v.line) + ")";
            out += ": " + v.message + "\n";
        }
        return out;
    }
};

namespace detail {

struct ValidateCtx {
    std::vector<Violation> violations;
    LaunchConfig launch;
    bool grid_set = false;
    bool warps_set = false;
    bool any_thread_tiling = false;
    const MicroKernelSet* mks = nullptr;
    int step = 0;

    void violation(ErrorKind kind, int step_idx, int line, std::string msg) {
        violations.push_back({kind, step_idx, line, std::move(msg)});
    }
};

inline bool check_swizzle_bijective(const Expr& swz, long domain, std::string& why) {
    std::vector<char> seen(static_cast<size_t>(domain), 0);
    for (long id = 0; id < domain; ++id) {
        long t;
        try {
            t = apply_swizzle(swz, id);
        } catch (const Error& e) {
            why = e.what();
            return false;
        }
        if (t < 0 || t >= domain) {
            why = "id " + std::to_string(id) + " maps to " + std::to_string(t) +
                  " outside [0," + std::to_string(domain) + ")";
            return false;
        }
        if (seen[static_cast<size_t>(t)]) {
            why = "two ids map to " + std::to_string(t);
            return false;
        }
        seen[static_cast<size_t>(t)] = 1;
    }
    return true;
}

// Walks one chain (main or nested move decomposition), transforming the
// spec node by node and collecting violations. Returns true if the chain
// is structurally complete (ends in a bindable Done).
inline void validate_chain(ValidateCtx& ctx, Spec spec, const NodePtr& node) {
    if (!node) {
        ctx.violation(ErrorKind::InvalidTree, ctx.step, 0,
                      "chain ends without done; residual " + spec_short_form(spec));
        return;
    }
    int my_step = ctx.step++;
    const DecompNode& n = *node;
    switch (n.kind) {
        case NodeKind::Tile: {
            try {
                check_tile_refinements(n.tile_ref);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
            }
            Spec tiled;
            try {
                tiled = after_tile(spec, n.tile_r, n.tile_c);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
                return;
            }
            long tiles_m = spec.m() / n.tile_r;
            long tiles_n = spec.n() / n.tile_c;
            if (spec.is_move()) {
                tiles_m = spec.mv().src.rows / n.tile_r;
                tiles_n = spec.mv().src.cols / n.tile_c;
            }
            if (n.tile_ref.to) {
                try {
                    tiled = after_to(tiled, *n.tile_ref.to);
                } catch (const Error& e) {
                    ctx.violation(e.kind(), my_step, n.src_line, e.what());
                    return;
                }
                long units = tiles_m * tiles_n;
                switch (*n.tile_ref.to) {
                    case ComputeLevel::Block:
                        ctx.launch.grid_x = n.tile_ref.layout.value_or(Major::RowMajor) == Major::RowMajor
                                                ? tiles_m
                                                : tiles_n;
                        ctx.launch.grid_y = units / ctx.launch.grid_x;
                        ctx.grid_set = true;
                        break;
                    case ComputeLevel::Warp:
                        if (ctx.warps_set && ctx.launch.warps_per_block != units)
                            ctx.violation(ErrorKind::UnitCountMismatch, my_step, n.src_line,
                                          "warp tiling yields " + std::to_string(units) +
                                              " warps, but the block already has " +
                                              std::to_string(ctx.launch.warps_per_block));
                        ctx.launch.warps_per_block = units;
                        ctx.warps_set = true;
                        break;
                    case ComputeLevel::Thread:
                        if (units != kWarpWidth)
                            ctx.violation(ErrorKind::UnitCountMismatch, my_step, n.src_line,
                                          "thread tiling yields " + std::to_string(units) +
                                              " lanes; a warp has exactly 32");
                        ctx.any_thread_tiling = true;
                        break;
                    default: break;
                }
                if (n.tile_ref.swizzle) {
                    std::string why;
                    if (!check_swizzle_bijective(n.tile_ref.swizzle, units, why))
                        ctx.violation(ErrorKind::SwizzleNotBijective, my_step, n.src_line,
                                      "swizzle is not a permutation of [0," + std::to_string(units) +
                                          "): " + why);
                }
            }
            validate_chain(ctx, tiled, n.child);
            return;
        }
        case NodeKind::Split: {
            Spec split;
            try {
                split = after_split(spec, n.split_k);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
                return;
            }
            validate_chain(ctx, split, n.child);
            return;
        }
        case NodeKind::Load: {
            const MatrixRef* ref = nullptr;
            try {
                ref = &operand_ref(spec, n.operand);
                check_load_refinements(n.load_ref, n.target, ref->elem);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
            }
            Layout dst_layout{n.load_ref.storage_layout.value_or(Major::ColMajor), n.load_ref.pad};
            Spec loaded;
            Spec move;
            try {
                loaded = after_load(spec, n.operand, n.target, dst_layout);
                move = induced_move_spec(spec, n.operand, n.target, dst_layout);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
                return;
            }
            if (!n.move_decomp) {
                ctx.violation(ErrorKind::InvalidMoveDecomp, my_step, n.src_line,
                              "load carries no move decomposition");
            } else {
                validate_chain(ctx, move, n.move_decomp);
            }
            validate_chain(ctx, loaded, n.child);
            return;
        }
        case NodeKind::Epilog: {
            Spec after;
            Spec init_move, store_move;
            try {
                after = after_epilog(spec, n.acc_level);
                init_move = induced_init_move(spec, n.acc_level);
                store_move = induced_store_move(spec, n.acc_level);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
                return;
            }
            if (!n.init_decomp || !n.store_decomp) {
                ctx.violation(ErrorKind::InvalidMoveDecomp, my_step, n.src_line,
                              "epilog needs init and store decompositions");
                return;
            }
            validate_chain(ctx, init_move, n.init_decomp);
            validate_chain(ctx, store_move, n.store_decomp);
            validate_chain(ctx, after, n.child);
            return;
        }
        case NodeKind::MmaTile: {
            Spec residual;
            try {
                residual = after_mma_tile(spec);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
                return;
            }
            if (!n.child || n.child->kind != NodeKind::Done) {
                ctx.violation(ErrorKind::InvalidTree, my_step, n.src_line,
                              "mmaTile yields an executable spec; only done may follow");
                return;
            }
            validate_chain(ctx, residual, n.child);
            return;
        }
        case NodeKind::Done: {
            if (n.child)
                ctx.violation(ErrorKind::InvalidTree, my_step, n.src_line,
                              "done terminates a chain; nothing may follow");
            try {
                static const MicroKernelSet empty;
                bind_done(spec, n.micro_kernel, ctx.mks ? *ctx.mks : empty);
            } catch (const Error& e) {
                ctx.violation(e.kind(), my_step, n.src_line, e.what());
            }
            return;
        }
    }
}

} // namespace detail

// Structural validation plus launch-configuration derivation. Shared-memory
// planning (padding, aliasing, capacity) happens in the lowering step; its
// derived byte total is filled in by plan_shared_bytes below.
inline ValidationReport validate(const Spec& root, const NodePtr& tree,
                                 const MicroKernelSet& mks = MicroKernelSet{}) {
    detail::ValidateCtx ctx;
    ctx.mks = &mks;
    detail::validate_chain(ctx, root, tree);

    ValidationReport report;
    report.violations = std::move(ctx.violations);
    report.launch = ctx.launch;
    if (root.level == ComputeLevel::Thread && !ctx.any_thread_tiling && !ctx.warps_set)
        report.launch.block_threads = 1;
    else
        report.launch.block_threads = report.launch.warps_per_block * kWarpWidth;
    return report;
}

// ---------------------------------------------------------------------------
// elaboration
// ---------------------------------------------------------------------------

struct TraceEntry {
    std::string label;   // decomposition applied; empty for the root entry
    Spec spec;           // spec after the step
    // nested decompositions: ("move", ...) for loads, ("init"/"store", ...)
    std::vector<std::pair<std::string, std::vector<TraceEntry>>> subs;
};

namespace detail {

inline std::vector<TraceEntry> elaborate_chain(Spec spec, const NodePtr& node,
                                               const MicroKernelSet& mks, int& step);

inline void elaborate_steps(std::vector<TraceEntry>& out, Spec spec, const NodePtr& node,
                            const MicroKernelSet& mks, int& step) {
    if (!node) fail(ErrorKind::InvalidTree, "chain ends without done at step " + std::to_string(step));
    int my_step = step++;
    const DecompNode& n = *node;
    auto rethrow = [&](const Error& e) {
        std::string where = "step " + std::to_string(my_step);
        if (n.src_line > 0) where += " (line " + std::to_string(n.src_line) + ")";
        throw Error(e.kind(), std::string(e.what()) + " [at " + where + "]");
    };
    try {
        switch (n.kind) {
            case NodeKind::Tile: {
                Spec tiled = after_tile(spec, n.tile_r, n.tile_c);
                out.push_back({"tile(" + std::to_string(n.tile_r) + "," + std::to_string(n.tile_c) + ")",
                               tiled, {}});
                if (n.tile_ref.to) {
                    tiled = after_to(tiled, *n.tile_ref.to);
                    out.push_back({std::string("to(") + level_name(*n.tile_ref.to) + ")", tiled, {}});
                }
                elaborate_steps(out, tiled, n.child, mks, step);
                return;
            }
            case NodeKind::Split: {
                Spec split = after_split(spec, n.split_k);
                out.push_back({"split(" + std::to_string(n.split_k) + ")", split, {}});
                elaborate_steps(out, split, n.child, mks, step);
                return;
            }
            case NodeKind::Load: {
                Layout dst_layout{n.load_ref.storage_layout.value_or(Major::ColMajor), n.load_ref.pad};
                Spec move = induced_move_spec(spec, n.operand, n.target, dst_layout);
                Spec loaded = after_load(spec, n.operand, n.target, dst_layout);
                TraceEntry entry{std::string("load(") + operand_name(n.operand) + ", " +
                                     mem_name(n.target) + ")",
                                 loaded,
                                 {}};
                entry.subs.emplace_back("move", elaborate_chain(move, n.move_decomp, mks, step));
                out.push_back(std::move(entry));
                elaborate_steps(out, loaded, n.child, mks, step);
                return;
            }
            case NodeKind::Epilog: {
                Spec after = after_epilog(spec, n.acc_level);
                TraceEntry entry{"epilog(" + mem_name(n.acc_level) + ")", after, {}};
                entry.subs.emplace_back(
                    "init", elaborate_chain(induced_init_move(spec, n.acc_level), n.init_decomp, mks, step));
                entry.subs.emplace_back(
                    "store",
                    elaborate_chain(induced_store_move(spec, n.acc_level), n.store_decomp, mks, step));
                out.push_back(std::move(entry));
                elaborate_steps(out, after, n.child, mks, step);
                return;
            }
            case NodeKind::MmaTile: {
                Spec residual = after_mma_tile(spec);
                out.push_back({"mmaTile", residual, {}});
                elaborate_steps(out, residual, n.child, mks, step);
                return;
            }
            case NodeKind::Done: {
                bind_done(spec, n.micro_kernel, mks);
                return;
            }
        }
    } catch (const Error& e) {
        rethrow(e);
    }
}

inline std::vector<TraceEntry> elaborate_chain(Spec spec, const NodePtr& node,
                                               const MicroKernelSet& mks, int& step) {
    std::vector<TraceEntry> out;
    out.push_back({"", spec, {}});
    elaborate_steps(out, spec, node, mks, step);
    return out;
}

} // namespace detail

// The intermediate-spec trace: one entry for the root spec, then one per
// decomposition step in application order. Nested move decompositions hang
// off their load/epilog entries as sub-traces.
inline std::vector<TraceEntry> elaborate(const Spec& root, const NodePtr& tree,
                                         const MicroKernelSet& mks = MicroKernelSet{}) {
    int step = 0;
    return detail::elaborate_chain(root, tree, mks, step);
}

inline void render_trace(const std::vector<TraceEntry>& trace, std::string& out, int indent,
                         bool with_subs) {
    std::string pad(static_cast<size_t>(indent), ' ');
    for (const auto& e : trace) {
        std::string line = pad;
        if (e.label.empty()) {
            line += spec_short_form(e.spec);
        } else {
            std::string label = e.label;
            if (label.size() < 16) label.resize(16, ' ');
            line += label + "// " + spec_short_form(e.spec);
        }
        out += line + "\n";
        if (with_subs)
            for (const auto& [name, sub] : e.subs) {
                out += pad + "  [" + name + "]\n";
                render_trace(sub, out, indent + 2, with_subs);
            }
    }
}

inline std::string render_trace(const std::vector<TraceEntry>& trace, bool with_subs = false) {
    std::string out;
    render_trace(trace, out, 0, with_subs);
    return out;
}

} // namespace anvil
