#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "anvil/matrix.hpp"
#include "anvil/program.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct AccessRecord {
    long phase = 0, block = 0, thread = 0;
    char op = 'R'; // 'R' or 'W'
    std::string buffer;
    long index = 0;
};

struct RaceRecord {
    std::string buffer;
    long index = 0;
    long writer = 0, other = 0; // thread ids within the block
    long phase = 0;
    long block = 0;
};

struct RaceReport {
    std::vector<RaceRecord> records; // capped; see total
    long total = 0;

    bool empty() const { return total == 0; }
};

struct OwnershipRecord {
    std::string buffer;
    long index = 0;
    long owner = -1;    // owning unit (lane or warp); -1 = never written
    long accessor = 0;  // accessing unit
    long block = 0;
};

struct RunOptions {
    bool collect_ownership = false; // report violations instead of failing fast
    bool log_accesses = false;      // retain the full shared-memory access log
};

struct RunResult {
    Matrix output;
    RaceReport races;
    std::vector<OwnershipRecord> ownership;
    std::vector<AccessRecord> log;
};

// Same-phase conflict rule, applied to an explicit access log: a write and
// any access of the same shared cell by a different thread of the same
// block in the same barrier phase is a race.
inline RaceReport detect_races(const std::vector<AccessRecord>& log) {
    RaceReport report;
    struct Key {
        long block, phase, index;
        std::string buffer;
        bool operator==(const Key& o) const {
            return block == o.block && phase == o.phase && index == o.index && buffer == o.buffer;
        }
    };
    struct KeyHash {
        size_t operator()(const Key& k) const {
            size_t h = std::hash<std::string>()(k.buffer);
            h ^= static_cast<size_t>(k.block * 1000003 + k.phase * 131 + k.index) + (h << 6);
            return h;
        }
    };
    struct Cell {
        long writer = -1, reader = -1;
    };
    std::unordered_map<Key, Cell, KeyHash> cells;
    for (const auto& a : log) {
        Cell& c = cells[Key{a.block, a.phase, a.index, a.buffer}];
        if (a.op == 'W') {
            if ((c.writer >= 0 && c.writer != a.thread) || (c.reader >= 0 && c.reader != a.thread)) {
                ++report.total;
                if (report.records.size() < 256)
                    report.records.push_back({a.buffer, a.index,
                                              c.writer >= 0 ? c.writer : a.thread,
                                              c.writer >= 0 ? a.thread : c.reader, a.phase, a.block});
            }
            c.writer = a.thread;
        } else {
            if (c.writer >= 0 && c.writer != a.thread) {
                ++report.total;
                if (report.records.size() < 256)
                    report.records.push_back({a.buffer, a.index, c.writer, a.thread, a.phase, a.block});
            }
            c.reader = a.thread;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// compiled expression evaluation
// ---------------------------------------------------------------------------

namespace detail {

struct EvalCode {
    struct Ins {
        int op;   // 0 const, 1 var, 2.. = ExprOp binary
        long imm; // const value or var slot
    };
    std::vector<Ins> code;
};

struct ExprCompiler {
    std::unordered_map<std::string, int> slots;
    std::unordered_map<const ExprNode*, EvalCode> cache;

    int slot(const std::string& name) {
        auto it = slots.find(name);
        if (it != slots.end()) return it->second;
        int s = static_cast<int>(slots.size());
        slots.emplace(name, s);
        return s;
    }

    void compile_into(const Expr& e, EvalCode& out) {
        switch (e->op) {
            case ExprOp::Const: out.code.push_back({0, e->value}); return;
            case ExprOp::Var: out.code.push_back({1, slot(e->name)}); return;
            default:
                compile_into(e->lhs, out);
                compile_into(e->rhs, out);
                out.code.push_back({2 + static_cast<int>(e->op), 0});
        }
    }

    const EvalCode& get(const Expr& e) {
        auto it = cache.find(e.get());
        if (it != cache.end()) return it->second;
        EvalCode code;
        compile_into(e, code);
        return cache.emplace(e.get(), std::move(code)).first->second;
    }

    long eval(const Expr& e, const std::vector<long>& env) {
        const EvalCode& code = get(e);
        long stack[64];
        int sp = 0;
        for (const auto& ins : code.code) {
            switch (ins.op) {
                case 0: stack[sp++] = ins.imm; break;
                case 1: stack[sp++] = env[static_cast<size_t>(ins.imm)]; break;
                default: {
                    long b = stack[--sp];
                    long a = stack[--sp];
                    switch (static_cast<ExprOp>(ins.op - 2)) {
                        case ExprOp::Add: stack[sp++] = a + b; break;
                        case ExprOp::Mul: stack[sp++] = a * b; break;
                        case ExprOp::Div: stack[sp++] = b == 0 ? 0 : a / b; break;
                        case ExprOp::Mod: stack[sp++] = b == 0 ? 0 : a % b; break;
                        case ExprOp::Shr: stack[sp++] = a >> b; break;
                        case ExprOp::Shl: stack[sp++] = a << b; break;
                        case ExprOp::BitAnd: stack[sp++] = a & b; break;
                        case ExprOp::BitOr: stack[sp++] = a | b; break;
                        default: stack[sp++] = 0; break;
                    }
                }
            }
        }
        return stack[0];
    }
};

// ---------------------------------------------------------------------------
// machine state
// ---------------------------------------------------------------------------

// Deterministic CPU model of the block/warp/thread hierarchy. Blocks run
// sequentially; within a block, statements run in program order and the
// executing units of each statement run in lane order. Barriers advance the
// per-block phase counter; all shared accesses are checked for same-phase
// conflicts, and distributed register/fragment cells for ownership.
struct Machine {
    const Program& prog;
    RunOptions opts;
    ExprCompiler comp;

    std::vector<std::vector<float>> root_storage; // persistent across blocks
    std::vector<std::vector<float>> block_values; // per buffer: extent * instances
    std::vector<std::vector<long>> owners;        // distributed buffers: owner unit per cell
    struct ShCell {
        long phase = -1;
        long writer = -1, reader = -1;
    };
    std::vector<std::vector<ShCell>> sh_cells; // per SH storage root

    long phase = 0;
    long block_x = 0, block_y = 0, block_linear = 0;
    std::vector<long> env;
    int slot_bx, slot_by, slot_tid;

    RaceReport races;
    std::vector<OwnershipRecord> ownership;
    std::vector<AccessRecord> log;

    explicit Machine(const Program& p, RunOptions o) : prog(p), opts(o) {
        slot_bx = comp.slot("blockIdx.x");
        slot_by = comp.slot("blockIdx.y");
        slot_tid = comp.slot("threadIdx.x");
        size_t nbuf = prog.plan.buffers.size();
        root_storage.resize(nbuf);
        block_values.resize(nbuf);
        owners.resize(nbuf);
        sh_cells.resize(nbuf);
        for (const auto& b : prog.plan.buffers)
            if (b.is_root) root_storage[static_cast<size_t>(b.id)].assign(
                static_cast<size_t>(b.extent()), 0.0f);
    }

    long instances(const BufferDecl& b) const {
        switch (b.home) {
            case ComputeLevel::Warp: return prog.launch.warps_per_block;
            case ComputeLevel::Thread: return std::max<long>(1, prog.launch.block_threads);
            default: return 1;
        }
    }

    bool tracked_ownership(const BufferDecl& b) const {
        if (b.is_root) return false;
        if (b.mem.kind == MemKind::RF && b.home < ComputeLevel::Thread) return true;
        if (b.mem.kind == MemKind::FR && b.home < ComputeLevel::Warp) return true;
        return false;
    }

    void reset_block() {
        phase = 0;
        for (const auto& b : prog.plan.buffers) {
            if (b.is_root) continue;
            size_t id = static_cast<size_t>(b.id);
            if (b.mem.kind == MemKind::SH) {
                if (b.alias_of < 0) {
                    long cells = 0;
                    for (const auto& m : prog.plan.buffers)
                        if (m.mem.kind == MemKind::SH && prog.plan.storage_root(m.id) == b.id)
                            cells = std::max(cells, m.extent());
                    block_values[id].assign(static_cast<size_t>(cells), 0.0f);
                    sh_cells[id].assign(static_cast<size_t>(cells), ShCell{});
                }
                continue;
            }
            block_values[id].assign(static_cast<size_t>(b.extent() * instances(b)), 0.0f);
            if (tracked_ownership(b))
                owners[id].assign(static_cast<size_t>(b.extent() * instances(b)), -1);
        }
    }

    long unit_of(const BufferDecl& b, long tid) const {
        if (b.mem.kind == MemKind::FR) return tid / kWarpWidth;
        return tid;
    }

    void note_sh_access(const BufferDecl& b, long root, long index, long tid, char op) {
        if (opts.log_accesses)
            log.push_back({phase, block_linear, tid, op, prog.plan.at(static_cast<int>(root)).name,
                           index});
        ShCell& c = sh_cells[static_cast<size_t>(root)][static_cast<size_t>(index)];
        if (c.phase != phase) {
            c.phase = phase;
            c.writer = -1;
            c.reader = -1;
        }
        if (op == 'W') {
            if ((c.writer >= 0 && c.writer != tid) || (c.reader >= 0 && c.reader != tid)) {
                ++races.total;
                if (races.records.size() < 256)
                    races.records.push_back({b.name, index, c.writer >= 0 ? c.writer : tid,
                                             c.writer >= 0 ? tid : c.reader, phase, block_linear});
            }
            c.writer = tid;
        } else {
            if (c.writer >= 0 && c.writer != tid) {
                ++races.total;
                if (races.records.size() < 256)
                    races.records.push_back({b.name, index, c.writer, tid, phase, block_linear});
            }
            c.reader = tid;
        }
    }

    void check_owner(const BufferDecl& b, long slot, long index, long tid, bool is_write) {
        long unit = unit_of(b, tid);
        long& owner = owners[static_cast<size_t>(b.id)][static_cast<size_t>(slot)];
        if (owner < 0 && is_write) {
            owner = unit;
            return;
        }
        if (owner == unit) return;
        if (opts.collect_ownership) {
            if (ownership.size() < 4096)
                ownership.push_back({b.name, index, owner, unit, block_linear});
        } else {
            fail(ErrorKind::OwnershipViolation,
                 "unit " + std::to_string(unit) + " touches " + b.name + "[" +
                     std::to_string(index) + "] owned by " + std::to_string(owner));
        }
    }

    float* cell(const BufferDecl& b, long row, long col, long tid, char op) {
        long index = row * b.row_stride() + col * b.col_stride();
        if (b.is_root)
            return &root_storage[static_cast<size_t>(b.id)][static_cast<size_t>(index)];
        if (b.mem.kind == MemKind::SH) {
            long root = prog.plan.storage_root(b.id);
            note_sh_access(b, root, index, tid, op);
            return &block_values[static_cast<size_t>(root)][static_cast<size_t>(index)];
        }
        long inst = b.home == ComputeLevel::Warp    ? tid / kWarpWidth
                    : b.home == ComputeLevel::Thread ? tid
                                                      : 0;
        long slot = inst * b.extent() + index;
        if (tracked_ownership(b)) check_owner(b, slot, index, tid, op == 'W');
        return &block_values[static_cast<size_t>(b.id)][static_cast<size_t>(slot)];
    }

    float load(const ElemRef& r, long tid) {
        const BufferDecl& b = prog.plan.at(r.buf);
        return *cell(b, comp.eval(r.row, env), comp.eval(r.col, env), tid, 'R');
    }

    void store(const ElemRef& r, long tid, float v) {
        const BufferDecl& b = prog.plan.at(r.buf);
        if (b.elem == ElemType::F16) v = round_to_f16(v);
        *cell(b, comp.eval(r.row, env), comp.eval(r.col, env), tid, 'W') = v;
    }

    // --- statement execution -----------------------------------------------

    void exec_list(const StmtList& body) {
        for (const auto& s : body) exec(s);
    }

    void exec(const Stmt& s) {
        if (const auto* l = std::get_if<LoopStmt>(&s.v)) {
            int sl = comp.slot(l->var);
            if (env.size() <= static_cast<size_t>(sl)) env.resize(static_cast<size_t>(sl) + 1, 0);
            for (long i = 0; i < l->count; ++i) {
                env[static_cast<size_t>(sl)] = i;
                exec_list(l->body);
            }
            return;
        }
        if (std::holds_alternative<BarrierStmt>(s.v)) {
            ++phase;
            return;
        }
        if (const auto* c = std::get_if<CopyStmt>(&s.v)) {
            per_thread([&](long tid) { store(c->dst, tid, load(c->src, tid)); });
            return;
        }
        if (const auto* z = std::get_if<ZeroStmt>(&s.v)) {
            per_thread([&](long tid) { store(z->dst, tid, 0.0f); });
            return;
        }
        if (const auto* f = std::get_if<FmaStmt>(&s.v)) {
            per_thread([&](long tid) {
                float acc = load(f->c, tid) + load(f->a, tid) * load(f->b, tid);
                store(f->c, tid, acc);
            });
            return;
        }
        if (const auto* w = std::get_if<WmmaFillStmt>(&s.v)) {
            per_warp([&](long tid) {
                long r0 = comp.eval(w->frag.row, env), c0 = comp.eval(w->frag.col, env);
                const BufferDecl& b = prog.plan.at(w->frag.buf);
                for (long i = 0; i < 16; ++i)
                    for (long j = 0; j < 16; ++j) *cell_checked(b, r0 + i, c0 + j, tid, 'W') = 0.0f;
            });
            return;
        }
        if (const auto* w = std::get_if<WmmaLoadStmt>(&s.v)) {
            per_warp([&](long tid) {
                long r0 = comp.eval(w->frag.row, env), c0 = comp.eval(w->frag.col, env);
                long sr = comp.eval(w->src.row, env), sc = comp.eval(w->src.col, env);
                const BufferDecl& dst = prog.plan.at(w->frag.buf);
                const BufferDecl& src = prog.plan.at(w->src.buf);
                for (long i = 0; i < 16; ++i)
                    for (long j = 0; j < 16; ++j) {
                        float v = *cell_checked(src, sr + i, sc + j, tid, 'R');
                        if (dst.elem == ElemType::F16) v = round_to_f16(v);
                        *cell_checked(dst, r0 + i, c0 + j, tid, 'W') = v;
                    }
            });
            return;
        }
        if (const auto* w = std::get_if<WmmaStoreStmt>(&s.v)) {
            per_warp([&](long tid) {
                long r0 = comp.eval(w->frag.row, env), c0 = comp.eval(w->frag.col, env);
                long dr = comp.eval(w->dst.row, env), dc = comp.eval(w->dst.col, env);
                const BufferDecl& src = prog.plan.at(w->frag.buf);
                const BufferDecl& dst = prog.plan.at(w->dst.buf);
                for (long i = 0; i < 16; ++i)
                    for (long j = 0; j < 16; ++j) {
                        float v = *cell_checked(src, r0 + i, c0 + j, tid, 'R');
                        if (dst.elem == ElemType::F16) v = round_to_f16(v);
                        *cell_checked(dst, dr + i, dc + j, tid, 'W') = v;
                    }
            });
            return;
        }
        if (const auto* w = std::get_if<WmmaMmaStmt>(&s.v)) {
            // 16x16x16 product at warp granularity, accumulated in F32
            per_warp([&](long tid) {
                long ar = comp.eval(w->a.row, env), ac = comp.eval(w->a.col, env);
                long br = comp.eval(w->b.row, env), bc = comp.eval(w->b.col, env);
                long cr = comp.eval(w->c.row, env), cc = comp.eval(w->c.col, env);
                const BufferDecl& ba = prog.plan.at(w->a.buf);
                const BufferDecl& bb = prog.plan.at(w->b.buf);
                const BufferDecl& bc_ = prog.plan.at(w->c.buf);
                for (long i = 0; i < 16; ++i)
                    for (long j = 0; j < 16; ++j) {
                        float acc = *cell_checked(bc_, cr + i, cc + j, tid, 'R');
                        for (long kk = 0; kk < 16; ++kk)
                            acc += *cell_checked(ba, ar + i, ac + kk, tid, 'R') *
                                   *cell_checked(bb, br + kk, bc + j, tid, 'R');
                        *cell_checked(bc_, cr + i, cc + j, tid, 'W') = acc;
                    }
            });
            return;
        }
        fail(ErrorKind::UnsimulatableResidual,
             "tree contains a micro-kernel or opaque instruction; the simulator has no semantics for it");
    }

    float* cell_checked(const BufferDecl& b, long row, long col, long tid, char op) {
        return cell(b, row, col, tid, op);
    }

    template <typename F>
    void per_thread(F&& f) {
        for (long tid = 0; tid < prog.launch.block_threads; ++tid) {
            env[static_cast<size_t>(slot_tid)] = tid;
            f(tid);
        }
    }

    template <typename F>
    void per_warp(F&& f) {
        long warps = std::max<long>(1, prog.launch.block_threads / kWarpWidth);
        for (long w = 0; w < warps; ++w) {
            long tid = w * kWarpWidth;
            env[static_cast<size_t>(slot_tid)] = tid;
            f(tid);
        }
    }

    void ingest(int buf_id, const Matrix& m, bool round_f16) {
        const BufferDecl& b = prog.plan.at(buf_id);
        if (m.rows != b.rows || m.cols != b.cols)
            fail(ErrorKind::ShapeMismatch, "input for " + b.name + " must be " +
                                               std::to_string(b.rows) + "x" + std::to_string(b.cols));
        auto& store_ = root_storage[static_cast<size_t>(buf_id)];
        for (long r = 0; r < b.rows; ++r)
            for (long c = 0; c < b.cols; ++c) {
                float v = m.at(r, c);
                if (round_f16) v = round_to_f16(v);
                store_[static_cast<size_t>(r * b.row_stride() + c * b.col_stride())] = v;
            }
    }

    Matrix extract(int buf_id) const {
        const BufferDecl& b = prog.plan.at(buf_id);
        Matrix m = Matrix::zeros(b.rows, b.cols, b.layout);
        const auto& store_ = root_storage[static_cast<size_t>(buf_id)];
        for (long r = 0; r < b.rows; ++r)
            for (long c = 0; c < b.cols; ++c)
                m.at(r, c) = store_[static_cast<size_t>(r * b.row_stride() + c * b.col_stride())];
        return m;
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// entry points
// ---------------------------------------------------------------------------

// Executes a lowered program. For MatMul roots `a` and `b` are the inputs
// and the output is C (zero-initialized); for Move roots `a` is the source.
inline RunResult run(const Program& prog, const Matrix& a, const Matrix* b = nullptr,
                     RunOptions opts = {}) {
    if (!prog.simulatable)
        fail(ErrorKind::UnsimulatableResidual,
             "tree binds a micro-kernel or an opaque instruction; codegen-only");

    detail::Machine machine(prog, opts);
    machine.env.resize(16, 0);

    int out_buf = -1;
    if (prog.root.is_matmul()) {
        if (!b) fail(ErrorKind::ShapeMismatch, "matmul simulation needs both A and B inputs");
        bool round_a = prog.root.mm().a.elem == ElemType::F16;
        bool round_b = prog.root.mm().b.elem == ElemType::F16;
        machine.ingest(0, a, round_a);
        machine.ingest(1, *b, round_b);
        out_buf = 2;
    } else {
        machine.ingest(0, a, prog.root.mv().src.elem == ElemType::F16);
        out_buf = 1;
    }

    for (long by = 0; by < prog.launch.grid_y; ++by)
        for (long bx = 0; bx < prog.launch.grid_x; ++bx) {
            machine.block_x = bx;
            machine.block_y = by;
            machine.block_linear = by * prog.launch.grid_x + bx;
            machine.env[static_cast<size_t>(machine.slot_bx)] = bx;
            machine.env[static_cast<size_t>(machine.slot_by)] = by;
            machine.reset_block();
            machine.exec_list(prog.body);
        }

    RunResult result;
    result.output = machine.extract(out_buf);
    result.races = std::move(machine.races);
    result.ownership = std::move(machine.ownership);
    result.log = std::move(machine.log);
    return result;
}

inline RunResult run(const Spec& root, const NodePtr& tree, const Matrix& a,
                     const Matrix* b = nullptr, RunOptions opts = {},
                     const MicroKernelSet& mks = MicroKernelSet{}) {
    Program prog = lower(root, tree, mks);
    return run(prog, a, b, opts);
}

// Static distributed-array ownership check: enumerates every unit and index
// expression over zero-valued inputs and reports each access that resolves
// to another unit's cells.
inline std::vector<OwnershipRecord> check_ownership(const Spec& root, const NodePtr& tree,
                                                    const MicroKernelSet& mks = MicroKernelSet{}) {
    Program prog = lower(root, tree, mks);
    RunOptions opts;
    opts.collect_ownership = true;
    Matrix a, bm;
    const Matrix* b = nullptr;
    if (root.is_matmul()) {
        a = Matrix::zeros(root.m(), root.k(), root.mm().a.layout);
        bm = Matrix::zeros(root.k(), root.n(), root.mm().b.layout);
        b = &bm;
    } else {
        a = Matrix::zeros(root.mv().src.rows, root.mv().src.cols, root.mv().src.layout);
    }
    return run(prog, a, b, opts).ownership;
}

} // namespace anvil
