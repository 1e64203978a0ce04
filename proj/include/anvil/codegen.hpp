#pragma once

#include <string>

#include "anvil/program.hpp"

namespace anvil {

struct KernelSource {
    std::string source;
    LaunchConfig launch;
    BufferPlan plan;
    std::string entry_name;
};

namespace detail {

struct Emitter {
    const Program& prog;
    std::string out;
    int indent = 0;

    explicit Emitter(const Program& p) : prog(p) {}

    void line(const std::string& s) {
        if (!s.empty()) out.append(static_cast<size_t>(indent) * 2, ' ');
        out += s;
        out += '\n';
    }

    const BufferDecl& buf(int id) const { return prog.plan.at(id); }

    std::string storage_name(int id) const { return buf(prog.plan.storage_root(id)).name; }

    // C text of the linear offset of an element reference
    std::string offset_text(const ElemRef& r) const {
        const BufferDecl& b = buf(r.buf);
        Expr row = r.row, col = r.col;
        long rs = b.row_stride(), cs = b.col_stride();
        if (b.distributed_rf()) {
            row = r.lrow;
            col = r.lcol;
            rs = b.local_row_stride();
            cs = b.local_col_stride();
        }
        return emit_c(simplify(iadd(imul(row, iconst(rs)), imul(col, iconst(cs)))));
    }

    std::string ref_text(const ElemRef& r) const {
        return storage_name(r.buf) + "[" + offset_text(r) + "]";
    }

    std::string frag_text(const FragRef& f) const {
        const BufferDecl& b = buf(f.buf);
        long tiles_n = std::max<long>(1, b.local_cols / 16);
        Expr idx = iadd(imul(idiv(f.lrow, iconst(16)), iconst(tiles_n)), idiv(f.lcol, iconst(16)));
        return b.name + "[" + emit_c(simplify(idx)) + "]";
    }

    std::string zero_literal(ElemType t) const { return t == ElemType::F32 ? "0.0f" : "0.0f"; }

    void emit_stmt(const Stmt& s) {
        if (const auto* l = std::get_if<LoopStmt>(&s.v)) {
            line("for (int " + l->var + " = 0; " + l->var + " < " + std::to_string(l->count) +
                 "; ++" + l->var + ") {");
            ++indent;
            for (const auto& inner : l->body) emit_stmt(inner);
            --indent;
            line("}");
            return;
        }
        if (std::holds_alternative<BarrierStmt>(s.v)) {
            line("__syncthreads();");
            return;
        }
        if (const auto* c = std::get_if<CopyStmt>(&s.v)) {
            line(ref_text(c->dst) + " = " + ref_text(c->src) + ";");
            return;
        }
        if (const auto* z = std::get_if<ZeroStmt>(&s.v)) {
            line(ref_text(z->dst) + " = " + zero_literal(buf(z->dst.buf).elem) + ";");
            return;
        }
        if (const auto* f = std::get_if<FmaStmt>(&s.v)) {
            line(ref_text(f->c) + " += " + ref_text(f->a) + " * " + ref_text(f->b) + ";");
            return;
        }
        if (const auto* w = std::get_if<WmmaFillStmt>(&s.v)) {
            line("fill_fragment(" + frag_text(w->frag) + ", 0.0f);");
            return;
        }
        if (const auto* w = std::get_if<WmmaLoadStmt>(&s.v)) {
            const BufferDecl& src = buf(w->src.buf);
            long ld = src.layout.major == Major::RowMajor ? src.row_stride() : src.col_stride();
            line("wmma::load_matrix_sync(" + frag_text(w->frag) + ", &" + ref_text(w->src) + ", " +
                 std::to_string(ld) + ");");
            return;
        }
        if (const auto* w = std::get_if<WmmaStoreStmt>(&s.v)) {
            const BufferDecl& dst = buf(w->dst.buf);
            long ld = dst.layout.major == Major::RowMajor ? dst.row_stride() : dst.col_stride();
            const char* mem = dst.layout.major == Major::RowMajor ? "wmma::mem_row_major"
                                                                  : "wmma::mem_col_major";
            line("wmma::store_matrix_sync(&" + ref_text(w->dst) + ", " + frag_text(w->frag) + ", " +
                 std::to_string(ld) + ", " + std::string(mem) + ");");
            return;
        }
        if (const auto* w = std::get_if<WmmaMmaStmt>(&s.v)) {
            std::string c = frag_text(w->c);
            line("wmma::mma_sync(" + c + ", " + frag_text(w->a) + ", " + frag_text(w->b) + ", " + c +
                 ");");
            return;
        }
        if (const auto* m = std::get_if<MicroKernelStmt>(&s.v)) {
            emit_micro_kernel(*m);
            return;
        }
        if (const auto* h = std::get_if<HmmaStmt>(&s.v)) {
            line("asm volatile(\"mma.sync.aligned.m8n8k4.row.col.f16.f16.f16.f16\"");
            line("             \" {%0,%1,%2,%3}, {%4,%5}, {%6,%7}, {%0,%1,%2,%3};\"");
            line("             : \"+r\"(" + storage_name(h->c.buf) + "[" + offset_text(h->c) + "])");
            line("             : \"r\"(" + storage_name(h->a.buf) + "[" + offset_text(h->a) + "]),");
            line("               \"r\"(" + storage_name(h->b.buf) + "[" + offset_text(h->b) + "]));");
            return;
        }
    }

    void emit_micro_kernel(const MicroKernelStmt& m) {
        std::string body = m.mk->body;
        auto replace_all = [&body](const std::string& from, const std::string& to) {
            size_t pos = 0;
            while ((pos = body.find(from, pos)) != std::string::npos) {
                body.replace(pos, from.size(), to);
                pos += to.size();
            }
        };
        for (const std::string& var : m.mk->declared_vars) {
            std::string value;
            if (var == "M") value = std::to_string(m.m);
            else if (var == "N") value = std::to_string(m.n);
            else if (var == "K") value = std::to_string(m.k);
            else {
                std::string base = var;
                std::string field;
                if (auto dot = var.find('.'); dot != std::string::npos) {
                    base = var.substr(0, dot);
                    field = var.substr(dot + 1);
                }
                const ElemRef* ref = nullptr;
                for (const auto& [name, r] : m.operands)
                    if (name == base) ref = &r;
                if (!ref) continue;
                const BufferDecl& b = buf(ref->buf);
                bool local = b.distributed_rf();
                if (field.empty()) value = ref_text(*ref);
                else if (field == "base") value = storage_name(ref->buf);
                else if (field == "off") value = offset_text(*ref);
                else if (field == "rs")
                    value = std::to_string(local ? b.local_row_stride() : b.row_stride());
                else if (field == "cs")
                    value = std::to_string(local ? b.local_col_stride() : b.col_stride());
                else continue;
            }
            replace_all("{" + var + "}", value);
        }
        size_t start = 0;
        while (start < body.size()) {
            size_t end = body.find('\n', start);
            if (end == std::string::npos) end = body.size();
            std::string ln = body.substr(start, end - start);
            if (!ln.empty()) line(ln);
            start = end + 1;
        }
    }

    void emit_buffer_decls() {
        bool any = false;
        for (const auto& b : prog.plan.buffers) {
            if (b.is_root && b.mem.kind == MemKind::GL) continue;
            if (!any) line("");
            any = true;
            if (b.is_root) {
                line(std::string(elem_c_type(b.elem)) + " " + b.name + "[" +
                     std::to_string(b.extent()) + "]; // root operand in " + mem_name(b.mem));
                continue;
            }
            if (b.mem.kind == MemKind::SH) {
                if (b.alias_of >= 0) {
                    line("// " + b.name + " aliases " + storage_name(b.id) + " (reuseBuffer)");
                    continue;
                }
                long bytes = 0;
                for (const auto& m : prog.plan.buffers)
                    if (m.mem.kind == MemKind::SH && prog.plan.storage_root(m.id) == b.id)
                        bytes = std::max(bytes, m.extent() * byte_width(m.elem));
                long count = bytes / byte_width(b.elem);
                line("__shared__ __align__(" + std::to_string(b.align_bytes) + ") " +
                     elem_c_type(b.elem) + " " + b.name + "[" + std::to_string(count) + "];");
                continue;
            }
            if (b.mem.kind == MemKind::RF) {
                line(std::string(elem_c_type(b.elem)) + " " + b.name + "[" +
                     std::to_string(b.distributed_rf() ? b.local_extent() : b.extent()) + "];");
                continue;
            }
            // fragments
            long count = std::max<long>(1, (b.local_rows / 16) * (b.local_cols / 16));
            std::string kind;
            switch (b.role) {
                case BufferRole::OperandA:
                    kind = std::string("wmma::matrix_a, 16, 16, 16, ") + elem_c_type(b.elem) + ", " +
                           (b.layout.major == Major::RowMajor ? "wmma::row_major" : "wmma::col_major");
                    break;
                case BufferRole::OperandB:
                    kind = std::string("wmma::matrix_b, 16, 16, 16, ") + elem_c_type(b.elem) + ", " +
                           (b.layout.major == Major::RowMajor ? "wmma::row_major" : "wmma::col_major");
                    break;
                default:
                    kind = std::string("wmma::accumulator, 16, 16, 16, ") + elem_c_type(b.elem);
                    break;
            }
            line("wmma::fragment<" + kind + "> " + b.name + "[" + std::to_string(count) + "];");
        }
    }

    std::string params() const {
        std::string p;
        auto add = [&p](const BufferDecl& b, bool is_output) {
            if (!p.empty()) p += ", ";
            if (!is_output) p += "const ";
            p += std::string(elem_c_type(b.elem)) + "* " + b.name;
        };
        for (const auto& b : prog.plan.buffers) {
            if (!b.is_root || b.mem.kind != MemKind::GL) continue;
            bool is_output = b.role == BufferRole::RootC || b.role == BufferRole::RootDst;
            add(b, is_output);
        }
        return p;
    }

    std::string run() {
        line("// " + spec_short_form(prog.root));
        line("// grid " + std::to_string(prog.launch.grid_x) + "x" +
             std::to_string(prog.launch.grid_y) + ", " + std::to_string(prog.launch.block_threads) +
             " threads per block");
        if (prog.uses_wmma) {
            line("#include <mma.h>");
            line("using namespace nvcuda;");
            line("using namespace nvcuda::wmma;");
        }
        line("");
        line("__global__ void " + prog.entry_name + "(" + params() + ") {");
        ++indent;
        if (prog.root.is_matmul()) {
            line("constexpr int M = " + std::to_string(prog.root.m()) +
                 ", N = " + std::to_string(prog.root.n()) + ", K = " + std::to_string(prog.root.k()) +
                 ";");
        } else {
            line("constexpr int R = " + std::to_string(prog.root.mv().src.rows) +
                 ", C = " + std::to_string(prog.root.mv().src.cols) + ";");
        }
        emit_buffer_decls();
        line("");
        for (const auto& s : prog.body) emit_stmt(s);
        --indent;
        line("}");
        return out;
    }
};

} // namespace detail

// Emits the complete GPU-dialect translation unit for a validated tree.
// Deterministic: byte-identical output for identical inputs.
inline KernelSource generate(const Spec& root, const NodePtr& tree,
                             const MicroKernelSet& mks = MicroKernelSet{}) {
    Program prog = lower(root, tree, mks);
    if (prog.plan.shared_bytes > kSharedMemoryBudget)
        fail(ErrorKind::CapacityExceeded,
             "plan needs " + std::to_string(prog.plan.shared_bytes) +
                 " shared bytes per block; budget is " + std::to_string(kSharedMemoryBudget));
    detail::Emitter em(prog);
    KernelSource ks;
    ks.source = em.run();
    ks.launch = prog.launch;
    ks.plan = prog.plan;
    ks.entry_name = prog.entry_name;
    return ks;
}

inline KernelSource generate(const Program& prog) {
    if (prog.plan.shared_bytes > kSharedMemoryBudget)
        fail(ErrorKind::CapacityExceeded,
             "plan needs " + std::to_string(prog.plan.shared_bytes) +
                 " shared bytes per block; budget is " + std::to_string(kSharedMemoryBudget));
    detail::Emitter em(prog);
    return KernelSource{em.run(), prog.launch, prog.plan, prog.entry_name};
}

} // namespace anvil
