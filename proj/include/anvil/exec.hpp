#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "anvil/types.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// instruction patterns
// ---------------------------------------------------------------------------

enum class SimSemantics { FMA, WMMA_MMA, WMMA_LOAD, WMMA_STORE, OPAQUE };

// One operand slot of an instruction pattern. Unset fields are wildcards;
// mem matching is a set so e.g. a store can accept any non-fragment target.
struct OperandPattern {
    std::optional<long> rows, cols;
    std::optional<ElemType> elem;
    std::vector<MemKind> mems;          // empty = any
    std::optional<Major> major;

    bool matches(const MatrixRef& m) const {
        if (rows && *rows != m.rows) return false;
        if (cols && *cols != m.cols) return false;
        if (elem && *elem != m.elem) return false;
        if (!mems.empty()) {
            bool ok = false;
            for (MemKind k : mems) ok = ok || k == m.mem.kind;
            if (!ok) return false;
        }
        if (major && *major != m.layout.major) return false;
        return true;
    }
};

struct Instruction {
    std::string name;
    Spec::Kind kind = Spec::Kind::MatMul;
    ComputeLevel level = ComputeLevel::Thread;
    OperandPattern a, b, c; // MatMul: a,b,c; Move: a=src, c=dst
    std::string emission;   // text template; empty when emission is form-specific
    SimSemantics sim = SimSemantics::FMA;

    bool matches(const Spec& s) const {
        if (s.kind != kind || s.level != level) return false;
        if (s.is_matmul())
            return a.matches(s.mm().a) && b.matches(s.mm().b) && c.matches(s.mm().c);
        return a.matches(s.mv().src) && c.matches(s.mv().dst);
    }

    std::string pattern_short_form() const {
        if (kind == Spec::Kind::MatMul) {
            auto dim = [](const std::optional<long>& d) {
                return d ? std::to_string(*d) : std::string("_");
            };
            return "MatMul(" + dim(c.rows) + "," + dim(c.cols) + "," + dim(a.cols) + ")(...)(" +
                   level_name(level) + ")";
        }
        auto dims = [](const OperandPattern& p) {
            std::string r = p.rows ? std::to_string(*p.rows) : "_";
            std::string cc = p.cols ? std::to_string(*p.cols) : "_";
            return r + "x" + cc;
        };
        return "Move(" + dims(c) + ")(" + (a.mems.size() == 1 ? mem_name({a.mems[0]}) : "_") +
               "->" + (c.mems.size() == 1 ? mem_name({c.mems[0]}) : "_") + ")(" +
               level_name(level) + ")";
    }
};

// The built-in executable set. Besides the tensor-core forms this includes
// the elementary per-thread copy that terminates every move decomposition.
inline const std::vector<Instruction>& builtin_instructions() {
    static const std::vector<Instruction> set = [] {
        std::vector<Instruction> v;

        Instruction fma;
        fma.name = "FMA";
        fma.kind = Spec::Kind::MatMul;
        fma.level = ComputeLevel::Thread;
        fma.a = {1, 1, ElemType::F32, {MemKind::RF}, {}};
        fma.b = {1, 1, ElemType::F32, {MemKind::RF}, {}};
        fma.c = {1, 1, ElemType::F32, {MemKind::RF}, {}};
        fma.emission = "{C} += {A} * {B};";
        fma.sim = SimSemantics::FMA;
        v.push_back(fma);

        Instruction hfma = fma;
        hfma.name = "HFMA";
        hfma.a.elem = hfma.b.elem = hfma.c.elem = ElemType::F16;
        v.push_back(hfma);

        Instruction copy;
        copy.name = "COPY";
        copy.kind = Spec::Kind::Move;
        copy.level = ComputeLevel::Thread;
        copy.a = {1, 1, std::nullopt, {}, {}};
        copy.c = {1, 1, std::nullopt, {}, {}};
        copy.emission = "{DST} = {SRC};";
        copy.sim = SimSemantics::FMA; // elementary; lowered specially
        v.push_back(copy);

        Instruction mma;
        mma.name = "WMMA_MMA";
        mma.kind = Spec::Kind::MatMul;
        mma.level = ComputeLevel::Warp;
        mma.a = {16, 16, ElemType::F16, {MemKind::FR}, {}};
        mma.b = {16, 16, ElemType::F16, {MemKind::FR}, {}};
        mma.c = {16, 16, std::nullopt, {MemKind::FR}, {}};
        mma.sim = SimSemantics::WMMA_MMA;
        v.push_back(mma);

        Instruction wload;
        wload.name = "WMMA_LOAD";
        wload.kind = Spec::Kind::Move;
        wload.level = ComputeLevel::Warp;
        wload.a = {16, 16, std::nullopt, {}, {}};
        wload.c = {16, 16, std::nullopt, {MemKind::FR}, {}};
        wload.sim = SimSemantics::WMMA_LOAD;
        v.push_back(wload);

        Instruction wstore;
        wstore.name = "WMMA_STORE";
        wstore.kind = Spec::Kind::Move;
        wstore.level = ComputeLevel::Warp;
        wstore.a = {16, 16, std::nullopt, {MemKind::FR}, {}};
        wstore.c = {16, 16, std::nullopt, {MemKind::GL, MemKind::SH, MemKind::RF}, {}};
        wstore.sim = SimSemantics::WMMA_STORE;
        v.push_back(wstore);

        // HMMA.884.F16.TN: emittable as inline PTX, never simulated.
        Instruction hmma;
        hmma.name = "HMMA.884.F16.TN";
        hmma.kind = Spec::Kind::MatMul;
        hmma.level = ComputeLevel::Thread;
        hmma.a = {1, 4, ElemType::F16, {MemKind::RF}, Major::RowMajor};
        hmma.b = {4, 1, ElemType::F16, {MemKind::RF}, Major::ColMajor};
        hmma.c = {1, 8, ElemType::F16, {MemKind::RF}, Major::ColMajor};
        hmma.sim = SimSemantics::OPAQUE;
        v.push_back(hmma);

        return v;
    }();
    return set;
}

// ---------------------------------------------------------------------------
// micro-kernels
// ---------------------------------------------------------------------------

// User-provided verbatim source registered against a concrete spec pattern.
// Placeholders listed in declared_vars are substituted at every occurrence;
// bodies are opaque to the simulator.
struct MicroKernel {
    std::string name;
    Spec pattern;
    std::string body;
    std::vector<std::string> declared_vars;

    bool matches(const Spec& s) const;
};

inline bool spec_equal(const Spec& x, const Spec& y) {
    if (x.kind != y.kind || x.level != y.level) return false;
    auto mat_eq = [](const MatrixRef& m, const MatrixRef& n) {
        return m.rows == n.rows && m.cols == n.cols && m.elem == n.elem && m.mem == n.mem &&
               m.layout.major == n.layout.major;
    };
    if (x.is_matmul())
        return mat_eq(x.mm().a, y.mm().a) && mat_eq(x.mm().b, y.mm().b) &&
               mat_eq(x.mm().c, y.mm().c);
    return mat_eq(x.mv().src, y.mv().src) && mat_eq(x.mv().dst, y.mv().dst);
}

inline bool MicroKernel::matches(const Spec& s) const { return spec_equal(pattern, s); }

struct MicroKernelSet {
    std::vector<MicroKernel> kernels;

    void register_kernel(MicroKernel mk) {
        for (const auto& k : kernels)
            if (spec_equal(k.pattern, mk.pattern))
                fail(ErrorKind::DuplicatePattern,
                     "micro-kernels '" + k.name + "' and '" + mk.name +
                         "' share the pattern " + spec_short_form(mk.pattern));
        kernels.push_back(std::move(mk));
    }

    const MicroKernel* find(const std::string& name) const {
        for (const auto& k : kernels)
            if (k.name == name) return &k;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// matching
// ---------------------------------------------------------------------------

struct Match {
    const Instruction* instruction = nullptr;
    const MicroKernel* micro_kernel = nullptr;

    explicit operator bool() const { return instruction || micro_kernel; }
    std::string name() const {
        if (micro_kernel) return micro_kernel->name;
        if (instruction) return instruction->name;
        return "";
    }
};

// Unique executable for a spec. Micro-kernels take precedence over
// built-ins; two matching built-ins are an ambiguity error. Registration
// already rejects duplicate micro-kernel patterns, so the result does not
// depend on registration order.
inline Match match_executable(const Spec& s, const std::vector<Instruction>& instrs,
                              const MicroKernelSet& mks) {
    for (const auto& mk : mks.kernels)
        if (mk.matches(s)) return Match{nullptr, &mk};
    const Instruction* found = nullptr;
    for (const auto& ins : instrs) {
        if (!ins.matches(s)) continue;
        if (found)
            fail(ErrorKind::AmbiguousMatch, "built-ins '" + found->name + "' and '" + ins.name +
                                                "' both match " + spec_short_form(s));
        found = &ins;
    }
    return Match{found, nullptr};
}

inline Match match_executable(const Spec& s) {
    static const MicroKernelSet empty;
    return match_executable(s, builtin_instructions(), empty);
}

// Result of `done`: the residual spec bound to the executable that will
// implement it.
struct ResidualBinding {
    Spec residual;
    Match match;
};

} // namespace anvil
