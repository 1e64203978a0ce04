#pragma once

#include <optional>
#include <string>
#include <variant>

#include "anvil/error.hpp"

namespace anvil {

// ---------------------------------------------------------------------------
// element types
// ---------------------------------------------------------------------------

enum class ElemType { F32, F16 };

inline int bit_width(ElemType t) { return t == ElemType::F32 ? 32 : 16; }
inline int byte_width(ElemType t) { return bit_width(t) / 8; }

inline const char* elem_name(ElemType t) { return t == ElemType::F32 ? "f32" : "f16"; }
inline const char* elem_c_type(ElemType t) { return t == ElemType::F32 ? "float" : "half"; }

// ---------------------------------------------------------------------------
// memory hierarchy
// ---------------------------------------------------------------------------

// GL > SH > { RF, FR }. Loads move data strictly downward in rank.
enum class MemKind { GL, SH, RF, FR };

struct MemLevel {
    MemKind kind = MemKind::GL;
    // fragment geometry, only meaningful for FR
    int fr_m = 16, fr_n = 16, fr_k = 16;

    static MemLevel gl() { return {MemKind::GL}; }
    static MemLevel sh() { return {MemKind::SH}; }
    static MemLevel rf() { return {MemKind::RF}; }
    static MemLevel fr(int m = 16, int n = 16, int k = 16) { return {MemKind::FR, m, n, k}; }

    bool operator==(const MemLevel& o) const {
        if (kind != o.kind) return false;
        if (kind == MemKind::FR) return fr_m == o.fr_m && fr_n == o.fr_n && fr_k == o.fr_k;
        return true;
    }
    bool operator!=(const MemLevel& o) const { return !(*this == o); }
};

inline int mem_rank(MemKind k) {
    switch (k) {
        case MemKind::GL: return 0;
        case MemKind::SH: return 1;
        case MemKind::RF: return 2;
        case MemKind::FR: return 2;
    }
    return 0;
}

inline std::string mem_name(const MemLevel& m) {
    switch (m.kind) {
        case MemKind::GL: return "GL";
        case MemKind::SH: return "SH";
        case MemKind::RF: return "RF";
        case MemKind::FR: return "FR";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// compute hierarchy
// ---------------------------------------------------------------------------

// Total order Kernel > Block > Warp > Thread; decomposition paths are
// monotonically non-increasing in this order.
enum class ComputeLevel { Kernel = 0, Block = 1, Warp = 2, Thread = 3 };

inline const char* level_name(ComputeLevel l) {
    switch (l) {
        case ComputeLevel::Kernel: return "Kernel";
        case ComputeLevel::Block: return "Block";
        case ComputeLevel::Warp: return "Warp";
        case ComputeLevel::Thread: return "Thread";
    }
    return "?";
}

constexpr int kWarpWidth = 32;
constexpr long kSharedMemoryBudget = 48 * 1024; // default per-SM byte budget

// ---------------------------------------------------------------------------
// storage layout
// ---------------------------------------------------------------------------

enum class Major { RowMajor, ColMajor };

struct Layout {
    Major major = Major::ColMajor;
    long pad_cols = 0; // extra columns appended to the minor dimension

    static Layout row_major(long pad = 0) { return {Major::RowMajor, pad}; }
    static Layout col_major(long pad = 0) { return {Major::ColMajor, pad}; }

    // Physical stride of the major dimension: cols+pad for row-major
    // matrices, rows+pad for col-major ones.
    long row_stride(long rows, long cols) const {
        (void)rows;
        return major == Major::RowMajor ? cols + pad_cols : 1;
    }
    long col_stride(long rows, long cols) const {
        (void)cols;
        return major == Major::ColMajor ? rows + pad_cols : 1;
    }
    long extent(long rows, long cols) const {
        return major == Major::RowMajor ? rows * (cols + pad_cols) : cols * (rows + pad_cols);
    }

    bool operator==(const Layout& o) const { return major == o.major && pad_cols == o.pad_cols; }
};

inline const char* major_name(Major m) { return m == Major::RowMajor ? "RowMajor" : "ColMajor"; }

// ---------------------------------------------------------------------------
// matrices and specs
// ---------------------------------------------------------------------------

struct MatrixRef {
    std::string name;
    long rows = 0, cols = 0;
    ElemType elem = ElemType::F32;
    MemLevel mem = MemLevel::gl();
    Layout layout = Layout::col_major();
};

inline MatrixRef make_matrix(std::string name, long rows, long cols, ElemType elem,
                             MemLevel mem, Layout layout) {
    if (rows < 1 || cols < 1)
        fail(ErrorKind::ZeroDim, "matrix '" + name + "' has degenerate shape " +
                                     std::to_string(rows) + "x" + std::to_string(cols));
    return MatrixRef{std::move(name), rows, cols, elem, mem, layout};
}

struct MatMulOp {
    MatrixRef a, b, c;
};

struct MoveOp {
    MatrixRef src, dst;
};

// A spec describes the computation left to implement: the operation, the
// shapes/locations/layouts of its operands, and the compute level that is
// responsible for it.
struct Spec {
    enum class Kind { MatMul, Move };

    Kind kind = Kind::MatMul;
    ComputeLevel level = ComputeLevel::Kernel;
    std::variant<MatMulOp, MoveOp> op;
    bool accumulate = false; // set by epilog: residual computes C += A*B

    const MatMulOp& mm() const { return std::get<MatMulOp>(op); }
    MatMulOp& mm() { return std::get<MatMulOp>(op); }
    const MoveOp& mv() const { return std::get<MoveOp>(op); }
    MoveOp& mv() { return std::get<MoveOp>(op); }

    bool is_matmul() const { return kind == Kind::MatMul; }
    bool is_move() const { return kind == Kind::Move; }

    long m() const { return is_matmul() ? mm().c.rows : mv().dst.rows; }
    long n() const { return is_matmul() ? mm().c.cols : mv().dst.cols; }
    long k() const { return is_matmul() ? mm().a.cols : 1; }
};

struct ElemTriple {
    ElemType a = ElemType::F32, b = ElemType::F32, c = ElemType::F32;
};
struct MemTriple {
    MemLevel a, b, c;
};
struct LayoutTriple {
    Layout a, b, c;
};

inline Spec make_matmul_spec(long m, long n, long k, ElemTriple elems, MemTriple mems,
                             LayoutTriple layouts, ComputeLevel level) {
    if (m < 1 || n < 1 || k < 1)
        fail(ErrorKind::ZeroDim, "matmul dims must be positive, got " + std::to_string(m) + "x" +
                                     std::to_string(n) + "x" + std::to_string(k));
    Spec s;
    s.kind = Spec::Kind::MatMul;
    s.level = level;
    s.op = MatMulOp{
        make_matrix("A", m, k, elems.a, mems.a, layouts.a),
        make_matrix("B", k, n, elems.b, mems.b, layouts.b),
        make_matrix("C", m, n, elems.c, mems.c, layouts.c),
    };
    return s;
}

inline Spec make_move_spec(MatrixRef src, MatrixRef dst, ComputeLevel level) {
    if (src.rows != dst.rows || src.cols != dst.cols)
        fail(ErrorKind::ShapeMismatch,
             "move endpoints differ in shape: " + std::to_string(src.rows) + "x" +
                 std::to_string(src.cols) + " vs " + std::to_string(dst.rows) + "x" +
                 std::to_string(dst.cols));
    if (src.elem != dst.elem)
        fail(ErrorKind::ShapeMismatch, "move endpoints differ in element type");
    Spec s;
    s.kind = Spec::Kind::Move;
    s.level = level;
    s.op = MoveOp{std::move(src), std::move(dst)};
    return s;
}

// Canonical short form: MatMul(M,N,K)(memA,memB,memC)(Level) or
// Move(RxC)(memSrc->memDst)(Level). FR always prints bare.
inline std::string spec_short_form(const Spec& s) {
    if (s.is_matmul()) {
        const auto& op = s.mm();
        return "MatMul(" + std::to_string(s.m()) + "," + std::to_string(s.n()) + "," +
               std::to_string(s.k()) + ")(" + mem_name(op.a.mem) + "," + mem_name(op.b.mem) +
               "," + mem_name(op.c.mem) + ")(" + level_name(s.level) + ")";
    }
    const auto& op = s.mv();
    return "Move(" + std::to_string(op.src.rows) + "x" + std::to_string(op.src.cols) + ")(" +
           mem_name(op.src.mem) + "->" + mem_name(op.dst.mem) + ")(" + level_name(s.level) + ")";
}

} // namespace anvil
