#include <catch_amalgamated.hpp>

#include <cstdlib>

#include <fstream>
#include <set>
#include <sstream>

#include "anvil/script.hpp"
#include "anvil/sim.hpp"
#include "support/oracle.hpp"
#include "support/tree_gen.hpp"

using namespace anvil;
using anvil::testing::max_abs_error;
using anvil::testing::naive_matmul;

namespace {

const std::string kListings = ANVIL_LISTINGS_DIR;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParsedScript load(const std::string& name) { return parse_script(slurp(kListings + "/" + name)); }

struct MatMulInputs {
    Matrix a, b;
};

MatMulInputs integer_inputs(const Spec& root, uint64_t seed) {
    MatMulInputs in;
    in.a = Matrix::zeros(root.m(), root.k(), root.mm().a.layout);
    in.b = Matrix::zeros(root.k(), root.n(), root.mm().b.layout);
    fill_integers(in.a, seed);
    fill_integers(in.b, seed + 1);
    return in;
}

} // namespace

TEST_CASE("listing2 simulation equals the naive oracle exactly") {
    ParsedScript script = load("listing2.fi");
    MatMulInputs in = integer_inputs(script.root, 7);
    RunResult result = run(script.root, script.tree, in.a, &in.b, {}, script.micro_kernels);
    Matrix want = naive_matmul(script.root.m(), script.root.n(), script.root.k(), in.a, in.b);
    CHECK(max_abs_error(result.output, want) == 0.0);
    CHECK(result.races.empty());
}

TEST_CASE("move root copies bitwise") {
    ParsedScript script = load("move_identity.fi");
    Matrix src = Matrix::zeros(8, 8, script.root.mv().src.layout);
    fill_uniform(src, 11);
    RunResult result = run(script.root, script.tree, src, nullptr, {}, script.micro_kernels);
    for (long r = 0; r < 8; ++r)
        for (long c = 0; c < 8; ++c) REQUIRE(result.output.at(r, c) == src.at(r, c));
    CHECK(result.races.empty());
}

TEST_CASE("removing the A-load barrier produces a detectable race") {
    ParsedScript script = load("listing2.fi");
    for (NodePtr n = script.tree; n; n = n->child)
        if (n->kind == NodeKind::Load && n->operand == Operand::A && n->target.kind == MemKind::SH)
            n->load_ref.no_sync = true;
    MatMulInputs in = integer_inputs(script.root, 7);
    RunOptions opts;
    opts.log_accesses = true;
    RunResult result = run(script.root, script.tree, in.a, &in.b, opts, script.micro_kernels);
    CHECK_FALSE(result.races.empty());

    // the warp-cooperative A tile is read by other warps in the same phase
    bool cross_warp = false;
    for (const auto& r : result.races.records)
        cross_warp = cross_warp || (r.writer / 32 != r.other / 32);
    CHECK(cross_warp);

    SECTION("the log-based detector agrees with the online one") {
        RaceReport from_log = detect_races(result.log);
        CHECK(from_log.total == result.races.total);
    }
}

TEST_CASE("detect_races flags same-phase conflicts only") {
    SECTION("write-write, same phase, different threads") {
        std::vector<AccessRecord> log{
            {0, 0, 0, 'W', "buf", 0},
            {0, 0, 1, 'W', "buf", 0},
        };
        RaceReport r = detect_races(log);
        REQUIRE(r.total == 1);
        CHECK(r.records[0].buffer == "buf");
    }
    SECTION("write then read across a barrier is clean") {
        std::vector<AccessRecord> log{
            {0, 0, 0, 'W', "buf", 5},
            {1, 0, 1, 'R', "buf", 5},
        };
        CHECK(detect_races(log).empty());
    }
    SECTION("read-read sharing is clean") {
        std::vector<AccessRecord> log{
            {0, 0, 0, 'R', "buf", 5},
            {0, 0, 1, 'R', "buf", 5},
        };
        CHECK(detect_races(log).empty());
    }
}

TEST_CASE("ownership: listing2's direct RF->GL store is clean") {
    ParsedScript script = load("listing2.fi");
    auto violations = check_ownership(script.root, script.tree, script.micro_kernels);
    CHECK(violations.empty());
}

TEST_CASE("ownership: a transposed lane store without an SH hop fails") {
    ParsedScript script = load("listing2.fi");
    NodePtr epilog;
    for (NodePtr n = script.tree; n; n = n->child)
        if (n->kind == NodeKind::Epilog) epilog = n;
    REQUIRE(epilog);
    NodePtr thread_tile = epilog->store_decomp;
    while (thread_tile && !(thread_tile->kind == NodeKind::Tile && thread_tile->tile_ref.to &&
                            *thread_tile->tile_ref.to == ComputeLevel::Thread))
        thread_tile = thread_tile->child;
    REQUIRE(thread_tile);
    thread_tile->tile_ref.layout = Major::ColMajor; // compute uses the row-major default

    REQUIRE(validate(script.root, script.tree, script.micro_kernels).ok());
    auto violations = check_ownership(script.root, script.tree, script.micro_kernels);
    CHECK_FALSE(violations.empty());

    // off-diagonal lanes read cells owned by their transposed counterparts
    std::set<long> offenders;
    for (const auto& v : violations) {
        CHECK(v.owner != v.accessor);
        offenders.insert(v.accessor % 32);
    }
    CHECK(offenders.size() > 20);

    SECTION("run in strict mode reports the violation as an error") {
        MatMulInputs in = integer_inputs(script.root, 3);
        CHECK_THROWS_AS(run(script.root, script.tree, in.a, &in.b, {}, script.micro_kernels),
                        Error);
    }
}

TEST_CASE("ownership: a single-thread tree is vacuously clean") {
    Spec root = make_matmul_spec(4, 4, 4, {}, {MemLevel::gl(), MemLevel::gl(), MemLevel::gl()},
                                 {Layout::col_major(), Layout::col_major(), Layout::col_major()},
                                 ComputeLevel::Thread);
    NodePtr chain = n_tile(1, 1, {}, n_done());
    chain = n_load(Operand::B, MemLevel::rf(), n_tile(1, 1, {}, n_done()), {}, std::move(chain));
    chain = n_load(Operand::A, MemLevel::rf(), n_tile(1, 1, {}, n_done()), {}, std::move(chain));
    chain = n_split(1, {}, std::move(chain));
    chain = n_epilog(MemLevel::rf(), n_tile(1, 1, {}, n_done()), n_tile(1, 1, {}, n_done()),
                     std::move(chain));
    REQUIRE(validate(root, chain).ok());
    CHECK(check_ownership(root, chain).empty());

    Matrix a = Matrix::zeros(4, 4), b = Matrix::zeros(4, 4);
    fill_integers(a, 21);
    fill_integers(b, 22);
    RunResult result = run(root, chain, a, &b);
    CHECK(max_abs_error(result.output, naive_matmul(4, 4, 4, a, b)) == 0.0);
}

TEST_CASE("float inputs stay within the documented tolerance") {
    ParsedScript script = load("listing2.fi");
    Matrix a = Matrix::zeros(script.root.m(), script.root.k(), script.root.mm().a.layout);
    Matrix b = Matrix::zeros(script.root.k(), script.root.n(), script.root.mm().b.layout);
    fill_uniform(a, 5);
    fill_uniform(b, 6);
    RunResult result = run(script.root, script.tree, a, &b, {}, script.micro_kernels);
    Matrix want = naive_matmul(script.root.m(), script.root.n(), script.root.k(), a, b);
    CHECK(max_abs_error(result.output, want) <= 1e-3);
}

TEST_CASE("mismatched input shapes are rejected") {
    ParsedScript script = load("listing2.fi");
    Matrix bad = Matrix::zeros(64, 32);
    Matrix b = Matrix::zeros(32, 128);
    CHECK_THROWS_AS(run(script.root, script.tree, bad, &b, {}, script.micro_kernels), Error);
    try {
        run(script.root, script.tree, bad, &b, {}, script.micro_kernels);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
}

TEST_CASE("matrix text files round-trip integer data") {
    Matrix m = Matrix::zeros(5, 3, Layout::row_major());
    fill_integers(m, 77);
    std::string path = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") +
                       "/anvil_matrix_io_test.txt";
    write_matrix(path, m);
    Matrix back = read_matrix(path, Layout::row_major());
    REQUIRE(back.rows == 5);
    REQUIRE(back.cols == 3);
    for (long r = 0; r < 5; ++r)
        for (long c = 0; c < 3; ++c) REQUIRE(back.at(r, c) == m.at(r, c));
    CHECK(digest(back) == digest(m));
    CHECK_THROWS_AS(read_matrix(path + ".missing"), Error);
}

TEST_CASE("simulation is deterministic") {
    ParsedScript script = load("listing2.fi");
    MatMulInputs in = integer_inputs(script.root, 13);
    RunResult r1 = run(script.root, script.tree, in.a, &in.b, {}, script.micro_kernels);
    RunResult r2 = run(script.root, script.tree, in.a, &in.b, {}, script.micro_kernels);
    CHECK(digest(r1.output) == digest(r2.output));
    CHECK(r1.races.total == r2.races.total);
}

TEST_CASE("micro-kernels and opaque residuals are unsimulatable") {
    ParsedScript hmma = load("hmma_ptx.fi");
    Matrix a = Matrix::zeros(16, 8), b = Matrix::zeros(8, 16);
    CHECK_THROWS_AS(run(hmma.root, hmma.tree, a, &b, {}, hmma.micro_kernels), Error);
    try {
        run(hmma.root, hmma.tree, a, &b, {}, hmma.micro_kernels);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnsimulatableResidual);
    }

    // a tree bound to a micro-kernel is rejected the same way
    Spec root = make_matmul_spec(2, 2, 2, {}, {MemLevel::rf(), MemLevel::rf(), MemLevel::gl()},
                                 {Layout::col_major(), Layout::col_major(), Layout::col_major()},
                                 ComputeLevel::Thread);
    MicroKernelSet mks;
    MicroKernel mk;
    mk.name = "dot.cu";
    mk.pattern = make_matmul_spec(1, 1, 2, {}, {MemLevel::rf(), MemLevel::rf(), MemLevel::gl()},
                                  {Layout::col_major(), Layout::col_major(), Layout::col_major()},
                                  ComputeLevel::Thread);
    mk.body = "{C} = 0.0f;\n";
    mk.declared_vars = {"C"};
    mks.register_kernel(mk);
    NodePtr tree = n_tile(1, 1, {}, n_done("dot.cu"));
    Matrix a2 = Matrix::zeros(2, 2), b2 = Matrix::zeros(2, 2);
    CHECK_THROWS_AS(run(root, tree, a2, &b2, {}, mks), Error);
}

TEST_CASE("wmma path matches the oracle on grid-rounded inputs") {
    ParsedScript script = load("wmma_simple.fi");
    Matrix a = Matrix::zeros(64, 16, script.root.mm().a.layout);
    Matrix b = Matrix::zeros(16, 64, script.root.mm().b.layout);
    fill_uniform(a, 31);
    fill_uniform(b, 32);
    RunResult result = run(script.root, script.tree, a, &b, {}, script.micro_kernels);

    Matrix ar = a, br = b;
    round_matrix_to_f16(ar);
    round_matrix_to_f16(br);
    Matrix want = naive_matmul(64, 64, 16, ar, br);
    CHECK(max_abs_error(result.output, want) <= 1.0 / 256.0);
    CHECK(result.races.empty());
    CHECK(check_ownership(script.root, script.tree, script.micro_kernels).empty());
}

TEST_CASE("random valid trees simulate exactly with default synchronization") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        auto gen = anvil::testing::random_tree(seed);
        INFO(gen.desc);
        REQUIRE(validate(gen.root, gen.tree).ok());
        Matrix a = Matrix::zeros(gen.root.m(), gen.root.k());
        Matrix b = Matrix::zeros(gen.root.k(), gen.root.n());
        fill_integers(a, seed * 2 + 1);
        fill_integers(b, seed * 2 + 2);
        RunResult result = run(gen.root, gen.tree, a, &b);
        Matrix want = naive_matmul(gen.root.m(), gen.root.n(), gen.root.k(), a, b);
        REQUIRE(max_abs_error(result.output, want) == 0.0);
        REQUIRE(result.races.empty());
    }
}
