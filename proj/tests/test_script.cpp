#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "anvil/codegen.hpp"
#include "anvil/script.hpp"

using namespace anvil;

namespace {

const std::string kListings = ANVIL_LISTINGS_DIR;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("short forms round-trip through the parser") {
    const char* forms[] = {
        "MatMul(128,128,8)(GL,SH,RF)(Block)",
        "MatMul(1,1,1)(RF,RF,RF)(Thread)",
        "MatMul(16,16,16)(FR,FR,FR)(Warp)",
        "Move(16x16)(SH->FR)(Warp)",
        "Move(128x8)(GL->SH)(Block)",
    };
    for (const char* f : forms) CHECK(spec_short_form(parse_spec_short_form(f)) == f);
}

TEST_CASE("header options set element types and layouts") {
    ParsedScript s = parse_script("spec MatMul(16,16,16)(GL,GL,GL)(Kernel) elems f16 f16 f32 "
                                  "layouts rowmajor colmajor colmajor\ntile 1 1\ndone\n");
    CHECK(s.root.mm().a.elem == ElemType::F16);
    CHECK(s.root.mm().c.elem == ElemType::F32);
    CHECK(s.root.mm().a.layout.major == Major::RowMajor);
    CHECK(s.root.mm().b.layout.major == Major::ColMajor);
}

TEST_CASE("listing1 parses into the paper's step sequence") {
    ParsedScript script = parse_script(slurp(kListings + "/listing1.fi"));
    auto trace = elaborate(script.root, script.tree, script.micro_kernels);
    REQUIRE(trace.size() == 12);
    CHECK(trace[1].label == "tile(128,128)");
    CHECK(trace[2].label == "to(Block)");
    CHECK(spec_short_form(trace.back().spec) == "MatMul(1,1,512)(RF,RF,GL)(Thread)");

    REQUIRE(script.micro_kernels.kernels.size() == 1);
    const MicroKernel& mk = script.micro_kernels.kernels[0];
    CHECK(mk.name == "dot.cu");
    CHECK(spec_short_form(mk.pattern) == "MatMul(1,1,512)(RF,RF,GL)(Thread)");
    CHECK(mk.body.find("{K}") != std::string::npos);
    CHECK(mk.declared_vars.size() == 8);

    ResidualBinding binding = bind_done(trace.back().spec, "dot.cu", script.micro_kernels);
    CHECK(binding.match.micro_kernel == &mk);
}

TEST_CASE("parse errors carry line and column") {
    try {
        parse_script("spec MatMul(8,8,8)(GL,GL,GL)(Kernel)\nfrobnicate 1 2\ndone\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        parse_script("spec MatMul(8,8,8)(GL,GL,GL)(Kernel)\ntile 4 4 .swizzle ((id>>1\ndone\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
    }
}

TEST_CASE("semantic errors surface with the script line") {
    // tile 3 8 under an 8-wide spec: parses, then validation reports the line
    ParsedScript s = parse_script("spec MatMul(8,8,8)(GL,GL,GL)(Kernel)\ntile 3 8\ndone\n");
    ValidationReport r = validate(s.root, s.tree, s.micro_kernels);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations[0].kind == ErrorKind::NonDivisible);
    CHECK(r.violations[0].line == 2);
}

TEST_CASE("a separate to line attaches to the preceding tile") {
    ParsedScript a = parse_script("spec MatMul(64,64,1)(RF,RF,RF)(Warp)\ntile 8 8 .to thread\n"
                                  "tile 8 8\ndone\n");
    ParsedScript b = parse_script("spec MatMul(64,64,1)(RF,RF,RF)(Warp)\ntile 8 8\nto thread\n"
                                  "tile 8 8\ndone\n");
    CHECK(print_script(a) == print_script(b));

    CHECK_THROWS_AS(parse_script("spec MatMul(8,8,8)(GL,GL,GL)(Kernel)\nto block\ndone\n"), Error);
}

TEST_CASE("print is a parser fixpoint for the cookbook scripts") {
    for (const char* name :
         {"listing1.fi", "listing2.fi", "wmma_simple.fi", "hmma_ptx.fi", "move_identity.fi"}) {
        ParsedScript parsed = parse_script(slurp(kListings + "/" + std::string(name)));
        std::string canonical = print_script(parsed);
        INFO(name);
        ParsedScript reparsed = parse_script(canonical);
        CHECK(print_script(reparsed) == canonical);
        // same semantics: identical elaboration traces
        if (std::string(name) != "hmma_ptx.fi") {
            auto t1 = elaborate(parsed.root, parsed.tree, parsed.micro_kernels);
            auto t2 = elaborate(reparsed.root, reparsed.tree, reparsed.micro_kernels);
            REQUIRE(t1.size() == t2.size());
            for (size_t i = 0; i < t1.size(); ++i)
                CHECK(spec_short_form(t1[i].spec) == spec_short_form(t2[i].spec));
        }
    }
}

TEST_CASE("swizzle expressions survive a print/parse cycle") {
    ParsedScript s = parse_script(
        "spec MatMul(256,128,1)(RF,RF,RF)(Block)\n"
        "tile 8 8 .to warp\n"
        "tile 1 4 .to thread .swizzle ((id>>1)&0x07)|(id&0x30)|((id&0x01)<<3)\n"
        "tile 1 1\ndone\n");
    // 32x16 warp grid = 512 warps is inconsistent; only check the parse/print
    std::string canonical = print_script(s);
    // the parser associates left; hex renders as decimal
    CHECK(canonical.find(".swizzle ((((id>>1)&7)|(id&48))|((id&1)<<3))") != std::string::npos);
    ParsedScript again = parse_script(canonical);
    NodePtr tile = again.tree->child;
    REQUIRE(tile);
    REQUIRE(tile->tile_ref.swizzle);
    for (long id = 0; id < 64; ++id)
        CHECK(apply_swizzle(tile->tile_ref.swizzle, id) ==
              (((id >> 1) & 7) | (id & 48) | ((id & 1) << 3)));
}

TEST_CASE("fragment geometry parses in either spelling") {
    ParsedScript s = parse_script("spec MatMul(16,16,16)(GL,GL,GL)(Warp) elems f16 f16 f32\n"
                                  "load a fr(16,16,16) {\ndone\n}\ndone\n");
    NodePtr load = s.tree;
    REQUIRE(load->kind == NodeKind::Load);
    CHECK(load->target.kind == MemKind::FR);
    CHECK(load->target.fr_m == 16);
}

TEST_CASE("hmma script emits but refuses simulation through the CLI surface") {
    ParsedScript script = parse_script(slurp(kListings + "/hmma_ptx.fi"));
    REQUIRE(validate(script.root, script.tree, script.micro_kernels).ok());
    KernelSource ks = generate(script.root, script.tree, script.micro_kernels);
    CHECK(ks.source.find("mma.sync.aligned") != std::string::npos);
    Program prog = lower(script.root, script.tree, script.micro_kernels);
    CHECK_FALSE(prog.simulatable);
}
