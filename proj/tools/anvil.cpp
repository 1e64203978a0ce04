#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "anvil/anvil.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) anvil::fail(anvil::ErrorKind::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct SizeOverrides {
    std::optional<long> m, n, k;
};

// Re-derives the root spec (and micro-kernel patterns, which may reference
// M/N/K) under --m/--n/--k overrides.
void apply_overrides(anvil::ParsedScript& script, const SizeOverrides& sizes) {
    using namespace anvil;
    if (!sizes.m && !sizes.n && !sizes.k) return;
    if (script.root.is_matmul()) {
        auto& mm = script.root.mm();
        long m = sizes.m.value_or(script.root.m());
        long n = sizes.n.value_or(script.root.n());
        long k = sizes.k.value_or(script.root.k());
        mm.a.rows = m;
        mm.a.cols = k;
        mm.b.rows = k;
        mm.b.cols = n;
        mm.c.rows = m;
        mm.c.cols = n;
    } else {
        auto& mv = script.root.mv();
        long r = sizes.m.value_or(mv.src.rows);
        long c = sizes.n.value_or(mv.src.cols);
        mv.src.rows = mv.dst.rows = r;
        mv.src.cols = mv.dst.cols = c;
    }
    MicroKernelSet rebuilt;
    for (const auto& sec : script.micro_kernel_sections) {
        MicroKernel mk;
        mk.name = sec.name;
        mk.pattern = parse_spec_short_form(sec.pattern_line, &script.root, sec.line);
        mk.body = sec.body;
        mk.declared_vars = sec.vars;
        rebuilt.register_kernel(std::move(mk));
    }
    script.micro_kernels = std::move(rebuilt);
}

anvil::ParsedScript load_script(const std::string& path, const SizeOverrides& sizes) {
    anvil::ParsedScript script = anvil::parse_script(read_file(path));
    apply_overrides(script, sizes);
    anvil::ValidationReport report =
        anvil::validate(script.root, script.tree, script.micro_kernels);
    if (!report.ok()) {
        std::cerr << "validation failed for " << path << ":\n" << report.to_string();
        std::exit(1);
    }
    return script;
}

struct Inputs {
    anvil::Matrix a, b;
    bool has_b = false;
};

Inputs make_inputs(const anvil::ParsedScript& script, uint64_t seed, bool float_mode,
                   const std::string& load_a, const std::string& load_b) {
    using namespace anvil;
    Inputs in;
    const Spec& root = script.root;
    if (root.is_matmul()) {
        in.has_b = true;
        in.a = Matrix::zeros(root.m(), root.k(), root.mm().a.layout);
        in.b = Matrix::zeros(root.k(), root.n(), root.mm().b.layout);
        if (!load_a.empty()) in.a = read_matrix(load_a, root.mm().a.layout);
        else if (float_mode) fill_uniform(in.a, seed);
        else fill_integers(in.a, seed);
        if (!load_b.empty()) in.b = read_matrix(load_b, root.mm().b.layout);
        else if (float_mode) fill_uniform(in.b, seed + 1);
        else fill_integers(in.b, seed + 1);
    } else {
        in.a = Matrix::zeros(root.mv().src.rows, root.mv().src.cols, root.mv().src.layout);
        if (!load_a.empty()) in.a = read_matrix(load_a, root.mv().src.layout);
        else if (float_mode) fill_uniform(in.a, seed);
        else fill_integers(in.a, seed);
    }
    return in;
}

// Reference semantics for verify: naive triple loop in double precision.
// F16 operands see the same grid-rounded inputs the simulator ingests.
anvil::Matrix oracle(const anvil::ParsedScript& script, const Inputs& in) {
    using namespace anvil;
    const Spec& root = script.root;
    if (root.is_move()) {
        Matrix out = in.a;
        if (root.mv().src.elem == ElemType::F16) round_matrix_to_f16(out);
        return out;
    }
    Matrix a = in.a, b = in.b;
    if (root.mm().a.elem == ElemType::F16) round_matrix_to_f16(a);
    if (root.mm().b.elem == ElemType::F16) round_matrix_to_f16(b);
    Matrix c = Matrix::zeros(root.m(), root.n(), root.mm().c.layout);
    for (long i = 0; i < root.m(); ++i)
        for (long j = 0; j < root.n(); ++j) {
            double acc = 0.0;
            for (long kk = 0; kk < root.k(); ++kk)
                acc += static_cast<double>(a.at(i, kk)) * static_cast<double>(b.at(kk, j));
            c.at(i, j) = static_cast<float>(acc);
        }
    return c;
}

double max_abs_error(const anvil::Matrix& got, const anvil::Matrix& want) {
    double worst = 0.0;
    for (long r = 0; r < got.rows; ++r)
        for (long c = 0; c < got.cols; ++c)
            worst = std::max(worst, std::fabs(static_cast<double>(got.at(r, c)) -
                                              static_cast<double>(want.at(r, c))));
    return worst;
}

void dump_access_log(const std::string& path, const std::vector<anvil::AccessRecord>& log) {
    std::ofstream out(path);
    for (const auto& a : log)
        out << a.phase << " " << a.block << " " << a.thread << " " << a.op << " " << a.buffer << " "
            << a.index << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"anvil: a scheduling-language compiler for GPU matrix kernels"};
    app.require_subcommand(1);

    std::string script_path;
    SizeOverrides sizes;
    uint64_t seed = 1;
    bool float_mode = false;
    bool dump_trace = false;
    double tolerance = -1.0;
    std::string out_path, load_a, load_b, dump_c, access_log;

    auto add_common = [&](CLI::App* cmd, bool with_sim_flags) {
        cmd->add_option("script", script_path, "decomposition script (.fi)")->required();
        cmd->add_option("--m", sizes.m, "override M (must keep divisibility)");
        cmd->add_option("--n", sizes.n, "override N");
        cmd->add_option("--k", sizes.k, "override K");
        if (with_sim_flags) {
            cmd->add_option("--seed", seed, "input PRNG seed");
            cmd->add_flag("--float", float_mode, "uniform [-1,1] inputs instead of small integers");
            cmd->add_option("--load-a", load_a, "read A (or SRC) from a matrix text file");
            cmd->add_option("--load-b", load_b, "read B from a matrix text file");
            cmd->add_option("--dump-access-log", access_log,
                            "write the shared-memory access log (phase block thread op buffer index)");
        }
    };

    auto* cmd_elaborate = app.add_subcommand("elaborate", "print the intermediate-spec trace");
    add_common(cmd_elaborate, false);
    cmd_elaborate->add_flag("--dump-trace", dump_trace, "include nested move decompositions");

    auto* cmd_codegen = app.add_subcommand("codegen", "emit the GPU-dialect kernel source");
    add_common(cmd_codegen, false);
    cmd_codegen->add_option("--out", out_path, "write the kernel here instead of stdout");

    auto* cmd_simulate = app.add_subcommand("simulate", "run the decomposition on the CPU model");
    add_common(cmd_simulate, true);
    cmd_simulate->add_option("--dump-c", dump_c, "write the simulated output matrix");

    auto* cmd_verify =
        app.add_subcommand("verify", "simulate, compare against the naive oracle, check races");
    add_common(cmd_verify, true);
    cmd_verify->add_option("--tolerance", tolerance,
                           "max per-element error (default 0, or 1e-3 with --float)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_elaborate->parsed()) {
            anvil::ParsedScript script = load_script(script_path, sizes);
            auto trace = anvil::elaborate(script.root, script.tree, script.micro_kernels);
            std::cout << anvil::render_trace(trace, dump_trace);
            return 0;
        }
        if (cmd_codegen->parsed()) {
            anvil::ParsedScript script = load_script(script_path, sizes);
            anvil::KernelSource ks =
                anvil::generate(script.root, script.tree, script.micro_kernels);
            if (out_path.empty()) {
                std::cout << ks.source;
            } else {
                std::ofstream out(out_path);
                if (!out) anvil::fail(anvil::ErrorKind::IoError, "cannot write '" + out_path + "'");
                out << ks.source;
            }
            return 0;
        }
        if (cmd_simulate->parsed()) {
            anvil::ParsedScript script = load_script(script_path, sizes);
            anvil::Program prog = anvil::lower(script.root, script.tree, script.micro_kernels);
            Inputs in = make_inputs(script, seed, float_mode, load_a, load_b);
            anvil::RunOptions opts;
            opts.log_accesses = !access_log.empty();
            anvil::RunResult result =
                anvil::run(prog, in.a, in.has_b ? &in.b : nullptr, opts);
            if (!access_log.empty()) dump_access_log(access_log, result.log);
            if (!dump_c.empty()) anvil::write_matrix(dump_c, result.output);
            double max_abs = 0.0;
            for (long r = 0; r < result.output.rows; ++r)
                for (long c = 0; c < result.output.cols; ++c)
                    max_abs = std::max(max_abs, std::fabs(double(result.output.at(r, c))));
            std::printf("c %ldx%ld digest=0x%016llx max_abs=%g races=%ld\n", result.output.rows,
                        result.output.cols,
                        static_cast<unsigned long long>(anvil::digest(result.output)), max_abs,
                        result.races.total);
            return 0;
        }
        if (cmd_verify->parsed()) {
            anvil::ParsedScript script = load_script(script_path, sizes);
            anvil::Program prog = anvil::lower(script.root, script.tree, script.micro_kernels);
            Inputs in = make_inputs(script, seed, float_mode, load_a, load_b);
            anvil::RunOptions opts;
            opts.collect_ownership = true;
            opts.log_accesses = !access_log.empty();
            anvil::RunResult result =
                anvil::run(prog, in.a, in.has_b ? &in.b : nullptr, opts);
            if (!access_log.empty()) dump_access_log(access_log, result.log);
            anvil::Matrix want = oracle(script, in);
            double err = max_abs_error(result.output, want);
            double tol = tolerance >= 0 ? tolerance : (float_mode ? 1e-3 : 0.0);
            bool ok = err <= tol && result.races.empty() && result.ownership.empty();
            std::printf("%s max_error=%g tolerance=%g races=%ld ownership_violations=%zu\n",
                        ok ? "PASS" : "FAIL", err, tol, result.races.total,
                        result.ownership.size());
            for (size_t i = 0; i < result.races.records.size() && i < 5; ++i) {
                const auto& r = result.races.records[i];
                std::printf("  race: %s[%ld] writer t%ld vs t%ld, phase %ld, block %ld\n",
                            r.buffer.c_str(), r.index, r.writer, r.other, r.phase, r.block);
            }
            for (size_t i = 0; i < result.ownership.size() && i < 5; ++i) {
                const auto& o = result.ownership[i];
                std::printf("  ownership: %s[%ld] owner %ld accessed by %ld, block %ld\n",
                            o.buffer.c_str(), o.index, o.owner, o.accessor, o.block);
            }
            return ok ? 0 : 1;
        }
    } catch (const anvil::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
