#pragma once

// Random valid register-blocked decompositions over divisor lattices.
// Construction goes bottom-up (lane tile -> warp tile -> block tile -> grid)
// so unit counts always come out exact; every generated tree validates and
// binds an FMA residual.

#include <optional>
#include <string>

#include "anvil/decomp.hpp"
#include "anvil/matrix.hpp"

namespace anvil::testing {

struct GeneratedTree {
    Spec root;
    NodePtr tree;
    std::string desc;
};

namespace gen_detail {

// Cooperative Move decomposition of an R x C slice over `warps` warps and
// 32 lanes per warp, ending in per-element copies.
inline NodePtr coop_move(Rng& rng, long rows, long cols, long warps) {
    std::vector<std::pair<long, long>> warp_splits;
    for (long wr = 1; wr <= warps; ++wr) {
        if (warps % wr != 0) continue;
        long wc = warps / wr;
        if (rows % wr == 0 && cols % wc == 0) warp_splits.push_back({wr, wc});
    }
    if (warp_splits.empty()) return nullptr;
    auto [wr, wc] = warp_splits[rng.next() % warp_splits.size()];
    long r1 = rows / wr, c1 = cols / wc;

    std::vector<std::pair<long, long>> lane_splits;
    for (long lr = 1; lr <= 32; ++lr) {
        if (32 % lr != 0) continue;
        long lc = 32 / lr;
        if (r1 % lr == 0 && c1 % lc == 0) lane_splits.push_back({lr, lc});
    }
    if (lane_splits.empty()) return nullptr;
    auto [lr, lc] = lane_splits[rng.next() % lane_splits.size()];
    long r2 = r1 / lr, c2 = c1 / lc;

    NodePtr chain = n_done();
    chain = n_tile(1, 1, {}, std::move(chain));
    TileRefinements lane_ref;
    lane_ref.to = ComputeLevel::Thread;
    chain = n_tile(r2, c2, std::move(lane_ref), std::move(chain));
    TileRefinements warp_ref;
    warp_ref.to = ComputeLevel::Warp;
    chain = n_tile(r1, c1, std::move(warp_ref), std::move(chain));
    return chain;
}

} // namespace gen_detail

inline GeneratedTree random_tree(uint64_t seed) {
    Rng rng(seed * 0x9e3779b9u + 17);
    auto pick = [&rng](std::initializer_list<long> xs) {
        auto it = xs.begin();
        std::advance(it, static_cast<long>(rng.next() % xs.size()));
        return *it;
    };

    long lanes_m = pick({1, 2, 4, 8, 16, 32});
    long lanes_n = 32 / lanes_m;
    long tm = pick({1, 2, 4});
    long tn = pick({1, 2, 4});
    long wm = lanes_m * tm, wn = lanes_n * tn;
    long warps_m = pick({1, 2}), warps_n = pick({1, 2});
    long bm = wm * warps_m, bn = wn * warps_n;
    long grid_m = pick({1, 2}), grid_n = pick({1, 2});
    long m = bm * grid_m, n = bn * grid_n;
    long kb = pick({4, 8, 16});
    long k = kb * pick({1, 2, 4});
    while (m > 256) m /= 2, bm /= 2, wm /= 2, tm /= 2;
    while (n > 256) n /= 2, bn /= 2, wn /= 2, tn /= 2;
    if (tm < 1 || tn < 1 || wm < lanes_m || wn < lanes_n) return random_tree(seed + 7919);
    if (bm % wm != 0 || bn % wn != 0 || wm % lanes_m != 0 || wn % lanes_n != 0 ||
        m % bm != 0 || n % bn != 0)
        return random_tree(seed + 7919);
    if (m * n * k > (1L << 21)) return random_tree(seed + 7919); // keep simulation cheap

    long warps = warps_m * warps_n;
    bool use_sh = rng.next() % 2 == 0;
    bool unroll_leaf = rng.next() % 4 == 0;
    Major thread_order = rng.next() % 2 ? Major::RowMajor : Major::ColMajor;
    Major warp_order = rng.next() % 2 ? Major::RowMajor : Major::ColMajor;
    long pad = use_sh && rng.next() % 2 ? 4 : 0;

    NodePtr a_move, b_move;
    if (use_sh) {
        a_move = gen_detail::coop_move(rng, bm, kb, warps);
        b_move = gen_detail::coop_move(rng, kb, bn, warps);
        use_sh = a_move && b_move;
    }

    auto warp_tile = [&](NodePtr child) {
        TileRefinements r;
        r.to = ComputeLevel::Warp;
        r.layout = warp_order;
        return n_tile(wm, wn, std::move(r), std::move(child));
    };
    auto thread_tile = [&](NodePtr child) {
        TileRefinements r;
        r.to = ComputeLevel::Thread;
        r.layout = thread_order;
        return n_tile(tm, tn, std::move(r), std::move(child));
    };
    auto leaf_tiles = [&](NodePtr done) {
        TileRefinements r;
        r.unroll = unroll_leaf;
        return n_tile(1, 1, std::move(r), std::move(done));
    };

    // epilog decompositions mirror the compute tiling exactly
    auto mirror_chain = [&] { return warp_tile(thread_tile(leaf_tiles(n_done()))); };

    // innermost: per-thread RF loads and the FMA leaf
    NodePtr chain = leaf_tiles(n_done());
    chain = n_load(Operand::B, MemLevel::rf(), n_tile(1, 1, {}, n_done()), {}, std::move(chain));
    chain = n_load(Operand::A, MemLevel::rf(), n_tile(1, 1, {}, n_done()), {}, std::move(chain));
    if (kb > 1) chain = n_split(1, {}, std::move(chain));
    chain = thread_tile(std::move(chain));
    chain = warp_tile(std::move(chain));

    if (use_sh) {
        LoadRefinements a_ref, b_ref;
        a_ref.pad = pad;
        bool a_first = rng.next() % 2 == 0;
        if (a_first) {
            chain = n_load(Operand::B, MemLevel::sh(), std::move(b_move), b_ref, std::move(chain));
            chain = n_load(Operand::A, MemLevel::sh(), std::move(a_move), a_ref, std::move(chain));
        } else {
            chain = n_load(Operand::A, MemLevel::sh(), std::move(a_move), a_ref, std::move(chain));
            chain = n_load(Operand::B, MemLevel::sh(), std::move(b_move), b_ref, std::move(chain));
        }
    }

    SplitRefinements split_ref;
    split_ref.sync = use_sh; // barrier separates reduction iterations when SH is staged
    chain = n_split(kb, split_ref, std::move(chain));
    chain = n_epilog(MemLevel::rf(), mirror_chain(), mirror_chain(), std::move(chain));

    TileRefinements block_ref;
    block_ref.to = ComputeLevel::Block;
    chain = n_tile(bm, bn, std::move(block_ref), std::move(chain));

    GeneratedTree out;
    out.root = make_matmul_spec(m, n, k, {}, {MemLevel::gl(), MemLevel::gl(), MemLevel::gl()},
                                {Layout::col_major(), Layout::col_major(), Layout::col_major()},
                                ComputeLevel::Kernel);
    out.tree = std::move(chain);
    out.desc = "M=" + std::to_string(m) + " N=" + std::to_string(n) + " K=" + std::to_string(k) +
               " block=" + std::to_string(bm) + "x" + std::to_string(bn) + " warp=" +
               std::to_string(wm) + "x" + std::to_string(wn) + " thread=" + std::to_string(tm) +
               "x" + std::to_string(tn) + (use_sh ? " sh" : "") + " kb=" + std::to_string(kb);
    return out;
}

} // namespace anvil::testing
