// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "accllm/attention/fused.hpp"
#include "accllm/attention/kv_cache.hpp"
#include "accllm/attention/kv_memory.hpp"
#include "accllm/attention/lambda_mask.hpp"
#include "accllm/compress/quantize.hpp"
#include "oracles.hpp"

using namespace accllm;
using namespace accllm::attn;

using oracle::attention_tolerance;
using oracle::head_rows;

namespace {

std::vector<std::size_t> row_keys(const AttentionMask& m, std::size_t i) { return m.visible(i); }

void fill_cache(LambdaKvCache& c, const DenseMatrix& k, const DenseMatrix& v, std::size_t upto) {
    for (std::size_t i = 0; i < upto; ++i) c.append(k.row(i), v.row(i), static_cast<std::int64_t>(i));
}

}  // namespace

// --------------------------------------------------------------------- mask

TEST(LambdaMask, HandEvaluatedRow) {
    const auto m = lambda_mask(6, 2, 3);
    EXPECT_EQ(row_keys(m, 5), (std::vector<std::size_t>{0, 1, 3, 4, 5}));
}

TEST(LambdaMask, WideWindowIsCausal) {
    for (std::size_t l : {1u, 5u, 17u}) EXPECT_EQ(lambda_mask(l, 2, l), AttentionMask::causal(l));
    EXPECT_EQ(lambda_mask(9, 0, 100), AttentionMask::causal(9));
}

TEST(LambdaMask, NoSinkUnitWindowIsDiagonal) {
    const auto m = lambda_mask(7, 0, 1);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(m(i, j), i == j);
    EXPECT_THROW(lambda_mask(0, 1, 1), ConfigError);
}

TEST(LambdaMask, PgmRendering) {
    EXPECT_EQ(mask_to_pgm(lambda_mask(3, 1, 1)), "P2\n3 3\n1\n1 0 0\n1 1 0\n1 0 1\n");
}

// -------------------------------------------------------------------- cache

TEST(KvCache, NoEvictionUntilFull) {
    LambdaKvCache c(2, 4, 3, 5);
    const std::vector<double> row(8, 1.0);
    for (std::int64_t p = 0; p < 8; ++p) EXPECT_FALSE(c.append(row, row, p).has_value());
    EXPECT_EQ(c.size(), 8u);
    const auto ev = c.append(row, row, 8);
    ASSERT_TRUE(ev.has_value());
    EXPECT_EQ(*ev, 3);
    EXPECT_EQ(c.positions(), (std::vector<std::int64_t>{0, 1, 2, 4, 5, 6, 7, 8}));
}

TEST(KvCache, DefaultBudgetEvictsFirstNonSink) {
    LambdaKvCache c(1, 2);
    const std::vector<double> row{0.5, -0.25};
    for (std::int64_t p = 0; p < 2048; ++p) ASSERT_FALSE(c.append(row, row, p).has_value());
    const auto ev = c.append(row, row, 2048);
    ASSERT_TRUE(ev.has_value());
    EXPECT_EQ(*ev, 4);
}

TEST(KvCache, RejectsNonMonotonicPositionsAndBadConfig) {
    LambdaKvCache c(1, 2, 1, 2);
    const std::vector<double> row{1, 2};
    c.append(row, row, 5);
    EXPECT_THROW(c.append(row, row, 5), Error);
    EXPECT_THROW(c.append(row, row, 3), Error);
    EXPECT_THROW(c.append(std::vector<double>{1}, row, 9), DimensionError);
    EXPECT_THROW(LambdaKvCache(1, 2, 4, 0), ConfigError);
    EXPECT_THROW(LambdaKvCache(1, 2, 4, 4, 3), ConfigError);
}

TEST(KvCache, ShortPrefillIsAllSinks) {
    LambdaKvCache c(1, 2, 4, 3);
    const std::vector<double> row{1, 2};
    for (std::int64_t p = 0; p < 3; ++p) c.append(row, row, p);
    EXPECT_EQ(c.positions(), (std::vector<std::int64_t>{0, 1, 2}));
}

TEST(KvCache, CapacityAndSinksHoldUnderRandomAppends) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto sinks = static_cast<std::size_t>(rng.integer(0, 4));
        const auto window = static_cast<std::size_t>(rng.integer(1, 6));
        LambdaKvCache c(2, 2, sinks, window);
        std::vector<std::int64_t> appended;
        std::int64_t pos = 0;
        for (int i = 0; i < 40; ++i) {
            pos += rng.integer(1, 3);
            const std::vector<double> row{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
            c.append(row, row, pos);
            appended.push_back(pos);
            ASSERT_LE(c.size(), sinks + window);
            const auto kept = c.positions();
            ASSERT_TRUE(std::is_sorted(kept.begin(), kept.end()));
            const std::size_t n_s = std::min(sinks, appended.size());
            for (std::size_t s = 0; s < n_s; ++s) ASSERT_EQ(kept[s], appended[s]);
            // The window holds the most recent appends, contiguous in append order.
            const std::size_t n_w = kept.size() - n_s;
            for (std::size_t w = 0; w < n_w; ++w) ASSERT_EQ(kept[n_s + w], appended[appended.size() - n_w + w]);
        }
    }
}

TEST(KvCache, StoresKv4CodesWithPerHeadScales) {
    LambdaKvCache c(2, 3, 1, 1);
    const std::vector<double> k{-3, 1, 2, 0, 0, 0};
    c.append(k, k, 0);
    EXPECT_DOUBLE_EQ(c.k_scale(0, 0), 3.0 / 7.0);
    EXPECT_EQ(c.k_scale(0, 1), kScaleFloor);
    const auto codes = c.k_codes(0, 0);
    EXPECT_EQ(std::vector<int>(codes.begin(), codes.end()), (std::vector<int>{-7, 2, 5}));
    EXPECT_EQ(c.code_bytes(), 6);
    EXPECT_EQ(c.scale_bytes(), 8);
}

TEST(KvCache, SnapshotRoundTrip) {
    Rng rng(4);
    LambdaKvCache c(2, 4, 2, 3);
    for (std::int64_t p = 0; p < 9; ++p) {
        const auto row = DenseMatrix::gaussian(1, 8, rng);
        c.append(row.row(0), row.row(0), p);
    }
    const auto bytes = c.dump();
    const auto back = LambdaKvCache::load(bytes);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(back.dequant_keys(), c.dequant_keys());
    EXPECT_EQ(back.dump(), bytes);
    auto bad = bytes;
    bad.pop_back();
    EXPECT_THROW(LambdaKvCache::load(bad), Error);
    // Appends continue from the restored state exactly as from the original.
    auto a = c;
    auto b = back;
    const std::vector<double> row(8, 0.5);
    EXPECT_EQ(a.append(row, row, 20), b.append(row, row, 20));
    EXPECT_TRUE(a == b);
    EXPECT_THROW(b.append(row, row, 20), Error);
}

TEST(KvCache, MaskAndCacheVisitTheSamePairs) {
    for (std::size_t sinks : {0u, 1u, 3u})
        for (std::size_t window : {1u, 2u, 5u}) {
            const std::size_t l = 14;
            const auto mask = lambda_mask(l, sinks, window);
            LambdaKvCache c(1, 1, sinks, window);
            std::set<std::pair<std::size_t, std::size_t>> from_mask, from_cache;
            for (std::size_t i = 0; i < l; ++i) {
                const std::vector<double> row{1.0};
                c.append(row, row, static_cast<std::int64_t>(i));
                for (auto p : c.positions()) from_cache.insert({i, static_cast<std::size_t>(p)});
                for (auto j : mask.visible(i)) from_mask.insert({i, j});
            }
            EXPECT_EQ(from_mask, from_cache) << sinks << "/" << window;
        }
}

// ------------------------------------------------------------------ memory

TEST(KvMemory, HeadlineTriple) {
    const auto dims = ModelDims::llama2_7b();
    const auto fp16 = kv_mem_bytes(dims, 7000, 16);
    const auto lam = kv_mem_bytes(dims, 2048, 16);
    const auto lam4 = kv_mem_bytes(dims, 2048, 4);
    EXPECT_DOUBLE_EQ(fp16.code_bytes, 2.0 * 32 * 7000 * 32 * 128 * 2);
    EXPECT_EQ(fp16.scale_bytes, 0.0);
    EXPECT_NEAR(fp16.code_gib() / 3.5 - 1.0, 0.0, 0.03);
    EXPECT_DOUBLE_EQ(lam.code_gib(), 1.0);
    EXPECT_DOUBLE_EQ(lam4.code_gib(), 0.25);
    EXPECT_DOUBLE_EQ(lam4.scale_bytes, 2.0 * 32 * 2048 * 32 * 2);
    EXPECT_NEAR(1.0 - lam.code_bytes / fp16.code_bytes, 0.7074, 1e-4);
    EXPECT_DOUBLE_EQ(kv_mem_bytes(dims, 7168, 16).code_gib(), 3.5);
    EXPECT_THROW(kv_mem_bytes(dims, -1, 4), ConfigError);
}

TEST(KvMemory, MatchesCacheAccounting) {
    const ModelDims dims{1, 8, 2, 4, 16};
    LambdaKvCache c(2, 4, 2, 3);
    const std::vector<double> row(8, 1.0);
    for (std::int64_t p = 0; p < 10; ++p) c.append(row, row, p);
    const auto m = kv_mem_bytes(dims, static_cast<std::int64_t>(c.size()), 4);
    EXPECT_EQ(m.code_bytes, static_cast<double>(c.code_bytes()));
    EXPECT_EQ(m.scale_bytes, static_cast<double>(c.scale_bytes()));
}

// ------------------------------------------------------------ fused kernel

TEST(Fused, SingleKeyReturnsValueRow) {
    Rng rng(1);
    const auto q = DenseMatrix::gaussian(1, 4, rng, 5.0);
    const auto k = DenseMatrix::gaussian(1, 4, rng, 5.0);
    const auto v = DenseMatrix::gaussian(1, 4, rng);
    const std::vector<std::size_t> keys{0};
    const auto out = fused_attention_row(q.row(0), k, v, 0, keys, 1);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out[c], v(0, c));
}

TEST(Fused, IdenticalKeysAverageValues) {
    Rng rng(2);
    const auto q = DenseMatrix::gaussian(1, 4, rng);
    auto k = DenseMatrix::gaussian(2, 4, rng);
    for (std::size_t c = 0; c < 4; ++c) k(1, c) = k(0, c);
    const auto v = DenseMatrix::gaussian(2, 4, rng);
    const std::vector<std::size_t> keys{0, 1};
    for (std::size_t chunk : {1u, 2u}) {
        const auto out = fused_attention_row(q.row(0), k, v, 0, keys, chunk);
        for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out[c], 0.5 * (v(0, c) + v(1, c)));
    }
}

TEST(Fused, ChunkSizesAgreeBitForBitAndMatchNaive) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto q = DenseMatrix::gaussian(1, 8, rng, 4.0);
        const auto k = DenseMatrix::gaussian(16, 8, rng, 4.0);
        const auto v = DenseMatrix::gaussian(16, 8, rng);
        const auto keys = all_keys(16);
        const auto expect = oracle::naive_attention_row(std::vector<double>(q.row(0).begin(), q.row(0).end()),
                                                        oracle::to_rows(k), oracle::to_rows(v));
        const auto base = fused_attention_row(q.row(0), k, v, 0, keys, 1);
        for (std::size_t chunk : {1u, 3u, 4u, 16u, 64u}) {
            const auto out = fused_attention_row(q.row(0), k, v, 0, keys, chunk);
            EXPECT_EQ(out, base) << "chunk " << chunk;
            for (std::size_t c = 0; c < 8; ++c) EXPECT_LT(oracle::rel_err(out[c], expect[c], 1e-3), 1e-6);
        }
    }
}

TEST(Fused, LargeLogitsStayFinite) {
    const DenseMatrix q(1, 2, std::vector<double>{100.0, 100.0});
    const DenseMatrix k(3, 2, std::vector<double>{10, 10, -10, -10, 9, 9});
    const DenseMatrix v(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
    const auto keys = all_keys(3);
    const auto out = fused_attention_row(q.row(0), k, v, 0, keys, 1);
    EXPECT_TRUE(std::isfinite(out[0]) && std::isfinite(out[1]));
    EXPECT_NEAR(out[0], 1.0, 1e-12);
}

TEST(Fused, EmptyVisibleSetThrows) {
    const DenseMatrix q(1, 2), k(1, 2), v(1, 2);
    EXPECT_THROW(fused_attention_row(q.row(0), k, v, 0, std::vector<std::size_t>{}, 1), Error);
    EXPECT_THROW(fused_attention_row(q.row(0), k, v, 0, std::vector<std::size_t>{0}, 0), ConfigError);
    LambdaKvCache c(1, 2);
    EXPECT_THROW(decode_step(std::vector<double>{1, 2}, c), Error);
}

TEST(Fused, MatchesNaiveOnRandomMaskedInstances) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto l = static_cast<std::size_t>(rng.integer(1, 64));
        const ModelDims dims{1, 8, 2, 4, 16};
        const auto q = DenseMatrix::gaussian(l, 8, rng, 2.0);
        const auto k = DenseMatrix::gaussian(l, 8, rng, 2.0);
        const auto v = DenseMatrix::gaussian(l, 8, rng);
        const auto mask = lambda_mask(l, static_cast<std::size_t>(rng.integer(0, 4)),
                                      static_cast<std::size_t>(rng.integer(1, 70)));
        for (std::size_t chunk : {1u, 4u, 16u}) {
            const auto out = fused_multi_head_attention(q, k, v, dims, mask, chunk);
            for (std::size_t i = 0; i < l; ++i) {
                const auto keys = mask.visible(i);
                for (std::size_t h = 0; h < 2; ++h) {
                    const std::vector<double> qi(q.row(i).begin() + h * 4, q.row(i).begin() + h * 4 + 4);
                    const auto expect = oracle::naive_attention_row(qi, head_rows(k, keys, h * 4, 4),
                                                                    head_rows(v, keys, h * 4, 4));
                    for (std::size_t c = 0; c < 4; ++c)
                        ASSERT_LT(oracle::rel_err(out(i, h * 4 + c), expect[c], 1e-3), 1e-6);
                }
            }
        }
    }
}

// ------------------------------------------------------------------ decode

TEST(Decode, OneTokenCacheReturnsItsValue) {
    Rng rng(5);
    LambdaKvCache c(2, 4);
    const auto kv = DenseMatrix::gaussian(2, 8, rng);
    c.append(kv.row(0), kv.row(1), 0);
    const auto q = DenseMatrix::gaussian(1, 8, rng);
    const auto out = decode_step(q.row(0), c);
    const auto vd = c.dequant_values();
    for (std::size_t col = 0; col < 8; ++col) EXPECT_DOUBLE_EQ(out(0, col), vd(0, col));
}

TEST(Decode, ChunkInvariantOnCache) {
    Rng rng(6);
    LambdaKvCache c(2, 4, 2, 6);
    const auto k = DenseMatrix::gaussian(20, 8, rng);
    const auto v = DenseMatrix::gaussian(20, 8, rng);
    fill_cache(c, k, v, 20);
    const auto q = DenseMatrix::gaussian(1, 8, rng);
    const auto base = decode_step(q.row(0), c, 1);
    for (std::size_t chunk : {2u, 4u, 16u}) EXPECT_EQ(decode_step(q.row(0), c, chunk), base);
}

// Full-history and post-eviction caches against float attention over the
// retained positions, with an error budget derived from the actual KV4/A8
// perturbation of values and scores.
TEST(Decode, MatchesFloatAttentionWithinQuantTolerance) {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t heads = 2, dk = 8, d = heads * dk;
        const std::size_t sinks = 2, window = 6;
        const auto l = static_cast<std::size_t>(rng.integer(1, 20));  // covers both regimes
        const auto q = DenseMatrix::gaussian(l, d, rng);
        const auto k = DenseMatrix::gaussian(l, d, rng);
        const auto v = DenseMatrix::gaussian(l, d, rng);
        LambdaKvCache c(heads, dk, sinks, window);
        fill_cache(c, k, v, l);
        const auto out = decode_step(q.row(l - 1), c);
        const auto kept = c.positions();
        const auto mask = lambda_mask(l, sinks, window);
        std::vector<std::size_t> expect_keys = mask.visible(l - 1);
        ASSERT_EQ(kept.size(), expect_keys.size());

        const auto qq = compress::quant_per_token_act(DenseMatrix(1, d, std::vector<double>(q.row(l - 1).begin(), q.row(l - 1).end())), 8);
        const auto qd = qq.dequantize();
        const auto kd = c.dequant_keys();
        const auto vd = c.dequant_values();
        for (std::size_t h = 0; h < heads; ++h) {
            double ds = 0.0, dv = 0.0, vmax = 0.0;
            for (std::size_t j = 0; j < kept.size(); ++j) {
                const auto pos = static_cast<std::size_t>(kept[j]);
                double s = 0.0, sq = 0.0;
                for (std::size_t col = h * dk; col < (h + 1) * dk; ++col) {
                    s += q(l - 1, col) * k(pos, col);
                    sq += qd(0, col) * kd(j, col);
                    dv = std::max(dv, std::abs(vd(j, col) - v(pos, col)));
                    vmax = std::max(vmax, std::abs(v(pos, col)));
                }
                ds = std::max(ds, std::abs(s - sq) / std::sqrt(static_cast<double>(dk)));
            }
            const std::vector<double> qi(q.row(l - 1).begin() + h * dk, q.row(l - 1).begin() + (h + 1) * dk);
            const auto ref = oracle::naive_attention_row(qi, head_rows(k, expect_keys, h * dk, dk),
                                                         head_rows(v, expect_keys, h * dk, dk));
            const double tol = attention_tolerance(dv, ds, vmax);
            for (std::size_t col = 0; col < dk; ++col) EXPECT_LE(std::abs(out(0, h * dk + col) - ref[col]), tol);
        }
    }
}

TEST(Decode, CachedPrefillEqualsPerTokenDecode) {
    Rng rng(8);
    const auto q = DenseMatrix::gaussian(12, 8, rng);
    const auto k = DenseMatrix::gaussian(12, 8, rng);
    const auto v = DenseMatrix::gaussian(12, 8, rng);
    LambdaKvCache a(2, 4, 1, 4), b(2, 4, 1, 4);
    const auto pre = cached_prefill_attention(q, k, v, a, 4);
    for (std::size_t i = 0; i < 12; ++i) {
        b.append(k.row(i), v.row(i), static_cast<std::int64_t>(i));
        const auto row = decode_step(q.row(i), b, 4);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(pre(i, c), row(0, c));
    }
}
