import numpy as np
import pytest

import shiftlab.bench as bn
from shiftlab import ShapeError, SwConfig, random_weights


SMALL = dict(m=15, n=3, channels=6, ghost=0.2, edges=2,
             order_policy="per_edge_shuffled", seed=7)


def test_variants_match_reference_f64():
    diffs = bn.verify_variants(SwConfig(**SMALL), trials=2, h=18, w=20)
    for v, d in diffs.items():
        assert d <= 1e-10, (v, d)


def test_variants_match_reference_f32_relaxed():
    diffs = bn.verify_variants(SwConfig(**SMALL), trials=2, h=18, w=20,
                               dtype="f32", relaxed=True)
    for v, d in diffs.items():
        assert d <= 1e-5, (v, d)


def test_checksums_bitwise_equal_in_deterministic_mode():
    cfg = SwConfig(**SMALL)
    reports = {v: bn.run_variant(v, cfg, 18, 20, reps=1, dtype="f64", tile=7)
               for v in bn.VARIANTS}
    checks = {r.checksum for r in reports.values()}
    assert len(checks) == 1
    f32 = {bn.run_variant(v, cfg, 18, 20, reps=1, dtype="f32", tile=7).checksum
           for v in bn.VARIANTS}
    assert len(f32) == 1


def test_relaxed_changes_accumulation_order():
    cfg = SwConfig(**SMALL)
    a = bn.run_variant("fused", cfg, 18, 20, reps=1, dtype="f32")
    b = bn.run_variant("fused", cfg, 18, 20, reps=1, dtype="f32", relaxed=True)
    assert a.checksum != b.checksum


def test_fused_moves_bound():
    for edges in (1, 2, 4):
        cfg = SwConfig(m=51, n=3, channels=8, edges=edges,
                       order_policy="per_edge_shuffled", seed=3)
        rep = bn.run_variant("fused", cfg, 24, 24, reps=1, dtype="f32")
        assert rep.moves_per_pixel <= 2 * edges + 1


def test_peak_memory_ratio_at_least_g():
    cfg = SwConfig(m=51, n=3, channels=8, ghost=0.0, edges=1, seed=5)
    rn = bn.run_variant("naive", cfg, 24, 24, reps=1, dtype="f32")
    rf = bn.run_variant("fused", cfg, 24, 24, reps=1, dtype="f32")
    assert rn.peak_intermediate_bytes / rf.peak_intermediate_bytes >= cfg.g
    assert rn.checksum == rf.checksum


def test_fused_avoids_fanout_sized_buffer():
    cfg = SwConfig(m=51, n=3, channels=8, seed=5)
    rep = bn.run_variant("fused", cfg, 24, 24, reps=1, dtype="f32")
    itemsize = 4
    fanout_bytes = cfg.sw_channels * cfg.g * 24 * 24 * itemsize
    assert rep.peak_intermediate_bytes < fanout_bytes / 2


def test_counted_macs_scale_exactly_with_density():
    cfg = SwConfig(m=51, n=3, channels=10, seed=3)  # 170 filters
    rows = bn.sparsity_speedup(cfg, [1.0, 0.6, 0.5, 0.33], h=20, w=20, reps=1)
    assert rows[0].mac_ratio == 1.0
    assert rows[1].mac_ratio == 0.6
    assert rows[2].mac_ratio == 0.5
    assert rows[1].counted_macs == int(0.6 * rows[0].counted_macs)
    # non-integral kept counts round down by whole filters
    n = cfg.sw_channels * cfg.g
    kept = n - int((1 - 0.33) * n)
    assert rows[3].mac_ratio == kept / n


def test_masked_fused_path_matches_reference(rng):
    import shiftlab as sl
    cfg = SwConfig(m=15, n=3, channels=6, ghost=0.2, edges=2,
                   order_policy="per_edge_shuffled", seed=19)
    w = random_weights(cfg, dtype=np.float64)
    w.masks[0][:] = rng.uniform(0, 1, w.masks[0].shape) > 0.4
    runner = bn._Runner(cfg, 17, 19, "f64", weights=w)
    oracle = sl.sw_forward(sl.Tensor(runner.x), w, cfg,
                           sl.build_shift_plan(cfg)).data
    for v in bn.VARIANTS:
        got = runner.run(v, bn._Instr(), tile=6)
        assert np.max(np.abs(got - oracle)) <= 1e-10, v


def test_empty_mask_yields_ghost_only_and_zero_diff():
    cfg = SwConfig(m=9, n=3, channels=5, ghost=0.3, seed=11)
    w = random_weights(cfg, dtype=np.float64)
    for m in w.masks:
        m[:] = False
    outs = []
    for v in bn.VARIANTS:
        rep = bn.run_variant(v, cfg, 12, 12, reps=1, dtype="f64", weights=w)
        outs.append(rep.checksum)
    assert len(set(outs)) == 1
    runner = bn._Runner(cfg, 12, 12, "f64", weights=w)
    got = runner.run("fused", bn._Instr())
    assert np.array_equal(got[:cfg.ghost_channels], runner.x[:cfg.ghost_channels])
    assert not got[cfg.ghost_channels:].any()


@pytest.mark.parametrize("pad_mode", ("half", "full", "exact"))
@pytest.mark.parametrize("n", (3, 5))
def test_variants_agree_across_pad_modes(pad_mode, n):
    cfg = SwConfig(m=15, n=n, channels=4, pad_mode=pad_mode, edges=2,
                   order_policy="per_edge_shuffled", seed=9)
    diffs = bn.verify_variants(cfg, trials=1, h=17, w=19, tile=6)
    for v, d in diffs.items():
        assert d <= 1e-10, (pad_mode, n, v, d)


def test_unknown_variant_rejected():
    cfg = SwConfig(**SMALL)
    with pytest.raises(ShapeError):
        bn.run_variant("warp", cfg, 8, 8, reps=1)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv(bn.THREADS_ENV, "3")
    assert bn.thread_count() == 3
    assert bn.thread_count(2) == 2
    monkeypatch.delenv(bn.THREADS_ENV)
    assert bn.thread_count() >= 1


def test_compare_wallclock_returns_medians():
    cfg = SwConfig(**SMALL)
    medians = bn.compare_wallclock(cfg, 12, 12, ("naive", "fused"),
                                   reps=3, warmup=1)
    assert set(medians) == {"naive", "fused"}
    assert all(m > 0 for m in medians.values())


def test_parallel_respects_threads():
    cfg = SwConfig(**SMALL)
    a = bn.run_variant("parallel", cfg, 18, 20, reps=1, dtype="f64", threads=1)
    b = bn.run_variant("parallel", cfg, 18, 20, reps=1, dtype="f64", threads=3)
    assert a.checksum == b.checksum
