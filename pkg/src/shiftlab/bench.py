"""CPU performance harness for the fused shift-composed operator.

Four implementation variants compute the identical result:

    naive     materialize every fan-out map, then shift-add a second pass
    fused     accumulate each map into the destination as soon as it is
              produced; no buffer proportional to g*C*H*W ever exists
    tiled     fused, but output processed in cache-sized spatial blocks
              (conv values recomputed per read, trading FLOPs for
              locality)
    parallel  fused over independent channel-chunk work items with
              per-thread buffers merged in a fixed order

All variants share one accumulation order per output element, so f64
checksums are bitwise identical in deterministic mode; the documented
"relaxed" switch permits unordered accumulation at a 1e-5 (f32)
tolerance.  Instrumentation counts destination-accumulation events per
fan-out (conv output) pixel -- each conv-output pixel is moved at most
once per edge by each shift branch plus once by the center branch, so the
aggregate stays below 2E + 1 -- and the peak bytes of variant-owned
staging buffers, which excludes the shared padded input and the final
output.
"""

from __future__ import annotations

import hashlib
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .rng import CounterRng
from .sw_op import (BRANCH_CENTER, BRANCH_H, BRANCH_W, ShiftPlan, SwConfig,
                    SwWeights, build_shift_plan, random_weights, sw_forward,
                    _grid_geometry)
from .tensor import ShapeError, Tensor

VARIANTS = ("naive", "fused", "tiled", "parallel")

THREADS_ENV = "SHIFTLAB_THREADS"

DESK_CONFIG = dict(m=51, n=3, channels=64, edges=4, ghost=0.0,
                   order_policy="per_edge_shuffled")
DESK_HW = (56, 56)


def thread_count(explicit: int | None = None) -> int:
    if explicit is not None and explicit > 0:
        return explicit
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


class _Alloc:
    """Byte accounting for variant-owned staging buffers."""

    def __init__(self):
        self.current = 0
        self.peak = 0

    def take(self, arr: np.ndarray) -> np.ndarray:
        self.current += arr.nbytes
        self.peak = max(self.peak, self.current)
        return arr

    def drop(self, arr: np.ndarray) -> None:
        self.current -= arr.nbytes


@dataclass
class _Instr:
    moves: int = 0          # destination-accumulation events (elements)
    macs: int = 0           # multiply-accumulates in the conv stage
    alloc: _Alloc = field(default_factory=_Alloc)


@dataclass
class BenchReport:
    variant: str
    config_digest: str
    samples_ns: list[int]
    median_ns: float
    mad_ns: float
    moves_per_pixel: float
    peak_intermediate_bytes: int
    checksum: str

    @staticmethod
    def csv_header() -> str:
        return "variant,median_ns,mad_ns,moves_per_pixel,peak_bytes,checksum"

    def csv_line(self) -> str:
        return (f"{self.variant},{self.median_ns:.0f},{self.mad_ns:.0f},"
                f"{format(self.moves_per_pixel, '.17g')},"
                f"{self.peak_intermediate_bytes},{self.checksum}")


def _digest(cfg: SwConfig, h: int, w: int, dtype: str) -> str:
    text = f"{cfg}|{h}x{w}|{dtype}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _shift_tables(cfg: SwConfig, plan: ShiftPlan):
    """Displacements per (edge, channel, k) for both shift branches."""
    d = np.asarray(plan.displacements, dtype=np.int64)
    disp_h = d[plan.sigma_h]
    disp_w = d[::-1][plan.sigma_w]
    return disp_h, disp_w


def _conv_slice(xpad: np.ndarray, taps: np.ndarray, gh: int, gw: int,
                out: np.ndarray) -> None:
    """out[c] = sum_uv taps[c, u, v] * xpad[c] slice; fixed (u, v) order."""
    n = taps.shape[1]
    out[:] = 0.0
    for u in range(n):
        for v in range(n):
            out += taps[:, u, v][:, None, None] * xpad[:, u:u + gh, v:v + gw]


def _group_channels(disp_col: np.ndarray):
    """Channel groups sharing one displacement, ascending displacement."""
    groups: dict[int, list[int]] = {}
    for c, d in enumerate(disp_col):
        groups.setdefault(int(d), []).append(c)
    return sorted(groups.items())


def _accum_shifted_group(out, src, chans, dy, dx, oy, ox, instr) -> None:
    h, w = out.shape[1], out.shape[2]
    mh, mw = src.shape[1], src.shape[2]
    r0, r1 = oy + dy, oy + dy + h
    c0, c1 = ox + dx, ox + dx + w
    rr0, rr1 = max(r0, 0), min(r1, mh)
    cc0, cc1 = max(c0, 0), min(c1, mw)
    if rr0 >= rr1 or cc0 >= cc1:
        return
    dst = out[chans, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0]
    dst += src[chans, rr0:rr1, cc0:cc1]
    out[chans, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0] = dst
    instr.moves += len(chans) * (rr1 - rr0) * (cc1 - cc0)


class _Runner:
    """Shared state for one benchmark problem instance."""

    def __init__(self, cfg: SwConfig, h: int, w: int, dtype: str = "f32",
                 weights: SwWeights | None = None, x: np.ndarray | None = None):
        self.cfg = cfg
        self.h, self.w = h, w
        self.np_dtype = np.float32 if dtype == "f32" else np.float64
        self.dtype = dtype
        self.plan = build_shift_plan(cfg)
        if weights is None:
            weights = random_weights(cfg, dtype=self.np_dtype)
        self.weights = weights
        for norm in weights.norms.values():
            if norm is not None and not norm.is_identity():
                raise ShapeError("bench variants run with identity normalization")
        self.bank = weights.merged_bank().astype(self.np_dtype)
        self.kept = [np.flatnonzero(np.logical_or.reduce([m[:, k] for m in weights.masks]))
                     for k in range(cfg.g)]
        if x is None:
            x = CounterRng(cfg.seed, "bench-x").uniform_array(
                (cfg.channels, h, w), -0.5, 0.5, self.np_dtype)
        self.x = x.astype(self.np_dtype)
        self.disp_h, self.disp_w = _shift_tables(cfg, self.plan)
        pads, self.origin = _grid_geometry(cfg, h, w)
        (pt, pb), (pl, pr) = pads
        self.pads = (pt, pb, pl, pr)
        self.gh = h + pt + pb - cfg.n + 1
        self.gw = w + pl + pr - cfg.n + 1
        self.strict = cfg.pad_mode == "exact"

    def padded_input(self) -> np.ndarray:
        cg = self.cfg.ghost_channels
        xs = self.x[cg:]
        pt, pb, pl, pr = self.pads
        xpad = np.zeros((xs.shape[0], self.h + pt + pb, self.w + pl + pr),
                        dtype=self.np_dtype)
        xpad[:, pt:pt + self.h, pl:pl + self.w] = xs
        return xpad

    def fanout_pixels(self) -> int:
        return self.cfg.sw_channels * self.cfg.g * self.gh * self.gw

    # ---- the four variants -------------------------------------------------

    def _accumulate_k(self, out, src, k, instr, chan_base=0):
        """All (branch, edge) reads of map k, canonical order.

        out/src hold local channels [0, n_local); chan_base maps them to
        global channel ids for the displacement tables.
        """
        cfg, plan = self.cfg, self.plan
        oy, ox = self.origin
        n_local = src.shape[0]
        glob = np.arange(chan_base, chan_base + n_local)
        if BRANCH_H in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_h[e, glob, k]
                for dy, grp in _group_channels(col):
                    _accum_shifted_group(out, src, grp, dy, 0, oy, ox, instr)
        if BRANCH_W in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_w[e, glob, k]
                for dx, grp in _group_channels(col):
                    _accum_shifted_group(out, src, grp, 0, dx, oy, ox, instr)
        if BRANCH_CENTER in cfg.branch_types and k == plan.center_block:
            for _e in range(cfg.edges):
                _accum_shifted_group(out, src, list(range(n_local)), 0, 0, oy, ox, instr)

    def run(self, variant: str, instr: _Instr, tile: int = 32,
            threads: int | None = None, relaxed: bool = False) -> np.ndarray:
        if variant not in VARIANTS:
            raise ShapeError(f"unknown variant {variant!r}")
        cfg = self.cfg
        cg = cfg.ghost_channels
        out_full = np.empty_like(self.x)
        out_full[:cg] = self.x[:cg]
        xpad = self.padded_input()
        out = np.zeros((cfg.sw_channels, self.h, self.w), dtype=self.np_dtype)
        ks = list(range(cfg.g))
        if relaxed:
            ks = ks[::-1]
        if variant == "naive":
            self._run_naive(out, xpad, ks, instr)
        elif variant == "fused":
            self._run_fused(out, xpad, ks, instr)
        elif variant == "tiled":
            self._run_tiled(out, xpad, ks, instr, tile)
        else:
            self._run_parallel(out, xpad, ks, instr, thread_count(threads))
        out_full[cg:] = out
        return out_full

    def _run_naive(self, out, xpad, ks, instr):
        cfg = self.cfg
        c_sw = cfg.sw_channels
        maps = instr.alloc.take(np.zeros((c_sw, cfg.g, self.gh, self.gw),
                                         dtype=self.np_dtype))
        for k in ks:
            _conv_slice(xpad, self.bank[:, k], self.gh, self.gw, maps[:, k])
            instr.macs += c_sw * cfg.n * cfg.n * self.gh * self.gw
        for k in ks:
            self._accumulate_k(out, maps[:, k], k, instr)
        instr.alloc.drop(maps)

    def _run_fused(self, out, xpad, ks, instr):
        cfg = self.cfg
        c_sw = cfg.sw_channels
        buf = instr.alloc.take(np.zeros((c_sw, self.gh, self.gw), dtype=self.np_dtype))
        for k in ks:
            kept = self.kept[k]
            if kept.size == c_sw:
                _conv_slice(xpad, self.bank[:, k], self.gh, self.gw, buf)
                instr.macs += c_sw * cfg.n * cfg.n * self.gh * self.gw
                self._accumulate_k(out, buf, k, instr)
            elif kept.size:
                sub = instr.alloc.take(np.zeros((kept.size, self.gh, self.gw),
                                                dtype=self.np_dtype))
                _conv_slice(xpad[kept], self.bank[kept, k], self.gh, self.gw, sub)
                instr.macs += kept.size * cfg.n * cfg.n * self.gh * self.gw
                self._accumulate_k_sub(out, sub, k, kept, instr)
                instr.alloc.drop(sub)
        instr.alloc.drop(buf)

    def _accumulate_k_sub(self, out, src, k, kept, instr):
        """Masked fused path: src holds only the kept channels of map k."""
        cfg, plan = self.cfg, self.plan
        oy, ox = self.origin
        local = np.arange(kept.size)
        if BRANCH_H in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_h[e, kept, k]
                for dy in sorted(set(int(d) for d in col)):
                    sel = [int(c) for c, d in zip(kept, col) if d == dy]
                    loc = [int(l) for l, d in zip(local, col) if d == dy]
                    self._scatter(out, src, sel, loc, dy, 0, oy, ox, instr)
        if BRANCH_W in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_w[e, kept, k]
                for dx in sorted(set(int(d) for d in col)):
                    sel = [int(c) for c, d in zip(kept, col) if d == dx]
                    loc = [int(l) for l, d in zip(local, col) if d == dx]
                    self._scatter(out, src, sel, loc, 0, dx, oy, ox, instr)
        if BRANCH_CENTER in cfg.branch_types and k == plan.center_block:
            for _e in range(cfg.edges):
                self._scatter(out, src, [int(c) for c in kept],
                              list(range(kept.size)), 0, 0, oy, ox, instr)

    def _scatter(self, out, src, out_chans, src_chans, dy, dx, oy, ox, instr):
        h, w = out.shape[1], out.shape[2]
        mh, mw = src.shape[1], src.shape[2]
        r0, r1 = oy + dy, oy + dy + h
        c0, c1 = ox + dx, ox + dx + w
        rr0, rr1 = max(r0, 0), min(r1, mh)
        cc0, cc1 = max(c0, 0), min(c1, mw)
        if rr0 >= rr1 or cc0 >= cc1 or not out_chans:
            return
        block = out[out_chans, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0]
        block += src[src_chans, rr0:rr1, cc0:cc1]
        out[out_chans, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0] = block
        instr.moves += len(out_chans) * (rr1 - rr0) * (cc1 - cc0)

    def _run_tiled(self, out, xpad, ks, instr, tile):
        for ti in range(0, self.h, tile):
            for tj in range(0, self.w, tile):
                th = min(tile, self.h - ti)
                tw = min(tile, self.w - tj)
                view = out[:, ti:ti + th, tj:tj + tw]
                for k in ks:
                    self._tile_accumulate(view, xpad, k, ti, tj, th, tw, instr)

    def _tile_accumulate(self, view, xpad, k, ti, tj, th, tw, instr):
        """Recompute the conv values each (branch, edge) read of one tile needs."""
        cfg, plan = self.cfg, self.plan
        oy, ox = self.origin
        c_sw = cfg.sw_channels
        chans = np.arange(c_sw)

        def emit(dy, dx, grp):
            # conv-output coords needed: rows oy+ti+dy .. +th, cols ox+tj+dx .. +tw
            r0, c0 = oy + ti + dy, ox + tj + dx
            rr0, rr1 = max(r0, 0), min(r0 + th, self.gh)
            cc0, cc1 = max(c0, 0), min(c0 + tw, self.gw)
            if rr0 >= rr1 or cc0 >= cc1:
                if self.strict:
                    raise ShapeError("tile read outside the working grid in exact mode")
                return
            buf = instr.alloc.take(np.zeros((len(grp), rr1 - rr0, cc1 - cc0),
                                            dtype=self.np_dtype))
            _conv_slice(xpad[grp, rr0:rr0 + (rr1 - rr0) + cfg.n - 1,
                             cc0:cc0 + (cc1 - cc0) + cfg.n - 1],
                        self.bank[grp, k], rr1 - rr0, cc1 - cc0, buf)
            instr.macs += len(grp) * cfg.n * cfg.n * (rr1 - rr0) * (cc1 - cc0)
            block = view[grp, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0]
            block += buf
            view[grp, rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0] = block
            instr.moves += len(grp) * (rr1 - rr0) * (cc1 - cc0)
            instr.alloc.drop(buf)

        if BRANCH_H in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_h[e, :, k]
                for dy in sorted(set(int(d) for d in col)):
                    emit(dy, 0, [c for c, d in zip(chans, col) if d == dy])
        if BRANCH_W in cfg.branch_types:
            for e in range(cfg.edges):
                col = self.disp_w[e, :, k]
                for dx in sorted(set(int(d) for d in col)):
                    emit(0, dx, [c for c, d in zip(chans, col) if d == dx])
        if BRANCH_CENTER in cfg.branch_types and k == plan.center_block:
            for _e in range(cfg.edges):
                emit(0, 0, list(chans))

    def _run_parallel(self, out, xpad, ks, instr, threads):
        cfg = self.cfg
        c_sw = cfg.sw_channels
        chunks = np.array_split(np.arange(c_sw), min(threads, c_sw))
        instrs = [_Instr() for _ in chunks]

        def work(idx):
            chunk, ii = chunks[idx], instrs[idx]
            buf = ii.alloc.take(np.zeros((chunk.size, self.gh, self.gw),
                                         dtype=self.np_dtype))
            local_out = out[chunk[0]:chunk[-1] + 1]
            for k in ks:
                _conv_slice(xpad[chunk], self.bank[chunk, k], self.gh, self.gw, buf)
                ii.macs += chunk.size * cfg.n * cfg.n * self.gh * self.gw
                self._accumulate_k(local_out, buf, k, ii, chan_base=chunk[0])
            ii.alloc.drop(buf)

        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, range(len(chunks))))
        for ii in instrs:
            instr.moves += ii.moves
            instr.macs += ii.macs
        instr.alloc.peak = max(instr.alloc.peak, sum(i.alloc.peak for i in instrs))


def run_variant(variant: str, cfg: SwConfig, h: int, w: int, reps: int = 5,
                dtype: str = "f32", tile: int = 32, threads: int | None = None,
                relaxed: bool = False, warmup: int = 3,
                weights: SwWeights | None = None) -> BenchReport:
    """Time one variant; wall-clock samples exclude the warmup reps."""
    if reps < 1:
        raise ShapeError("need at least one measured rep")
    runner = _Runner(cfg, h, w, dtype, weights=weights)
    out = None
    samples = []
    instr = _Instr()
    for i in range(warmup + reps):
        instr = _Instr()
        t0 = time.perf_counter_ns()
        out = runner.run(variant, instr, tile=tile, threads=threads, relaxed=relaxed)
        t1 = time.perf_counter_ns()
        if i >= warmup:
            samples.append(t1 - t0)
    med = statistics.median(samples)
    mad = statistics.median([abs(s - med) for s in samples])
    checksum = hashlib.sha256(out.tobytes()).hexdigest()
    return BenchReport(
        variant=variant,
        config_digest=_digest(cfg, h, w, dtype),
        samples_ns=samples,
        median_ns=float(med),
        mad_ns=float(mad),
        moves_per_pixel=instr.moves / runner.fanout_pixels(),
        peak_intermediate_bytes=instr.alloc.peak,
        checksum=checksum,
    )


def compare_wallclock(cfg: SwConfig, h: int, w: int, variants=("naive", "fused"),
                      reps: int = 9, dtype: str = "f32", warmup: int = 3,
                      tile: int = 32) -> dict[str, float]:
    """Median wall-clock per variant with reps interleaved round-robin.

    Interleaving makes slow machine-load drift hit every variant equally,
    which is what a ratio comparison needs; medians are still per variant.
    """
    runner = _Runner(cfg, h, w, dtype)
    samples: dict[str, list[int]] = {v: [] for v in variants}
    for i in range(warmup + reps):
        for v in variants:
            t0 = time.perf_counter_ns()
            runner.run(v, _Instr(), tile=tile)
            t1 = time.perf_counter_ns()
            if i >= warmup:
                samples[v].append(t1 - t0)
    return {v: float(statistics.median(s)) for v, s in samples.items()}


def verify_variants(cfg: SwConfig, trials: int, h: int = 24, w: int = 24,
                    dtype: str = "f64", relaxed: bool = False,
                    tile: int = 9) -> dict[str, float]:
    """Worst |variant - composed-reference| per variant over random trials."""
    if trials < 1:
        raise ShapeError("need at least one trial")
    worst = {v: 0.0 for v in VARIANTS}
    np_dtype = np.float32 if dtype == "f32" else np.float64
    for t in range(trials):
        tcfg = SwConfig(**{**cfg.__dict__, "seed": cfg.seed + t})
        runner = _Runner(tcfg, h, w, dtype)
        plan = build_shift_plan(tcfg)
        oracle = sw_forward(Tensor(runner.x.astype(np_dtype)), runner.weights,
                            tcfg, plan).data
        for v in VARIANTS:
            got = runner.run(v, _Instr(), tile=tile, relaxed=relaxed)
            d = float(np.max(np.abs(got.astype(np.float64) - oracle.astype(np.float64))))
            worst[v] = max(worst[v], d)
    return worst


@dataclass
class SpeedupRow:
    density: float
    counted_macs: int
    mac_ratio: float
    median_ns: float


def sparsity_speedup(cfg: SwConfig, densities, h: int = 56, w: int = 56,
                     reps: int = 5, dtype: str = "f32") -> list[SpeedupRow]:
    """Fused-variant throughput as masked filters are skipped.

    The kept set per density is the highest-magnitude filters; counted
    MACs scale exactly with the kept-filter count.
    """
    from .sparsity import prune_to_target, score_filters
    rows = []
    for d in densities:
        if not 0.0 < d <= 1.0:
            raise ShapeError(f"density {d} outside (0, 1]")
        weights = random_weights(cfg, dtype=np.float32 if dtype == "f32" else np.float64)
        mask = prune_to_target(score_filters(weights.rep[0]), 1.0 - d)
        weights.masks[0] = mask
        runner = _Runner(cfg, h, w, dtype, weights=weights)
        samples = []
        instr = _Instr()
        for i in range(3 + reps):
            instr = _Instr()
            t0 = time.perf_counter_ns()
            runner.run("fused", instr)
            t1 = time.perf_counter_ns()
            if i >= 3:
                samples.append(t1 - t0)
        dense_macs = cfg.sw_channels * cfg.g * cfg.n * cfg.n * runner.gh * runner.gw
        rows.append(SpeedupRow(d, instr.macs, instr.macs / dense_macs,
                               float(statistics.median(samples))))
    return rows
