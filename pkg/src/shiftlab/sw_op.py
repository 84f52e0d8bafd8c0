"""Shift-stacked emulation of large strip convolutions.

The operator replaces an M x N depthwise strip convolution by a fan-out
group convolution (g = ceil(M/N) small N x N filters per channel) whose
outputs are integer-shifted and summed.  Base displacements are

    d_k = k*N - delta_p,        delta_p = M//2 - N//2,

so that, on a sufficiently enlarged working grid, the shifted sum is
exactly the strip convolution ("exact" pad mode).  "half" mode keeps the
grid at H x W and loses boundary contributions (see
:func:`interior_band`), "full" mode enlarges it by (N-1) - ceil(N/2)
in total per axis.

Three branch types share one fan-out output: "H" shifts vertically, "W"
shifts horizontally with block indices taken in reverse order, and
"center" applies the middle block k0 = g//2 unshifted.  An edge is one
full set of branches with its own channel-to-shift assignment; branch
results are summed over edges before per-branch normalization.  A
leading slice of ghost channels bypasses the operator unchanged.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .rng import CounterRng
from .reparam import AffineNorm
from .tensor import (FormatError, ShapeError, Tensor, ensure_fresh,
                     from_array, read_container, write_container)

DEFAULT_SEED = 51

BRANCH_H = "H"
BRANCH_W = "W"
BRANCH_CENTER = "center"
ALL_BRANCHES = (BRANCH_H, BRANCH_W, BRANCH_CENTER)

PAD_MODES = ("exact", "half", "full")
ORDER_POLICIES = ("ordered", "disordered", "per_edge_shuffled")


class PlanError(ValueError):
    """Shift plan inconsistent with the grid or configuration."""


@dataclass(frozen=True)
class SwConfig:
    """Full description of one operator instance."""

    m: int                       # long side of the emulated kernel
    n: int                       # short side, odd
    channels: int                # input channel count C
    ghost: float = 0.0           # fraction of channels bypassing, in [0, 1)
    edges: int = 1
    rep_branches: int = 1
    pad_mode: str = "half"
    order_policy: str = "ordered"
    seed: int = DEFAULT_SEED
    branch_types: tuple[str, ...] = ALL_BRANCHES
    center_independent: bool = False
    layer_id: int = 0

    def __post_init__(self):
        if self.n < 1 or self.n % 2 == 0:
            raise ShapeError(f"short side must be odd and positive, got {self.n}")
        if self.m < self.n:
            raise ShapeError(f"long side {self.m} smaller than short side {self.n}")
        if not 0.0 <= self.ghost < 1.0:
            raise ShapeError(f"ghost ratio {self.ghost} outside [0, 1)")
        if self.edges < 1 or self.rep_branches < 1:
            raise ShapeError("edges and rep_branches must be >= 1")
        if self.pad_mode not in PAD_MODES:
            raise ShapeError(f"unknown pad mode {self.pad_mode!r}")
        if self.order_policy not in ORDER_POLICIES:
            raise ShapeError(f"unknown order policy {self.order_policy!r}")
        if self.channels < 1:
            raise ShapeError("channel count must be positive")
        bad = [b for b in self.branch_types if b not in ALL_BRANCHES]
        if bad or not self.branch_types:
            raise ShapeError(f"invalid branch types {self.branch_types}")
        if self.sw_channels < 1:
            raise ShapeError("ghost ratio leaves no channels on the shift path")

    @property
    def g(self) -> int:
        """Fan-out: number of small filters per channel, ceil(M/N)."""
        return -(-self.m // self.n)

    @property
    def delta_p(self) -> int:
        """Padding discrepancy between large- and small-kernel "same" pads."""
        return self.m // 2 - self.n // 2

    @property
    def ghost_channels(self) -> int:
        return int(self.ghost * self.channels)

    @property
    def sw_channels(self) -> int:
        return self.channels - self.ghost_channels

    def displacements(self) -> tuple[int, ...]:
        return tuple(k * self.n - self.delta_p for k in range(self.g))

    def shift_margin(self) -> int:
        """Largest |displacement|: enlargement per side for lossless shifts."""
        return max(self.delta_p, (self.g - 1) * self.n - self.delta_p)


@dataclass(frozen=True)
class ShiftPlan:
    """Displacement table per (edge, channel, fan-out index).

    sigma_h/sigma_w hold shift indices in [0, g); the H branch displaces
    block k vertically by d[sigma_h[e, c, k]], the W branch horizontally
    by d[g - 1 - sigma_w[e, c, k]] (reverse order, sharing one table
    unless the policy shuffles only the H branch).
    """

    displacements: tuple[int, ...]
    sigma_h: np.ndarray
    sigma_w: np.ndarray
    center_block: int

    @property
    def g(self) -> int:
        return len(self.displacements)

    def h_shift(self, e: int, c: int, k: int) -> int:
        return self.displacements[self.sigma_h[e, c, k]]

    def w_shift(self, e: int, c: int, k: int) -> int:
        return self.displacements[self.g - 1 - self.sigma_w[e, c, k]]

    def max_abs_shift(self) -> int:
        """Largest |displacement| any branch can apply (the densify frame)."""
        return max(abs(d) for d in self.displacements)


def build_shift_plan(cfg: SwConfig) -> ShiftPlan:
    """Deterministic displacement table for one operator instance.

    ordered            sigma[e, c, k] = k everywhere.
    disordered         one permutation per channel, shared by all edges,
                       applied to the H branch only (W stays ordered).
    per_edge_shuffled  a fresh permutation per (edge, channel), shared by
                       the H and W branches.
    """
    g, e_cnt, c_cnt = cfg.g, cfg.edges, cfg.sw_channels
    ident = np.tile(np.arange(g, dtype=np.int64), (e_cnt, c_cnt, 1))
    if cfg.order_policy == "ordered":
        sig_h = sig_w = ident
    elif cfg.order_policy == "disordered":
        sig_h = ident.copy()
        for c in range(c_cnt):
            perm = CounterRng(cfg.seed, "plan", cfg.layer_id, "disordered", c).permutation(g)
            sig_h[:, c, :] = perm
        sig_w = ident
    else:  # per_edge_shuffled
        sig_h = ident.copy()
        for e in range(e_cnt):
            for c in range(c_cnt):
                perm = CounterRng(cfg.seed, "plan", cfg.layer_id, e, c).permutation(g)
                sig_h[e, c, :] = perm
        sig_w = sig_h
    sig_h = sig_h.copy()
    sig_h.setflags(write=False)
    if sig_w is not sig_h:
        sig_w = sig_w.copy()
        sig_w.setflags(write=False)
    return ShiftPlan(cfg.displacements(), sig_h, sig_w, g // 2)


@dataclass
class SwWeights:
    """Fan-out filter banks, masks, and per-branch-type normalization.

    rep[r] is a (C_sw, g, N, N) bank; masks[r] is (C_sw, g) boolean with
    True = kept.  norms maps branch type to an AffineNorm or None
    (identity).  An optional independent (C_sw, N, N) center bank
    replaces the shared k0 block when the config asks for it.
    """

    rep: list[np.ndarray]
    masks: list[np.ndarray]
    norms: dict[str, AffineNorm | None] = field(
        default_factory=lambda: {b: None for b in ALL_BRANCHES})
    center: np.ndarray | None = None

    def validate(self, cfg: SwConfig) -> None:
        want = (cfg.sw_channels, cfg.g, cfg.n, cfg.n)
        if len(self.rep) != cfg.rep_branches or len(self.masks) != cfg.rep_branches:
            raise ShapeError("branch count disagrees with config")
        for bank, mask in zip(self.rep, self.masks):
            if bank.shape != want:
                raise ShapeError(f"bank shape {bank.shape} != {want}")
            if mask.shape != want[:2]:
                raise ShapeError(f"mask shape {mask.shape} != {want[:2]}")
        if cfg.center_independent:
            if self.center is None or self.center.shape != (cfg.sw_channels, cfg.n, cfg.n):
                raise ShapeError("independent center bank missing or misshapen")

    def masked_bank(self, r: int) -> np.ndarray:
        """Branch r with masked filters materialized as exact zeros."""
        return self.rep[r] * self.masks[r][:, :, None, None].astype(self.rep[r].dtype)

    def merged_bank(self) -> np.ndarray:
        out = self.masked_bank(0).copy()
        for r in range(1, len(self.rep)):
            out += self.masked_bank(r)
        return out


def random_weights(cfg: SwConfig, scale: float = 0.5, dtype=np.float64) -> SwWeights:
    """Uniform(-scale, scale) banks, all-kept masks, identity norms."""
    shape = (cfg.sw_channels, cfg.g, cfg.n, cfg.n)
    rep = [CounterRng(cfg.seed, "weights", cfg.layer_id, r).uniform_array(shape, -scale, scale, dtype)
           for r in range(cfg.rep_branches)]
    masks = [np.ones(shape[:2], dtype=bool) for _ in range(cfg.rep_branches)]
    center = None
    if cfg.center_independent:
        center = CounterRng(cfg.seed, "weights", cfg.layer_id, "center").uniform_array(
            (cfg.sw_channels, cfg.n, cfg.n), -scale, scale, dtype)
    return SwWeights(rep=rep, masks=masks, center=center)


def _grid_geometry(cfg: SwConfig, h: int, w: int):
    """Working-grid pads (top, bottom, left, right) and origin for a mode.

    exact: enlarge each side by the largest |displacement| on the axes the
    active branches shift along.  half: no enlargement.  full: enlarge by
    (N-1) - ceil(N/2) in total per axis (for N = 3 this coincides with
    half), split floor/ceil between the two sides.
    """
    n = cfg.n
    if cfg.pad_mode == "half":
        mt = mb = ml = mr = 0
    elif cfg.pad_mode == "exact":
        mv = cfg.shift_margin() if BRANCH_H in cfg.branch_types else 0
        mh = cfg.shift_margin() if BRANCH_W in cfg.branch_types else 0
        mt = mb = mv
        ml = mr = mh
    else:  # full
        extra = (n - 1) - (-(-n // 2))
        mt, ml = extra // 2, extra // 2
        mb, mr = extra - extra // 2, extra - extra // 2
    pads = ((mt + n // 2, mb + n // 2), (ml + n // 2, mr + n // 2))
    return pads, (mt, ml)


def shift_add(maps, displacements, grid_mode: str = "cropped",
              out_hw: tuple[int, int] | None = None,
              origin: tuple[int, int] | None = None) -> np.ndarray:
    """Sum g spatial maps under integer displacements.

    out[i, j] = sum_k maps[k, oy + i + dy_k, ox + j + dx_k].  In cropped
    mode reads outside the map grid contribute 0; in extended mode every
    read must be in bounds (the maps were computed on an enlarged grid)
    and an out-of-margin displacement is a plan error.
    """
    arr = np.asarray(maps)
    if arr.ndim != 3:
        raise ShapeError(f"expected (g, H, W) maps, got {arr.shape}")
    if grid_mode not in ("cropped", "extended"):
        raise ShapeError(f"unknown grid mode {grid_mode!r}")
    g, mh, mw = arr.shape
    if len(displacements) != g:
        raise ShapeError("one displacement per map required")
    if out_hw is None:
        if grid_mode == "extended":
            raise ShapeError("extended mode needs the target grid size")
        out_hw = (mh, mw)
    h, w = out_hw
    if origin is None:
        origin = ((mh - h) // 2, (mw - w) // 2)
    oy, ox = origin
    out = np.zeros((h, w), dtype=arr.dtype)
    for k, (dy, dx) in enumerate(displacements):
        _accumulate_shifted(out, arr[k], dy, dx, oy, ox,
                            strict=(grid_mode == "extended"))
    return out


def _accumulate_shifted(out: np.ndarray, plane: np.ndarray, dy: int, dx: int,
                        oy: int, ox: int, strict: bool) -> int:
    """out[i, j] += plane[oy + i + dy, ox + j + dx]; returns elements added."""
    h, w = out.shape
    mh, mw = plane.shape
    r0, r1 = oy + dy, oy + dy + h
    c0, c1 = ox + dx, ox + dx + w
    rr0, rr1 = max(r0, 0), min(r1, mh)
    cc0, cc1 = max(c0, 0), min(c1, mw)
    if strict and (rr0 != r0 or rr1 != r1 or cc0 != c0 or cc1 != c1):
        raise PlanError(f"displacement ({dy}, {dx}) exceeds the extended margin")
    if rr0 >= rr1 or cc0 >= cc1:
        return 0
    out[rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0] += plane[rr0:rr1, cc0:cc1]
    return (rr1 - rr0) * (cc1 - cc0)


def from_strip(k, pad_mode: str = "exact", dtype=None):
    """Exact-equivalence constructor from an M x N depthwise strip kernel.

    Partitions the kernel into g = ceil(M/N) row blocks of N rows (the
    last block zero-padded), yielding a single-Rep operator with only the
    vertical-shift branch active; its exact-mode forward reproduces the
    strip convolution up to float summation order.

    Returns (cfg, weights, plan).
    """
    ka = k.data if isinstance(k, Tensor) else np.asarray(k)
    if dtype is not None:
        ka = ka.astype(dtype)
    if ka.ndim != 3:
        raise ShapeError("expected a (C, M, N) strip kernel")
    c, m, n = ka.shape
    if m % 2 == 0 or n % 2 == 0:
        raise ShapeError("strip extents must be odd")
    cfg = SwConfig(m=m, n=n, channels=c, pad_mode=pad_mode,
                   branch_types=(BRANCH_H,))
    g = cfg.g
    bank = np.zeros((c, g, n, n), dtype=ka.dtype)
    for blk in range(g):
        rows = min(n, m - blk * n)
        bank[:, blk, :rows, :] = ka[:, blk * n:blk * n + rows, :]
    weights = SwWeights(rep=[bank], masks=[np.ones((c, g), dtype=bool)])
    return cfg, weights, build_shift_plan(cfg)


def _fanout_maps(xs: np.ndarray, bank: np.ndarray, pads) -> np.ndarray:
    """(C_sw, g, Hg, Wg) fan-out maps on the working grid, writable."""
    from .conv_ref import fanout_conv
    c, g = bank.shape[0], bank.shape[1]
    flat = fanout_conv(Tensor(np.ascontiguousarray(xs)), bank, pads).data
    return flat.reshape(c, g, flat.shape[1], flat.shape[2]).copy()


def sw_forward(x: Tensor, w: SwWeights, cfg: SwConfig, plan: ShiftPlan,
               mode: str = "inference") -> Tensor:
    """Forward pass of the operator.

    Ghost channels (the leading floor(G*C)) are copied through bitwise.
    The rest go through the shared fan-out convolution, per-branch shift
    sums over edges, per-branch normalization, branch summation, and are
    concatenated after the ghost slice.  Output spatial size equals the
    input.  `mode` controls Rep handling: "train_shape" keeps branches
    separate (sum of per-branch conv outputs), "inference" pre-merges the
    masked banks.

    This reference path is single-threaded and run-to-run deterministic;
    the bench module provides parallel and relaxed-accumulation
    implementations of the same contract (relaxed tolerance 1e-5 in f32).
    """
    if mode not in ("train_shape", "inference"):
        raise ShapeError(f"unknown mode {mode!r}")
    xa = x.data if isinstance(x, Tensor) else np.asarray(x)
    if xa.ndim == 4:
        return Tensor(np.stack([
            sw_forward(Tensor(plane), w, cfg, plan, mode).data for plane in xa]))
    if xa.ndim != 3:
        raise ShapeError(f"expected (C, H, W) input, got {xa.shape}")
    if xa.shape[0] != cfg.channels:
        raise ShapeError(f"input has {xa.shape[0]} channels, config wants {cfg.channels}")
    w.validate(cfg)
    if plan.g != cfg.g or plan.sigma_h.shape != (cfg.edges, cfg.sw_channels, cfg.g):
        raise PlanError("plan does not match the configuration")

    cg = cfg.ghost_channels
    ghost, xs = xa[:cg], xa[cg:]
    h, wd = xs.shape[1], xs.shape[2]
    pads, origin = _grid_geometry(cfg, h, wd)

    if mode == "inference":
        maps = _fanout_maps(xs, w.merged_bank(), pads)
    else:
        maps = _fanout_maps(xs, w.masked_bank(0), pads)
        for r in range(1, cfg.rep_branches):
            maps += _fanout_maps(xs, w.masked_bank(r), pads)

    out = np.zeros_like(xs)
    strict = cfg.pad_mode == "exact"
    for branch in ALL_BRANCHES:
        if branch not in cfg.branch_types:
            continue
        acc = np.zeros_like(xs)
        for e in range(cfg.edges):
            _add_branch_edge(acc, maps, xs, branch, e, cfg, plan, origin, strict, w)
        norm = w.norms.get(branch)
        if norm is not None:
            acc = norm.apply(acc)
        out += acc
    return Tensor(np.concatenate([ghost, out], axis=0))


def _add_branch_edge(acc, maps, xs, branch, e, cfg, plan, origin, strict, w) -> int:
    """Accumulate one (branch, edge) shift pass; returns elements added."""
    oy, ox = origin
    moved = 0
    if branch == BRANCH_CENTER:
        if cfg.center_independent:
            from .conv_ref import strip_conv_ref
            # independent center bank: plain N x N depthwise "same" conv of
            # the raw slice, bypassing the shared fan-out output
            acc += strip_conv_ref(Tensor(np.ascontiguousarray(xs)), w.center).data
            return acc.size
        k0 = plan.center_block
        for c in range(acc.shape[0]):
            moved += _accumulate_shifted(acc[c], maps[c, k0], 0, 0, oy, ox, strict)
        return moved
    for c in range(acc.shape[0]):
        for k in range(cfg.g):
            if branch == BRANCH_H:
                dy, dx = plan.h_shift(e, c, k), 0
            else:
                dy, dx = 0, plan.w_shift(e, c, k)
            moved += _accumulate_shifted(acc[c], maps[c, k], dy, dx, oy, ox, strict)
    return moved


def interior_band(cfg: SwConfig, h: int, w: int):
    """Output region where half mode equals exact mode.

    Rows [delta_p, H - 1 - ((g-1)N - delta_p)] when the vertical branch is
    active (full range otherwise), and the analogous column band for the
    horizontal branch.  Returns (row_lo, row_hi, col_lo, col_hi) inclusive,
    or None when the band is empty.
    """
    dp = cfg.delta_p
    up = (cfg.g - 1) * cfg.n - dp
    r0, r1 = (dp, h - 1 - up) if BRANCH_H in cfg.branch_types else (0, h - 1)
    c0, c1 = (dp, w - 1 - up) if BRANCH_W in cfg.branch_types else (0, w - 1)
    if r0 > r1 or c0 > c1:
        return None
    return (r0, r1, c0, c1)


# ---------------------------------------------------------------------------
# serialization: flat key-value operator spec + tensor-container weights
# ---------------------------------------------------------------------------

_SPEC_KEYS = ("M", "N", "C", "G", "E", "b", "pad_mode", "order_policy", "seed",
              "branches", "center_independent", "layer_id")


def write_operator_spec(cfg: SwConfig, path, force: bool = True) -> None:
    ensure_fresh(path, force)
    lines = [
        f"M={cfg.m}",
        f"N={cfg.n}",
        f"C={cfg.channels}",
        f"G={format(cfg.ghost, '.17g')}",
        f"E={cfg.edges}",
        f"b={cfg.rep_branches}",
        f"pad_mode={cfg.pad_mode}",
        f"order_policy={cfg.order_policy}",
        f"seed={cfg.seed}",
        f"branches={','.join(cfg.branch_types)}",
        f"center_independent={int(cfg.center_independent)}",
        f"layer_id={cfg.layer_id}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_operator_spec(path) -> SwConfig:
    kv = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}: bad line {line!r}")
            key, val = line.split("=", 1)
            key = key.strip()
            if key not in _SPEC_KEYS:
                raise FormatError(f"{path}: unknown key {key!r}")
            kv[key] = val.strip()
    try:
        return SwConfig(
            m=int(kv["M"]), n=int(kv["N"]), channels=int(kv["C"]),
            ghost=float(kv.get("G", "0")),
            edges=int(kv.get("E", "1")),
            rep_branches=int(kv.get("b", "1")),
            pad_mode=kv.get("pad_mode", "half"),
            order_policy=kv.get("order_policy", "ordered"),
            seed=int(kv.get("seed", str(DEFAULT_SEED))),
            branch_types=tuple(kv["branches"].split(",")) if "branches" in kv
            else ALL_BRANCHES,
            center_independent=bool(int(kv.get("center_independent", "0"))),
            layer_id=int(kv.get("layer_id", "0")),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc}") from exc


def save_sw_weights(w: SwWeights, dirpath, force: bool = True) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for r, (bank, mask) in enumerate(zip(w.rep, w.masks)):
        p = os.path.join(dirpath, f"rep{r}.swt")
        ensure_fresh(p, force)
        write_container(from_array(bank), p)
        p = os.path.join(dirpath, f"mask{r}.swt")
        ensure_fresh(p, force)
        write_container(from_array(mask.astype(np.float32)), p)
    for branch, norm in w.norms.items():
        if norm is None:
            continue
        p = os.path.join(dirpath, f"bn_{branch}.swt")
        ensure_fresh(p, force)
        write_container(from_array(norm.as_rows()), p)
    if w.center is not None:
        p = os.path.join(dirpath, "center.swt")
        ensure_fresh(p, force)
        write_container(from_array(w.center), p)


def load_sw_weights(dirpath, cfg: SwConfig) -> SwWeights:
    rep, masks = [], []
    for r in range(cfg.rep_branches):
        rep.append(read_container(os.path.join(dirpath, f"rep{r}.swt")).data.copy())
        mask = read_container(os.path.join(dirpath, f"mask{r}.swt")).data
        masks.append(mask > 0.5)
    norms: dict[str, AffineNorm | None] = {b: None for b in ALL_BRANCHES}
    for branch in ALL_BRANCHES:
        p = os.path.join(dirpath, f"bn_{branch}.swt")
        if os.path.exists(p):
            norms[branch] = AffineNorm.from_rows(read_container(p).data)
    center = None
    cp = os.path.join(dirpath, "center.swt")
    if os.path.exists(cp):
        center = read_container(cp).data.copy()
    w = SwWeights(rep=rep, masks=masks, norms=norms, center=center)
    w.validate(cfg)
    return w
