"""Quantitative analytics: coverage, effective receptive fields, budgets.

Coverage measures how much of the output grid each fan-out map can reach
once shifted: the union over edges of its in-grid destination region,
painted on a boolean grid.  With ordered assignments the union is a
single band, so adding edges changes nothing; shuffled assignments make
the union grow with the edge count.

ERF maps are computed for stacks of linear depthwise components via the
adjoint pass (shift adjoint = negated displacement, correlation adjoint =
correlation with the flipped kernel), with a brute-force impulse-response
path as the independent cross-check.

The budget walker counts parameters and multiply-accumulates for the
four-stage architecture; per-experiment closed forms are evaluated next
to an instrumented tap-walking count so the two can be compared exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv_ref import strip_conv_ref
from .reparam import FoldRequiredError
from .sw_op import (BRANCH_CENTER, BRANCH_H, BRANCH_W, SwConfig, SwWeights,
                    ShiftPlan, build_shift_plan, sw_forward, _grid_geometry)
from .tensor import ShapeError, Tensor


# ---------------------------------------------------------------------------
# coverage / utilization
# ---------------------------------------------------------------------------

@dataclass
class CoverageResult:
    rows: list[tuple[int, float, float, float]]   # (seed, mean, min, max)
    mean_util: float
    min_util: float
    max_util: float


def ordered_utilization(m: int, n: int, h: int) -> list[float]:
    """Closed form for the ordered policy: (H - |kN - delta_p|) / H per map."""
    cfg = SwConfig(m=m, n=n, channels=1)
    return [max(0, h - abs(d)) / h for d in cfg.displacements()]


def coverage_ratio(m: int, n: int, h: int, w: int, edges: int, policy: str,
                   seeds, channels: int = 1) -> CoverageResult:
    """Boolean-grid utilization statistics of the vertical shift branch.

    For each (channel, fan-out index) the destination cells reachable
    under the assigned displacement are painted for every edge; the
    utilization of that map is |union| / (H * W).  Statistics are taken
    over maps and channels, then averaged over seeds.
    """
    rows = []
    for seed in seeds:
        cfg = SwConfig(m=m, n=n, channels=channels, edges=edges,
                       order_policy=policy, seed=int(seed))
        plan = build_shift_plan(cfg)
        utils = []
        for c in range(channels):
            for k in range(cfg.g):
                grid = np.zeros((h, w), dtype=bool)
                for e in range(edges):
                    dy = plan.h_shift(e, c, k)
                    r0, r1 = max(0, -dy), min(h, h - dy)
                    if r0 < r1:
                        grid[r0:r1, :] = True
                utils.append(grid.sum() / grid.size)
        rows.append((int(seed), float(np.mean(utils)), float(np.min(utils)),
                     float(np.max(utils))))
    return CoverageResult(
        rows,
        mean_util=float(np.mean([r[1] for r in rows])),
        min_util=float(np.min([r[2] for r in rows])),
        max_util=float(np.max([r[3] for r in rows])),
    )


# ---------------------------------------------------------------------------
# effective receptive field
# ---------------------------------------------------------------------------

@dataclass
class ConvLayer:
    """Depthwise odd-kernel "same" convolution component."""
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 3 or k.shape[1] % 2 == 0 or k.shape[2] % 2 == 0:
            raise ShapeError("ConvLayer wants an odd (C, kh, kw) kernel")
        self.kernel = k

    @property
    def channels(self) -> int:
        return self.kernel.shape[0]


@dataclass
class SwLayer:
    """Exact-mode operator component; normalization must be identity."""
    cfg: SwConfig
    weights: SwWeights
    plan: ShiftPlan

    def __post_init__(self):
        for branch in self.cfg.branch_types:
            norm = self.weights.norms.get(branch)
            if norm is not None and not norm.is_identity():
                raise FoldRequiredError(
                    "ERF analysis is linear-only: fold normalization first")

    @property
    def channels(self) -> int:
        return self.cfg.channels


def _corr_pads(plane: np.ndarray, filt: np.ndarray, pads) -> np.ndarray:
    """Correlation with zero extension; negative pads crop the grid.

    out[i, j] = sum_uv filt[u, v] * plane_zeroext[i + u - pt, j + v - pl].
    """
    (pt, pb), (pl, pr) = pads
    n_h, n_w = filt.shape
    h, w = plane.shape
    out_h, out_w = h + pt + pb - n_h + 1, w + pl + pr - n_w + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("correlation output collapsed to nothing")
    acc = np.zeros((out_h, out_w), dtype=plane.dtype)
    for u in range(n_h):
        for v in range(n_w):
            dy, dx = u - pt, v - pl
            r0, r1 = max(0, -dy), min(out_h, h - dy)
            c0, c1 = max(0, -dx), min(out_w, w - dx)
            if r0 < r1 and c0 < c1:
                acc[r0:r1, c0:c1] += filt[u, v] * plane[r0 + dy:r1 + dy,
                                                        c0 + dx:c1 + dx]
    return acc


def _adjoint_conv(z: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of the depthwise "same" correlation on a finite grid."""
    out = np.empty_like(z)
    for c in range(z.shape[0]):
        flipped = kernel[c, ::-1, ::-1]
        kh, kw = flipped.shape
        out[c] = _corr_pads(z[c], flipped, ((kh // 2, kh // 2), (kw // 2, kw // 2)))
    return out


def _adjoint_sw(z: np.ndarray, layer: SwLayer) -> np.ndarray:
    """Adjoint of the exact-mode operator: reversed shifts, flipped taps."""
    cfg, plan, w = layer.cfg, layer.plan, layer.weights
    if cfg.pad_mode != "exact":
        raise ShapeError("ERF adjoint is defined for exact pad mode")
    cg = cfg.ghost_channels
    out = np.zeros_like(z)
    out[:cg] = z[:cg]
    zs = z[cg:]
    h, wd = zs.shape[1], zs.shape[2]
    pads, (oy, ox) = _grid_geometry(cfg, h, wd)
    (pt, pb), (pl, pr) = pads
    gh, gw = h + pt + pb - cfg.n + 1, wd + pl + pr - cfg.n + 1
    c_cnt, g = cfg.sw_channels, cfg.g

    mbar = np.zeros((c_cnt, g, gh, gw), dtype=z.dtype)
    for branch in cfg.branch_types:
        for e in range(cfg.edges):
            if branch == BRANCH_CENTER:
                if cfg.center_independent:
                    continue  # handled below on the raw input
                mbar[:, plan.center_block, oy:oy + h, ox:ox + wd] += zs
                continue
            for c in range(c_cnt):
                for k in range(g):
                    if branch == BRANCH_H:
                        dy, dx = plan.h_shift(e, c, k), 0
                    elif branch == BRANCH_W:
                        dy, dx = 0, plan.w_shift(e, c, k)
                    mbar[c, k, oy + dy:oy + dy + h, ox + dx:ox + dx + wd] += zs[c]

    bank = w.merged_bank()
    adj_pads = ((cfg.n - 1 - pt, cfg.n - 1 - pb), (cfg.n - 1 - pl, cfg.n - 1 - pr))
    for c in range(c_cnt):
        for k in range(g):
            out[cg + c] += _corr_pads(mbar[c, k], bank[c, k, ::-1, ::-1], adj_pads)
    if cfg.center_independent and BRANCH_CENTER in cfg.branch_types:
        center_adj = _adjoint_conv(zs, w.center)
        for _e in range(cfg.edges):
            out[cg:] += center_adj
    return out


def _forward_layer(x: Tensor, layer) -> Tensor:
    if isinstance(layer, ConvLayer):
        return strip_conv_ref(x, layer.kernel)
    return sw_forward(x, layer.weights, layer.cfg, layer.plan)


def erf_map(stack, probe_size: int = 63) -> np.ndarray:
    """|d y_center / d x[p]| for a stack of linear components, max-normalized.

    One adjoint application of the composed operator to a delta at the
    output center; per-channel sensitivities are averaged before
    normalization.
    """
    if probe_size % 2 == 0 or probe_size < 1:
        raise ShapeError("probe size must be odd and positive")
    if not stack:
        raise ShapeError("empty component stack")
    channels = stack[0].channels
    mid = probe_size // 2
    z = np.zeros((channels, probe_size, probe_size), dtype=np.float64)
    z[:, mid, mid] = 1.0
    for layer in reversed(stack):
        if layer.channels != channels:
            raise ShapeError("component channel counts disagree")
        z = _adjoint_conv(z, layer.kernel) if isinstance(layer, ConvLayer) \
            else _adjoint_sw(z, layer)
    field_abs = np.abs(z).mean(axis=0)
    peak = field_abs.max()
    return field_abs / peak if peak > 0 else field_abs


def erf_map_impulse(stack, probe_size: int = 15) -> np.ndarray:
    """Brute-force ERF: one forward pass per probe pixel."""
    if probe_size % 2 == 0 or probe_size < 1:
        raise ShapeError("probe size must be odd and positive")
    channels = stack[0].channels
    mid = probe_size // 2
    out = np.zeros((probe_size, probe_size), dtype=np.float64)
    for i in range(probe_size):
        for j in range(probe_size):
            x = np.zeros((channels, probe_size, probe_size), dtype=np.float64)
            x[:, i, j] = 1.0
            y = Tensor(x)
            for layer in stack:
                y = _forward_layer(y, layer)
            out[i, j] = np.abs(y.data[:, mid, mid]).mean()
    peak = out.max()
    return out / peak if peak > 0 else out


# ---------------------------------------------------------------------------
# parameter / MAC accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArchSpec:
    """Four-stage backbone description.

    The block internals beyond the shift operator follow the inherited
    design: LayerNorm, pointwise FFN with expansion 4, a learnable
    per-channel scale, two stride-2 3x3 stem convolutions (3 -> C/2 -> C),
    and one stride-2 3x3 convolution per stage transition.  Budget totals
    depend on these assumptions, hence the +-10% acceptance band.
    """

    depths: tuple[int, ...] = (3, 3, 18, 3)
    dims: tuple[int, ...] = (80, 160, 320, 640)
    stage_m: tuple[int, ...] = (51, 49, 47, 13)
    n: int = 3
    width_factor: float = 1.0
    ghost: float = 0.23
    edges: int = 4
    rep_branches: int = 2
    ffn_ratio: int = 4
    include_se: bool = False
    num_classes: int = 1000

    def __post_init__(self):
        if len(self.depths) != 4 or len(self.dims) != 4 or len(self.stage_m) != 4:
            raise ShapeError("exactly four stages required")
        if any(self.dims[i + 1] != 2 * self.dims[i] for i in range(3)):
            raise ShapeError("stage dims must double")

    @classmethod
    def sw_tiny(cls, **kw) -> "ArchSpec":
        return cls(depths=(3, 3, 18, 3), dims=(80, 160, 320, 640), **kw)

    @classmethod
    def sw_small(cls, **kw) -> "ArchSpec":
        return cls(depths=(3, 3, 27, 3), dims=(96, 192, 384, 768), **kw)

    def stage_dim(self, i: int) -> int:
        return int(self.dims[i] * self.width_factor)

    def stage_g(self, i: int) -> int:
        return -(-self.stage_m[i] // self.n)

    def stage_fanouts(self) -> list[int]:
        return [self.stage_g(i) for i in range(4)]

    def sw_channels(self, i: int) -> int:
        d = self.stage_dim(i)
        return d - int(self.ghost * d)

    def layer_names(self) -> list[str]:
        return [f"stage{i}.block{j}" for i in range(4) for j in range(self.depths[i])]

    def stage_of(self, name: str) -> int:
        return int(name.split(".")[0].removeprefix("stage"))

    @staticmethod
    def ghost_for_width(r: float) -> float:
        """Ghost ratio compensating a width factor: R (1 - G) = 1."""
        if r < 1:
            raise ShapeError("width factor must be >= 1")
        return 1.0 - 1.0 / r


@dataclass
class CountRow:
    name: str
    kind: str
    params: int
    macs: int
    closed_form: float = 0.0

    @property
    def delta(self) -> float:
        return self.macs - self.closed_form if self.closed_form else 0.0


@dataclass
class CountReport:
    rows: list[CountRow] = field(default_factory=list)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def add(self, name, kind, params, macs, closed_form=0.0):
        self.rows.append(CountRow(name, kind, int(params), int(macs), closed_form))

    def csv_lines(self) -> list[str]:
        lines = ["layer,kind,params,macs,closed_form,delta"]
        for r in self.rows:
            lines.append(f"{r.name},{r.kind},{r.params},{r.macs},"
                         f"{format(r.closed_form, '.17g')},{format(r.delta, '.17g')}")
        lines.append(f"total,,{self.total_params},{self.total_macs},,")
        return lines


def _conv_counts(c_in, c_out, k, out_hw, bias=True, groups=1):
    params = c_out * (c_in // groups) * k * k + (c_out if bias else 0)
    macs = out_hw * out_hw * c_out * (c_in // groups) * k * k
    return params, macs


def _walk(arch: ArchSpec, input_size: int, masks=None) -> CountReport:
    rep = CountReport()
    d0 = arch.stage_dim(0)
    s = input_size // 2
    p, m = _conv_counts(3, d0 // 2, 3, s)
    rep.add("stem.conv1", "conv", p + 2 * (d0 // 2), m)
    s //= 2
    p, m = _conv_counts(d0 // 2, d0, 3, s)
    rep.add("stem.conv2", "conv", p + 2 * d0, m)

    size = s
    for i in range(4):
        dim = arch.stage_dim(i)
        c_sw = arch.sw_channels(i)
        g = arch.stage_g(i)
        if i > 0:
            prev = arch.stage_dim(i - 1)
            size //= 2
            p, m = _conv_counts(prev, dim, 3, size)
            rep.add(f"down{i}", "conv", p + 2 * prev, m)
        for j in range(arch.depths[i]):
            name = f"stage{i}.block{j}"
            kept = c_sw * g
            if masks is not None and name in masks:
                merged = np.logical_or.reduce(masks[name]) if len(masks[name]) > 1 \
                    else masks[name][0]
                kept = int(merged.sum())
            sw_params = kept * arch.n * arch.n + 3 * 2 * c_sw
            sw_macs = kept * arch.n * arch.n * size * size
            closed = float(c_sw * g * arch.n * arch.n * size * size)
            rep.add(f"{name}.sw", "sw", sw_params, sw_macs, closed)
            ffn_in = dim
            hidden = arch.ffn_ratio * dim
            p1, m1 = ffn_in * hidden + hidden, size * size * ffn_in * hidden
            p2, m2 = hidden * ffn_in + ffn_in, size * size * hidden * ffn_in
            extras = 2 * dim + dim  # layer norm + per-channel scale
            se_p = se_m = 0
            if arch.include_se:
                red = max(1, dim // 4)
                se_p = dim * red + red + red * dim + dim
                se_m = dim * red + red * dim
            rep.add(f"{name}.ffn", "ffn", p1 + p2 + extras + se_p, m1 + m2 + se_m)
    dim = arch.stage_dim(3)
    rep.add("head", "linear", 2 * dim + dim * arch.num_classes + arch.num_classes,
            dim * arch.num_classes)
    return rep


def count_params(arch: ArchSpec, masks=None, input_size: int = 224) -> CountReport:
    """Instrumented parameter walk (inference view: Rep branches merged)."""
    return _walk(arch, input_size, masks)


def count_macs(arch: ArchSpec, input_size: int = 224, masks=None) -> CountReport:
    """Instrumented multiply-accumulate walk at the given input size."""
    return _walk(arch, input_size, masks)


# ---------------------------------------------------------------------------
# per-experiment closed forms vs instrumented tap walking
# ---------------------------------------------------------------------------

EXPERIMENT_IDS = ("#0", "#1", "#2", "#3", "#4", "#5", "#6", "#7")


def _walk_taps(bank: np.ndarray) -> int:
    """Count taps by iterating the actual bank, one row at a time."""
    taps = 0
    flat = bank.reshape(-1, bank.shape[-2], bank.shape[-1])
    for filt in flat:
        for row in filt:
            taps += row.shape[0]
    return taps


def experiment_counts(exp: str, m: int, n: int, c: int, h: int, w: int,
                      ghost: float = 0.23) -> tuple[float, float]:
    """(instrumented, closed_form) per-channel MAC-style counts.

    The closed forms are the frozen replacement-experiment expressions;
    the instrumented side walks real filter banks and derives grid sizes
    by sliding-window arithmetic over the stated working grid.  The #5
    term mixes normalization parameters into the count and is walked the
    same way; ghost scaling applies the exact factor (1 - G) on both
    sides so the comparison stays bit-for-bit.
    """
    if exp not in EXPERIMENT_IDS:
        raise ShapeError(f"unknown experiment {exp!r}")
    g = -(-m // n)
    dp = m // 2 - n // 2
    if exp == "#0":
        bank = np.zeros((1, m, n))
        inst = _walk_taps(bank) * _positions(h, w, m, n) * 2
        closed = float(h * w * m * n * 2)
        return float(inst), closed
    if exp == "#7":
        g3 = -(-m // 3)
        bank = np.zeros((1, g3, 3, 3))
        inst = _walk_taps(bank) * _positions(h, w, 3, 3) * (1.0 - ghost)
        closed = (h * w * g3 * 3 * 3) * (1.0 - ghost)
        return float(inst), closed
    bank = np.zeros((1, g, n, n))
    taps = _walk_taps(bank)
    if exp == "#1":
        inst = taps * _positions(h + dp, w + dp, n, n) * 2
        closed = float((h + dp) * (w + dp) * g * n * n * 2)
        return float(inst), closed
    if exp == "#2":
        extra = (n - 1) - (-(-n // 2))
        inst = taps * _positions(h + extra, w + extra, n, n)
        closed = float((h + extra) * (w + extra) * g * n * n)
        return float(inst), closed
    base_closed = float(h * w * g * n * n)
    if exp == "#3":
        return float(taps * _positions(h, w, n, n)), base_closed
    if exp == "#4":
        merged = np.zeros((1, g, n, n)) + np.zeros((1, g, n, n))
        return float(_walk_taps(merged) * _positions(h, w, n, n)), base_closed
    norm_units = 0
    for _ in range(3):
        gamma, beta = np.zeros(c), np.zeros(c)
        norm_units += gamma.shape[0] + beta.shape[0]
    if exp == "#5":
        inst = taps * _positions(h, w, n, n) + norm_units
        return float(inst), base_closed + (c * 2) * 3
    # "#6"
    inst = (taps * _positions(h, w, n, n) + norm_units) * (1.0 - ghost)
    closed = (base_closed + (c * 2) * 3) * (1.0 - ghost)
    return float(inst), closed


def _positions(grid_h: int, grid_w: int, kh: int, kw: int) -> int:
    """Sliding positions of a kh x kw window under "same" padding."""
    out_h = grid_h + 2 * (kh // 2) - kh + 1
    out_w = grid_w + 2 * (kw // 2) - kw + 1
    return out_h * out_w
