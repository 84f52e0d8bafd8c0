"""Coarse-grained filter masking: prune-and-grow dynamics and analytics.

Filters are ranked by magnitude sum (the L1 norm of all taps in one N x N
filter) and the lowest-ranked fraction is masked.  Because every channel
fans out to g filters that are summed after shifting, pruning whole
filters leaves the module structure intact.  Training is out of scope:
mask updates consume an injected grow-score stream instead of gradients,
which isolates the mask dynamics.

Masks are boolean (C, g) arrays with True = kept, one per Rep branch per
layer.  Flattened filter index order is (c, k) ascending, which is also
the deterministic tie-break order everywhere.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .rng import CounterRng
from .tensor import ShapeError, from_array, read_container, write_container

INIT_POLICIES = ("sum_then_prune", "branch_mean_init", "subset")
STEP_POLICIES = ("shared", "branch_mean_init", "subset")


def score_filters(bank: np.ndarray) -> np.ndarray:
    """Magnitude-sum score per (c, k) filter: sum of |taps|."""
    ba = np.asarray(bank)
    if ba.ndim != 4 or ba.size == 0:
        raise ShapeError(f"expected a non-empty (C, g, N, N) bank, got {ba.shape}")
    return np.abs(ba).sum(axis=(2, 3))


def _rank_lowest(scores_flat: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` lowest scores, ties by ascending index."""
    order = np.argsort(scores_flat, kind="stable")
    return order[:count]


def prune_to_target(scores: np.ndarray, s: float) -> np.ndarray:
    """Mask exactly floor(s * n) lowest-scoring filters; True = kept."""
    if not 0.0 <= s < 1.0:
        raise ShapeError(f"target sparsity {s} outside [0, 1)")
    sc = np.asarray(scores, dtype=np.float64)
    n = sc.size
    kill = _rank_lowest(sc.reshape(-1), int(s * n))
    mask = np.ones(n, dtype=bool)
    mask[kill] = False
    return mask.reshape(sc.shape)


def grow_filters(mask: np.ndarray, grow_scores: np.ndarray, count: int):
    """Unmask the `count` masked filters with the highest grow scores.

    Ties break by ascending index.  A too-large count is clipped; the
    second return value flags that the caller asked for more than exists.
    """
    m = np.asarray(mask, dtype=bool).copy()
    gs = np.asarray(grow_scores, dtype=np.float64)
    if gs.shape != m.shape:
        raise ShapeError("grow scores must match the mask shape")
    flat = m.reshape(-1)
    pruned_idx = np.flatnonzero(~flat)
    clipped = count > pruned_idx.size
    count = min(count, pruned_idx.size)
    if count > 0:
        # stable sort on negated scores keeps ascending-index tie-break
        order = np.argsort(-gs.reshape(-1)[pruned_idx], kind="stable")
        flat[pruned_idx[order[:count]]] = True
    return m, clipped


@dataclass
class SparsityState:
    """Mask set plus the prune-and-grow schedule.

    masks[layer][branch] is a (C, g) boolean array.  An update fires when
    the caller-advanced step counter hits a multiple of the update period
    u; every share_gap-th update additionally synchronizes branch masks
    per the policy.  prune_fraction0 anneals to 0 by cosine decay over
    `horizon` steps.
    """

    masks: dict[str, list[np.ndarray]]
    target: float
    update_period: int = 100
    share_gap: int = 1
    policy: str = "shared"
    seed: int = 51
    prune_fraction0: float = 0.5
    horizon: int = 10_000
    step: int = 0
    updates_done: int = 0
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.target < 1.0:
            raise ShapeError("target sparsity outside [0, 1)")
        if self.update_period < 1 or self.share_gap < 1:
            raise ShapeError("update period and share gap must be >= 1")
        if self.policy not in STEP_POLICIES:
            raise ShapeError(f"unknown policy {self.policy!r}")

    def prune_fraction(self) -> float:
        u = min(1.0, self.updates_done * self.update_period / max(1, self.horizon))
        return 0.5 * self.prune_fraction0 * (1.0 + math.cos(math.pi * u))

    def layer_sparsity(self, layer: str) -> list[float]:
        return [float((~m).sum() / m.size) for m in self.masks[layer]]


def init_sparsity(policy: str, branch_banks: dict[str, list[np.ndarray]],
                  s: float, seed: int = 51) -> dict[str, list[np.ndarray]]:
    """Initial masks for every layer under one of three policies.

    sum_then_prune    pool every branch of every layer and prune jointly,
                      so per-layer sparsity varies around s.
    branch_mean_init  take the joint solution's per-branch sparsities,
                      average them within each layer, and re-prune each
                      branch of that layer to the averaged target.
    subset            per layer, prune the branch-summed scores to s for
                      branch 0, then sample each further branch's kept
                      set as a nested random subset (sparsity ladder
                      s_r = s * (1 + r / (2 (b-1)))).
    """
    if policy not in INIT_POLICIES:
        raise ShapeError(f"unknown init policy {policy!r}")
    if not 0.0 <= s < 1.0:
        raise ShapeError(f"target sparsity {s} outside [0, 1)")
    layers = list(branch_banks)
    scores = {name: [score_filters(b) for b in branch_banks[name]] for name in layers}

    if policy == "subset":
        out: dict[str, list[np.ndarray]] = {}
        for name in layers:
            joint = np.add.reduce(scores[name])
            base = prune_to_target(joint, s)
            branches = [base]
            nb = len(scores[name])
            kept_idx = np.flatnonzero(base.reshape(-1))
            for r in range(1, nb):
                s_r = min(0.95, s * (1.0 + r / (2.0 * max(1, nb - 1))))
                keep_r = base.size - int(s_r * base.size)
                rng = CounterRng(seed, "subset-init", name, r)
                kept_idx = np.array(rng.sample(list(kept_idx), min(keep_r, kept_idx.size)),
                                    dtype=np.int64)
                m = np.zeros(base.size, dtype=bool)
                m[kept_idx] = True
                branches.append(m.reshape(base.shape))
            out[name] = branches
        return out

    # joint pool across layers and branches
    pool = np.concatenate([scores[name][r].reshape(-1)
                           for name in layers for r in range(len(scores[name]))])
    joint_mask = prune_to_target(pool, s)
    out = {}
    offset = 0
    for name in layers:
        branch_masks = []
        for sc in scores[name]:
            n = sc.size
            branch_masks.append(joint_mask[offset:offset + n].reshape(sc.shape))
            offset += n
        out[name] = branch_masks

    if policy == "sum_then_prune":
        return out

    # branch_mean_init: average the joint per-branch sparsities per layer
    result = {}
    for name in layers:
        fracs = [(~m).sum() / m.size for m in out[name]]
        s_layer = float(np.mean(fracs))
        s_layer = min(s_layer, 1.0 - 1.0 / out[name][0].size)
        result[name] = [prune_to_target(sc, s_layer) for sc in scores[name]]
    return result


def _unify_shared(masks: list[np.ndarray], banks: list[np.ndarray],
                  target_pruned: int) -> list[np.ndarray]:
    """Joint re-rank of the union of kept filters, re-pruned to target."""
    joint = np.add.reduce([score_filters(b) for b in banks]).reshape(-1)
    union_kept = np.add.reduce([m.reshape(-1) for m in masks]) > 0
    # kept filters outrank everything pruned everywhere; within each class
    # rank by joint magnitude, ties by ascending index
    keyed = joint + union_kept * (joint.max() + 1.0)
    kill = _rank_lowest(keyed, target_pruned)
    unified = np.ones(joint.size, dtype=bool)
    unified[kill] = False
    return [unified.reshape(masks[0].shape).copy() for _ in masks]


def sparsity_step(state: SparsityState, weight_banks: dict[str, list[np.ndarray]],
                  grow_scores: dict[str, list[np.ndarray]]) -> SparsityState:
    """One simulated iteration; a no-op unless step hits the update period.

    On an update: per (layer, branch), prune prune_fraction of the
    surviving filters by magnitude sum, then grow the same number back by
    the injected grow scores, keeping total sparsity at the target.  On
    every share_gap-th update the branch masks of each layer are
    synchronized per the policy.
    """
    if state.step % state.update_period != 0 or state.step == 0:
        return state
    state.updates_done += 1
    frac = state.prune_fraction()
    for name, banks in weight_banks.items():
        masks = state.masks[name]
        if len(banks) != len(masks):
            raise ShapeError(f"layer {name}: bank/mask branch counts disagree")
        for r, bank in enumerate(banks):
            sc = score_filters(bank)
            if sc.shape != masks[r].shape:
                raise ShapeError(f"layer {name} branch {r}: bank shape drifted")
            mask = masks[r].reshape(-1)
            kept_idx = np.flatnonzero(mask)
            churn = int(frac * kept_idx.size)
            if churn > 0:
                order = np.argsort(sc.reshape(-1)[kept_idx], kind="stable")
                mask[kept_idx[order[:churn]]] = False
                grown, _ = grow_filters(mask.reshape(sc.shape),
                                        grow_scores[name][r], churn)
                masks[r][...] = grown
        if state.updates_done % state.share_gap == 0:
            state.events.append((state.updates_done, "sync"))
            n = masks[0].size
            pruned = int(state.target * n)
            if state.policy in ("shared", "branch_mean_init"):
                unified = _unify_shared(masks, banks, pruned)
                for r in range(len(masks)):
                    masks[r][...] = unified[r]
            elif state.policy == "subset":
                unified = _unify_shared(masks, banks, pruned)
                base = unified[0].reshape(-1)
                masks[0][...] = unified[0]
                kept_idx = np.flatnonzero(base)
                nb = len(masks)
                for r in range(1, nb):
                    s_r = min(0.95, state.target * (1.0 + r / (2.0 * max(1, nb - 1))))
                    keep_r = n - int(s_r * n)
                    rng = CounterRng(state.seed, "subset", name, state.updates_done, r)
                    kept_idx = np.array(rng.sample(list(kept_idx),
                                                   min(keep_r, kept_idx.size)),
                                        dtype=np.int64)
                    m = np.zeros(n, dtype=bool)
                    m[kept_idx] = True
                    masks[r][...] = m.reshape(masks[r].shape)
    return state


# ---------------------------------------------------------------------------
# analytics over arbitrary mask sets
# ---------------------------------------------------------------------------

@dataclass
class MaskStats:
    per_layer: list[tuple[str, int, float]]          # (layer, stage, sparsity)
    per_index: dict[int, np.ndarray]                 # stage -> pruned fraction per k
    group_hist: dict[int, np.ndarray]                # stage -> fraction per pruned count
    baseline: dict[int, float]                       # stage -> 1/g
    fully_pruned_groups: float                       # fraction of groups with all g pruned


def mask_stats(masks: dict[str, list[np.ndarray]], arch) -> MaskStats:
    """Sparsity analytics ordered by depth, per fan-out index, per group.

    `arch` supplies the stage layout (`layer_names()` and per-stage g);
    masks must cover every shift-composed layer it declares.
    """
    names = arch.layer_names()
    missing = [n for n in names if n not in masks]
    if missing:
        raise ShapeError(f"masks missing for layers {missing}")
    per_layer = []
    per_index: dict[int, np.ndarray] = {}
    group_counts: dict[int, list] = {}
    full, groups_total = 0, 0
    for name in names:
        stage = arch.stage_of(name)
        branch_masks = masks[name]
        m = np.logical_and.reduce(branch_masks) if len(branch_masks) > 1 else branch_masks[0]
        pruned = ~m
        per_layer.append((name, stage, float(pruned.sum() / pruned.size)))
        g = m.shape[1]
        frac_k = pruned.mean(axis=0)
        if stage in per_index:
            per_index[stage] = per_index[stage] + frac_k
        else:
            per_index[stage] = frac_k.astype(np.float64)
        group_counts.setdefault(stage, []).append(pruned.sum(axis=1))
        full += int((pruned.all(axis=1)).sum())
        groups_total += m.shape[0]
    layers_per_stage = {}
    for name in names:
        st = arch.stage_of(name)
        layers_per_stage[st] = layers_per_stage.get(st, 0) + 1
    for st in per_index:
        per_index[st] = per_index[st] / layers_per_stage[st]
    group_hist = {}
    baseline = {}
    for st, counts in group_counts.items():
        arr = np.concatenate(counts)
        g = per_index[st].size
        hist = np.bincount(arr, minlength=g + 1).astype(np.float64)
        group_hist[st] = hist / hist.sum()
        baseline[st] = 1.0 / g
    return MaskStats(per_layer, per_index, group_hist, baseline,
                     full / max(1, groups_total))


def save_masks(masks: dict[str, list[np.ndarray]], dirpath, force: bool = True) -> None:
    """One 0/1 f32 container per (layer, branch)."""
    os.makedirs(dirpath, exist_ok=True)
    for name, branch_masks in masks.items():
        for r, m in enumerate(branch_masks):
            path = os.path.join(dirpath, f"{name}.branch{r}.swt")
            if not force and os.path.exists(path):
                raise FileExistsError(path)
            write_container(from_array(m.astype(np.float32)), path)


def load_masks(dirpath, layer_branches: dict[str, int]) -> dict[str, list[np.ndarray]]:
    out = {}
    for name, nb in layer_branches.items():
        out[name] = [read_container(os.path.join(dirpath, f"{name}.branch{r}.swt")).data > 0.5
                     for r in range(nb)]
    return out
