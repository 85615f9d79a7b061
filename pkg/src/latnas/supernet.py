"""Weight-sharing toy supernetwork.

One shared-parameter model realizes every architecture in a toy search
space. Each choice block is expand -> middle op -> (optional gate) ->
project with an optional residual; dense maps stand in for pointwise
convolutions and per-channel affine ops for depthwise kernels. Smaller
widths are simulated by zeroing trailing channels of maximally-sized
tensors (channel masking), and the expand/project maps are shared across
middle-op choices in ``collapsed`` mode or duplicated per choice in
``per_path`` mode.

Forward and backward passes are written out explicitly so the set of
retained intermediates is controlled: with rematerialization the
backward pass recomputes per-op activations one op at a time from each
block's input, retaining O(1) arrays per block regardless of how many
ops run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .space import Architecture, Decision, SearchSpace, SpaceError

DEFAULT_L2 = 4e-5


# --------------------------------------------------------------------------
# warmup schedule


@dataclass(frozen=True)
class WarmupSchedule:
    fraction: float = 0.25
    ops: bool = True
    filters: bool = True

    def __post_init__(self):
        if not 0 <= self.fraction < 1:
            raise ValueError("warmup fraction must be in [0, 1)")


def warmup_prob(schedule: WarmupSchedule, step: int, total_steps: int) -> float:
    """All-on probability p: 1 at step 0, linear to 0 at
    fraction * total_steps, 0 afterward."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    cutoff = schedule.fraction * total_steps
    if cutoff <= 0 or step >= cutoff:
        return 0.0
    return 1.0 - step / cutoff


def mask_channels(x: np.ndarray, active: int) -> np.ndarray:
    """Copy of ``x`` with channels >= ``active`` (last axis) zeroed."""
    width = x.shape[-1]
    if not 0 <= active <= width:
        raise ValueError(f"active width {active} outside [0, {width}]")
    out = x.copy()
    out[..., active:] = 0.0
    return out


# --------------------------------------------------------------------------
# activations

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu(x):
    return x * _sigmoid(x)


def _dsilu(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _softplus(x):
    return np.logaddexp(0.0, x)


MIDDLE_OPS = {
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "silu": (_silu, _dsilu),
    "softplus": (_softplus, _sigmoid),
    "sigmoid": (_sigmoid, lambda x: _sigmoid(x) * (1.0 - _sigmoid(x))),
    "linear": (lambda x: x, np.ones_like),
}


# --------------------------------------------------------------------------
# network structure


@dataclass(frozen=True)
class ChoiceBlockSpec:
    index: int
    input_width: int  # maximum incoming width
    max_expansion_width: int
    expansion_choices: tuple[int, ...]
    middle_ops: tuple[str, ...]
    output_filter_choices: tuple[int, ...]
    se_optional: bool
    residual: bool  # applied only when effective in/out widths match
    op_decision: int | None
    width_decision: int | None
    filter_decision: int | None
    se_decision: int | None

    @property
    def max_output_width(self) -> int:
        return max(self.output_filter_choices)


@dataclass(frozen=True)
class SupernetConfig:
    n_features: int = 16
    n_classes: int = 4
    trunk_width: int = 16
    sharing_mode: str = "collapsed"  # or "per_path"

    def __post_init__(self):
        if self.sharing_mode not in ("collapsed", "per_path"):
            raise ValueError(f"unknown sharing mode {self.sharing_mode!r}")


def _int_labels(d: Decision) -> tuple[int, ...]:
    try:
        return tuple(int(lab) for lab in d.choices)
    except ValueError:
        raise SpaceError(f"decision {d.name!r} needs integer width labels")


@dataclass(frozen=True)
class Supernet:
    """Static structure: config plus per-block specs derived from a space."""

    space: SearchSpace
    config: SupernetConfig
    blocks: tuple[ChoiceBlockSpec, ...]

    @classmethod
    def build(cls, space: SearchSpace, config: SupernetConfig) -> "Supernet":
        blocks = []
        in_width = config.trunk_width
        for binfo in space.block_layout:
            op_dec = width_dec = filt_dec = se_dec = None
            for d in space.decisions_in_block(binfo.index):
                if d.kind == "op_choice":
                    if d.skip_choice is not None:
                        raise SpaceError("toy supernet does not realize skip ops")
                    op_dec = d
                elif d.kind == "expansion":
                    width_dec = d
                elif d.kind == "output_filters":
                    filt_dec = d
                elif d.kind == "se":
                    se_dec = d
            ops = op_dec.choices if op_dec is not None else ("tanh",)
            for op in ops:
                if op not in MIDDLE_OPS:
                    raise SpaceError(f"unknown middle op {op!r}")
            widths = _int_labels(width_dec) if width_dec is not None else (in_width,)
            filters = _int_labels(filt_dec) if filt_dec is not None else (config.trunk_width,)
            blocks.append(
                ChoiceBlockSpec(
                    index=binfo.index,
                    input_width=in_width,
                    max_expansion_width=max(widths),
                    expansion_choices=widths,
                    middle_ops=ops,
                    output_filter_choices=filters,
                    se_optional=se_dec is not None,
                    residual=True,
                    op_decision=op_dec.id if op_dec else None,
                    width_decision=width_dec.id if width_dec else None,
                    filter_decision=filt_dec.id if filt_dec else None,
                    se_decision=se_dec.id if se_dec else None,
                )
            )
            in_width = blocks[-1].max_output_width
        return cls(space=space, config=config, blocks=tuple(blocks))

    @property
    def head_width(self) -> int:
        return self.blocks[-1].max_output_width if self.blocks else self.config.trunk_width


@dataclass
class SupernetState:
    net: Supernet
    params: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]
    step: int = 0

    @property
    def sharing_mode(self) -> str:
        return self.net.config.sharing_mode


def _expand_names(net: Supernet, b: int, k: int) -> tuple[str, str, str, str]:
    """(expand_w, expand_b, project_w, project_b) names for op path k."""
    if net.config.sharing_mode == "per_path":
        base = f"block{b}/path{k}"
    else:
        base = f"block{b}"
    return (f"{base}/expand/w", f"{base}/expand/b", f"{base}/project/w", f"{base}/project/b")


def init_supernet(space: SearchSpace, config: SupernetConfig, seed: int) -> SupernetState:
    """Fan-in-scaled normal init; classifier head stddev 0.01; biases 0;
    middle-op scales near one."""
    net = Supernet.build(space, config)
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def dense(name: str, n_in: int, n_out: int, std: float | None = None):
        std = (1.0 / math.sqrt(n_in)) if std is None else std
        params[f"{name}/w"] = rng.normal(0.0, std, size=(n_in, n_out))
        params[f"{name}/b"] = np.zeros(n_out)

    dense("stem", config.n_features, config.trunk_width)
    for blk in net.blocks:
        b = blk.index
        e_max = blk.max_expansion_width
        paths = range(len(blk.middle_ops)) if config.sharing_mode == "per_path" else (None,)
        for k in paths:
            base = f"block{b}" if k is None else f"block{b}/path{k}"
            dense(f"{base}/expand", blk.input_width, e_max)
            dense(f"{base}/project", e_max, blk.max_output_width)
        for k in range(len(blk.middle_ops)):
            params[f"block{b}/op{k}/scale"] = 1.0 + 0.25 * rng.normal(size=e_max)
            params[f"block{b}/op{k}/bias"] = np.zeros(e_max)
        if blk.se_optional:
            params[f"block{b}/se/v"] = rng.normal(0.0, 1.0, size=e_max)
            params[f"block{b}/se/b"] = np.zeros(e_max)
    dense("head", net.head_width, config.n_classes, std=0.01)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    return SupernetState(net=net, params=params, velocity=velocity)


# --------------------------------------------------------------------------
# per-step plan: which ops run, which widths are active


@dataclass(frozen=True)
class BlockPlan:
    ops: tuple[int, ...]  # op indices to run (all of them during op warmup)
    averaged: bool
    w_in: int
    w_exp: int
    w_out: int
    se_on: bool
    residual: bool


def _block_plans(
    net: Supernet, arch: Architecture, p_op: float, p_filter: float, seed
) -> list[BlockPlan]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.random((len(net.blocks), 2))
    plans = []
    w_in = net.config.trunk_width
    for blk in net.blocks:
        all_ops = bool(draws[blk.index, 0] < p_op)
        unmask = bool(draws[blk.index, 1] < p_filter)
        k = 0 if blk.op_decision is None else arch.choices[blk.op_decision]
        ops = tuple(range(len(blk.middle_ops))) if all_ops else (k,)
        if unmask:
            w_exp, w_out = blk.max_expansion_width, blk.max_output_width
        else:
            w_exp = (
                blk.expansion_choices[arch.choices[blk.width_decision]]
                if blk.width_decision is not None
                else blk.expansion_choices[0]
            )
            w_out = (
                blk.output_filter_choices[arch.choices[blk.filter_decision]]
                if blk.filter_decision is not None
                else blk.output_filter_choices[0]
            )
        if blk.se_optional and blk.se_decision is not None:
            se_dec = net.space.decisions[blk.se_decision]
            se_on = se_dec.choices[arch.choices[se_dec.id]] == "on"
        else:
            se_on = blk.se_optional
        plans.append(
            BlockPlan(
                ops=ops,
                averaged=len(ops) > 1,
                w_in=w_in,
                w_exp=w_exp,
                w_out=w_out,
                se_on=se_on,
                residual=blk.residual and w_in == w_out,
            )
        )
        w_in = w_out
    return plans


def _check_arch(net: Supernet, arch: Architecture) -> None:
    from .space import validate

    if not validate(net.space, arch):
        raise SpaceError("architecture is invalid for the supernet's space")


# --------------------------------------------------------------------------
# forward


def _op_forward(params, b: int, k: int, op_name: str, e: np.ndarray, w_exp: int):
    """Middle op k on the expanded tensor; returns (pre, post) masked to
    w_exp."""
    act, _ = MIDDLE_OPS[op_name]
    pre = e * params[f"block{b}/op{k}/scale"] + params[f"block{b}/op{k}/bias"]
    post = act(pre)
    post[..., w_exp:] = 0.0
    return pre, post


def _se_forward(params, b: int, z: np.ndarray, w_exp: int):
    """Mean-pooled sigmoid gate over the active channels."""
    mean = z[:, :w_exp].sum(axis=1) / w_exp
    s = np.outer(mean, params[f"block{b}/se/v"]) + params[f"block{b}/se/b"]
    g = _sigmoid(s)
    return z * g, mean, g


def _path_core(params, net, blk, k: int, x, plan, cache: list | None):
    """expand -> op k -> optional gate -> project, masked to plan widths.

    When ``cache`` is given, intermediates needed by the backward pass are
    appended to it (the retained-intermediate accounting counts these).
    """
    b = blk.index
    ew, eb, pw, pb = _expand_names(net, b, k)
    e_pre = x @ params[ew] + params[eb]
    e = _silu(e_pre)
    e[..., plan.w_exp :] = 0.0
    z_pre, z = _op_forward(params, b, k, blk.middle_ops[k], e, plan.w_exp)
    if plan.se_on:
        zg, mean, g = _se_forward(params, b, z, plan.w_exp)
    else:
        zg, mean, g = z, None, None
    y = zg @ params[pw] + params[pb]
    y[..., plan.w_out :] = 0.0
    if cache is not None:
        cache.append(e_pre)
        cache.append(e)
        cache.append(z_pre)
        if plan.se_on:
            cache.append(z)
            cache.append(mean)
            cache.append(g)
    return y, zg


def _collapsed_block(params, net, blk, x, plan, cache: list | None):
    b = blk.index
    ew, eb, pw, pb = _expand_names(net, b, 0)
    e_pre = x @ params[ew] + params[eb]
    e = _silu(e_pre)
    e[..., plan.w_exp :] = 0.0
    zbar = None
    for k in plan.ops:
        z_pre, z = _op_forward(params, b, k, blk.middle_ops[k], e, plan.w_exp)
        zbar = z if zbar is None else zbar + z
        if cache is not None:
            cache.append(z_pre)
    if plan.averaged:
        zbar = zbar / len(plan.ops)
    if plan.se_on:
        zg, mean, g = _se_forward(params, b, zbar, plan.w_exp)
    else:
        zg, mean, g = zbar, None, None
    y = zg @ params[pw] + params[pb]
    y[..., plan.w_out :] = 0.0
    if cache is not None:
        cache.append(e_pre)
        cache.append(e)
        cache.append(zbar)
        if plan.se_on:
            cache.append(mean)
            cache.append(g)
    return y, zg


def _per_path_block(params, net, blk, x, plan, cache: list | None):
    ybar = None
    zg_last = None
    for k in plan.ops:
        y_k, zg_k = _path_core(params, net, blk, k, x, plan, cache)
        ybar = y_k if ybar is None else ybar + y_k
        zg_last = zg_k
        if cache is not None:
            cache.append(zg_k)
    if plan.averaged:
        ybar = ybar / len(plan.ops)
    return ybar, zg_last


def _block_forward(params, net, blk, x, plan, cache: list | None):
    if net.config.sharing_mode == "per_path":
        y_core, _ = _per_path_block(params, net, blk, x, plan, cache)
    else:
        y_core, _ = _collapsed_block(params, net, blk, x, plan, cache)
    return x + y_core if plan.residual else y_core


def _trunk_forward(state: SupernetState, X, plans, caches: list | None, block_inputs: list | None):
    params = state.params
    h = _silu(X @ params["stem/w"] + params["stem/b"])
    for blk, plan in zip(state.net.blocks, plans):
        if block_inputs is not None:
            block_inputs.append(h)
        cache = None
        if caches is not None:
            cache = []
            caches.append(cache)
        h = _block_forward(params, state.net, blk, h, plan, cache)
    return h


def forward(
    state: SupernetState,
    arch: Architecture,
    X: np.ndarray,
    p_op: float = 0.0,
    p_filter: float = 0.0,
    seed=0,
) -> np.ndarray:
    """Class logits for a batch under ``arch``.

    With probability p_op per block, all middle ops run and their outputs
    are averaged; with probability p_filter per block, that block's
    channel masks are lifted to full width. Deterministic given ``seed``.
    """
    _check_arch(state.net, arch)
    plans = _block_plans(state.net, arch, p_op, p_filter, seed)
    h = _trunk_forward(state, X, plans, None, None)
    return h @ state.params["head/w"] + state.params["head/b"]


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    p = _softmax(logits)
    n = logits.shape[0]
    return float(-np.log(p[np.arange(n), y] + 1e-300).sum() / n)


# --------------------------------------------------------------------------
# active parameter slices (for targeted L2)


def active_slices(
    state: SupernetState, plans: list[BlockPlan]
) -> dict[str, tuple[slice, ...]]:
    """Parameter slices touched by a forward pass under ``plans``.

    L2 regularization applies exactly to these slices; masked-out
    channels and unselected ops receive neither data gradient nor decay.
    """
    net = state.net
    out: dict[str, tuple[slice, ...]] = {
        "stem/w": (slice(None), slice(None)),
        "stem/b": (slice(None),),
    }
    for blk, plan in zip(net.blocks, plans):
        b = blk.index
        for k in plan.ops:
            ew, eb, pw, pb = _expand_names(net, b, k)
            out[ew] = (slice(0, plan.w_in), slice(0, plan.w_exp))
            out[eb] = (slice(0, plan.w_exp),)
            out[pw] = (slice(0, plan.w_exp), slice(0, plan.w_out))
            out[pb] = (slice(0, plan.w_out),)
            out[f"block{b}/op{k}/scale"] = (slice(0, plan.w_exp),)
            out[f"block{b}/op{k}/bias"] = (slice(0, plan.w_exp),)
        if plan.se_on:
            out[f"block{b}/se/v"] = (slice(0, plan.w_exp),)
            out[f"block{b}/se/b"] = (slice(0, plan.w_exp),)
    last = net.blocks[-1]
    w_last = plans[-1].w_out if plans else net.config.trunk_width
    out["head/w"] = (slice(0, w_last), slice(None))
    out["head/b"] = (slice(None),)
    return out


def _l2_value(params, slices, l2: float) -> float:
    total = 0.0
    for name, sl in slices.items():
        seg = params[name][sl]
        total += float(np.sum(seg * seg))
    return 0.5 * l2 * total


def forward_loss(
    state: SupernetState,
    arch: Architecture,
    batch: tuple[np.ndarray, np.ndarray],
    p_op: float = 0.0,
    p_filter: float = 0.0,
    seed=0,
    l2: float = 0.0,
) -> float:
    """Cross-entropy plus targeted L2; the quantity ``grad`` differentiates."""
    X, y = batch
    _check_arch(state.net, arch)
    plans = _block_plans(state.net, arch, p_op, p_filter, seed)
    h = _trunk_forward(state, X, plans, None, None)
    logits = h @ state.params["head/w"] + state.params["head/b"]
    loss = cross_entropy(logits, y)
    if l2 > 0:
        loss += _l2_value(state.params, active_slices(state, plans), l2)
    return loss


# --------------------------------------------------------------------------
# backward


def _se_backward(params, b, dzg, z, mean, g, w_exp, grads):
    """Backward through z * sigmoid(outer(mean, v) + u)."""
    v = params[f"block{b}/se/v"]
    dz = dzg * g
    dg = dzg * z
    ds = dg * g * (1.0 - g)
    grads[f"block{b}/se/v"] += ds.T @ mean
    grads[f"block{b}/se/b"] += ds.sum(axis=0)
    dmean = ds @ v
    dz[:, :w_exp] += dmean[:, None] / w_exp
    return dz


def _op_backward(params, b, k, op_name, dz, z_pre, e, w_exp, grads):
    """Backward through act(scale * e + bias) with trailing channels
    masked; returns de contribution."""
    _, dact = MIDDLE_OPS[op_name]
    dz = mask_channels(dz, w_exp)
    dpre = dz * dact(z_pre)
    dpre[..., w_exp:] = 0.0
    grads[f"block{b}/op{k}/scale"] += (dpre * e).sum(axis=0)
    grads[f"block{b}/op{k}/bias"] += dpre.sum(axis=0)
    return dpre * params[f"block{b}/op{k}/scale"]


def _expand_backward(params, ew, eb, de, e_pre, x, w_exp, grads):
    de = mask_channels(de, w_exp)
    de_pre = de * _dsilu(e_pre)
    grads[ew] += x.T @ de_pre
    grads[eb] += de_pre.sum(axis=0)
    return de_pre @ params[ew].T


def _collapsed_block_backward(params, net, blk, x, plan, dy, cache, grads):
    b = blk.index
    ew, eb, pw, pb = _expand_names(net, b, 0)
    n_ops = len(plan.ops)
    if cache is not None:
        z_pres = cache[:n_ops]
        e_pre, e, zbar = cache[n_ops], cache[n_ops + 1], cache[n_ops + 2]
        rest = cache[n_ops + 3 :]
        mean, g = (rest[0], rest[1]) if plan.se_on else (None, None)
    else:
        # rematerialize: recompute e once, then z_pre per op on demand
        e_pre = x @ params[ew] + params[eb]
        e = _silu(e_pre)
        e[..., plan.w_exp :] = 0.0
        zbar = None
        for k in plan.ops:
            _, z = _op_forward(params, b, k, blk.middle_ops[k], e, plan.w_exp)
            zbar = z if zbar is None else zbar + z
        if plan.averaged:
            zbar = zbar / n_ops
        z_pres = None
        if plan.se_on:
            _, mean, g = _se_forward(params, b, zbar, plan.w_exp)

    dp = mask_channels(dy, plan.w_out)
    zg = zbar * g if plan.se_on else zbar
    grads[pw] += zg.T @ dp
    grads[pb] += dp.sum(axis=0)
    dzg = dp @ params[pw].T
    if plan.se_on:
        dzbar = _se_backward(params, b, dzg, zbar, mean, g, plan.w_exp, grads)
    else:
        dzbar = dzg
    if plan.averaged:
        dzbar = dzbar / n_ops
    de = np.zeros_like(e)
    for j, k in enumerate(plan.ops):
        if z_pres is not None:
            z_pre = z_pres[j]
        else:
            z_pre, _ = _op_forward(params, b, k, blk.middle_ops[k], e, plan.w_exp)
        de += _op_backward(params, b, k, blk.middle_ops[k], dzbar, z_pre, e, plan.w_exp, grads)
    return _expand_backward(params, ew, eb, de, e_pre, x, plan.w_exp, grads)


def _per_path_block_backward(params, net, blk, x, plan, dy, cache, grads):
    b = blk.index
    n_ops = len(plan.ops)
    dy_k = dy / n_ops if plan.averaged else dy
    dx = np.zeros_like(x)
    per_path = 7 if plan.se_on else 4  # cached arrays per path (incl. zg)
    for j, k in enumerate(plan.ops):
        ew, eb, pw, pb = _expand_names(net, b, k)
        if cache is not None:
            seg = cache[j * per_path : (j + 1) * per_path]
            if plan.se_on:
                e_pre, e, z_pre, z, mean, g, zg = seg
            else:
                e_pre, e, z_pre, zg = seg
                z, mean, g = zg, None, None
        else:
            e_pre = x @ params[ew] + params[eb]
            e = _silu(e_pre)
            e[..., plan.w_exp :] = 0.0
            z_pre, z = _op_forward(params, b, k, blk.middle_ops[k], e, plan.w_exp)
            if plan.se_on:
                zg, mean, g = _se_forward(params, b, z, plan.w_exp)
            else:
                zg = z
        dp = mask_channels(dy_k, plan.w_out)
        grads[pw] += zg.T @ dp
        grads[pb] += dp.sum(axis=0)
        dzg = dp @ params[pw].T
        if plan.se_on:
            dz = _se_backward(params, b, dzg, z, mean, g, plan.w_exp, grads)
        else:
            dz = dzg
        de = _op_backward(params, b, k, blk.middle_ops[k], dz, z_pre, e, plan.w_exp, grads)
        dx += _expand_backward(params, ew, eb, de, e_pre, x, plan.w_exp, grads)
    return dx


def grad(
    state: SupernetState,
    arch: Architecture,
    batch: tuple[np.ndarray, np.ndarray],
    remat: bool = False,
    p_op: float = 0.0,
    p_filter: float = 0.0,
    seed=0,
    l2: float = 0.0,
    instrument: dict | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """Gradients of cross-entropy + targeted L2 w.r.t. all parameters.

    With ``remat`` the forward pass retains only each block's input (the
    block output is recomputed during backward one op at a time); without
    it every per-op intermediate is kept. Both paths accumulate per-op
    contributions in the same order, so gradients agree bitwise.
    """
    X, y = batch
    _check_arch(state.net, arch)
    params = state.params
    plans = _block_plans(state.net, arch, p_op, p_filter, seed)

    block_inputs: list[np.ndarray] = []
    caches: list[list[np.ndarray]] | None = None if remat else []
    h = _trunk_forward(state, X, plans, caches, block_inputs)
    logits = h @ params["head/w"] + params["head/b"]

    n = X.shape[0]
    probs = _softmax(logits)
    data_loss = float(-np.log(probs[np.arange(n), y] + 1e-300).sum() / n)
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["head/w"] += h.T @ dlogits
    grads["head/b"] += dlogits.sum(axis=0)
    dh = dlogits @ params["head/w"].T

    for i in reversed(range(len(state.net.blocks))):
        blk = state.net.blocks[i]
        plan = plans[i]
        x = block_inputs[i]
        cache = caches[i] if caches is not None else None
        dy = dh
        if state.net.config.sharing_mode == "per_path":
            dx = _per_path_block_backward(params, state.net, blk, x, plan, dy, cache, grads)
        else:
            dx = _collapsed_block_backward(params, state.net, blk, x, plan, dy, cache, grads)
        if plan.residual:
            dx = dx + dy
        dh = dx

    dstem_pre = dh * _dsilu(X @ params["stem/w"] + params["stem/b"])
    grads["stem/w"] += X.T @ dstem_pre
    grads["stem/b"] += dstem_pre.sum(axis=0)

    slices = active_slices(state, plans)
    loss = data_loss
    if l2 > 0:
        loss += _l2_value(params, slices, l2)
        for name, sl in slices.items():
            grads[name][sl] += l2 * params[name][sl]

    if instrument is not None:
        instrument["retained_per_block"] = (
            [1 for _ in state.net.blocks]  # block input only
            if caches is None
            else [1 + len(c) for c in caches]
        )
        instrument["plans"] = plans
        instrument["active_slices"] = slices
    return grads, {"loss": loss, "data_loss": data_loss, "plans": plans}


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainHyper:
    peak_lr: float = 0.12
    momentum: float = 0.9
    l2: float = DEFAULT_L2
    total_steps: int = 1000
    lr_warmup_fraction: float = 0.025
    remat: bool = False


def train_lr(hyper: TrainHyper, step: int) -> float:
    """Linear warmup to the peak rate, then cosine decay to zero."""
    ws = max(1, int(round(hyper.lr_warmup_fraction * hyper.total_steps)))
    if step < ws:
        return hyper.peak_lr * (step + 1) / ws
    denom = max(1, hyper.total_steps - ws)
    progress = (step - ws) / denom
    return hyper.peak_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def train_step(
    state: SupernetState,
    arch: Architecture,
    batch: tuple[np.ndarray, np.ndarray],
    hyper: TrainHyper,
    p_op: float = 0.0,
    p_filter: float = 0.0,
    seed=0,
) -> SupernetState:
    """One SGD-with-momentum step on the shared weights; mutates and
    returns ``state``."""
    grads, _ = grad(
        state, arch, batch, remat=hyper.remat, p_op=p_op, p_filter=p_filter, seed=seed, l2=hyper.l2
    )
    lr = train_lr(hyper, state.step)
    for name, g in grads.items():
        v = state.velocity[name]
        v *= hyper.momentum
        v += g
        state.params[name] -= lr * v
    state.step += 1
    return state


def estimate_quality(
    state: SupernetState, arch: Architecture, valid_batch: tuple[np.ndarray, np.ndarray]
) -> float:
    """Single-batch accuracy with warmup probabilities forced to zero."""
    X, y = valid_batch
    logits = forward(state, arch, X, p_op=0.0, p_filter=0.0, seed=0)
    return float((logits.argmax(axis=1) == y).mean())


# --------------------------------------------------------------------------
# standalone extraction


def degenerate_space(space: SearchSpace, arch: Architecture) -> SearchSpace:
    """Single-architecture space: every decision keeps only the chosen
    label."""
    decisions = tuple(
        Decision(
            id=d.id,
            name=d.name,
            kind=d.kind,
            block_index=d.block_index,
            choices=(d.choices[arch.choices[d.id]],),
        )
        for d in space.decisions
    )
    return SearchSpace(
        name=f"{space.name}/extracted",
        decisions=decisions,
        filter_ties=(),
        block_layout=space.block_layout,
    )


@dataclass
class StandaloneModel:
    state: SupernetState

    @property
    def arch(self) -> Architecture:
        return Architecture((0,) * self.state.net.space.num_decisions)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return forward(self.state, self.arch, X)

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        return float((self.logits(X).argmax(axis=1) == y).mean())


def extract_standalone(state: SupernetState, arch: Architecture) -> StandaloneModel:
    """Slice the shared weights down to the architecture's widths and ops.

    The result's forward pass equals the masked supernet forward with
    warmup off.
    """
    _check_arch(state.net, arch)
    net = state.net
    sub_space = degenerate_space(net.space, arch)
    sub_net = Supernet.build(sub_space, replace(net.config, sharing_mode="collapsed"))
    plans = _block_plans(net, arch, 0.0, 0.0, 0)
    params: dict[str, np.ndarray] = {
        "stem/w": state.params["stem/w"].copy(),
        "stem/b": state.params["stem/b"].copy(),
    }
    for blk, plan in zip(net.blocks, plans):
        b = blk.index
        k = plan.ops[0]
        ew, eb, pw, pb = _expand_names(net, b, k)
        params[f"block{b}/expand/w"] = state.params[ew][: plan.w_in, : plan.w_exp].copy()
        params[f"block{b}/expand/b"] = state.params[eb][: plan.w_exp].copy()
        params[f"block{b}/op0/scale"] = state.params[f"block{b}/op{k}/scale"][: plan.w_exp].copy()
        params[f"block{b}/op0/bias"] = state.params[f"block{b}/op{k}/bias"][: plan.w_exp].copy()
        if blk.se_optional and plan.se_on:
            params[f"block{b}/se/v"] = state.params[f"block{b}/se/v"][: plan.w_exp].copy()
            params[f"block{b}/se/b"] = state.params[f"block{b}/se/b"][: plan.w_exp].copy()
        params[f"block{b}/project/w"] = state.params[pw][: plan.w_exp, : plan.w_out].copy()
        params[f"block{b}/project/b"] = state.params[pb][: plan.w_out].copy()
    w_last = plans[-1].w_out if plans else net.config.trunk_width
    params["head/w"] = state.params["head/w"][:w_last, :].copy()
    params["head/b"] = state.params["head/b"].copy()

    # SE decisions fixed at "off" contribute no parameters; rebuild the
    # sub-net block specs accordingly.
    sub_blocks = []
    for blk, plan in zip(sub_net.blocks, plans):
        sub_blocks.append(replace(blk, se_optional=blk.se_optional and plan.se_on))
        if not (blk.se_optional and plan.se_on):
            params.pop(f"block{blk.index}/se/v", None)
            params.pop(f"block{blk.index}/se/b", None)
    sub_net = replace(sub_net, blocks=tuple(sub_blocks))
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    return StandaloneModel(state=SupernetState(net=sub_net, params=params, velocity=velocity))


# --------------------------------------------------------------------------
# synthetic dataset


@dataclass(frozen=True)
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_valid: np.ndarray
    y_valid: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.y_train.max()) + 1

    def train_batch(self, rng: np.random.Generator, size: int):
        idx = rng.integers(0, len(self.y_train), size=size)
        return self.X_train[idx], self.y_train[idx]

    def valid_batch(self, rng: np.random.Generator, size: int):
        idx = rng.integers(0, len(self.y_valid), size=size)
        return self.X_valid[idx], self.y_valid[idx]


def make_dataset(
    seed: int = 0,
    n_classes: int = 4,
    n_features: int = 16,
    n_train: int = 8192,
    n_valid: int = 2048,
    clusters_per_class: int = 3,
    cluster_scale: float = 2.0,
    noise: float = 1.0,
) -> Dataset:
    """Gaussian-cluster classification with several clusters per class, so
    class regions are nonconvex and model capacity matters."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, cluster_scale, size=(n_classes, clusters_per_class, n_features))

    def draw(n):
        y = np.arange(n) % n_classes
        rng.shuffle(y)
        cluster = rng.integers(0, clusters_per_class, size=n)
        X = means[y, cluster] + rng.normal(0.0, noise, size=(n, n_features))
        return X, y.astype(np.int64)

    X_train, y_train = draw(n_train)
    X_valid, y_valid = draw(n_valid)
    return Dataset(X_train, y_train, X_valid, y_valid)


def train_standalone(
    space: SearchSpace,
    arch: Architecture,
    dataset: Dataset,
    config: SupernetConfig,
    hyper: TrainHyper,
    seed: int,
    batch_size: int = 64,
) -> tuple[StandaloneModel, float]:
    """Train the architecture from scratch (no sharing) and return the
    model plus its full-validation-set accuracy."""
    sub_space = degenerate_space(space, arch)
    state = init_supernet(sub_space, replace(config, sharing_mode="collapsed"), seed)
    model = StandaloneModel(state=state)
    unique = model.arch
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    for _ in range(hyper.total_steps):
        batch = dataset.train_batch(rng, batch_size)
        train_step(state, unique, batch, hyper)
    acc = model.accuracy(dataset.X_valid, dataset.y_valid)
    return model, acc


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "latnas-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(state: SupernetState, path) -> None:
    """Single JSON container: name -> shape -> row-major float values."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "sharing_mode": state.sharing_mode,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in state.params.items()
        },
        "velocity": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in state.velocity.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(state: SupernetState, path) -> SupernetState:
    """Load parameters into a state built over the same space/config."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a recognized checkpoint")
    if doc["sharing_mode"] != state.sharing_mode:
        raise ValueError("checkpoint sharing mode does not match the state")
    for container, target in (("params", state.params), ("velocity", state.velocity)):
        stored = doc[container]
        if set(stored) != set(target):
            raise ValueError(f"checkpoint {container} do not match the network")
        for name, spec in stored.items():
            arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
            if arr.shape != target[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            target[name] = arr
    state.step = int(doc["step"])
    return state
