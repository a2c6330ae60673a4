"""Selective state-space block: parameters, discretization, scan, and readout.

The block maps raw token sequences through a frozen embedding, computes the
input-conditioned scan parameters, discretizes with a zero-order hold, runs
the per-token state recurrence, and projects the scan output through a
trainable output matrix. All operations accept an optional leading batch
axis: documented shapes use (L, ...) but (M, L, ...) works identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DomainError, ShapeError
from .validation import as_array, as_labels, as_matrix, as_vector

# below this magnitude exp(z)-1 over z switches to its series expansion
PHI_SERIES_CUTOFF = 1e-8
_TINY = np.finfo(np.float64).tiny


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass
class SsmParams:
    """Trainable scan parameters.

    a:          (D, N) continuous state matrix, entries negative at init
    w_b, w_c:   (D, N) input projections for the scan input/readout mixes
    w_delta:    (D, d_delta) input projection for the step size
    delta_bias: (d_delta,) bias fed to the softplus that produces step sizes
    """

    a: np.ndarray
    w_b: np.ndarray
    w_c: np.ndarray
    w_delta: np.ndarray
    delta_bias: np.ndarray

    def __post_init__(self):
        self.a = as_matrix(self.a, "a")
        self.w_b = as_matrix(self.w_b, "w_b")
        self.w_c = as_matrix(self.w_c, "w_c")
        self.w_delta = as_matrix(self.w_delta, "w_delta")
        self.delta_bias = as_vector(self.delta_bias, "delta_bias")
        d, n = self.a.shape
        if self.w_b.shape != (d, n) or self.w_c.shape != (d, n):
            raise ShapeError("w_b and w_c must match the shape of a")
        if self.w_delta.shape[0] != d:
            raise ShapeError("w_delta must have one row per channel")
        if self.delta_bias.shape[0] != self.w_delta.shape[1]:
            raise ShapeError("delta_bias length must equal w_delta columns")
        if self.w_delta.shape[1] not in (1, d):
            raise ShapeError("step-size width must be 1 or the channel count")

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def d_delta(self) -> int:
        return self.w_delta.shape[1]


@dataclass
class BlockParams:
    """One block: frozen embedding, trainable scan, trainable output matrix.

    embed is fixed at construction and never updated. w_gate, when present,
    is an equally frozen gating projection applied multiplicatively to the
    scan output before w_out.
    """

    embed: np.ndarray
    ssm: SsmParams
    w_out: np.ndarray
    w_gate: np.ndarray | None = None

    def __post_init__(self):
        self.embed = as_matrix(self.embed, "embed")
        self.w_out = as_matrix(self.w_out, "w_out")
        if self.embed.shape[1] != self.ssm.d:
            raise ShapeError("embed columns must equal the scan channel count")
        if self.w_out.shape[0] != self.ssm.d:
            raise ShapeError("w_out rows must equal the scan channel count")
        if self.w_gate is not None:
            self.w_gate = as_matrix(self.w_gate, "w_gate")
            if self.w_gate.shape != (self.ssm.d, self.ssm.d):
                raise ShapeError("w_gate must be square over the channel count")

    @property
    def d_in(self) -> int:
        return self.embed.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_out.shape[1]


@dataclass
class SequenceBatch:
    """A labelled batch of raw sequences: x is (M, L, D_raw), labels (M,)."""

    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.x = as_array(self.x, "x", ndim=3)
        self.labels = as_labels(self.labels)
        if self.labels.shape[0] != self.x.shape[0]:
            raise ShapeError("labels length must equal the sample count")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class FeatureCapture:
    """Stacked per-token features of one block, (M*L) rows each.

    x_feats:      embedded tokens (rows that multiply w_delta/w_c)
    delta_feats:  post-softplus step sizes
    deltax_feats: step-size-scaled embedded tokens
    y_feats:      scan outputs, i.e. the rows that multiply w_out
    """

    x_feats: np.ndarray
    delta_feats: np.ndarray
    deltax_feats: np.ndarray
    y_feats: np.ndarray

    def __post_init__(self):
        rows = {m.shape[0] for m in (self.x_feats, self.delta_feats,
                                     self.deltax_feats, self.y_feats)}
        if len(rows) != 1:
            raise ShapeError("feature matrices must share a row count")


# ---------------------------------------------------------------------------
# elementwise pieces shared by forward and backward passes
# ---------------------------------------------------------------------------


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), overflow-safe, clamped strictly positive."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return np.maximum(out, _TINY)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def phi(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z with the removable singularity filled by its series."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < PHI_SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def phi_prime(z: np.ndarray) -> np.ndarray:
    """Derivative of phi; series branch matches the truncation used by phi."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < PHI_SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    exact = ((safe - 1.0) * np.expm1(safe) + safe) / (safe * safe)
    return np.where(small, 0.5 + z / 3.0, exact)


def _broadcast_delta(delta: np.ndarray, d: int) -> np.ndarray:
    """Expand (..., L, d_delta) step sizes to one column per channel."""
    d_delta = delta.shape[-1]
    if d_delta == d:
        return delta
    if d_delta == 1:
        return np.broadcast_to(delta, delta.shape[:-1] + (d,))
    raise ShapeError(f"step-size width {d_delta} must be 1 or {d}")


# ---------------------------------------------------------------------------
# forward operations
# ---------------------------------------------------------------------------


def compute_bcd(x_emb: np.ndarray, p: SsmParams):
    """Input-conditioned scan parameters from embedded tokens.

    Returns (b, c, delta) where b = x w_b, c = x w_c and
    delta = softplus(delta_bias + x w_delta) is strictly positive.
    """
    x_emb = as_array(x_emb, "x_emb")
    if x_emb.shape[-1] != p.d:
        raise ShapeError(
            f"x_emb has {x_emb.shape[-1]} channels, parameters expect {p.d}")
    b = x_emb @ p.w_b
    c = x_emb @ p.w_c
    delta = softplus(p.delta_bias + x_emb @ p.w_delta)
    return b, c, delta


def discretize(delta: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Zero-order-hold discretization of the continuous scan parameters.

    abar[l,d,n] = exp(delta[l,d] * a[d,n])
    bbar[l,d,n] = phi(delta[l,d] * a[d,n]) * delta[l,d] * b[l,n]
    """
    delta = as_array(delta, "delta")
    a = as_matrix(a, "a")
    b = as_array(b, "b")
    if np.any(delta <= 0.0):
        raise DomainError("step sizes must be strictly positive")
    dd = _broadcast_delta(delta, a.shape[0])
    z = dd[..., :, None] * a  # (..., L, D, N)
    abar = np.exp(z)
    bbar = phi(z) * dd[..., :, None] * b[..., None, :]
    return abar, bbar


def selective_scan(x_emb, abar, bbar, c, return_states: bool = False):
    """Per-token state recurrence h_l = abar_l * h_{l-1} + bbar_l * x_l.

    The readout is y[l, d] = sum_n c[l, n] h[l, d, n], with h_0 = 0. Output
    at position l depends only on tokens at positions <= l.
    """
    x_emb = as_array(x_emb, "x_emb")
    abar = np.asarray(abar, dtype=np.float64)
    bbar = np.asarray(bbar, dtype=np.float64)
    c = as_array(c, "c")
    lead = x_emb.shape[:-2]
    length, d = x_emb.shape[-2], x_emb.shape[-1]
    n = abar.shape[-1]
    if abar.shape != lead + (length, d, n) or bbar.shape != abar.shape:
        raise ShapeError("abar/bbar shapes do not match the input sequence")
    if c.shape != lead + (length, n):
        raise ShapeError("c shape does not match the input sequence")

    h = np.zeros(lead + (d, n))
    y = np.empty(lead + (length, d))
    states = np.empty(lead + (length, d, n)) if return_states else None
    for l in range(length):
        h = abar[..., l, :, :] * h + bbar[..., l, :, :] * x_emb[..., l, :, None]
        y[..., l, :] = np.einsum("...dn,...n->...d", h, c[..., l, :])
        if return_states:
            states[..., l, :, :] = h
    if return_states:
        return y, states
    return y


def build_lti_kernel(abar_0, bbar_0, c_0, k_len: int) -> np.ndarray:
    """Convolution kernel of the token-invariant scan.

    kernel[k, d] = sum_n c[n] * abar[d, n]**k * bbar[d, n]. Feeding the
    single-token parameter slices reused at every position makes the scan a
    causal convolution with this kernel.
    """
    abar_0 = as_array(abar_0, "abar_0", ndim=3)
    bbar_0 = as_array(bbar_0, "bbar_0", ndim=3)
    c_0 = as_matrix(c_0, "c_0")
    if abar_0.shape[0] != 1 or bbar_0.shape != abar_0.shape or c_0.shape[0] != 1:
        raise ShapeError("kernel construction expects single-token slices")
    a0, b0, c0 = abar_0[0], bbar_0[0], c_0[0]
    d = a0.shape[0]
    kernel = np.empty((k_len, d))
    power = np.ones_like(a0)
    for k in range(k_len):
        kernel[k] = (power * b0) @ c0
        power = power * a0
    return kernel


def block_forward(x, block: BlockParams, capture: bool = False):
    """Full block: embed, parameterize, discretize, scan, project.

    x is (M, L, D_in) raw input (or (L, D_in) for a single sequence). When
    capture is set, also returns the stacked per-token features the
    covariance bookkeeping needs.
    """
    x = as_array(x, "x")
    if x.shape[-1] != block.d_in:
        raise ShapeError(
            f"input feature width {x.shape[-1]} != embedding rows {block.d_in}")
    x_emb = x @ block.embed
    b, c, delta = compute_bcd(x_emb, block.ssm)
    abar, bbar = discretize(delta, block.ssm.a, b)
    y = selective_scan(x_emb, abar, bbar, c)
    if block.w_gate is not None:
        u = x_emb @ block.w_gate
        y = y * (u * sigmoid(u))
    y_out = y @ block.w_out
    if not capture:
        return y_out, None
    dd = _broadcast_delta(delta, block.ssm.d)
    features = FeatureCapture(
        x_feats=x_emb.reshape(-1, block.ssm.d),
        delta_feats=delta.reshape(-1, block.ssm.d_delta),
        deltax_feats=(dd * x_emb).reshape(-1, block.ssm.d),
        y_feats=y.reshape(-1, block.ssm.d),
    )
    return y_out, features


def stack_forward(x, blocks, capture: bool = False):
    """Run a sequential list of blocks; returns (y_out, features per block)."""
    captures = []
    out = x
    for block in blocks:
        out, feats = block_forward(out, block, capture=capture)
        captures.append(feats)
    return out, (captures if capture else None)


def model_forward(x, blocks, heads) -> np.ndarray:
    """Mean-pool the final block output and apply every head, concatenated.

    Returns (M, total classes) logits with heads laid out in task order.
    """
    if isinstance(blocks, BlockParams):
        blocks = [blocks]
    if not heads:
        raise ConfigurationError("at least one classifier head is required")
    y_out, _ = stack_forward(x, blocks, capture=False)
    pooled = y_out.mean(axis=-2)
    return np.concatenate([pooled @ h for h in heads], axis=-1)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def init_ssm_params(rng: np.random.Generator, d: int, n: int,
                    d_delta: int) -> SsmParams:
    """Stable defaults: a[d, n] = -(n + 1), projections ~ U(-1, 1)/sqrt(D),
    bias set so the initial step sizes sit near the middle of [0.01, 0.1]."""
    a = -np.tile(np.arange(1.0, n + 1.0), (d, 1))
    scale = 1.0 / np.sqrt(d)
    target = 0.055
    bias = float(np.log(np.expm1(target)))
    return SsmParams(
        a=a,
        w_b=rng.uniform(-1.0, 1.0, (d, n)) * scale,
        w_c=rng.uniform(-1.0, 1.0, (d, n)) * scale,
        w_delta=rng.uniform(-1.0, 1.0, (d, d_delta)) * scale,
        delta_bias=np.full(d_delta, bias),
    )


def init_block(rng: np.random.Generator, d_in: int, d: int, n: int,
               d_delta: int, d_out: int, gating: bool = False) -> BlockParams:
    embed = rng.standard_normal((d_in, d)) / np.sqrt(d_in)
    ssm = init_ssm_params(rng, d, n, d_delta)
    w_out = rng.uniform(-1.0, 1.0, (d, d_out)) / np.sqrt(d)
    w_gate = rng.standard_normal((d, d)) / np.sqrt(d) if gating else None
    return BlockParams(embed=embed, ssm=ssm, w_out=w_out, w_gate=w_gate)


def field_names() -> tuple[str, ...]:
    """Trainable tensor names of one block, in a fixed canonical order."""
    return ("a", "w_b", "w_c", "w_delta", "delta_bias", "w_out")
