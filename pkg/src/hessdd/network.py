"""Small dense multilayer perceptrons with exact parameter derivatives.

Networks have at most two hidden layers, relu or linear activations, and a
final affine layer.  Parameters live in a single flat float64 vector with a
frozen packing: layers in forward order, each contributing its weight matrix
in row-major order followed by its bias vector (when biases are enabled).
A network may be marked output_only, in which case only the final layer's
parameters are trainable and everything below is held fixed; the flat
vector then covers just the final layer.

Derivatives are exact, not autodiff approximations.  For relu the
activation derivative at exactly zero preactivation is taken to be 0, and
the activation's second derivative is 0 everywhere, which makes the
per-output parameter Hessian block-structured: within-layer blocks vanish
and a cross-layer block between layers l < m is a rank-structured product
of the downstream sensitivity at m, the gated chain from m down to l, and
the forward activation entering l.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description; immutable and hashable."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    bias: bool = True
    output_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be at least 1")
        if len(self.hidden_widths) > 2:
            raise ValueError("at most two hidden layers are supported")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def depth(self) -> int:
        """Number of affine layers L; 1 means a linear model."""
        return len(self.hidden_widths) + 1

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = self.layer_dims
        return [(dims[l + 1], dims[l]) for l in range(self.depth)]

    @property
    def trainable_layers(self) -> tuple[int, ...]:
        if self.output_only:
            return (self.depth - 1,)
        return tuple(range(self.depth))

    def layer_size(self, l: int) -> int:
        n_out, n_in = self.layer_shapes()[l]
        return n_out * n_in + (n_out if self.bias else 0)

    @property
    def param_count(self) -> int:
        """Trainable parameter count p."""
        return sum(self.layer_size(l) for l in self.trainable_layers)

    @property
    def fixed_count(self) -> int:
        return sum(self.layer_size(l) for l in range(self.depth)) - self.param_count


@dataclass
class MlpParams:
    """Flat parameter state for an MlpSpec.

    theta holds the trainable layers in packing order; fixed holds the
    frozen layers (empty unless the spec is output_only).
    """

    spec: MlpSpec
    theta: np.ndarray
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel().copy()
        self.fixed = np.asarray(self.fixed, dtype=np.float64).ravel().copy()
        if self.theta.size != self.spec.param_count:
            raise ValueError(
                f"theta has {self.theta.size} entries, spec wants {self.spec.param_count}"
            )
        if self.fixed.size != self.spec.fixed_count:
            raise ValueError(
                f"fixed has {self.fixed.size} entries, spec wants {self.spec.fixed_count}"
            )

    @property
    def p(self) -> int:
        return self.theta.size

    def replace_theta(self, theta: np.ndarray) -> "MlpParams":
        return MlpParams(self.spec, theta, self.fixed)


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """Deterministic init: weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    trainable, frozen = [], []
    for l, (n_out, n_in) in enumerate(spec.layer_shapes()):
        bound = float(np.sqrt(6.0 / n_in))
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        parts = [w.ravel()]
        if spec.bias:
            parts.append(np.zeros(n_out))
        flat = np.concatenate(parts)
        (trainable if l in spec.trainable_layers else frozen).append(flat)
    theta = np.concatenate(trainable) if trainable else np.zeros(0)
    fixed = np.concatenate(frozen) if frozen else np.zeros(0)
    return MlpParams(spec, theta, fixed)


def unflatten(params: MlpParams) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Recover per-layer (W, b) views in forward order; b is None without bias."""
    spec = params.spec
    out: list[tuple[np.ndarray, np.ndarray | None]] = []
    off_t = off_f = 0
    for l, (n_out, n_in) in enumerate(spec.layer_shapes()):
        src = params.theta if l in spec.trainable_layers else params.fixed
        if l in spec.trainable_layers:
            off = off_t
        else:
            off = off_f
        w = src[off : off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = None
        if spec.bias:
            b = src[off : off + n_out]
            off += n_out
        if l in spec.trainable_layers:
            off_t = off
        else:
            off_f = off
        out.append((w, b))
    return out


def flatten(spec: MlpSpec, layers: list[tuple[np.ndarray, np.ndarray | None]]) -> MlpParams:
    """Inverse of unflatten; round-trips bit-exactly."""
    trainable, frozen = [], []
    for l, (w, b) in enumerate(layers):
        parts = [np.asarray(w, dtype=np.float64).ravel()]
        if spec.bias:
            parts.append(np.asarray(b, dtype=np.float64).ravel())
        flat = np.concatenate(parts)
        (trainable if l in spec.trainable_layers else frozen).append(flat)
    theta = np.concatenate(trainable) if trainable else np.zeros(0)
    fixed = np.concatenate(frozen) if frozen else np.zeros(0)
    return MlpParams(spec, theta, fixed)


def trainable_offsets(spec: MlpSpec) -> dict[int, tuple[int, int | None]]:
    """Map trainable layer index -> (weight offset, bias offset or None) in theta."""
    out: dict[int, tuple[int, int | None]] = {}
    off = 0
    for l in spec.trainable_layers:
        n_out, n_in = spec.layer_shapes()[l]
        w_off = off
        off += n_out * n_in
        b_off = None
        if spec.bias:
            b_off = off
            off += n_out
        out[l] = (w_off, b_off)
    return out


def _act(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        # subgradient at the kink is fixed to 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward_caches(params: MlpParams, x: np.ndarray):
    """Single-sample forward pass returning activations and preactivations.

    Returns (f, acts, preacts) where acts[l] is the input to layer l
    (acts[0] == x) and preacts[l] is z at layer l.
    """
    layers = unflatten(params)
    a = np.asarray(x, dtype=np.float64).ravel()
    acts = [a]
    preacts = []
    for l, (w, b) in enumerate(layers):
        z = w @ a
        if b is not None:
            z = z + b
        preacts.append(z)
        a = _act(params.spec, z) if l < params.spec.depth - 1 else z
        if l < params.spec.depth - 1:
            acts.append(a)
    return a, acts, preacts


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    f, _, _ = forward_caches(params, x)
    return f


def batch_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Forward pass over rows of x, returning (n, K) outputs."""
    layers = unflatten(params)
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    for l, (w, b) in enumerate(layers):
        z = a @ w.T
        if b is not None:
            z = z + b
        a = _act(params.spec, z) if l < params.spec.depth - 1 else z
    return a


def _sensitivities(params: MlpParams, preacts) -> list[np.ndarray]:
    """delta[l] = d f / d z_l, shape (K, n_l), for every layer l."""
    spec = params.spec
    layers = unflatten(params)
    L = spec.depth
    delta = [None] * L
    delta[L - 1] = np.eye(spec.output_dim)
    for l in range(L - 2, -1, -1):
        w_next = layers[l + 1][0]
        delta[l] = (delta[l + 1] @ w_next) * _act_grad(spec, preacts[l])[None, :]
    return delta


def jacobian(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Exact d f / d theta at one input, shape (p, K)."""
    spec = params.spec
    _, acts, preacts = forward_caches(params, x)
    delta = _sensitivities(params, preacts)
    jac = np.zeros((params.p, spec.output_dim))
    offs = trainable_offsets(spec)
    for l in spec.trainable_layers:
        n_out, n_in = spec.layer_shapes()[l]
        w_off, b_off = offs[l]
        # column k of the W block is outer(delta[l][k], a_{l-1}) flattened
        block = np.einsum("ki,j->kij", delta[l], acts[l]).reshape(spec.output_dim, -1)
        jac[w_off : w_off + n_out * n_in, :] = block.T
        if b_off is not None:
            jac[b_off : b_off + n_out, :] = delta[l].T
    return jac


def weighted_second_jacobian(params: MlpParams, x: np.ndarray, w_out: np.ndarray) -> np.ndarray:
    """Exact sum_k w_out[k] * d^2 f_k / d theta^2 at one input, shape (p, p).

    Only cross-layer blocks between trainable layers l < m are non-zero.
    With u_m = delta_m^T w_out, gate vectors d_j = phi'(z_j) and the chain
    P = D_{m-1} W_{m-1} ... W_{l+1} D_l, the blocks are

        d2/dW_m dW_l [(r,s),(i,j)] = u_m[r] * P[s,i] * a_{l-1}[j]
        d2/dW_m db_l [(r,s), i   ] = u_m[r] * P[s,i]

    and every within-layer block, bias-bias block, and dW_l/db_m block with
    l < m is identically zero on the activation pattern's interior.
    """
    spec = params.spec
    w_out = np.asarray(w_out, dtype=np.float64).ravel()
    if w_out.size != spec.output_dim:
        raise ValueError("weight vector length must equal output_dim")
    _, acts, preacts = forward_caches(params, x)
    delta = _sensitivities(params, preacts)
    layers = unflatten(params)
    gates = [_act_grad(spec, preacts[l]) for l in range(spec.depth - 1)]
    offs = trainable_offsets(spec)
    m_mat = np.zeros((params.p, params.p))
    train = spec.trainable_layers
    for li, l in enumerate(train):
        for m in train[li + 1 :]:
            # chain P(m-1, l) built upward from diag(d_l)
            p_chain = np.diag(gates[l])
            for j in range(l + 1, m):
                p_chain = gates[j][:, None] * (layers[j][0] @ p_chain)
            u_m = delta[m].T @ w_out
            n_m_out, n_m_in = spec.layer_shapes()[m]
            n_l_out, n_l_in = spec.layer_shapes()[l]
            w_off_m, _ = offs[m]
            w_off_l, b_off_l = offs[l]
            w_block = np.einsum("r,si,j->rsij", u_m, p_chain, acts[l]).reshape(
                n_m_out * n_m_in, n_l_out * n_l_in
            )
            rows = slice(w_off_m, w_off_m + n_m_out * n_m_in)
            cols = slice(w_off_l, w_off_l + n_l_out * n_l_in)
            m_mat[rows, cols] = w_block
            m_mat[cols, rows] = w_block.T
            if b_off_l is not None:
                b_block = np.einsum("r,si->rsi", u_m, p_chain).reshape(
                    n_m_out * n_m_in, n_l_out
                )
                bcols = slice(b_off_l, b_off_l + n_l_out)
                m_mat[rows, bcols] = b_block
                m_mat[bcols, rows] = b_block.T
    return m_mat


def second_jacobian(params: MlpParams, x: np.ndarray, k: int) -> np.ndarray:
    """Exact d^2 f_k / d theta^2 at one input, shape (p, p)."""
    if not 0 <= k < params.spec.output_dim:
        raise ValueError(f"output index {k} out of range")
    w = np.zeros(params.spec.output_dim)
    w[k] = 1.0
    return weighted_second_jacobian(params, x, w)


def min_kink_gap(params: MlpParams, x: np.ndarray) -> float:
    """Smallest |preactivation| over hidden units and rows of x.

    Finite-difference checks of relu networks are only trustworthy when
    this gap comfortably exceeds the probe step.
    """
    if params.spec.depth == 1 or params.spec.activation != "relu":
        return np.inf
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    layers = unflatten(params)
    gap = np.inf
    a = x
    for l, (w, b) in enumerate(layers[:-1]):
        z = a @ w.T
        if b is not None:
            z = z + b
        gap = min(gap, float(np.min(np.abs(z))))
        a = _act(params.spec, z)
    return gap


# ---------------------------------------------------------------------------
# empirical loss over a batch, and its exact gradient


def _targets_ok(kind: str, y: np.ndarray, n: int, k_out: int):
    if kind == "mse":
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape != (n, k_out):
            raise ValueError(f"mse targets must have shape {(n, k_out)}, got {y.shape}")
        return y
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError("cross_entropy targets must be a length-n class index vector")
    if np.any((y < 0) | (y >= k_out)):
        raise ValueError("class index out of range")
    return y.astype(np.intp)


def empirical_loss(params: MlpParams, x: np.ndarray, y, kind: str) -> float:
    """Mean per-sample loss over the rows of x."""
    losses._check_kind(kind)
    f = batch_forward(params, x)
    n = f.shape[0]
    y = _targets_ok(kind, y, n, params.spec.output_dim)
    if kind == "mse":
        r = f - y
        return 0.5 * float(np.sum(r * r)) / n
    m = np.max(f, axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(f - m), axis=1))
    return float(np.mean(lse - f[np.arange(n), y]))


def batch_output_grad(f: np.ndarray, y, kind: str) -> np.ndarray:
    """Per-sample loss gradient in output space, shape (n, K)."""
    if kind == "mse":
        return f - y
    m = np.max(f, axis=1, keepdims=True)
    e = np.exp(f - m)
    p = e / np.sum(e, axis=1, keepdims=True)
    p[np.arange(f.shape[0]), y] -= 1.0
    return p


def loss_gradient(params: MlpParams, x: np.ndarray, y, kind: str) -> np.ndarray:
    """Exact gradient of the mean loss with respect to theta."""
    losses._check_kind(kind)
    spec = params.spec
    layers = unflatten(params)
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    n = a.shape[0]
    y = _targets_ok(kind, y, n, spec.output_dim)
    acts = [a]
    preacts = []
    for l, (w, b) in enumerate(layers):
        z = acts[-1] @ w.T
        if b is not None:
            z = z + b
        preacts.append(z)
        if l < spec.depth - 1:
            acts.append(_act(spec, z))
    f = preacts[-1]
    delta = batch_output_grad(f, y, kind) / n
    grads: dict[int, tuple[np.ndarray, np.ndarray | None]] = {}
    for l in range(spec.depth - 1, -1, -1):
        gw = delta.T @ acts[l]
        gb = np.sum(delta, axis=0) if spec.bias else None
        grads[l] = (gw, gb)
        if l > 0:
            delta = (delta @ layers[l][0]) * _act_grad(spec, preacts[l - 1])
    parts = []
    for l in spec.trainable_layers:
        gw, gb = grads[l]
        parts.append(gw.ravel())
        if gb is not None:
            parts.append(gb)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# finite-difference oracle for the full loss Hessian


def _loss_many(params: MlpParams, thetas: np.ndarray, x: np.ndarray, y, kind: str) -> np.ndarray:
    """Mean loss at many parameter vectors at once; rows of thetas are thetas.

    Forward logic is repeated here in theta-batched form on purpose: the
    finite-difference oracle should only rely on plain forward evaluation.
    """
    spec = params.spec
    t_count = thetas.shape[0]
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    y = _targets_ok(kind, y, n, spec.output_dim)
    offs = trainable_offsets(spec)
    fixed_layers = unflatten(params)
    a = np.broadcast_to(x, (t_count, n, x.shape[1]))
    for l, (n_out, n_in) in enumerate(spec.layer_shapes()):
        if l in offs:
            w_off, b_off = offs[l]
            w = thetas[:, w_off : w_off + n_out * n_in].reshape(t_count, n_out, n_in)
            z = np.einsum("tni,toi->tno", a, w)
            if b_off is not None:
                z = z + thetas[:, b_off : b_off + n_out][:, None, :]
        else:
            w, b = fixed_layers[l]
            z = a @ w.T
            if b is not None:
                z = z + b
        a = _act(spec, z) if l < spec.depth - 1 else z
    f = a
    if kind == "mse":
        r = f - y[None, :, :]
        return 0.5 * np.sum(r * r, axis=(1, 2)) / n
    m = np.max(f, axis=2, keepdims=True)
    lse = m[:, :, 0] + np.log(np.sum(np.exp(f - m), axis=2))
    return np.mean(lse - f[:, np.arange(n), y], axis=1)


def fd_loss_hessian(
    params: MlpParams, x: np.ndarray, y, kind: str, h: float = 1e-4, max_p: int = 400
) -> np.ndarray:
    """Symmetrized central-difference Hessian of the mean loss.

    Pure forward evaluations only, so this is independent of every exact
    derivative code path.  Steps are scaled per coordinate as
    h_j = h * (1 + |theta_j|).  Quadratic cost in p; refuse beyond max_p.
    """
    p = params.p
    if p > max_p:
        raise ValueError(f"finite-difference oracle capped at p <= {max_p}, got {p}")
    theta = params.theta
    steps = h * (1.0 + np.abs(theta))
    hess = np.zeros((p, p))

    plus = theta[None, :] + np.diag(steps)
    minus = theta[None, :] - np.diag(steps)
    l_plus = _loss_many(params, plus, x, y, kind)
    l_minus = _loss_many(params, minus, x, y, kind)
    l_zero = _loss_many(params, theta[None, :], x, y, kind)[0]
    hess[np.diag_indices(p)] = (l_plus - 2.0 * l_zero + l_minus) / steps**2

    idx_i, idx_j = np.triu_indices(p, k=1)
    if idx_i.size:
        chunk = 2048
        for start in range(0, idx_i.size, chunk):
            ii = idx_i[start : start + chunk]
            jj = idx_j[start : start + chunk]
            m = ii.size
            block = np.tile(theta, (4 * m, 1))
            rows = np.arange(m)
            block[rows, ii] += steps[ii]
            block[rows, jj] += steps[jj]
            block[m + rows, ii] += steps[ii]
            block[m + rows, jj] -= steps[jj]
            block[2 * m + rows, ii] -= steps[ii]
            block[2 * m + rows, jj] += steps[jj]
            block[3 * m + rows, ii] -= steps[ii]
            block[3 * m + rows, jj] -= steps[jj]
            vals = _loss_many(params, block, x, y, kind)
            mixed = (vals[:m] - vals[m : 2 * m] - vals[2 * m : 3 * m] + vals[3 * m :]) / (
                4.0 * steps[ii] * steps[jj]
            )
            hess[ii, jj] = mixed
            hess[jj, ii] = mixed
    return 0.5 * (hess + hess.T)
