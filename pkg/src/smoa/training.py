"""Forward/backward passes, gradient checking, and full-batch AdamW training
for adapter-augmented linear layers, plus synthetic planted-update tasks.

The loss is mean squared error over all output entries.  Gradients are
closed-form: with G the loss gradient w.r.t. the update matrix,
restricted to block k as G_k and Hadamard-masked where the block carries
a mask, dB_k = s_k (G_k o M_k) A_k^T and dA_k = s_k B_k^T (G_k o M_k).
Frozen tensors (the host weight, masks, references) receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapters import block_layout, delta
from .errors import NumericalError, ValidationError
from .matrix_io import validate_matrix


class DivergenceError(NumericalError):
    """Training loss became non-finite."""


def random_weight(d_out: int, d_in: int, rng: np.random.Generator,
                  spectrum: str = "decaying") -> np.ndarray:
    """Random host weight with a controlled spectrum.

    "decaying" sets sigma_i proportional to i**-0.5, which keeps energy
    partitions nontrivial (a flat spectrum makes every partition trivial,
    a single spike empties most subspaces).  "equal" gives a flat
    spectrum, used by degeneracy tests.  The result is rescaled so its
    Frobenius norm is sqrt(d_out * d_in), i.e. d for square matrices.
    """
    p = min(d_out, d_in)
    if spectrum == "decaying":
        sigma = np.arange(1, p + 1, dtype=np.float64) ** -0.5
    elif spectrum == "equal":
        sigma = np.ones(p)
    else:
        raise ValidationError(f"spectrum must be 'decaying' or 'equal', got {spectrum!r}")
    qu, _ = np.linalg.qr(rng.standard_normal((d_out, p)))
    qv, _ = np.linalg.qr(rng.standard_normal((d_in, p)))
    w = (qu * sigma) @ qv.T
    w *= np.sqrt(d_out * d_in) / np.linalg.norm(w)
    return w


@dataclass(frozen=True)
class LinearTask:
    """Regression task whose optimal update is a known planted matrix.

    targets = inputs @ (w0 + target_delta)^T + Gaussian noise.  The
    planted target_delta is hidden from the learner; its numerical rank
    equals target_rank.
    """

    w0: np.ndarray
    target_delta: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    noise_std: float
    target_rank: int


def make_task(d: int, target_rank: int, n_samples: int, noise_std: float,
              seed: int, target_blocks: int | None = None) -> LinearTask:
    """Build a planted-update task on a d x d decaying-spectrum weight.

    The planted update is a sum of target_rank outer products of
    unit-norm Gaussian vectors, rescaled so its Frobenius norm is one
    tenth of the weight's.  With target_blocks=k the outer products are
    confined to the k diagonal blocks of the standard block layout (rank
    split evenly across blocks), so the update lives on the support that
    blocked adapters can reach; the default plants a dense update.
    """
    if target_rank < 1 or target_rank > d:
        raise ValidationError(f"target_rank must be in [1, {d}], got {target_rank}")
    if n_samples < 1:
        raise ValidationError(f"n_samples must be ≥ 1, got {n_samples}")
    if noise_std < 0:
        raise ValidationError(f"noise_std must be ≥ 0, got {noise_std}")
    rng = np.random.default_rng(seed)
    w0 = random_weight(d, d, rng)
    target = np.zeros((d, d))
    if target_blocks is None:
        for _ in range(target_rank):
            target += np.outer(_unit(rng, d), _unit(rng, d))
    else:
        layout = block_layout(d, d, target_blocks)
        base, extra = divmod(target_rank, target_blocks)
        for k in range(target_blocks):
            (r0, r1), (c0, c1) = layout.row_ranges[k], layout.col_ranges[k]
            rk = base + (1 if k < extra else 0)
            if rk > min(r1 - r0, c1 - c0):
                raise ValidationError(
                    f"block {k} of size {(r1 - r0, c1 - c0)} cannot carry planted rank {rk}"
                )
            for _ in range(rk):
                target[r0:r1, c0:c1] += np.outer(_unit(rng, r1 - r0), _unit(rng, c1 - c0))
    target *= 0.1 * np.linalg.norm(w0) / np.linalg.norm(target)
    inputs = rng.standard_normal((n_samples, d))
    targets = inputs @ (w0 + target).T
    if noise_std > 0:
        targets = targets + rng.normal(0.0, noise_std, size=targets.shape)
    w0.setflags(write=False)
    target.setflags(write=False)
    inputs.setflags(write=False)
    targets.setflags(write=False)
    return LinearTask(w0=w0, target_delta=target, inputs=inputs, targets=targets,
                      noise_std=noise_std, target_rank=target_rank)


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def forward(adapter, w0, x) -> np.ndarray:
    """x @ w0^T + x @ delta^T, without ever forming the merged weight."""
    w0 = validate_matrix(w0)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w0.shape[1]:
        raise ValidationError(
            f"inputs must be 2-D with {w0.shape[1]} features, got shape {x.shape}"
        )
    return x @ w0.T + x @ delta(adapter).T


@dataclass
class Gradients:
    A: list[np.ndarray]
    B: list[np.ndarray]


def backward(adapter, w0, x, upstream_grad) -> Gradients:
    """Gradients of the trainable factors given the loss gradient w.r.t.
    the forward output."""
    w0 = validate_matrix(w0)
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    if upstream.shape != (x.shape[0], w0.shape[0]):
        raise ValidationError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"output shape {(x.shape[0], w0.shape[0])}"
        )
    g_delta = upstream.T @ x
    grads_a, grads_b = [], []
    for blk in adapter.blocks():
        gk = g_delta[blk.row0:blk.row1, blk.col0:blk.col1]
        if blk.mask is not None:
            gk = gk * blk.mask
        grads_b.append(blk.scale * (gk @ blk.A.T))
        grads_a.append(blk.scale * (blk.B.T @ gk))
    return Gradients(A=grads_a, B=grads_b)


def mse(pred: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((pred - targets) ** 2))


def mse_upstream(pred: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (2.0 / pred.size) * (pred - targets)


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: tuple[str, int, int, int]  # (role, subspace, row, col)
    worst_analytic: float
    worst_numeric: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(adapter, w0, task: LinearTask, h: float = 1e-5, tol: float = 1e-6,
               sample_limit: int = 512, n_samples: int = 256, seed: int = 0,
               corrupt_for_testing: bool = False) -> GradCheckReport:
    """Compare analytic factor gradients against central finite differences.

    Every trainable entry is perturbed by +-h when the adapter holds at
    most sample_limit entries; larger adapters use a seeded subsample of
    n_samples entries.  Relative error is |a - n| / max(|a|, |n|, 1e-8).
    Failures are report entries, never exceptions.

    corrupt_for_testing flips the sign of the largest analytic gradient
    before comparing, to verify the checker itself catches bad gradients.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValidationError(f"step h must be in [1e-7, 1e-3], got {h}")
    x, targets = task.inputs, task.targets
    pred = forward(adapter, w0, x)
    grads = backward(adapter, w0, x, mse_upstream(pred, targets))

    entries = []
    for k in range(len(adapter.A)):
        for (role, tensor) in (("A", adapter.A[k]), ("B", adapter.B[k])):
            rows, cols = tensor.shape
            entries.extend((role, k, i, j) for i in range(rows) for j in range(cols))
    if len(entries) > sample_limit:
        picker = np.random.default_rng(seed)
        chosen = picker.choice(len(entries), size=n_samples, replace=False)
        entries = [entries[i] for i in sorted(chosen)]

    if corrupt_for_testing:
        flat = [(abs(getattr(grads, role)[k][i, j]), (role, k, i, j))
                for (role, k, i, j) in entries]
        _, (role, k, i, j) = max(flat)
        getattr(grads, role)[k][i, j] *= -1.0

    max_rel = 0.0
    worst = entries[0]
    worst_a = worst_n = 0.0
    for (role, k, i, j) in entries:
        tensor = adapter.A[k] if role == "A" else adapter.B[k]
        orig = tensor[i, j]
        tensor[i, j] = orig + h
        loss_plus = mse(forward(adapter, w0, x), targets)
        tensor[i, j] = orig - h
        loss_minus = mse(forward(adapter, w0, x), targets)
        tensor[i, j] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        analytic = getattr(grads, role)[k][i, j]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        if rel > max_rel:
            max_rel = rel
            worst = (role, k, i, j)
            worst_a, worst_n = analytic, numeric
    return GradCheckReport(max_rel_error=max_rel, n_checked=len(entries), worst=worst,
                           worst_analytic=worst_a, worst_numeric=worst_n, tol=tol)


@dataclass
class TrainState:
    """Optimizer constants plus per-tensor moment accumulators.

    Defaults follow the usual decoupled-weight-decay setup: beta1=0.9,
    beta2=0.999, epsilon=1e-8, weight_decay=0, learning rate 1e-3.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    rng_seed: int = 0
    step: int = 0
    m_A: list[np.ndarray] = field(default_factory=list)
    v_A: list[np.ndarray] = field(default_factory=list)
    m_B: list[np.ndarray] = field(default_factory=list)
    v_B: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_adapter(cls, adapter, **kwargs) -> "TrainState":
        state = cls(**kwargs)
        state.m_A = [np.zeros_like(a) for a in adapter.A]
        state.v_A = [np.zeros_like(a) for a in adapter.A]
        state.m_B = [np.zeros_like(b) for b in adapter.B]
        state.v_B = [np.zeros_like(b) for b in adapter.B]
        return state


def _adamw_update(param, grad, m, v, t, state: TrainState) -> None:
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    if state.weight_decay:
        param *= 1.0 - state.learning_rate * state.weight_decay
    param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def train(adapter, task: LinearTask, steps: int, state: TrainState | None = None) -> np.ndarray:
    """Full-batch AdamW on the adapter factors; returns the loss trace.

    The trace has steps+1 entries: trace[i] is the MSE after i updates,
    so trace[0] is the initial loss.  Deterministic for fixed inputs.
    Raises DivergenceError (with the step index) if the loss leaves the
    finite range.
    """
    if steps < 1:
        raise ValidationError(f"steps must be ≥ 1, got {steps}")
    if state is None:
        state = TrainState.for_adapter(adapter)
    if not state.m_A:
        fresh = TrainState.for_adapter(adapter)
        state.m_A, state.v_A = fresh.m_A, fresh.v_A
        state.m_B, state.v_B = fresh.m_B, fresh.v_B
    x, targets, w0 = task.inputs, task.targets, task.w0
    trace = np.empty(steps + 1)
    for i in range(steps):
        pred = forward(adapter, w0, x)
        loss = mse(pred, targets)
        trace[i] = loss
        if not np.isfinite(loss):
            raise DivergenceError(f"training diverged: non-finite loss at step {i}")
        grads = backward(adapter, w0, x, mse_upstream(pred, targets))
        state.step += 1
        for k in range(len(adapter.A)):
            _adamw_update(adapter.A[k], grads.A[k], state.m_A[k], state.v_A[k],
                          state.step, state)
            _adamw_update(adapter.B[k], grads.B[k], state.m_B[k], state.v_B[k],
                          state.step, state)
    final = mse(forward(adapter, w0, x), targets)
    trace[steps] = final
    if not np.isfinite(final):
        raise DivergenceError(f"training diverged: non-finite loss at step {steps}")
    return trace


def write_loss_trace(trace: np.ndarray, path) -> None:
    """Loss trace as CSV with header step,loss; step i is the state after
    i optimizer updates."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(trace):
            fh.write(f"{i},{loss:.17g}\n")
