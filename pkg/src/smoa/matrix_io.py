"""Matrix, config, and report serialization.

Binary matrix format ("SMOA"): 4 magic bytes ``SMOA``, one version byte
(0x01), rows and cols as 32-bit little-endian unsigned integers, then
rows*cols IEEE-754 doubles, little-endian, row-major.  The format
round-trips bit-exactly.  CSV matrices carry no header and use 17
significant digits, which preserves 64-bit values exactly.

Report CSV files carry the fixed header row
``method,d,r,K,seed,param_count,numerical_rank,frobenius_error``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"SMOA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBII")

REPORT_HEADER = "method,d,r,K,seed,param_count,numerical_rank,frobenius_error"

MODES = ("budget", "flexible")
METHOD_NAMES = ("smoa", "lora", "block_lora", "hadamard_w0")


def validate_matrix(m) -> np.ndarray:
    """Coerce to a 2-D float64 array and reject empty or non-finite data."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"matrix dims must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError("matrix contains non-finite entries")
    return arr


def write_matrix(m, path) -> None:
    """Write a matrix to `path`; .csv extension selects CSV, anything else binary."""
    arr = validate_matrix(m)
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            _write_csv(arr, path)
        else:
            _write_binary(arr, path)
    except OSError as exc:
        raise FormatError(f"cannot write matrix to {path}: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Read a matrix written by write_matrix (format selected by extension)."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            arr = _read_csv(path)
        else:
            arr = _read_binary(path)
    except OSError as exc:
        raise FormatError(f"cannot read matrix from {path}: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: matrix contains non-finite entries")
    return arr


def _write_binary(arr: np.ndarray, path: Path) -> None:
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_binary(path: Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: non-positive dims ({rows}, {cols})")
    payload = blob[_HEADER.size:]
    expected = rows * cols * 8
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload of {len(payload)} bytes does not match "
            f"{rows}x{cols} header (expected {expected})"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return data.reshape(rows, cols)


def _write_csv(arr: np.ndarray, path: Path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in arr:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def _read_csv(path: Path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed CSV matrix: {exc}") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: empty CSV matrix")
    return arr


@dataclass(frozen=True)
class RunConfig:
    """Adapter construction parameters for a single weight matrix.

    `r` is the total rank budget in budget mode and the per-subspace rank
    in flexible mode.  `alpha` defaults to `r`, `init_std` to 0.02, and
    `rank_tolerance_factor` to 1e-10 when omitted from a config file.
    """

    d_out: int
    d_in: int
    K: int
    r: int
    seed: int
    mode: str = "budget"
    alpha: float | None = None
    init_std: float = 0.02
    rank_tolerance_factor: float = 1e-10

    def __post_init__(self):
        for name in ("d_out", "d_in", "K", "r"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(f"{name} must be ≥ 1, got {value!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.K > min(self.d_out, self.d_in):
            raise ValidationError(
                f"K must be ≤ min(d_out, d_in) = {min(self.d_out, self.d_in)}, got K={self.K}"
            )
        if self.mode == "budget" and self.r < self.K:
            raise ValidationError(f"r must be ≥ K in budget mode, got r={self.r}, K={self.K}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.r))
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.init_std <= 0:
            raise ValidationError(f"init_std must be positive, got {self.init_std}")
        if self.rank_tolerance_factor <= 0:
            raise ValidationError(
                f"rank_tolerance_factor must be positive, got {self.rank_tolerance_factor}"
            )


_RUN_FIELDS = frozenset(RunConfig.__dataclass_fields__)


def config_from_dict(raw: dict) -> RunConfig:
    """Strict construction: unknown keys are rejected to catch typos."""
    if not isinstance(raw, dict):
        raise ValidationError(f"config must be a JSON object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - _RUN_FIELDS)
    if unknown:
        raise ValidationError(f"unknown config field(s): {', '.join(unknown)}")
    return RunConfig(**raw)


def read_config(path) -> RunConfig:
    return config_from_dict(_load_json(path))


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read config from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON: {exc}") from exc


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition for a rank-comparison sweep."""

    methods: tuple[str, ...]
    d: int
    r_values: tuple[int, ...]
    K_values: tuple[int, ...]
    n_seeds: int
    base_seed: int = 0
    tol_factor: float = 1e-10
    budget_match: bool = True

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "r_values", tuple(self.r_values))
        object.__setattr__(self, "K_values", tuple(self.K_values))
        for name in self.methods:
            if name not in METHOD_NAMES:
                raise ValidationError(
                    f"unknown method {name!r}, expected one of {METHOD_NAMES}"
                )
        if self.d < 1:
            raise ValidationError(f"d must be ≥ 1, got {self.d}")
        if self.n_seeds < 0:
            raise ValidationError(f"n_seeds must be ≥ 0, got {self.n_seeds}")
        if any(r < 1 for r in self.r_values) or any(k < 1 for k in self.K_values):
            raise ValidationError("r_values and K_values must all be ≥ 1")
        if self.tol_factor <= 0:
            raise ValidationError(f"tol_factor must be positive, got {self.tol_factor}")

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods), "d": self.d,
            "r_values": list(self.r_values), "K_values": list(self.K_values),
            "n_seeds": self.n_seeds, "base_seed": self.base_seed,
            "tol_factor": self.tol_factor, "budget_match": self.budget_match,
        }


_SWEEP_FIELDS = frozenset(SweepConfig.__dataclass_fields__)


def sweep_config_from_dict(raw: dict) -> SweepConfig:
    if not isinstance(raw, dict):
        raise ValidationError(f"sweep config must be a JSON object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - _SWEEP_FIELDS)
    if unknown:
        raise ValidationError(f"unknown sweep config field(s): {', '.join(unknown)}")
    return SweepConfig(**raw)


def read_sweep_config(path) -> SweepConfig:
    return sweep_config_from_dict(_load_json(path))


@dataclass(frozen=True)
class TrainConfig:
    """Planted-task definition plus adapter and optimizer settings.

    target_blocks=None plants a dense random update; an integer confines
    the planted update to that many diagonal blocks (rank split evenly),
    the support blocked adapters can actually reach.
    """

    d: int
    target_rank: int
    n_samples: int
    seed: int
    noise_std: float = 0.0
    target_blocks: int | None = None
    r: int = 8
    K: int = 2
    mode: str = "budget"
    alpha: float | None = None
    init_std: float = 0.02
    steps: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"d must be ≥ 1, got {self.d}")
        if not 1 <= self.target_rank <= self.d:
            raise ValidationError(
                f"target_rank must be in [1, {self.d}], got {self.target_rank}"
            )
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be ≥ 1, got {self.n_samples}")
        if self.noise_std < 0:
            raise ValidationError(f"noise_std must be ≥ 0, got {self.noise_std}")
        if self.target_blocks is not None and not 1 <= self.target_blocks <= self.d:
            raise ValidationError(
                f"target_blocks must be in [1, {self.d}], got {self.target_blocks}"
            )
        if self.steps < 1:
            raise ValidationError(f"steps must be ≥ 1, got {self.steps}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must be in [0, 1), got {value}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be ≥ 0, got {self.weight_decay}")

    def run_config(self, method: str) -> RunConfig:
        """Adapter construction config for this task; full-matrix methods
        ignore K."""
        effective_k = 1 if method in ("lora", "hadamard_w0") else self.K
        return RunConfig(d_out=self.d, d_in=self.d, K=effective_k, r=self.r,
                         seed=self.seed, mode=self.mode, alpha=self.alpha,
                         init_std=self.init_std)


_TRAIN_FIELDS = frozenset(TrainConfig.__dataclass_fields__)


def train_config_from_dict(raw: dict) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ValidationError(f"train config must be a JSON object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - _TRAIN_FIELDS)
    if unknown:
        raise ValidationError(f"unknown train config field(s): {', '.join(unknown)}")
    return TrainConfig(**raw)


def read_train_config(path) -> TrainConfig:
    return train_config_from_dict(_load_json(path))


def write_report(rows, path) -> None:
    """Write rank-report rows as CSV with the fixed header.

    Rows may be RankRecord-like objects (attribute access) or plain
    8-tuples ordered as the header.
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(REPORT_HEADER + "\n")
        for row in rows:
            if hasattr(row, "method"):
                fields = (row.method, row.d, row.r, row.K, row.seed,
                          row.param_count, row.numerical_rank, row.frobenius_norm)
            else:
                fields = tuple(row)
            method, d, r, k, seed, pc, nr, fro = fields
            fh.write(f"{method},{d},{r},{k},{seed},{pc},{nr},{fro:.17g}\n")
