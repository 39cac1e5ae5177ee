"""PCE + PCA metamodel of the wall-touch height profile.

The solver map (B, S) -> h in R^nx (at fixed power index n) is approximated
in two stages: a principal component analysis compresses sampled profiles
onto a few orthonormal directions, and each retained component is fitted by
least squares in a tensor-product Legendre basis over the standardized
(B, S) rectangle.  Evaluation is the inverse transform: predict the retained
components, keep the sample means for the rest, and rotate back.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    B_BOUNDS,
    B_OFFSET,
    B_SCALE,
    RheoParams,
    S_BOUNDS,
    S_OFFSET,
    S_SCALE,
)
from .solver import HeightProfile

__all__ = [
    "ExtrapolationWarning",
    "UnderdeterminedError",
    "TrainingSet",
    "PcaModel",
    "PceModel",
    "Surrogate",
    "ValidationStats",
    "legendre_eval",
    "total_degree_indices",
    "basis_eval",
    "fit_pca",
    "fit_pce",
    "train_surrogate",
    "evaluate",
    "validate",
    "save_surrogate",
    "load_surrogate",
]

FORMAT_VERSION = 1


class ExtrapolationWarning(UserWarning):
    """Evaluation outside the trained (B, S) rectangle."""


class UnderdeterminedError(ValueError):
    """Fewer samples than basis functions in a least-squares fit."""


# ---------------------------------------------------------------------------
# Legendre basis over [-1, 1]^2


def legendre_eval(k: int, x):
    """Legendre polynomial P_k at x via the three-term recurrence
    (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}."""
    if k < 0:
        raise ValueError("polynomial order must be nonnegative")
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for j in range(1, k):
        p_prev, p = p, ((2.0 * j + 1.0) * x * p - j * p_prev) / (j + 1.0)
    return p if p.ndim else float(p)


def _legendre_table(kmax: int, x: np.ndarray) -> np.ndarray:
    """All orders 0..kmax at the points x; shape (kmax+1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.empty((kmax + 1, x.shape[0]))
    table[0] = 1.0
    if kmax >= 1:
        table[1] = x
    for j in range(1, kmax):
        table[j + 1] = ((2.0 * j + 1.0) * x * table[j] - j * table[j - 1]) / (j + 1.0)
    return table


def total_degree_indices(beta: int) -> list[tuple[int, int]]:
    """Bivariate multi-indices with a + b <= beta in graded lexicographic
    order (by total degree, then first index)."""
    if beta < 0:
        raise ValueError("truncation order must be nonnegative")
    return [(a, g - a) for g in range(beta + 1) for a in range(g + 1)]


def basis_eval(multi_indices, bt: float, st: float) -> np.ndarray:
    """Tensor-product basis values P_a(bt) * P_b(st), in index order.

    Points outside [-1, 1]^2 extrapolate the polynomials; callers decide
    whether that deserves a warning.
    """
    kmax = max(max(a, b) for a, b in multi_indices)
    tb = _legendre_table(kmax, np.asarray([bt]))[:, 0]
    ts = _legendre_table(kmax, np.asarray([st]))[:, 0]
    return np.array([tb[a] * ts[b] for a, b in multi_indices])


def _design_matrix(multi_indices, bts: np.ndarray, sts: np.ndarray) -> np.ndarray:
    kmax = max(max(a, b) for a, b in multi_indices)
    tb = _legendre_table(kmax, bts)
    ts = _legendre_table(kmax, sts)
    return np.stack([tb[a] * ts[b] for a, b in multi_indices], axis=1)


# ---------------------------------------------------------------------------
# Training data


@dataclass
class TrainingSet:
    """Sampled solver inputs and wall-touch outputs at a fixed power index."""

    inputs: list[RheoParams]
    outputs: list[HeightProfile]
    grid_descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.inputs) != len(self.outputs):
            raise ValueError(
                f"{len(self.inputs)} inputs vs {len(self.outputs)} outputs"
            )
        if not self.inputs:
            raise ValueError("empty training set")
        nxs = {o.nx for o in self.outputs}
        if len(nxs) != 1:
            raise ValueError(f"outputs mix resolutions: {sorted(nxs)}")
        ns = {p.n for p in self.inputs}
        if len(ns) != 1:
            raise ValueError(f"training set mixes power indices: {sorted(ns)}")

    @property
    def n(self) -> float:
        return self.inputs[0].n

    @property
    def nx(self) -> int:
        return self.outputs[0].nx

    def input_array(self) -> np.ndarray:
        return np.array([[p.B, p.S] for p in self.inputs])

    def output_matrix(self) -> np.ndarray:
        return np.array([o.h for o in self.outputs])


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    """Orthonormal directions of the sampled profiles, by explained variance.

    Rows of ``directions`` are the component directions; ``pc_means`` are the
    sample means of the (uncentered) projections, so a full reconstruction is
    directions.T @ projections.
    """

    directions: np.ndarray  # (m, m), rows orthonormal
    mean: np.ndarray  # (m,)
    pc_means: np.ndarray  # (m,)
    explained_variance: np.ndarray  # (m,), nonincreasing
    p: int  # retained components minus one

    @property
    def m(self) -> int:
        return self.mean.shape[0]

    def project(self, profiles: np.ndarray) -> np.ndarray:
        return profiles @ self.directions.T

    def reconstruct(self, projections: np.ndarray) -> np.ndarray:
        return projections @ self.directions

    def explained_variance_ratio(self) -> np.ndarray:
        total = self.explained_variance.sum()
        if total <= 0:
            return np.zeros_like(self.explained_variance)
        return np.cumsum(self.explained_variance) / total


def _fix_signs(directions: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of each row positive (eigenvectors
    are sign-ambiguous; a convention keeps serialization deterministic)."""
    out = directions.copy()
    for row in out:
        scale = np.max(np.abs(row))
        if scale == 0.0:
            continue
        idx = int(np.argmax(np.abs(row) > 1e-12 * scale))
        if row[idx] < 0:
            row *= -1.0
    return out


def fit_pca(training: TrainingSet, p: int) -> PcaModel:
    """Eigendecomposition of the sample covariance of the outputs.

    Components are ordered by nonincreasing eigenvalue; ``p`` + 1 of them are
    marked as retained.  Sample covariance uses the 1/(r-1) convention.
    """
    X = training.output_matrix()
    r, m = X.shape
    if r < 2:
        raise ValueError(f"need at least 2 samples, got {r}")
    if not 0 <= p <= min(r, m) - 1:
        raise ValueError(f"p={p} out of range for {r} samples of size {m}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (r - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    directions = _fix_signs(evecs[:, order].T)
    explained = np.maximum(evals[order], 0.0)
    if explained[0] <= 1e-30:
        warnings.warn(
            "training outputs have zero variance; model reduces to the mean",
            UserWarning,
        )
    return PcaModel(
        directions=directions,
        mean=mean,
        pc_means=directions @ mean,
        explained_variance=explained,
        p=p,
    )


# ---------------------------------------------------------------------------
# PCE


@dataclass
class PceModel:
    """Least-squares Legendre expansions of the retained components."""

    multi_indices: list[tuple[int, int]]
    coefficients: np.ndarray  # (p+1, l)
    beta: int
    rms_residuals: np.ndarray  # (p+1,) training-set RMS residual per component
    design_condition: float

    @property
    def l(self) -> int:
        return len(self.multi_indices)


def fit_pce(training: TrainingSet, pca: PcaModel, beta: int) -> PceModel:
    """Fit the retained components in the total-degree-beta Legendre basis.

    Solves one linear least-squares problem per retained component with an
    orthogonal-factorization solver (Vandermonde-like matrices are too
    ill-conditioned for normal equations at high order).
    """
    indices = total_degree_indices(beta)
    l = len(indices)
    r = len(training.inputs)
    if r < l:
        raise UnderdeterminedError(
            f"{r} samples cannot determine {l} coefficients "
            f"(truncation order {beta}); lower the order or enlarge the set"
        )
    bs = training.input_array()
    bts = (bs[:, 0] - B_OFFSET) / B_SCALE
    sts = (bs[:, 1] - S_OFFSET) / S_SCALE
    psi = _design_matrix(indices, bts, sts)
    targets = training.output_matrix() @ pca.directions[: pca.p + 1].T  # (r, p+1)
    coef, *_ = np.linalg.lstsq(psi, targets, rcond=None)
    resid = psi @ coef - targets
    return PceModel(
        multi_indices=indices,
        coefficients=coef.T.copy(),
        beta=beta,
        rms_residuals=np.sqrt(np.mean(resid**2, axis=0)),
        design_condition=float(np.linalg.cond(psi)),
    )


# ---------------------------------------------------------------------------
# The coupled surrogate


@dataclass
class Surrogate:
    """Evaluable PCE-PCA metamodel over the trained (B, S) rectangle."""

    pca: PcaModel
    pce: PceModel
    n: float
    nx: int
    domain: dict = field(default_factory=dict)
    training_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.domain:
            self.domain = default_domain()


def default_domain() -> dict:
    return {
        "B_bounds": list(B_BOUNDS),
        "S_bounds": list(S_BOUNDS),
        "offsets": [B_OFFSET, S_OFFSET],
        "divisors": [B_SCALE, S_SCALE],
    }


def train_surrogate(
    training: TrainingSet,
    beta: int,
    p: int | None,
    metadata: dict | None = None,
) -> Surrogate:
    """Fit PCA then per-component PCE on a training set.

    ``p`` is the index of the last retained component (p + 1 components);
    None retains every component, which reproduces an independent PCE per
    output node exactly.
    """
    if p is None:
        p = min(len(training.inputs), training.nx) - 1
    pca = fit_pca(training, p)
    pce = fit_pce(training, pca, beta)
    meta = dict(metadata or {})
    meta.setdefault("grid", training.grid_descriptor)
    surr = Surrogate(
        pca=pca,
        pce=pce,
        n=training.n,
        nx=training.nx,
        training_metadata=meta,
    )
    errs = [
        float(np.linalg.norm(evaluate(surr, prm).h - out.h))
        for prm, out in zip(training.inputs, training.outputs)
    ]
    surr.training_metadata["training_max_l2_error"] = max(errs)
    surr.training_metadata["training_median_l2_error"] = float(np.median(errs))
    return surr


def _standardize_in(surrogate: Surrogate, B: float, S: float) -> tuple[float, float]:
    off = surrogate.domain["offsets"]
    div = surrogate.domain["divisors"]
    return (B - off[0]) / div[0], (S - off[1]) / div[1]


def evaluate(surrogate: Surrogate, params: RheoParams) -> HeightProfile:
    """Predicted wall-touch profile at (B, S).

    Standardize, evaluate the basis, predict the retained components, keep
    stored means for the rest, and rotate back; negative basis overshoot is
    clamped at zero.  Out-of-rectangle input extrapolates with a warning.
    """
    if params.n != surrogate.n:
        raise ValueError(
            f"surrogate was trained at n={surrogate.n}, got n={params.n}"
        )
    blo, bhi = surrogate.domain["B_bounds"]
    slo, shi = surrogate.domain["S_bounds"]
    if not (blo <= params.B <= bhi and slo <= params.S <= shi):
        warnings.warn(
            f"(B={params.B}, S={params.S}) outside the trained rectangle "
            f"[{blo}, {bhi}] x [{slo}, {shi}]; extrapolating",
            ExtrapolationWarning,
            stacklevel=2,
        )
    bt, st = _standardize_in(surrogate, params.B, params.S)
    psi = basis_eval(surrogate.pce.multi_indices, bt, st)
    theta = surrogate.pce.coefficients @ psi  # (p+1,)
    k = surrogate.pca.p + 1
    delta = theta - surrogate.pca.pc_means[:k]
    h = surrogate.pca.mean + surrogate.pca.directions[:k].T @ delta
    return HeightProfile(
        h=np.maximum(h, 0.0), t=None, params=params, provenance="surrogate"
    )


@dataclass
class ValidationStats:
    """Summary of L2 reconstruction errors over a validation set."""

    median: float
    q3: float
    max: float
    variance: float
    per_couple: list[tuple[float, float, float]]  # (B, S, error)

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "variance": self.variance,
        }


def validate(surrogate: Surrogate, validation: TrainingSet) -> ValidationStats:
    """Per-couple L2 distance between surrogate and solver profiles."""
    if validation.nx != surrogate.nx:
        raise ValueError(
            f"validation outputs have {validation.nx} nodes, surrogate {surrogate.nx}"
        )
    per = []
    for prm, out in zip(validation.inputs, validation.outputs):
        err = float(np.linalg.norm(evaluate(surrogate, prm).h - out.h))
        per.append((prm.B, prm.S, err))
    errs = np.array([e for _, _, e in per])
    return ValidationStats(
        median=float(np.median(errs)),
        q3=float(np.percentile(errs, 75)),
        max=float(errs.max()),
        variance=float(np.var(errs, ddof=1)) if len(errs) > 1 else 0.0,
        per_couple=per,
    )


# ---------------------------------------------------------------------------
# Serialization: numbers as decimal strings for an exact round trip


def _enc(values) -> list[str]:
    return [repr(float(v)) for v in np.asarray(values, dtype=float).ravel()]


def _dec(strings, shape=None) -> np.ndarray:
    arr = np.array([float(s) for s in strings])
    return arr.reshape(shape) if shape is not None else arr


def save_surrogate(surrogate: Surrogate, path: str | Path) -> None:
    """Write a surrogate as a single JSON document.

    Floats are serialized as shortest round-trip decimal strings, so a
    load reproduces evaluation bit-for-bit.
    """
    doc = {
        "format_version": FORMAT_VERSION,
        "n": repr(float(surrogate.n)),
        "nx": surrogate.nx,
        "domain": {
            "B_bounds": _enc(surrogate.domain["B_bounds"]),
            "S_bounds": _enc(surrogate.domain["S_bounds"]),
            "offsets": _enc(surrogate.domain["offsets"]),
            "divisors": _enc(surrogate.domain["divisors"]),
        },
        "beta": surrogate.pce.beta,
        "p": surrogate.pca.p,
        "multi_indices": [list(ij) for ij in surrogate.pce.multi_indices],
        "coefficients": _enc(surrogate.pce.coefficients),
        "pce_rms_residuals": _enc(surrogate.pce.rms_residuals),
        "pce_design_condition": repr(surrogate.pce.design_condition),
        "pca": {
            "mean": _enc(surrogate.pca.mean),
            "directions": _enc(surrogate.pca.directions),
            "pc_means": _enc(surrogate.pca.pc_means),
            "explained_variance": _enc(surrogate.pca.explained_variance),
        },
        "training_metadata": surrogate.training_metadata,
    }
    Path(path).write_text(json.dumps(doc))


def load_surrogate(path: str | Path) -> Surrogate:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported surrogate format {doc.get('format_version')}")
    nx = int(doc["nx"])
    p = int(doc["p"])
    indices = [tuple(ij) for ij in doc["multi_indices"]]
    pca = PcaModel(
        directions=_dec(doc["pca"]["directions"], (nx, nx)),
        mean=_dec(doc["pca"]["mean"]),
        pc_means=_dec(doc["pca"]["pc_means"]),
        explained_variance=_dec(doc["pca"]["explained_variance"]),
        p=p,
    )
    pce = PceModel(
        multi_indices=indices,
        coefficients=_dec(doc["coefficients"], (p + 1, len(indices))),
        beta=int(doc["beta"]),
        rms_residuals=_dec(doc["pce_rms_residuals"]),
        design_condition=float(doc["pce_design_condition"]),
    )
    return Surrogate(
        pca=pca,
        pce=pce,
        n=float(doc["n"]),
        nx=nx,
        domain={
            "B_bounds": list(_dec(doc["domain"]["B_bounds"])),
            "S_bounds": list(_dec(doc["domain"]["S_bounds"])),
            "offsets": list(_dec(doc["domain"]["offsets"])),
            "divisors": list(_dec(doc["domain"]["divisors"])),
        },
        training_metadata=doc.get("training_metadata", {}),
    )
