"""Transmit beampattern, cross-correlation pattern and the least-squares radar loss."""

from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np

from . import conic
from .conic import ConicProblem, Expr, SolverSettings, Status
from .errors import ContractError, SolverError
from .scenario import SystemConfig, steering_matrix, steering_vector

ALPHA_MIN = 1e-9
# grid points produced by linspace can sit a few ulps off a window edge
_EDGE_TOL = 1e-9


def check_hermitian(A: np.ndarray, psd: bool = False, name: str = "matrix") -> np.ndarray:
    """Validate the Hermitian (and optionally PSD) contract and return ``A`` as complex."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"{name} must be square, got shape {A.shape}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > 1e-10 * max(scale, 1e-300):
        raise ContractError(f"{name} is not Hermitian")
    if psd:
        tr = max(np.trace(A).real, 0.0)
        if np.linalg.eigvalsh(A).min() < -1e-8 * max(tr, 1e-300):
            raise ContractError(f"{name} is not positive semidefinite")
    return A


@dataclasses.dataclass(frozen=True)
class BeampatternSpec:
    """Desired pattern template and cross-correlation directions.

    The desired pattern is the union of windows of width ``beam_width_deg``
    around every centre angle.  ``crosscorr_angles_deg`` defaults to the
    centre angles; with fewer than two of them the cross term vanishes.
    """

    center_angles_deg: tuple[float, ...]
    beam_width_deg: float = 10.0
    weight: float = 1.0
    crosscorr_angles_deg: tuple[float, ...] | None = None

    def __post_init__(self):
        centers = tuple(float(a) for a in np.atleast_1d(self.center_angles_deg))
        object.__setattr__(self, "center_angles_deg", centers)
        if self.beam_width_deg <= 0:
            raise ContractError("beam width must be positive")
        if self.weight < 0:
            raise ContractError("cross-correlation weight must be nonnegative")
        cc = self.crosscorr_angles_deg
        cc = centers if cc is None else tuple(float(a) for a in cc)
        if any(not -90 < a < 90 for a in cc):
            raise ContractError("cross-correlation angles must lie in (-90, 90)")
        if len(set(cc)) != len(cc):
            raise ContractError("cross-correlation angles must be pairwise distinct")
        object.__setattr__(self, "crosscorr_angles_deg", cc)

    def widened(self, extra_deg: float) -> "BeampatternSpec":
        return dataclasses.replace(self, beam_width_deg=self.beam_width_deg + extra_deg)


def beampattern(R: np.ndarray, angle_deg: float, config: SystemConfig) -> float:
    """``a(theta)^H R a(theta)``, clipped at zero."""
    R = check_hermitian(R, name="R")
    a = steering_vector(config, angle_deg)
    val = np.vdot(a, R @ a)
    return float(max(val.real, 0.0))


def beampattern_grid(R: np.ndarray, config: SystemConfig, angles_deg=None) -> np.ndarray:
    """Beampattern evaluated on ``angles_deg`` (default: the config grid)."""
    R = check_hermitian(R, name="R")
    angles = config.angle_grid_deg if angles_deg is None else angles_deg
    A = steering_matrix(config, angles)
    vals = np.einsum("ml,mn,nl->l", A.conj(), R, A).real
    return np.maximum(vals, 0.0)


def cross_correlation(R: np.ndarray, theta1: float, theta2: float, config: SystemConfig) -> complex:
    """``a(theta2)^H R a(theta1)``."""
    R = check_hermitian(R, name="R")
    a1 = steering_vector(config, theta1)
    a2 = steering_vector(config, theta2)
    return complex(np.vdot(a2, R @ a1))


def desired_pattern(spec: BeampatternSpec, angle_deg):
    """0/1 template; boundary points belong to the beam."""
    ang = np.asarray(angle_deg, dtype=float)
    centers = np.asarray(spec.center_angles_deg)
    half = spec.beam_width_deg / 2
    inside = np.abs(ang[..., None] - centers) <= half + _EDGE_TOL
    out = np.any(inside, axis=-1).astype(float)
    return float(out) if out.ndim == 0 else out


def _pair_indices(P: int):
    return [(p, q) for p in range(P) for q in range(p + 1, P)]


def radar_loss(R: np.ndarray, alpha: float, spec: BeampatternSpec, config: SystemConfig) -> float:
    """Least-squares radar loss: pattern mismatch plus weighted cross-correlation."""
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    P = beampattern_grid(R, config)
    phi = desired_pattern(spec, config.angle_grid_deg)
    loss = float(np.mean((alpha * phi - P) ** 2))
    return loss + spec.weight * crosscorr_loss(R, spec, config)


def crosscorr_loss(R: np.ndarray, spec: BeampatternSpec, config: SystemConfig) -> float:
    angles = spec.crosscorr_angles_deg
    P = len(angles)
    if P < 2:
        return 0.0
    A = steering_matrix(config, angles)
    C = A.conj().T @ R @ A            # C[q, p] = a_q^H R a_p
    total = sum(abs(C[q, p]) ** 2 for p, q in _pair_indices(P))
    return 2.0 * total / (P * P - P)


def best_alpha(R: np.ndarray, spec: BeampatternSpec, config: SystemConfig) -> float:
    """Least-squares optimal scale for a fixed covariance (floored at ``ALPHA_MIN``)."""
    phi = desired_pattern(spec, config.angle_grid_deg)
    if not phi.any():
        return ALPHA_MIN
    P = beampattern_grid(R, config)
    return max(float(phi @ P / (phi @ phi)), ALPHA_MIN)


def add_radar_objective(problem: ConicProblem, R: Expr, alpha: Expr,
                        spec: BeampatternSpec, config: SystemConfig) -> None:
    """Install the radar loss as the problem's sum-of-squares objective.

    The stacked residual holds one row per grid angle followed by the real and
    imaginary parts of each cross-correlation pair, scaled so that its squared
    norm equals the loss.
    """
    grid = config.angle_grid_deg
    L = grid.size
    A = steering_matrix(config, grid)
    phi = desired_pattern(spec, grid)
    pattern = R.quads(A)
    scaled_alpha = Expr((L, 1), phi[:, None] * alpha.coef[0][None, :], phi * alpha.const[0])
    parts = [(scaled_alpha - pattern) / np.sqrt(L)]
    angles = spec.crosscorr_angles_deg
    P = len(angles)
    if P >= 2 and spec.weight > 0:
        Ac = steering_matrix(config, angles)
        w = np.sqrt(spec.weight * 2.0 / (P * P - P))
        for p, q in _pair_indices(P):
            parts.append(R.bilinear(Ac[:, q], Ac[:, p]) * w)
    problem.minimize_sum_squares(conic.vstack(parts))


def add_common_constraints(problem: ConicProblem, R: Expr, alpha: Expr, config: SystemConfig) -> None:
    """``R`` PSD, per-antenna power ``diag(R) = Pt/M`` and ``alpha >= ALPHA_MIN``."""
    M = config.M
    problem.add_psd(R, tag="psd_R")
    problem.add_eq(R.diag() - np.full((M, 1), config.total_power / M), tag="per_antenna")
    problem.add_nonneg(alpha - ALPHA_MIN, tag="alpha")


class RadarOnlyDesign(NamedTuple):
    covariance: np.ndarray
    alpha: float
    objective: float


def build_radar_only(spec: BeampatternSpec, config: SystemConfig) -> ConicProblem:
    prob = ConicProblem("radar-only")
    R = prob.hermitian("R", config.M)
    alpha = prob.scalar("alpha")
    add_common_constraints(prob, R, alpha, config)
    add_radar_objective(prob, R, alpha, spec, config)
    return prob


def radar_only_design(spec: BeampatternSpec, config: SystemConfig,
                      settings: SolverSettings | None = None) -> RadarOnlyDesign:
    """Globally optimal radar-only covariance under the per-antenna power constraint."""
    prob = build_radar_only(spec, config)
    sol = conic.solve(prob, settings)
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"radar-only design failed: {sol.status.value} ({sol.engine_status})")
    R = sol.values["R"]
    return RadarOnlyDesign(R, sol.values["alpha"], sol.objective)
