"""Semidefinite-relaxation design with closed-form rank-one recovery.

The relaxed program keeps the full covariance ``R`` and one covariance per
user ``R_k``; the radar covariance is whatever is left over, ``R - sum R_k``.
Because the objective depends on ``R`` only, replacing each ``R_k`` by the
rank-one ``w_k w_k^H`` with ``w_k = R_k h_k / sqrt(h_k^H R_k h_k)`` keeps the
objective, keeps every user's received signal power, and can only lower the
power leaked toward any other direction.  The relaxation is therefore tight.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import conic
from .conic import ConicProblem, SolverSettings, Status
from .errors import InfeasibleDesign, NotPsd, ReconstructionError, SolverError, ContractError
from .radar import BeampatternSpec, add_common_constraints, add_radar_objective, radar_loss
from .scenario import PrecoderPair, Scenario, steering_matrix

DEGENERATE_POWER = 1e-12


@dataclasses.dataclass(frozen=True)
class SecurityThresholds:
    """Linear SINR thresholds.

    ``gamma_c == 0`` drops the user constraints and ``gamma_e == inf`` drops
    the eavesdropper constraints; together they reduce every designer to the
    radar-only problem.
    """

    gamma_c: float
    gamma_e: float = math.inf

    def __post_init__(self):
        if not self.gamma_c >= 0:
            raise ContractError("gamma_c must be >= 0")
        if not self.gamma_e > 0:
            raise ContractError("gamma_e must be > 0")

    @classmethod
    def from_db(cls, gamma_c_db: float | None, gamma_e_db: float | None = None):
        gc = 0.0 if gamma_c_db is None else 10 ** (gamma_c_db / 10)
        ge = math.inf if gamma_e_db is None else 10 ** (gamma_e_db / 10)
        return cls(gc, ge)

    @property
    def gamma_c_db(self) -> float:
        return 10 * math.log10(self.gamma_c) if self.gamma_c > 0 else -math.inf

    @property
    def gamma_e_db(self) -> float:
        return 10 * math.log10(self.gamma_e)

    @property
    def users_active(self) -> bool:
        return self.gamma_c > 0

    @property
    def eves_active(self) -> bool:
        return math.isfinite(self.gamma_e)


@dataclasses.dataclass
class DesignResult:
    covariance: np.ndarray
    per_user_covs: list[np.ndarray]
    precoders: PrecoderPair
    alpha: float
    objective: float
    relaxed_objective: float
    designer: str
    diagnostics: dict = dataclasses.field(default_factory=dict)
    relaxed: dict = dataclasses.field(default_factory=dict)
    metadata: dict = dataclasses.field(default_factory=dict)

    @property
    def radar_covariance(self) -> np.ndarray:
        Wr = self.precoders.radar
        return Wr @ Wr.conj().T


def reconstruct_rank1(R_k: np.ndarray, h: np.ndarray, allow_zero: bool = False) -> np.ndarray:
    """Rank-one precoder ``R_k h / sqrt(h^H R_k h)`` from a relaxed user covariance."""
    R_k = np.asarray(R_k, dtype=complex)
    h = np.asarray(h, dtype=complex).ravel()
    Rh = R_k @ h
    gain = float(np.vdot(h, Rh).real)
    if gain <= DEGENERATE_POWER:
        if allow_zero:
            return np.zeros_like(h)
        raise ReconstructionError(f"degenerate user: h^H R_k h = {gain:.3e}")
    return Rh / np.sqrt(gain)


def factorize_radar_cov(R_rad: np.ndarray, method: str = "eigen", floor: float = 0.0) -> np.ndarray:
    """Square factor ``W_r`` with ``W_r W_r^H = R_rad``.

    The eigen route orders eigenvalues descending and rotates each eigenvector
    so that its diagonal entry is real and nonnegative, which makes the
    otherwise non-unique factor deterministic.  ``method="cholesky"`` tries a
    Cholesky factor first and falls back to the eigen route when the matrix is
    (numerically) singular.  Eigenvalues at or below ``floor`` are treated as
    rounding residue and zeroed.
    """
    R = np.asarray(R_rad, dtype=complex)
    R = 0.5 * (R + R.conj().T)
    M = R.shape[0]
    tr = max(float(np.trace(R).real), 0.0)
    if method == "cholesky":
        try:
            L = np.linalg.cholesky(R)
            if np.abs(np.diag(L)).min() > 1e-10 * max(tr, 1e-300):
                return L
        except np.linalg.LinAlgError:
            pass
    elif method != "eigen":
        raise ContractError(f"unknown factorization method {method!r}")
    lam, U = np.linalg.eigh(R)
    if lam.min() < -(1e-6 * tr + 1e-12):
        raise NotPsd(f"radar covariance has eigenvalue {lam.min():.3e} (trace {tr:.3e})")
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]
    lam = np.where(lam > floor, lam, 0.0)
    for j in range(M):
        col = U[:, j]
        pivot = col[j] if abs(col[j]) > 1e-12 else col[np.argmax(np.abs(col) > 1e-12)]
        if abs(pivot) > 0:
            U[:, j] = col * (np.conj(pivot) / abs(pivot))
    return U * np.sqrt(lam)[None, :]


def rounding_floor(R: np.ndarray) -> float:
    """Eigenvalue level below which a remainder of ``R`` is indistinguishable from rounding."""
    return 64 * np.finfo(float).eps * max(float(np.trace(R).real), 0.0)


def add_eve_rows(problem: ConicProblem, R, R_com, scenario: Scenario, thresholds: SecurityThresholds,
                 angles_per_target=None) -> None:
    """``(1 + 1/Ge) a^H R_com a <= a^H R a + sigma_e^2/|beta|^2`` for every Eve direction."""
    if not thresholds.eves_active or scenario.num_targets == 0:
        return
    cfg = scenario.config
    factor = 1.0 + 1.0 / thresholds.gamma_e
    for q, tgt in enumerate(scenario.targets):
        angles = [tgt.angle_deg] if angles_per_target is None else angles_per_target[q]
        A = steering_matrix(cfg, angles)
        noise = cfg.noise_var_eve / abs(tgt.path_loss) ** 2
        slack = R.quads(A) - R_com.quads(A) * factor + noise
        problem.add_nonneg(slack, tag="sinr_eve")


def build_p2(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds) -> ConicProblem:
    """Relaxed program over ``R, R_1..R_K, alpha`` (rank-one constraints dropped)."""
    cfg = scenario.config
    K, M = scenario.num_users, cfg.M
    prob = ConicProblem("sdr")
    R = prob.hermitian("R", M)
    Rks = [prob.hermitian(f"R_{k + 1}", M) for k in range(K)]
    alpha = prob.scalar("alpha")
    add_common_constraints(prob, R, alpha, cfg)
    R_com = conic.sum_exprs(Rks)
    for Rk in Rks:
        prob.add_psd(Rk, tag="psd_Rk")
    prob.add_psd(R - R_com, tag="psd_Rrad")
    if thresholds.users_active:
        factor = 1.0 + 1.0 / thresholds.gamma_c
        for k, Rk in enumerate(Rks):
            h = scenario.user_channel(k)
            prob.add_nonneg(Rk.quad(h) * factor - R.quad(h) - cfg.noise_var_lu, tag="sinr_lu")
    add_eve_rows(prob, R, R_com, scenario, thresholds)
    add_radar_objective(prob, R, alpha, spec, cfg)
    return prob


def _solve_checked(prob: ConicProblem, designer: str, settings: SolverSettings | None):
    sol = conic.solve(prob, settings)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleDesign(f"{designer}: problem is infeasible", designer=designer,
                               solver_status=sol.status.value)
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"{designer}: solver stopped with {sol.status.value} ({sol.engine_status})")
    return sol


def _diagnostics(sol) -> dict:
    return {"status": sol.status.value, "engine_status": sol.engine_status,
            "iterations": sol.iterations, "solve_time": sol.solve_time,
            "lower_bound": sol.lower_bound, **sol.residuals}


def minimal_comm_power(ws: list[np.ndarray], R: np.ndarray, scenario: Scenario,
                       gamma_c: float) -> list[np.ndarray]:
    """Shrink each ``w_k`` until its SINR equals ``gamma_c``; the power removed goes to the radar part.

    The covariance ``R`` is left untouched, so the radar loss, every user's
    interference-plus-signal power and hence the other users' SINRs are all
    unchanged, while the leakage toward every other direction can only drop.
    """
    if gamma_c <= 0:
        return list(ws)
    sigma2 = scenario.config.noise_var_lu
    out = []
    for k, w in enumerate(ws):
        h = scenario.user_channel(k)
        s = abs(np.vdot(h, w)) ** 2
        need = gamma_c * (np.vdot(h, R @ h).real + sigma2) / (1.0 + gamma_c)
        out.append(w * np.sqrt(need / s) if s > need else w)
    return out


def recover_from_relaxed(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds,
                         sol, designer: str, min_comm_power: bool = False) -> DesignResult:
    """Rank-one recovery and radar factorization shared by the SDR and robust designers."""
    K = scenario.num_users
    R_hat = sol.values["R"]
    R_hats = [sol.values[f"R_{k + 1}"] for k in range(K)]
    alpha = sol.values["alpha"]
    allow_zero = not thresholds.users_active
    ws = [reconstruct_rank1(R_hats[k], scenario.user_channel(k), allow_zero) for k in range(K)]
    if min_comm_power:
        ws = minimal_comm_power(ws, R_hat, scenario, thresholds.gamma_c)
    Wc = np.stack(ws, axis=1)
    per_user = [np.outer(w, w.conj()) for w in ws]
    Wr = factorize_radar_cov(R_hat - Wc @ Wc.conj().T, floor=rounding_floor(R_hat))
    pre = PrecoderPair(Wc, Wr)
    return DesignResult(
        covariance=pre.covariance,
        per_user_covs=per_user,
        precoders=pre,
        alpha=alpha,
        objective=radar_loss(R_hat, alpha, spec, scenario.config),
        relaxed_objective=sol.objective,
        designer=designer,
        diagnostics=_diagnostics(sol),
        relaxed={"R": R_hat, "R_k": R_hats},
        metadata={"min_comm_power": min_comm_power},
    )


def solve_sdr(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds,
              settings: SolverSettings | None = None, min_comm_power: bool = True) -> DesignResult:
    """Globally optimal secure DFRC precoders via the tight relaxation.

    The relaxed optimum fixes ``R`` but not how it splits between the users
    and the radar.  With ``min_comm_power`` (default) every user is served at
    exactly ``gamma_c`` and the surplus goes to the radar covariance; with it
    off the precoders are the plain rank-one reconstruction.
    """
    prob = build_p2(scenario, spec, thresholds)
    sol = _solve_checked(prob, "sdr", settings)
    return recover_from_relaxed(scenario, spec, thresholds, sol, "sdr", min_comm_power)
