"""Zero-forcing design: a smaller program plus Cholesky/row-QR precoder recovery.

Zero forcing requires ``H R H^H = H R_com H^H = diag(rho)``.  Since
``R - R_com`` is PSD, those two equalities together say that the radar part
lives in the null space of ``H``; the builder therefore writes
``R = R_com + N Y N^H`` with ``N`` an orthonormal null-space basis and ``Y``
PSD.  This is the same feasible set, but ``H W_r = 0`` then holds to machine
precision instead of to solver tolerance (whose square root would otherwise
show up in ``||H W_r||``).  The equality on ``R`` is kept in the problem as
an implied constraint: checked after the solve, never sent to the engine.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import conic
from .conic import ConicProblem, SolverSettings
from .errors import ContractError, DegenerateRho
from .radar import BeampatternSpec, add_common_constraints, add_radar_objective, radar_loss
from .scenario import PrecoderPair, Scenario
from .sdr import (DEGENERATE_POWER, DesignResult, SecurityThresholds, _diagnostics,
                  _solve_checked, add_eve_rows, factorize_radar_cov, rounding_floor)


def null_basis(H: np.ndarray) -> np.ndarray:
    """Orthonormal basis (M x (M-K)) of the null space of a full-row-rank ``H``."""
    return scipy.linalg.null_space(np.asarray(H, dtype=complex))


def build_p3(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds) -> ConicProblem:
    """Zero-forcing program over ``R_com``, the null-space radar block ``Y``, ``rho`` and ``alpha``."""
    cfg = scenario.config
    H = scenario.channel
    K, M = H.shape
    N = null_basis(H)
    if N.shape[1] != M - K:
        raise ContractError("zero forcing needs a full-row-rank channel")

    prob = ConicProblem("zf")
    R_com = prob.hermitian("R_com", M)
    if M > K:
        Y = prob.hermitian("Y", M - K)
        R_rad = Y.congruence(N)
    else:
        Y = None
        R_rad = conic.Expr.constant(np.zeros((M, M)))
    rhos = [prob.scalar(f"rho_{k + 1}") for k in range(K)]
    alpha = prob.scalar("alpha")
    R = R_com + R_rad

    add_common_constraints(prob, R, alpha, cfg)
    prob.add_psd(R_com, tag="psd_Rcom")
    if Y is not None:
        prob.add_psd(Y, tag="psd_Rrad")

    diag_rho = conic.Expr((K, K), np.zeros((K * K, prob.nvar)), np.zeros(K * K))
    for k, rho in enumerate(rhos):
        diag_rho = diag_rho + conic.Expr((K, K), _unit(K, k) @ rho.coef, np.zeros(K * K))
    prob.add_eq(R_com.congruence(H) - diag_rho, tag="zf")
    # H R H^H = diag(rho) follows from H N = 0
    prob.add_eq(R.congruence(H) - diag_rho, tag="zf", implied=True)

    floor = thresholds.gamma_c * cfg.noise_var_lu
    for rho in rhos:
        prob.add_nonneg(rho - floor, tag="sinr_lu")
    add_eve_rows(prob, R, R_com, scenario, thresholds)
    add_radar_objective(prob, R, alpha, spec, cfg)
    prob.null_basis = N
    return prob


def _unit(K: int, k: int) -> np.ndarray:
    e = np.zeros((K * K, 1))
    e[k * K + k, 0] = 1.0
    return e


def _psd_factor(A: np.ndarray) -> np.ndarray:
    """Some ``L`` with ``L L^H = A``: Cholesky when well conditioned, eigen square root otherwise."""
    A = 0.5 * (A + A.conj().T)
    tr = max(float(np.trace(A).real), 1e-300)
    try:
        L = np.linalg.cholesky(A)
        if np.abs(np.diag(L)).min() >= 1e-10 * tr:
            return L
    except np.linalg.LinAlgError:
        pass
    lam, U = np.linalg.eigh(A)
    return U * np.sqrt(np.clip(lam, 0.0, None))[None, :]


def row_qr(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``B = [L_h, 0] Q`` with ``L_h`` lower triangular (real nonnegative diagonal) and ``Q`` unitary."""
    K, M = B.shape
    Q1, R1 = np.linalg.qr(B.conj().T, mode="complete")    # B^H = Q1 R1
    d = np.diag(R1[:K, :K]).copy()
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    Q1[:, :K] = Q1[:, :K] * phase[None, :]
    R1[:K, :] = R1[:K, :] * np.conj(phase)[:, None]
    L_h = R1[:K, :K].conj().T
    return L_h, Q1.conj().T


def recover_precoders_zf(R_hat: np.ndarray, R_com_hat: np.ndarray, H: np.ndarray,
                         require_positive: bool = True) -> PrecoderPair:
    """Communication precoder by row-QR of ``H L_c``, radar precoder from the remainder."""
    H = np.asarray(H, dtype=complex)
    K = H.shape[0]
    L_c = _psd_factor(np.asarray(R_com_hat, dtype=complex))
    L_h, Q = row_qr(H @ L_c)
    if require_positive and np.min(np.diag(L_h).real) ** 2 <= DEGENERATE_POWER:
        raise DegenerateRho("zero-forcing solution leaves a user without signal power")
    Wc = L_c @ Q.conj().T[:, :K]
    R_hat = np.asarray(R_hat, dtype=complex)
    Wr = factorize_radar_cov(R_hat - Wc @ Wc.conj().T, floor=rounding_floor(R_hat))
    return PrecoderPair(Wc, Wr)


def solve_zf(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds,
             settings: SolverSettings | None = None) -> DesignResult:
    """Low-complexity zero-forcing DFRC design."""
    prob = build_p3(scenario, spec, thresholds)
    sol = _solve_checked(prob, "zf", settings)
    K, M = scenario.channel.shape
    R_com = sol.values["R_com"]
    N = prob.null_basis
    R_hat = R_com + (N @ sol.values["Y"] @ N.conj().T if M > K else 0.0)
    rho = np.array([sol.values[f"rho_{k + 1}"] for k in range(K)])
    pre = recover_precoders_zf(R_hat, R_com, scenario.channel,
                               require_positive=thresholds.users_active)
    alpha = sol.values["alpha"]
    return DesignResult(
        covariance=pre.covariance,
        per_user_covs=[np.outer(w, w.conj()) for w in pre.comm.T],
        precoders=pre,
        alpha=alpha,
        objective=radar_loss(R_hat, alpha, spec, scenario.config),
        relaxed_objective=sol.objective,
        designer="zf",
        diagnostics=_diagnostics(sol),
        relaxed={"R": R_hat, "R_com": R_com, "rho": rho},
    )
