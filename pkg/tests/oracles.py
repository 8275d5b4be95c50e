"""Independent reference computations used by the tests.

Everything here is written from the defining formulas with plain loops or a
different algorithm (first-order / stochastic search), never by calling the
package's own evaluation helpers.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
import scipy.optimize


def steering_naive(M, spacing, angle_deg):
    s = math.sin(math.radians(angle_deg))
    return np.array([cmath.exp(2j * math.pi * spacing * m * s) for m in range(M)]) / math.sqrt(M)


def quad_naive(R, v, w=None):
    """``w^H R v`` by a double loop (``w`` defaults to ``v``)."""
    w = v if w is None else w
    total = 0j
    for i in range(len(v)):
        for j in range(len(v)):
            total += w[i].conjugate() * R[i, j] * v[j]
    return total


def grid_naive(lo, hi, res):
    n = int(round((hi - lo) / res))
    return [lo + i * res for i in range(n + 1)]


def in_beam_naive(theta, centers, width):
    return 1.0 if any(abs(theta - c) <= width / 2 + 1e-9 for c in centers) else 0.0


def radar_loss_naive(R, alpha, centers, width, weight, cc_angles, M, spacing, grid):
    Lb = 0.0
    for th in grid:
        p = quad_naive(R, steering_naive(M, spacing, th)).real
        Lb += (alpha * in_beam_naive(th, centers, width) - p) ** 2
    Lb /= len(grid)
    P = len(cc_angles)
    Lc = 0.0
    if P >= 2:
        for p in range(P):
            for q in range(p + 1, P):
                ap = steering_naive(M, spacing, cc_angles[p])
                aq = steering_naive(M, spacing, cc_angles[q])
                Lc += abs(quad_naive(R, ap, aq)) ** 2
        Lc *= 2.0 / (P * P - P)
    return Lb + weight * Lc


def user_sinr_naive(Wc, Wr, H, noise):
    """SINR from the column-by-column sums of received powers."""
    K = H.shape[0]
    out = []
    for k in range(K):
        h = H[k].conj()          # rows of H are h_k^H
        powers = [abs(np.vdot(h, Wc[:, i])) ** 2 for i in range(Wc.shape[1])]
        radar = sum(abs(np.vdot(h, Wr[:, j])) ** 2 for j in range(Wr.shape[1]))
        out.append(powers[k] / (sum(powers) - powers[k] + radar + noise))
    return np.array(out)


def eve_sinr_naive(Wc, Wr, a, beta, noise):
    com = sum(abs(np.vdot(a, Wc[:, i])) ** 2 for i in range(Wc.shape[1]))
    rad = sum(abs(np.vdot(a, Wr[:, j])) ** 2 for j in range(Wr.shape[1]))
    b2 = abs(beta) ** 2
    return b2 * com / (b2 * rad + noise)


def mse_naive(R1, R2, M, spacing, grid):
    tot = 0.0
    for th in grid:
        a = steering_naive(M, spacing, th)
        tot += (quad_naive(R1, a).real - quad_naive(R2, a).real) ** 2
    return tot / len(grid)


def random_psd(rng, M, rank=None, scale=1.0):
    r = M if rank is None else rank
    G = rng.standard_normal((M, r)) + 1j * rng.standard_normal((M, r))
    return scale * G @ G.conj().T / r


def sphere_samples(rng, n, M, radius):
    """``n`` complex vectors uniformly on the sphere of the given radius."""
    E = rng.standard_normal((n, M)) + 1j * rng.standard_normal((n, M))
    return radius * E / np.linalg.norm(E, axis=1, keepdims=True)


# ---------------------------------------------------------------- first-order QSDP oracle

def burer_monteiro_radar_only(M, spacing, grid, phi, cc_angles, weight, total_power,
                              restarts=6, seed=0):
    """Radar-only optimum by a low-rank factorization ``R = V V^H`` with unit rows.

    Per-antenna power is built into the parametrization (every row of ``V``
    is rescaled to norm ``sqrt(Pt/M)``), ``alpha`` is eliminated in closed
    form and L-BFGS runs on the remaining smooth problem.  The best of several
    random starts is returned.
    """
    A = np.stack([steering_naive(M, spacing, t) for t in grid], axis=1)
    Ac = np.stack([steering_naive(M, spacing, t) for t in cc_angles], axis=1) if len(cc_angles) else None
    L = len(grid)
    phi = np.asarray(phi, dtype=float)
    P = len(cc_angles)
    pairs = [(p, q) for p in range(P) for q in range(p + 1, P)]
    cw = weight * 2.0 / (P * P - P) if P >= 2 else 0.0
    c = math.sqrt(total_power / M)
    r = M

    def unpack(x):
        U = (x[: M * r] + 1j * x[M * r:]).reshape(M, r)
        n = np.linalg.norm(U, axis=1, keepdims=True)
        return U, n, c * U / n

    def f_grad(x):
        U, n, V = unpack(x)
        R = V @ V.conj().T
        p = np.real(np.sum(A.conj() * (R @ A), axis=0))
        alpha = max(phi @ p / (phi @ phi), 1e-9) if phi.any() else 1e-9
        res = p - alpha * phi
        val = float(res @ res / L)
        G = (A * (2.0 / L * res)[None, :]) @ A.conj().T
        if cw > 0:
            for pp, qq in pairs:
                cpq = np.vdot(Ac[:, qq], R @ Ac[:, pp])
                val += cw * abs(cpq) ** 2
                G += cw * 2 * np.conj(cpq) * np.outer(Ac[:, pp], Ac[:, qq].conj())
        X = (G + G.conj().T) @ V                     # dL = Re tr(X^H dV)
        # through the row normalization V = c U / |U|
        Uh = U / n
        gU = (c / n) * (X - Uh * np.real(np.sum(Uh.conj() * X, axis=1, keepdims=True)))
        return val, np.concatenate([gU.real.ravel(), gU.imag.ravel()])

    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for _ in range(restarts):
        x0 = rng.standard_normal(2 * M * r)
        out = scipy.optimize.minimize(f_grad, x0, jac=True, method="L-BFGS-B",
                                      options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12})
        if out.fun < best[0]:
            _, _, V = unpack(out.x)
            best = (float(out.fun), V @ V.conj().T)
    return best


# ---------------------------------------------------------------- stochastic rank-one search

def rank1_search(M, spacing, grid, phi, h, a, beta, noise_lu, noise_eve, total_power,
                 gamma_c, gamma_e, budget=10**6, batch=20000, seed=0):
    """Best feasible radar loss found by sampling ``W = [w_1, W_r]`` (single user, single Eve).

    Rows of ``W`` are rescaled to the per-antenna power, so every sample is a
    rank-one communication design with a full radar completion.  A global
    random phase is followed by a shrinking-step local search around the
    best penalized samples.  Returns ``(best feasible loss, evaluations used)``.
    """
    rng = np.random.default_rng(seed)
    A = np.stack([steering_naive(M, spacing, t) for t in grid], axis=1)
    phi = np.asarray(phi, dtype=float)
    b2 = abs(beta) ** 2
    row = math.sqrt(total_power / M)

    def evaluate(W):
        W = W / np.linalg.norm(W, axis=2, keepdims=True) * row
        P = np.sum(np.abs(np.einsum("ml,bmn->bln", A.conj(), W)) ** 2, axis=2)
        alpha = np.maximum(P @ phi / (phi @ phi), 1e-9)
        L = np.mean((alpha[:, None] * phi[None, :] - P) ** 2, axis=1)
        hw = np.abs(np.einsum("m,bmn->bn", h.conj(), W)) ** 2
        aw = np.abs(np.einsum("m,bmn->bn", a.conj(), W)) ** 2
        g = hw[:, 0] / (hw[:, 1:].sum(1) + noise_lu)
        ge = b2 * aw[:, 0] / (b2 * aw[:, 1:].sum(1) + noise_eve)
        feas = (g >= gamma_c) & (ge <= gamma_e)
        pen = L + 10 * (np.maximum(0, 1 - g / gamma_c) + np.maximum(0, ge / gamma_e - 1))
        return W, L, pen, feas

    def draw(n):
        return rng.standard_normal((n, M, M + 1)) + 1j * rng.standard_normal((n, M, M + 1))

    best, used = np.inf, 0
    pool_W, pool_pen = [], []
    while used < budget // 5:
        W, L, pen, feas = evaluate(draw(batch))
        used += batch
        if feas.any():
            best = min(best, float(L[feas].min()))
        idx = np.argsort(pen)[:8]
        pool_W.append(W[idx])
        pool_pen.append(pen[idx])
    pool_W, pool_pen = np.concatenate(pool_W), np.concatenate(pool_pen)
    order = np.argsort(pool_pen)[:4]
    parents = [(pool_W[i], pool_pen[i]) for i in order]
    scales = [0.3] * len(parents)
    while used < budget:
        for i, (Wp, pp) in enumerate(parents):
            n = min(batch // len(parents), budget - used)
            if n <= 0:
                break
            cand = Wp[None] + scales[i] * row * draw(n) / math.sqrt(2)
            W, L, pen, feas = evaluate(cand)
            used += n
            if feas.any():
                best = min(best, float(L[feas].min()))
            j = int(np.argmin(pen))
            if pen[j] < pp:
                parents[i] = (W[j], pen[j])
            else:
                scales[i] = max(scales[i] * 0.6, 1e-6)
    return best, used
