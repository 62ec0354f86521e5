"""Brute-force dense reference implementations.

Everything here builds explicit matrices and O(n^3) factorizations.  Used by
the test and acceptance suites to cross-check the structured Fourier paths;
never on the sampling hot path.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import IndefiniteDense, TooLarge
from .gauss import conditional_params
from .model import ModelState, SbdModel, build_correlation

MAX_DENSE_DIM = 4096


def _guard(n):
    if n > MAX_DENSE_DIM:
        raise TooLarge(f"dense oracle capped at {MAX_DENSE_DIM}, got {n}")


def dense_conditional(mu, sigma, selector, b):
    """Literal conditional mean/covariance under hard constraints."""
    _guard(np.asarray(mu).size)
    return conditional_params(mu, sigma, np.asarray(selector, dtype=int), None, b)


def dense_logdet(mat):
    _guard(mat.shape[0])
    try:
        chol = scipy.linalg.cholesky(mat, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise IndefiniteDense("matrix is not positive definite") from exc
    return 2.0 * np.log(np.diag(chol)).sum()


def dense_quadform(mat, x):
    _guard(mat.shape[0])
    try:
        factor = scipy.linalg.cho_factor(mat, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise IndefiniteDense("matrix is not positive definite") from exc
    return float(x @ scipy.linalg.cho_solve(factor, x))


def fd_gradient(f, omega, h=1e-5):
    """Central finite differences of a scalar function of the blur."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("finite-difference step outside [1e-7, 1e-3]")
    omega = np.asarray(omega, dtype=float)
    grad = np.zeros_like(omega)
    for i in range(omega.size):
        up, down = omega.copy(), omega.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


def _conv_matrix(kernel):
    """Dense centered circular convolution operator for one column."""
    n = kernel.size
    idx = np.arange(n)
    return kernel[(idx[:, None] - idx[None, :] + n // 2) % n]


class DenseModel:
    """Explicit dense realizations of every structured operator in the model."""

    def __init__(self, model: SbdModel, state: ModelState):
        lat = model.lattice
        _guard(lat.n)
        self.model = model
        self.lattice = lat
        n_v, n_h, n = lat.n_v, lat.n_h, lat.n

        w0 = _conv_matrix(state.w_star)
        self.w0 = w0
        self.w_full = np.kron(np.eye(n_h), w0)
        self.gamma = np.vstack([_conv_matrix(state.c[:, j]) for j in range(n_h)])

        # correlations rebuilt from scratch so the oracle path stays independent
        hp = model.hp
        r_cv = build_correlation(n_v, hp.image_v).dense().real
        r_ch = build_correlation(n_h, hp.image_h).dense().real
        r_dv = build_correlation(n_v, hp.noise_v).dense().real
        r_dh = build_correlation(n_h, hp.noise_h).dense().real
        self.r_c = np.kron(r_ch, r_cv)
        self.r_d = np.kron(r_dh, r_dv)
        self.sigma_c = state.sigma_c2 * self.r_c
        self.sigma_d = state.sigma_d2 * self.r_d

        r_w = build_correlation(n_v, hp.blur).dense().real
        free, sup = lat.blur_free, lat.blur_support
        gain = self._solve(r_w[np.ix_(free, free)], r_w[np.ix_(free, range(n_v))])
        self.r_w = r_w
        self.r_w_tilde = r_w - r_w[:, free] @ gain
        self.r_omega = self.r_w_tilde[np.ix_(sup, sup)]

        # constrained image prior
        sel = lat.image_flat_index()
        c_obs = model.image.c_obs
        if sel.size:
            mu_t, sigma_t = dense_conditional(
                np.zeros(n), self.sigma_c, sel, c_obs
            )
        else:
            mu_t, sigma_t = np.zeros(n), self.sigma_c.copy()
        self.mu_c_tilde = mu_t
        self.sigma_c_tilde = sigma_t
        self.b = np.vstack([
            _conv_matrix(mu_t.reshape((n_v, n_h), order="F")[:, j])
            for j in range(n_h)
        ])

    @staticmethod
    def _solve(a, b):
        return scipy.linalg.solve(a, b, assume_a="pos")

    def sigma_d_omega(self):
        """Marginal data covariance W Sigma_c~ W^T + Sigma_d."""
        return self.w_full @ self.sigma_c_tilde @ self.w_full.T + self.sigma_d


def dense_marginal_potential(omega, state: ModelState, model: SbdModel):
    """Negative log of blur prior times image-marginalized likelihood, densely."""
    from .model import embed_blur

    work = state.copy()
    work.omega = np.asarray(omega, dtype=float)
    work.w_star = embed_blur(work.omega, model.lattice)
    dm = DenseModel(model, work)
    k = work.omega.size
    n = model.lattice.n

    quad_w = dense_quadform(dm.r_omega, work.omega) / work.sigma_w2
    logdet_w = dense_logdet(dm.r_omega) + k * np.log(work.sigma_w2)
    u_prior = 0.5 * (k * np.log(2 * np.pi) + logdet_w + quad_w)

    cov = dm.sigma_d_omega()
    dbar = np.ravel(work.d, order="F") - dm.w_full @ dm.mu_c_tilde
    u_lik = 0.5 * (n * np.log(2 * np.pi) + dense_logdet(cov)
                   + dense_quadform(cov, dbar))
    return u_prior + u_lik
