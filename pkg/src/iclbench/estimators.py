"""Closed-form Bayesian baselines over the Fourier-order hierarchy.

For each candidate order m the demonstrations are fit by a conjugate
Gaussian linear model on the plain Fourier features phi_m.  The generative
process scales the weight vector by 1/sqrt(m+1), so the model is expressed
in the scaled coefficients theta = w / sqrt(m+1): the prior is
Normal(0, (sigma_w_sq/(m+1)) I), the ridge penalty is
lam = sigma_eps_sq (m+1) / sigma_w_sq, and predictions are mean . phi_m(x).
(``literal_prior=True`` drops the (m+1) factor, i.e. places the prior
variance sigma_w_sq on theta itself, for comparison runs.)

On top of the per-order posteriors sit five learners: evidence-weighted
averaging (BMA), maximum-evidence selection (BMC), AIC/BIC selection with
known noise variance, and the equal-weight ensemble.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from iclbench.environment import FeatureMap, Scenario, feature_matrix, feature_vector

__all__ = [
    "ClassPosterior",
    "HierarchicalPosterior",
    "PredictiveMixture",
    "SelectorKind",
    "fit_class",
    "fit_hierarchical",
    "class_posterior_weights",
    "predict",
    "predictive_mixture",
]

LOG_2PI = math.log(2.0 * math.pi)


class SelectorKind(enum.Enum):
    """The closed enumeration of baseline learners."""

    AIC = "AIC"
    BIC = "BIC"
    BMC = "BMC"
    ENSEMBLE = "ENSEMBLE"
    BMA = "BMA"


@dataclass(frozen=True)
class ClassPosterior:
    """Gaussian posterior over the scaled coefficients of one order class.

    ``mean`` solves (Phi^T Phi + lam I) mean = Phi^T y; ``covariance_factor``
    is the lower Cholesky factor of sigma_eps_sq (Phi^T Phi + lam I)^{-1};
    ``log_evidence`` is the log marginal likelihood of the demonstrations.
    With zero demonstrations the posterior is the prior and log_evidence = 0.
    """

    m: int
    mean: np.ndarray
    covariance_factor: np.ndarray
    log_evidence: float


@dataclass(frozen=True)
class HierarchicalPosterior:
    """Per-order posteriors plus their normalized evidence weights.

    ``logliks[k]`` caches the Gaussian log-likelihood of the demonstrations at
    class k+1's ridge fit (known noise variance) for the information-criterion
    selectors; ``t`` is the number of demonstrations seen.
    """

    class_posteriors: tuple[ClassPosterior, ...]
    weights: np.ndarray
    t: int
    logliks: np.ndarray
    period: float


@dataclass(frozen=True)
class PredictiveMixture:
    """Gaussian-mixture predictive distribution for the next observation."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray

    def logpdf(self, y: float) -> float:
        """Log density of the mixture at y, via stabilized log-sum-exp."""
        with np.errstate(divide="ignore"):  # weights may underflow to exactly 0
            log_w = np.log(self.weights)
        log_comps = (
            log_w
            - 0.5 * (LOG_2PI + np.log(self.variances))
            - 0.5 * (y - self.means) ** 2 / self.variances
        )
        hi = np.max(log_comps)
        return float(hi + np.log(np.exp(log_comps - hi).sum()))


def _ridge_penalty(m: int, s: Scenario, literal_prior: bool) -> tuple[float, float]:
    """(prior variance of the scaled coefficients, ridge penalty lam)."""
    prior_var = s.sigma_w_sq if literal_prior else s.sigma_w_sq / (m + 1.0)
    return prior_var, s.sigma_eps_sq / prior_var


def fit_class(
    xs: np.ndarray,
    ys: np.ndarray,
    m: int,
    s: Scenario,
    literal_prior: bool = False,
) -> ClassPosterior:
    """Conjugate Gaussian fit of one order class to t demonstrations.

    The evidence is evaluated through whichever Gram matrix is smaller —
    the t x t kernel form or the (2m+1) x (2m+1) coefficient form — always
    via Cholesky factorization, never by explicit inversion.  Both forms are
    algebraically identical (tested against each other elsewhere).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"xs/ys must be equal-length vectors, got {xs.shape} vs {ys.shape}")
    t = xs.shape[0]
    d = 2 * m + 1
    eps = s.sigma_eps_sq
    prior_var, lam = _ridge_penalty(m, s, literal_prior)

    fm = FeatureMap(m=m, period=s.period)
    Phi = feature_matrix(fm, xs) if t else np.zeros((0, d))
    A = Phi.T @ Phi + lam * np.eye(d)
    b = Phi.T @ ys
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise np.linalg.LinAlgError("regularized Gram matrix is not positive definite "
                                    "(non-finite demonstrations?)")
    L = np.linalg.cholesky(A)
    Linv = np.linalg.solve(L, np.eye(d))
    A_inv = Linv.T @ Linv
    mean = A_inv @ b
    covariance_factor = np.linalg.cholesky(eps * A_inv)

    if t == 0:
        log_evidence = 0.0
    elif t <= d:
        K = prior_var * (Phi @ Phi.T) + eps * np.eye(t)
        Lk = np.linalg.cholesky(K)
        alpha = np.linalg.solve(Lk, ys)
        log_evidence = -0.5 * (
            t * LOG_2PI + 2.0 * np.log(np.diag(Lk)).sum() + alpha @ alpha
        )
    else:
        logdet_A = 2.0 * np.log(np.diag(L)).sum()
        log_evidence = (
            -0.5 * t * (LOG_2PI + math.log(eps))
            - 0.5 * (ys @ ys - b @ mean) / eps
            - 0.5 * (logdet_A - d * math.log(lam))
        )
    return ClassPosterior(
        m=m, mean=mean, covariance_factor=covariance_factor, log_evidence=float(log_evidence)
    )


def class_posterior_weights(log_evidences: np.ndarray) -> np.ndarray:
    """Posterior class probabilities under a uniform prior over orders.

    Stabilized softmax of the log evidences (max subtraction).
    """
    log_evidences = np.asarray(log_evidences, dtype=np.float64)
    if not np.all(np.isfinite(log_evidences)):
        raise ValueError("log evidences must be finite")
    shifted = log_evidences - log_evidences.max()
    w = np.exp(shifted)
    return w / w.sum()


def fit_hierarchical(
    xs: np.ndarray,
    ys: np.ndarray,
    s: Scenario,
    literal_prior: bool = False,
) -> HierarchicalPosterior:
    """Fit all M order classes and weight them by their evidence."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    t = xs.shape[0]
    posts = []
    logliks = np.empty(s.M)
    for m in range(1, s.M + 1):
        cp = fit_class(xs, ys, m, s, literal_prior=literal_prior)
        posts.append(cp)
        if t:
            fm = FeatureMap(m=m, period=s.period)
            resid = ys - feature_matrix(fm, xs) @ cp.mean
            rss = float(resid @ resid)
        else:
            rss = 0.0
        logliks[m - 1] = -0.5 * t * (LOG_2PI + math.log(s.sigma_eps_sq)) - 0.5 * rss / s.sigma_eps_sq
    weights = class_posterior_weights(np.array([cp.log_evidence for cp in posts]))
    return HierarchicalPosterior(
        class_posteriors=tuple(posts),
        weights=weights,
        t=t,
        logliks=logliks,
        period=s.period,
    )


def _class_predictions(posterior: HierarchicalPosterior, x: float) -> np.ndarray:
    preds = np.empty(len(posterior.class_posteriors))
    for k, cp in enumerate(posterior.class_posteriors):
        phi = feature_vector(FeatureMap(m=cp.m, period=posterior.period), x)
        preds[k] = cp.mean @ phi
    return preds


def _select_index(selector: SelectorKind, posterior: HierarchicalPosterior) -> int:
    """Index of the selected class; argmin/argmax ties break toward smaller m."""
    t = posterior.t
    ks = np.array([2 * cp.m + 1 for cp in posterior.class_posteriors], dtype=np.float64)
    if selector is SelectorKind.BMC:
        return int(np.argmax(posterior.weights))
    if t == 0:
        # No demonstrations: the information criteria are undefined, fall back
        # to the smallest class.
        return 0
    if selector is SelectorKind.AIC:
        scores = 2.0 * ks - 2.0 * posterior.logliks
    elif selector is SelectorKind.BIC:
        scores = ks * math.log(t) - 2.0 * posterior.logliks
    else:  # pragma: no cover - guarded by callers
        raise ValueError(f"not a selecting learner: {selector}")
    return int(np.argmin(scores))


def predict(selector: SelectorKind, posterior: HierarchicalPosterior, x: float) -> float:
    """Point prediction at x for one of the baseline learners."""
    preds = _class_predictions(posterior, x)
    if selector is SelectorKind.BMA:
        return float(posterior.weights @ preds)
    if selector is SelectorKind.ENSEMBLE:
        return float(preds.mean())
    return float(preds[_select_index(selector, posterior)])


def predictive_mixture(
    posterior: HierarchicalPosterior, x: float, s: Scenario
) -> PredictiveMixture:
    """Mixture-of-Gaussians predictive for the next noisy observation at x.

    Component k has the class-k ridge prediction as its mean and
    sigma_eps_sq + phi^T Sigma_k phi as its variance (observation noise plus
    coefficient uncertainty); component weights are the evidence weights.
    """
    means = _class_predictions(posterior, x)
    variances = np.empty_like(means)
    for k, cp in enumerate(posterior.class_posteriors):
        phi = feature_vector(FeatureMap(m=cp.m, period=posterior.period), x)
        u = cp.covariance_factor.T @ phi
        variances[k] = s.sigma_eps_sq + u @ u
    return PredictiveMixture(means=means, variances=variances, weights=posterior.weights.copy())
