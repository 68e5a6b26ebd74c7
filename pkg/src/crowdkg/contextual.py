"""Instances described by feature vectors.

Soft labels follow a logistic model ``theta_i = sigmoid(<w, x_i>)`` and the
weight vector carries a Gaussian belief. After each label the belief is
replaced by its Laplace approximation: the posterior mode as the new mean
and a rank-one update of the covariance.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, expit

from .errors import DomainError, NoActionError, NumericError, ValidationError
from .mdp import LabelOutcome, RunTrace, episode_streams, truth_accuracy
from .policies import KG, OptKG, Uniform, pick_max

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 100
GRAD_TOL = 1e-8


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64, ndmin=1)
        cov = np.array(self.cov, dtype=np.float64, ndmin=2)
        p = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (p, p):
            raise ValidationError(f"mean of length {p} needs a {p}x{p} covariance")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DomainError("belief entries must be finite")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise DomainError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, p, var=1.0):
        return cls(np.zeros(p), np.eye(p) * float(var))

    @property
    def p(self):
        return self.mean.shape[0]


def _vec(belief, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (belief.p,):
        raise ValidationError(f"feature vector must have length {belief.p}")
    return x


def log_posterior_grad(belief, x, y, w):
    """Gradient in w of log sigmoid(y <w, x>) - (w - mu)' Sigma^-1 (w - mu) / 2."""
    x = _vec(belief, x)
    w = np.asarray(w, dtype=np.float64)
    prior = np.linalg.solve(belief.cov, w - belief.mean)
    return y * x * (1.0 - expit(y * (w @ x))) - prior


def log_posterior(belief, x, y, w):
    x = _vec(belief, x)
    w = np.asarray(w, dtype=np.float64)
    d = w - belief.mean
    # log sigmoid(t) = -log(1 + exp(-t))
    return -np.logaddexp(0.0, -y * (w @ x)) - 0.5 * d @ np.linalg.solve(belief.cov, d)


def laplace_update(belief, x, y):
    """Gaussian approximation to the posterior after label ``y`` on features ``x``."""
    if y not in (1, -1):
        raise DomainError(f"label must be +1 or -1, got {y!r}")
    x = _vec(belief, x)
    if not np.any(x):
        return belief
    u = belief.cov @ x
    v = float(x @ u)
    m = float(belief.mean @ x)
    xnorm = float(np.linalg.norm(x))
    # The mode lies on the line mu + beta * Sigma x; along it the gradient
    # equals phi(beta) * x with phi strictly decreasing, so a scalar Newton
    # solve finds it.

    def phi(beta):
        return y * (1.0 - expit(y * (m + beta * v))) - beta

    beta = 0.0
    f = phi(beta)
    trace = [(0, beta, abs(f) * xnorm)]
    for it in range(1, NEWTON_MAXIT + 1):
        if abs(f) * xnorm <= NEWTON_TOL:
            break
        s = expit(m + beta * v)
        slope = -v * s * (1.0 - s) - 1.0
        step = -f / slope
        cand = beta + step
        fc = phi(cand)
        halvings = 0
        while abs(fc) > abs(f) and halvings < 50:
            step *= 0.5
            cand = beta + step
            fc = phi(cand)
            halvings += 1
        if cand == beta:
            break
        beta, f = cand, fc
        trace.append((it, beta, abs(f) * xnorm))
    if abs(f) * xnorm > GRAD_TOL:
        raise NumericError("posterior mode search did not converge", trace=trace)
    mean = belief.mean + beta * u
    s = expit(float(mean @ x))
    lam = s * (1.0 - s)
    cov = belief.cov - (lam / (1.0 + lam * v)) * np.outer(u, u)
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericError("updated covariance is not positive definite", trace=trace) from None
    return GaussianBelief(mean, cov)


def _moments(belief, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mu = X @ belief.mean
    s2 = np.einsum("ij,jk,ik->i", X, belief.cov, X)
    return mu, np.maximum(s2, 0.0)


def predict_label_prob(belief, x):
    """Probit-style approximation of Pr(y = +1) under the belief."""
    x = _vec(belief, x)
    mu = float(belief.mean @ x)
    s2 = max(float(x @ belief.cov @ x), 0.0)
    return float(expit(mu / math.sqrt(1.0 + math.pi * s2 / 8.0)))


def _positive_probs(mu, s2):
    s = np.sqrt(s2)
    out = np.where(mu >= 0, 1.0, 0.0)
    live = s > 0
    out[live] = 0.5 * erfc(-mu[live] / (s[live] * math.sqrt(2.0)))
    return out


def positive_prob(belief, x):
    """Pr(<w, x> >= 0); an indicator when the variance along x is zero."""
    mu, s2 = _moments(belief, _vec(belief, x))
    return float(_positive_probs(mu, s2)[0])


def confidence_sum(belief, X):
    """Sum over instances of max(P_i, 1 - P_i)."""
    P = _positive_probs(*_moments(belief, X))
    return float(np.sum(np.maximum(P, 1.0 - P)))


def contextual_reward(belief, candidate, features):
    """(expected, optimistic) gain in the confidence sum from labeling ``candidate``.

    Every instance's confidence moves because the label updates the shared
    weight vector, so the full sum is recomputed for both outcomes.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if not 0 <= candidate < X.shape[0]:
        raise ValidationError(f"candidate {candidate} out of range for K={X.shape[0]}")
    x = X[candidate]
    if not np.any(x):
        return 0.0, 0.0
    base = confidence_sum(belief, X)
    r_pos = confidence_sum(laplace_update(belief, x, 1), X) - base
    r_neg = confidence_sum(laplace_update(belief, x, -1), X) - base
    p = predict_label_prob(belief, x)
    return p * r_pos + (1.0 - p) * r_neg, max(r_pos, r_neg)


def aggregate_contextual(belief, X):
    """Instances with Pr(<w, x_i> >= 0) >= 1/2."""
    P = _positive_probs(*_moments(belief, X))
    return frozenset(np.flatnonzero(P >= 0.5).tolist())


class ContextualSyntheticEnv:
    """Labels from ``sigmoid(<w, x_i>)`` for a hidden weight vector ``w``."""

    restricted = False

    def __init__(self, weights, features):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        self.K = self.features.shape[0]
        self.theta = expit(self.features @ self.weights)
        self.truth = [1 if t >= 0.5 else -1 for t in self.theta]

    def fresh(self):
        return self

    def available_instances(self):
        return None

    def draw(self, i, rng, worker=None):
        return 1 if rng.random() < self.theta[i] else -1


def run_contextual_episode(env, policy, T, features, prior, seed):
    """Spend up to ``T`` labels with a shared logistic model over features."""
    if T < 0 or int(T) != T:
        raise ValidationError(f"budget must be a non-negative integer, got {T!r}")
    if not isinstance(policy, (Uniform, KG, OptKG)):
        raise ValidationError(f"policy {policy!r} is not available for contextual instances")
    T = int(T)
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[0] != env.K:
        raise ValidationError("feature rows must match the environment")
    _, label_rng, policy_rng = episode_streams(seed)
    belief = prior
    K = X.shape[0]
    counts = np.zeros(K, dtype=np.int64)
    outcomes = []
    exhausted = False
    for t in range(T):
        allowed = env.available_instances()
        try:
            if isinstance(policy, Uniform):
                idx = np.arange(K) if allowed is None else np.flatnonzero(allowed)
                if idx.size == 0:
                    raise NoActionError("no admissible action left")
                i = int(idx[policy_rng.integers(idx.size)])
            else:
                pick = 0 if isinstance(policy, KG) else 1
                cand = range(K) if allowed is None else np.flatnonzero(allowed)
                vals = np.full(K, -np.inf)
                for k in cand:
                    vals[k] = contextual_reward(belief, k, X)[pick]
                i = pick_max(vals, policy.tie, policy_rng, None if allowed is None else allowed)
        except NoActionError:
            exhausted = True
            break
        y = env.draw(i, label_rng)
        belief = laplace_update(belief, X[i], y)
        counts[i] += 1
        outcomes.append(LabelOutcome(i, y, t))
    positive = aggregate_contextual(belief, X)
    return RunTrace(
        outcomes=outcomes,
        final_state=belief,
        positive_set=positive,
        accuracy=truth_accuracy(positive, env.truth),
        label_counts=counts,
        exhausted=exhausted,
    )
