"""Multi-class labels with Dirichlet instance states.

The probability that class ``c`` is the modal component of
``theta ~ Dir(alpha)`` is computed from the Gamma representation
``theta_c = X_c / sum(X)`` with independent ``X_c ~ Gamma(alpha_c)``:

    I_c(alpha) = int_0^inf f(x; alpha_c) prod_{c' != c} F(x; alpha_c') dx

with ``f`` and ``F`` the unit-scale Gamma density and CDF.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .beta import RiskMode
from .errors import DomainError, NoActionError, NumericError, ValidationError
from .mdp import LabelOutcome, RunTrace, episode_streams
from .policies import DETERMINISTIC, INDEX_POLICIES, Uniform, pick_max

QUAD_TOL = 1e-10
TAIL_MASS = 1e-10


@dataclass(frozen=True)
class DirichletState:
    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(x) for x in self.alpha)
        if len(alpha) < 2:
            raise DomainError("a Dirichlet state needs at least two classes")
        if any(not math.isfinite(x) or x <= 0 for x in alpha):
            raise DomainError(f"Dirichlet parameters must be finite and positive, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def C(self):
        return len(self.alpha)

    def plus(self, c):
        if not 0 <= c < self.C:
            raise DomainError(f"class {c} out of range for C={self.C}")
        alpha = list(self.alpha)
        alpha[c] += 1.0
        return DirichletState(tuple(alpha))


@dataclass(frozen=True)
class ClassPosterior:
    probs: tuple


def _as_state(s):
    return s if isinstance(s, DirichletState) else DirichletState(tuple(s))


@lru_cache(maxsize=200_000)
def _modal_prob(ac, others):
    # Keyed on (alpha_c, sorted others) so that permuted or repeated
    # parameters give bit-identical results.
    upper = float(special.gammaincinv(ac, 1.0 - TAIL_MASS))
    log_norm = special.gammaln(ac)
    rest = np.array(others)

    def g(x):
        # Gamma density without its x**(ac - 1) factor, which quad applies
        # as an algebraic weight so small shapes do not spoil convergence.
        return math.exp(-x - log_norm) * float(np.prod(special.gammainc(rest, x)))

    val, err, *info = integrate.quad(
        g, 0.0, upper, weight="alg", wvar=(ac - 1.0, 0.0),
        epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200, full_output=1,
    )
    # quad appends a message only when it flags a problem; accept the
    # result anyway if its error estimate is still far below 1e-6.
    if not math.isfinite(val) or (len(info) > 1 and err > 1e-7):
        raise NumericError(
            f"modal-class quadrature failed for alpha_c={ac}, others={others}",
            trace={"estimate": val, "error": err, "message": info[1] if len(info) > 1 else ""},
        )
    return min(max(val, 0.0), 1.0)


def _probs(alpha):
    out = []
    for c, ac in enumerate(alpha):
        others = tuple(sorted(alpha[:c] + alpha[c + 1:]))
        out.append(_modal_prob(ac, others))
    # The C events partition the simplex; dividing by the computed total
    # removes the common truncation loss and keeps equal entries equal.
    tot = math.fsum(out)
    return [x / tot for x in out]


def top_class_probs(s):
    """Posterior probability of each class being the modal one."""
    s = _as_state(s)
    return ClassPosterior(tuple(_probs(s.alpha)))


def outcome_rewards(s):
    """Change in max_c I_c after one more label of each class."""
    s = _as_state(s)
    base = max(_probs(s.alpha))
    return [max(_probs(s.plus(c).alpha)) - base for c in range(s.C)]


def _cvar(p, r, level):
    order = sorted(range(len(r)), key=lambda c: -r[c])
    left = 1.0
    total = 0.0
    for c in order:
        q = min(p[c] / level, left)
        total += q * r[c]
        left -= q
        if left <= 0.0:
            break
    return total


def multiclass_reward(s, mode=RiskMode()):
    """Score of labeling this instance once more, under ``mode``."""
    s = _as_state(s)
    r = outcome_rewards(s)
    tot = sum(s.alpha)
    p = [x / tot for x in s.alpha]
    if mode.kind == "expected" or (mode.kind == "cvar" and mode.alpha >= 1.0):
        return sum(pc * rc for pc, rc in zip(p, r))
    if mode.kind == "optimistic":
        return max(r)
    if mode.kind == "pessimistic":
        return min(r)
    return _cvar(p, r, mode.alpha)


def classify(s):
    """Modal class with the smallest index among ties."""
    probs = _probs(_as_state(s).alpha)
    return int(np.argmax(probs))


def multiclass_aggregate(states):
    """Partition instance indices by their modal class."""
    states = [_as_state(s) for s in states]
    if not states:
        return []
    C = states[0].C
    if any(s.C != C for s in states):
        raise ValidationError("all instances must share the number of classes")
    parts = [set() for _ in range(C)]
    for i, s in enumerate(states):
        parts[classify(s)].add(i)
    return parts


_KIND = {"KG": "expected", "OptKG": "optimistic", "PessKG": "pessimistic", "CVaRKG": "cvar"}


def _mode_of(policy):
    kind = _KIND[type(policy).__name__]
    return RiskMode(kind, policy.alpha if kind == "cvar" else 1.0)


class MultiSyntheticEnv:
    """Categorical labels from hidden class proportions ``theta`` (K x C)."""

    restricted = False

    def __init__(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[1] < 2:
            raise DomainError("theta must be a K x C matrix with C >= 2")
        if np.any(theta < 0) or not np.allclose(theta.sum(axis=1), 1.0):
            raise DomainError("each row of theta must be a probability vector")
        self.theta = theta
        self.K, self.C = theta.shape
        self.truth = [int(np.argmax(row)) for row in theta]

    def fresh(self):
        return self

    def available_instances(self):
        return None

    def draw(self, i, rng, worker=None):
        u = rng.random()
        cum = np.cumsum(self.theta[i])
        return int(min(np.searchsorted(cum, u, side="right"), self.C - 1))


def run_multiclass_episode(env, policy, T, alpha0, seed):
    """Spend up to ``T`` categorical labels; ``alpha0`` is the K x C prior."""
    if T < 0 or int(T) != T:
        raise ValidationError(f"budget must be a non-negative integer, got {T!r}")
    T = int(T)
    alpha = np.array(alpha0, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] != env.K:
        raise ValidationError("prior must be a K x C array matching the environment")
    if not (isinstance(policy, INDEX_POLICIES) or isinstance(policy, Uniform)):
        raise ValidationError(f"policy {policy!r} is not available for multi-class labels")
    _, label_rng, policy_rng = episode_streams(seed)
    K, C = alpha.shape
    mode = None if isinstance(policy, Uniform) else _mode_of(policy)
    values = None
    if mode is not None:
        values = np.array([multiclass_reward(DirichletState(tuple(row)), mode) for row in alpha])
    counts = np.zeros(K, dtype=np.int64)
    outcomes = []
    exhausted = False
    for t in range(T):
        allowed = env.available_instances()
        try:
            if values is None:
                idx = np.arange(K) if allowed is None else np.flatnonzero(allowed)
                if idx.size == 0:
                    raise NoActionError("no admissible action left")
                i = int(idx[policy_rng.integers(idx.size)])
            else:
                i = pick_max(values, policy.tie, policy_rng, allowed)
        except NoActionError:
            exhausted = True
            break
        y = env.draw(i, label_rng)
        if not 0 <= y < C:
            raise ValidationError(f"label {y} outside 0..{C - 1}")
        alpha[i, y] += 1.0
        if values is not None:
            values[i] = multiclass_reward(DirichletState(tuple(alpha[i])), mode)
        counts[i] += 1
        outcomes.append(LabelOutcome(i, y, t))
    assigned = [classify(tuple(row)) for row in alpha]
    hits = [assigned[i] == t for i, t in enumerate(env.truth) if t is not None]
    return RunTrace(
        outcomes=outcomes,
        final_state=alpha,
        positive_set=None,
        accuracy=(sum(hits) / len(hits)) if hits else None,
        label_counts=counts,
        exhausted=exhausted,
        assignment=assigned,
    )
