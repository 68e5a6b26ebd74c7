"""Beta-state machinery for one instance.

A binary instance is summarized by the pseudo-count pair ``(a, b)`` of its
Beta posterior. Everything the policies need from it is here: the tail
mass above 1/2, the confidence function, the one-step transition
probabilities, the pair of one-step rewards and the four ways of scoring
that pair.
"""

import math
from dataclasses import dataclass

from scipy.special import betaln

from . import kernels
from .errors import DomainError


@dataclass(frozen=True)
class BetaState:
    """Pseudo-counts of positive (``a``) and negative (``b``) labels."""

    a: float
    b: float

    def __post_init__(self):
        a, b = self.a, self.b
        if not (math.isfinite(a) and math.isfinite(b)) or a <= 0 or b <= 0:
            raise DomainError(f"BetaState needs finite positive counts, got ({a!r}, {b!r})")

    def plus(self, y):
        """State after observing label ``y`` in {+1, -1}."""
        if y == 1:
            return BetaState(self.a + 1, self.b)
        if y == -1:
            return BetaState(self.a, self.b + 1)
        raise DomainError(f"label must be +1 or -1, got {y!r}")


@dataclass(frozen=True)
class RewardPair:
    r_pos: float
    r_neg: float


@dataclass(frozen=True)
class RiskMode:
    """How a reward pair is collapsed into one score.

    ``kind`` is one of ``"expected"``, ``"optimistic"``, ``"pessimistic"``
    or ``"cvar"``; ``alpha`` is only read for CVaR and must lie in (0, 1].
    """

    kind: str = "expected"
    alpha: float = 1.0

    _CODES = {
        "expected": kernels.EXPECTED,
        "optimistic": kernels.OPTIMISTIC,
        "pessimistic": kernels.PESSIMISTIC,
        "cvar": kernels.CVAR,
    }

    def __post_init__(self):
        if self.kind not in self._CODES:
            raise DomainError(f"unknown risk mode {self.kind!r}")
        if self.kind == "cvar" and not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"CVaR alpha must lie in (0, 1], got {self.alpha!r}")

    @property
    def code(self):
        return self._CODES[self.kind]

    @classmethod
    def expected(cls):
        return cls("expected")

    @classmethod
    def optimistic(cls):
        return cls("optimistic")

    @classmethod
    def pessimistic(cls):
        return cls("pessimistic")

    @classmethod
    def cvar(cls, alpha):
        return cls("cvar", float(alpha))


def _as_state(s):
    return s if isinstance(s, BetaState) else BetaState(*s)


def positive_tail(s):
    """Pr(theta >= 1/2) when theta ~ Beta(a, b).

    >>> positive_tail(BetaState(2, 1))
    0.75
    """
    s = _as_state(s)
    return kernels.upper_tail(s.a, s.b)


def confidence(x):
    """h(x) = max(x, 1 - x) for a probability x."""
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"confidence needs a probability, got {x!r}")
    return max(x, 1.0 - x)


def transition_probs(s):
    """Posterior predictive probabilities of the next label being +1 and -1."""
    s = _as_state(s)
    tot = s.a + s.b
    return s.a / tot, s.b / tot


def reward_pair(s):
    """Change in confidence after a +1 label and after a -1 label."""
    s = _as_state(s)
    return RewardPair(*kernels.reward_pair(s.a, s.b))


def scored_reward(s, mode=RiskMode()):
    """Collapse the reward pair of ``s`` into one number under ``mode``."""
    s = _as_state(s)
    return kernels.score(s.a, s.b, mode.code, mode.alpha)


# Closed forms valid for positive integer counts. They serve as an
# independent check on the general path above and are not used at runtime.


def closed_form_gain(a, b):
    """0.5**(a+b) / B(a, b) evaluated through scipy's log-beta."""
    return math.exp((a + b) * math.log(0.5) - betaln(a, b))


def closed_form_optimistic(a, b):
    """R+(a, b) for integer states via the three-case formula."""
    g = closed_form_gain(a, b)
    if a >= b + 1:
        return g / a
    if a == b:
        return g / a
    return g / b


def closed_form_expected(a, b):
    """Expected reward of an integer state: zero off the diagonal."""
    if a != b:
        return 0.0
    return closed_form_gain(a, a) / a


def closed_form_pessimistic(a, b):
    """R-(a, b) for integer states; positive only on the diagonal."""
    g = closed_form_gain(a, b)
    if a == b:
        return g / a
    if a >= b + 1:
        return -g / b
    return -g / a
