"""State-partitioned tabular policies."""
from dataclasses import dataclass

import numpy as np

from qdp.errors import PolicyDomainError
from qdp.pmf import as_pmf


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PartitionedPolicy:
    """One action pmf per (time, expert); experts partition the state space.

    ``assignment[s]`` is the expert id of state ``s`` and ``theta[t, z]`` the
    action pmf used by expert ``z`` at time ``t``. ``sharing``, when given, is a
    tuple of ``(experts, times)`` index groups whose products partition the
    (time, expert) grid; all cells of a group carry the same pmf.
    """

    assignment: np.ndarray
    theta: np.ndarray
    sharing: tuple = None

    def __post_init__(self):
        assignment = _frozen(self.assignment, np.int64)
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 3:
            raise PolicyDomainError("theta must have shape (T, experts, actions)")
        if theta.shape[0] > 0 and theta.shape[1] > 0:
            theta = as_pmf(theta, what="policy row")
        if assignment.ndim != 1 or (assignment.size and (
                assignment.min() < 0 or assignment.max() >= theta.shape[1])):
            raise PolicyDomainError("assignment must map every state to an expert id")
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "theta", _frozen(theta, float))
        if self.sharing is not None:
            groups = tuple((tuple(int(z) for z in zs), tuple(int(t) for t in ts))
                           for zs, ts in self.sharing)
            cover = np.zeros(theta.shape[:2], dtype=int)
            for zs, ts in groups:
                cover[np.ix_(ts, zs)] += 1
            if np.any(cover != 1):
                raise PolicyDomainError("sharing groups must partition the (time, expert) grid")
            object.__setattr__(self, "sharing", groups)

    @property
    def horizon(self):
        return self.theta.shape[0]

    @property
    def n_experts(self):
        return self.theta.shape[1]

    @property
    def n_actions(self):
        return self.theta.shape[2]

    @property
    def n_states(self):
        return self.assignment.shape[0]

    def action_probs(self, t):
        """pi^(t)(a|s) as an (S, A) array."""
        return self.theta[t][self.assignment]

    def with_theta(self, theta):
        return PartitionedPolicy(self.assignment, theta, self.sharing)

    def is_interior(self):
        return bool(np.all(self.theta > 0))

    def is_pure(self):
        return bool(np.all((self.theta == 0) | (self.theta == 1)))

    def pure_actions(self):
        """(T, experts) table of modal action indices; ties go to the lowest index."""
        return np.argmax(self.theta, axis=2)

    def expert_masses(self, mu):
        """mu(S_z) for a state pmf (or stack of pmfs along axis 0)."""
        mu = np.atleast_2d(mu)
        out = np.zeros((mu.shape[0], self.n_experts))
        for i, row in enumerate(mu):
            out[i] = np.bincount(self.assignment, weights=row, minlength=self.n_experts)
        return out

    @classmethod
    def uniform(cls, assignment, horizon, n_actions, n_experts=None, sharing=None):
        assignment = np.asarray(assignment)
        if n_experts is None:
            n_experts = int(assignment.max()) + 1 if assignment.size else 0
        theta = np.full((horizon, n_experts, n_actions), 1.0 / n_actions)
        return cls(assignment, theta, sharing)

    @classmethod
    def from_actions(cls, assignment, actions, n_actions, sharing=None):
        """Pure policy from a (T, experts) table of action indices."""
        actions = np.asarray(actions, dtype=int)
        theta = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(theta, actions[..., None], 1.0, axis=2)
        return cls(assignment, theta, sharing)


def identity_assignment(n_states):
    """Standard tabular policy: every state is its own expert."""
    return np.arange(n_states)
