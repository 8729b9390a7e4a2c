"""A two-state, two-action deterministic MDP with a value-iteration oracle."""

from dataclasses import dataclass

import numpy as np

from irs_antijam.learning import LearnerBundle


@dataclass
class ToyObs:
    index: int


class ToyMDP:
    # next_state[s][a], reward[s][a]
    next_state = ((0, 1), (0, 1))
    rewards = ((1.0, 0.0), (2.0, -1.0))

    def step(self, s, a):
        return self.next_state[s][a], self.rewards[s][a]

    def obs(self, s):
        return ToyObs(s)


def value_iteration(mdp: ToyMDP, gamma: float, tol: float = 1e-14) -> np.ndarray:
    q = np.zeros((2, 2))
    while True:
        new = np.array(
            [[mdp.rewards[s][a] + gamma * q[mdp.next_state[s][a]].max() for a in range(2)] for s in range(2)]
        )
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


def run_toy(mdp, cfg, steps, checkpoints=(), oracle=None, seed=0):
    bundle = LearnerBundle(cfg, 2, 2, np.array([2]))
    rng = np.random.default_rng(seed)
    s, dists = 0, []
    for t in range(1, steps + 1):
        a = bundle.act(mdp.obs(s), rng)
        s2, r = mdp.step(s, a)
        bundle.update(mdp.obs(s), a, r, mdp.obs(s2))
        s = s2
        if t in checkpoints:
            dists.append(float(np.max(np.abs(bundle.q - oracle))))
    return dists if checkpoints else bundle
