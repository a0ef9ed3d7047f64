"""The knockout tournament on a hand-built family.

Sixty-four Gaussians on the line, one of them close to the truth. The
tournament plays far fewer games than a full round robin and the audit
records every comparison.

    python3 demos/tournament.py
"""

import numpy as np

from sphmix import CandidateFamily, Mixture, game_budget, l1_quadrature_1d, modified_scheffe, sample

rng = np.random.default_rng(0)
truth = Mixture.single([0.0], 1.0)
family = [Mixture.single([m], v) for m, v in zip(rng.uniform(-4, 4, 63), rng.uniform(0.25, 4.0, 63))]
family.insert(17, Mixture.single([0.03], 1.02))
F = CandidateFamily(family)

x = sample(truth, 6000, seed=1)
winner, index, audit = modified_scheffe(F, x, eps=0.1, delta=0.1, seed=0)
print(f"winner #{index}: mean {winner.means[0, 0]:.3f}, variance {winner.variances[0]:.3f}")
print(f"L1 to truth {l1_quadrature_1d(truth, winner):.4f}")
print(f"games: knockout {audit.count('knockout')}, pool {audit.count('pool')}, final {audit.count('final')}; "
      f"total {len(audit)} vs budget {game_budget(len(F)):.0f} vs round robin {len(F) * (len(F) - 1) // 2}")
