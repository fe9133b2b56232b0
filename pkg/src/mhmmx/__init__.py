"""Mixture hidden Markov models with copula-coupled discrete emissions.

Subgroup trajectories of weekly (pain, activity-limitation) pairs are
modeled by one HMM per subgroup, with membership driven by baseline risk
factors through a multinomial logit.
"""

__version__ = "0.1.0"
