"""Next-action forecasting of human decision trajectories in the Iowa
Gambling Task and the Iterated Prisoner's Dilemma."""

__version__ = "0.1.0"
