"""Active uncertainty reduction: data-efficient virtual environments.

Learn GP surrogates of an environment's dynamics and reward from a small
budget of real single-step probes, tighten them by uncertainty-driven
adaptive sampling until a confidence-index target is met, then optimize a
policy against the pessimistic virtual environment with PPO and validate
it back in the real system.
"""

__version__ = "0.1.0"
