"""CZ gate design for two-quantum-dot spin qubits.

Exact 16-dimensional Hubbard dynamics plus reinforcement-learning pulse
shaping (deep Q-learning, deep SARSA, PPO), with a CLI harness under
the `pulsectl` entry point.
"""

__version__ = "0.1.0"
