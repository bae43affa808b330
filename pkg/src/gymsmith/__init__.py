"""gymsmith: verifiable-environment substrate and verification toolkit.

Building blocks for RLVR data pipelines over computer-use environments:

- a session-isolated state service (inject / inspect / diff / upload),
- a reward-script execution harness and reward-hacking static scanner,
- the five-condition agreement verifier and its adversarial loop
  orchestrator,
- trajectory slicing and GSPO numerics for turning verified rollouts
  into training samples.
"""

__version__ = "0.1.0"
