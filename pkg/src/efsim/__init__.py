"""efsim: a simulator for communication-compressed distributed stochastic
optimization with error feedback, momentum, and variance reduction.

The package is organized as: ``core`` (vectors and splittable random
streams), ``compress`` (sparsifying operators and their guarantees),
``problems`` (quadratic, adversarial, and logistic-regression oracles),
``optim`` (the algorithm family as synchronous state machines), ``harness``
(seeded runs, traces, diagnostics, sweeps), ``experiments``/``presets``
(declarative configs), and ``cli``.
"""

__version__ = "0.1.0"

from . import compress, core, harness, optim, problems  # noqa: F401
