"""Numerical tolerances shared across modules.

Values are read at call time, so a process-wide override (``apply_overrides``,
used by the CLI ``tol.<NAME>=value`` config keys) takes effect everywhere. Set
them once at startup; they are not meant to be mutated while work is running.
"""

# markov-core
STOCHASTIC_ROW_SUM = 1e-12
GENERATOR_ROW_SUM = 1e-10  # relative to max |entry|
STATIONARY_SUM = 1e-12
STATIONARY_GAP = 1e-9  # second / first singular value
STATIONARY_MIN = 1e-14
RENORMALIZE_DRIFT = 1e-12
EXPM_MAX_NORM = 1e6
LOG_ROW_SUM = 1e-8
LOG_NEGATIVE_HARD = 1e-6

# schur-tools
SWAP_SEPARATION = 1e-12
SPECTRAL_GAP = 1e-10

# genpcca
FEASIBILITY = 1e-12
PARTITION_OF_UNITY = 1e-10
SINGULAR_DET = 1e-12

# projection
OVERLAP_DET = 1e-14

# rebind-min
CONSTRAINT_RESIDUAL = 1e-6
REVERSIBILITY = 1e-6
# relative nonreversibility treated as rounding noise in printed 4-digit data
REVERSIBLE_ROUNDING = 1e-4
COMPLEX_IMAG = 1e-10


def as_dict():
    return {k: v for k, v in globals().items() if k.isupper()}


def apply_overrides(overrides):
    """Replace tolerance constants by name; unknown names raise ``KeyError``."""
    g = globals()
    for name, value in overrides.items():
        key = name.upper()
        if key not in g or not key.isupper():
            raise KeyError(f"unknown tolerance {name!r}")
        g[key] = float(value)
