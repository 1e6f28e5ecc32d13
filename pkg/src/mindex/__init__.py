"""Learning orthogonal multi-index models with online spherical SGD + ridge.

Subpackages/modules:

    hermite    normalized Hermite polynomials, link functions, coefficients
    model      teacher/student models, Gaussian sampling, initialization
    gradients  closed-form population loss/gradients, per-sample gradients
    sgd        stage-1 online spherical SGD trainer with diagnostics
    ridge      stage-2 ridge regression and test-error evaluation
    gf         deterministic gradient-flow reference dynamics
    gronwall   noisy-recurrence simulators and envelope verifiers
    initstats  Monte Carlo checks of the initialization structure
    experiment orchestration, persistence and the simulation studies
    cli        command-line entry point

The stage-1 training loop has a compiled kernel (mindex._kernels._stage1_cy)
with a NumPy fallback selected at import; see mindex._kernels.
"""

__version__ = "0.1.0"
