"""bohmlab: a numerical laboratory for pilot-wave trajectory dynamics.

Submodules
----------
domain       configuration-space geometry and stopping-region classifier
wavefunction analytic wavefunction families, guidance velocity, current, sampling
propagator   split-step spectral Schrödinger solver and grid-backed models
trajectory   adaptive guided-trajectory integration with killing/stopping
transport1d  monotone CDF transport in one dimension (line and circle)
flux         absolute-flux surface integrals, nodal cube covers, Hardy check
stats        equivariance tests, entropy bound, global-existence report
scenarios    bundled scenario library and TOML config handling
cli          command-line front end (simulate | flux | transport | report | validate)
"""

from .domain import (
    DomainSpec,
    PhysicalParams,
    RegionClass,
    SingularHyperplane,
    StoppingRegions,
    classify,
    dist_to_singular,
)
from .wavefunction import (
    CylindricalHO3D,
    EnsembleSample,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    WavefieldSample,
    WavefunctionModel,
    current,
    sample_initial,
    velocity,
)

__version__ = "0.1.0"
