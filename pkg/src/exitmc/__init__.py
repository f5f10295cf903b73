"""Monte Carlo exit times, occupation times and fixed-point iteration for
``Delta u + lambda u**p = 0`` on bounded domains."""

from . import backend
from .geometry import (Annulus, Ball, Difference, DomainSpec, Mask, Partition, Union,
                       contains, domain_from_json, regular_boundary, sample_interior,
                       signed_distance)
from .simulate import (EulerMaruyama, Integrand, PathOutcome, SimParams, WalkOnSpheres,
                       exit_sample, functional_sample, occupation_sample)

__version__ = "0.1.0"

__all__ = [
    "Annulus", "Ball", "Difference", "DomainSpec", "Mask", "Partition", "Union",
    "contains", "domain_from_json", "regular_boundary", "sample_interior", "signed_distance",
    "EulerMaruyama", "Integrand", "PathOutcome", "SimParams", "WalkOnSpheres",
    "exit_sample", "functional_sample", "occupation_sample", "backend", "__version__",
]
