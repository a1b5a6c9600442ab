"""Time-dependent domains, reflection fields and assumption checks."""

from .domains import (
    DomainSpec,
    MovingDisk,
    MovingInterval,
    MovingScaledPolygon,
    distance,
    domain_from_config,
    unit_square,
)
from .fields import (
    ConstantOblique,
    GammaBlock,
    InwardNormalSmoothed,
    ReflectionField,
    RotatedNormal,
    field_from_config,
    gamma,
    gamma_outward,
)
from .motion import Motion, Power, Sine, Spline, motion_from_config
from .mollify import MollifiedDistance, mollified_distance
from .verify import ConeCertificate, Sampler, verify_assumptions

__all__ = [
    "DomainSpec",
    "MovingDisk",
    "MovingInterval",
    "MovingScaledPolygon",
    "distance",
    "domain_from_config",
    "unit_square",
    "ConstantOblique",
    "GammaBlock",
    "InwardNormalSmoothed",
    "ReflectionField",
    "RotatedNormal",
    "field_from_config",
    "gamma",
    "gamma_outward",
    "Motion",
    "Power",
    "Sine",
    "Spline",
    "motion_from_config",
    "MollifiedDistance",
    "mollified_distance",
    "ConeCertificate",
    "Sampler",
    "verify_assumptions",
]
