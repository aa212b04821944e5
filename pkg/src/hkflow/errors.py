"""Error taxonomy shared across the package.

Every failure mode callers are expected to catch gets its own class; all
inherit from HkflowError so `except HkflowError` catches the lot.
"""


class HkflowError(Exception):
    pass


class ChartDomain(HkflowError):
    """Point lies outside the valid region of its coordinate chart."""


class BadDimensions(HkflowError):
    """Grid sizes or reference density are invalid."""


class DegenerateImmersion(HkflowError):
    """det(induced metric) fell below the degeneracy threshold."""


class NotCritical(HkflowError):
    """Operation requires a (numerically) critical immersion."""


class NotSpecial(HkflowError):
    """Operation requires the special-flow conditions to hold."""


class OutsideTube(HkflowError):
    """Point or surface left the tubular neighborhood of the reference."""


class BadPotential(HkflowError):
    """Generator potential is not periodic/smooth as required."""


class BadTopology(HkflowError):
    """Scenario requires a different grid topology."""


class AmplitudeTooLarge(HkflowError):
    """Perturbation amplitude pushes the surface out of the tube."""


class UnknownPreset(HkflowError):
    """Preset name not in the catalog."""


class StepRejected(HkflowError):
    """Time step violates the stability bound for the current state."""
