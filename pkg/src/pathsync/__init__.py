"""Energy-based trajectory tracking for conservative mechanical systems.

The package reduces a non-stationary reference trajectory to a scalar
mechanical system with a shaped reference potential, interconnects the true
and reference systems through a virtual spring/damper, regulates the shaped
zero energy level with pump inputs, and verifies the resulting energy
identities and convergence behaviour in closed-loop simulation.
"""

__version__ = "0.1.0"

from .controller import (
    CouplingGains,
    SyncOutput,
    constraint_force,
    control_signals,
    dual_torque,
    mu_gain,
    quadratic_spring,
    speed_ratio,
)
from .dynamics import (
    ConfigurationState,
    MechModel,
    coriolis,
    forward_dynamics,
    hamiltonian,
    inverse_dynamics,
    point_mass,
    power_bracket,
    two_link_arm,
)
from .energy import EnergyBreakdown, combined_energy, pump_reference, pump_true
from .errors import (
    ConfigError,
    DegeneratePathError,
    DimensionMismatchError,
    NumericFaultError,
    PathDomainError,
    PathsyncError,
    SingularInertiaError,
    TraceModeError,
)
from .reference import (
    ReducedModel,
    ReferencePath,
    circle,
    from_csv,
    from_samples,
    line,
    parabola,
)
from .simulate import (
    AugmentedState,
    Scenario,
    Trace,
    computed_torque_baseline,
    convergence_metrics,
    integrate,
    verify_power_balance,
    write_portrait_csv,
    write_trace_csv,
    zero_dynamics_portrait,
)

__all__ = [name for name in dir() if not name.startswith("_")]
