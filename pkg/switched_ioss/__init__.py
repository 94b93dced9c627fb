"""Switched-IOSS: stability certificates and state-norm estimators for switched nonlinear systems.

Usage
-----
>>> import switched_ioss as si
>>> family = si.builtin_paper_example()
>>> cert = si.certify(family)
>>> round(cert.lhs9, 4)
-0.6973
>>> signal = si.generate_signal(family, cert, horizon=15.0, seed=7)
>>> si.validate_stabilizing(signal, family, cert).passed
True

Estimators
----------
>>> params = si.eval_estimator_conditions(family, cert, 3.0, 0.75, 3.0, 4.2)
>>> traj = si.co_simulate(family, cert, params, signal, si.ZeroInput(), [0.5, -0.5], z0=2.0)
>>> env = si.build_estimation_envelope(family, cert, params)
>>> si.check_estimator_bounds(traj, env).passed
True

The command line (``python -m switched_ioss`` or ``switched-ioss``) wraps the
same pipeline: ``check``, ``gen``, ``sim``, ``estimate`` and ``repro-example``.
Families are read from INI files whose dynamics are written in a small
expression language (see :mod:`switched_ioss.loader`).
"""

from .conditions import (
    DwellCertificate,
    EstimatorParams,
    certify,
    check_prop2,
    eval_eq9,
    eval_estimator_conditions,
    find_dwell_times,
    find_estimator_params,
)
from .envelope import (
    Envelope,
    build_estimation_envelope,
    build_ioss_envelope,
    check_estimator_bounds,
    check_estimator_iss,
    check_ioss_inequality,
    check_lyapunov_chain,
    check_psi_bounds,
)
from .expressions import parse_expression
from .family import LyapunovData, Subsystem, SwitchGraph, SystemFamily, sample_lyapunov_conditions
from .inputs import ExpressionInput, InputSignal, UniformPiecewiseInput, ZeroInput
from .loader import builtin_paper_example, load_family
from .signals import (
    SwitchCounts,
    SwitchingSignal,
    counts,
    generate_signal,
    validate_admissible,
    validate_stabilizing,
)
from .sim import (
    Trajectory,
    co_simulate,
    integrate_estimator,
    integrate_reference_estimator,
    integrate_switched,
    zeta_schedule,
)

__all__ = [
    "DwellCertificate",
    "Envelope",
    "EstimatorParams",
    "ExpressionInput",
    "InputSignal",
    "LyapunovData",
    "Subsystem",
    "SwitchCounts",
    "SwitchGraph",
    "SwitchingSignal",
    "SystemFamily",
    "Trajectory",
    "UniformPiecewiseInput",
    "ZeroInput",
    "build_estimation_envelope",
    "build_ioss_envelope",
    "builtin_paper_example",
    "certify",
    "check_estimator_bounds",
    "check_estimator_iss",
    "check_ioss_inequality",
    "check_lyapunov_chain",
    "check_prop2",
    "check_psi_bounds",
    "co_simulate",
    "counts",
    "eval_eq9",
    "eval_estimator_conditions",
    "find_dwell_times",
    "find_estimator_params",
    "generate_signal",
    "integrate_estimator",
    "integrate_reference_estimator",
    "integrate_switched",
    "load_family",
    "parse_expression",
    "sample_lyapunov_conditions",
    "validate_admissible",
    "validate_stabilizing",
    "zeta_schedule",
]
