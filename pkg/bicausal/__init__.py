#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
from bicausal.adapted import av, aw_p, aw_value, bicausal_lp_oracle, verify_bicausal
from bicausal.bounds import BoundReport, RateFit, run_suite
from bicausal.context import Context
from bicausal.measures import (
    clip,
    disintegrate,
    load_measure,
    moment_p,
    save_measure,
    standard_example,
    standard_example_base,
    tail_p,
    tv_distance,
)
from bicausal.moduli import (
    extended_modulus_omega_bar,
    g_recursion,
    h_iteration,
    modulus_omega,
)
from bicausal.smoothing import NoiseModel, SmoothingScheme, convolve_quantized
from bicausal.state import (
    Coupling,
    DisintegrationTree,
    MeasureValidationError,
    PathMeasure,
)
from bicausal.transport import wasserstein_p

__all__ = [
    "PathMeasure",
    "DisintegrationTree",
    "Coupling",
    "MeasureValidationError",
    "Context",
    "disintegrate",
    "moment_p",
    "tail_p",
    "tv_distance",
    "clip",
    "load_measure",
    "save_measure",
    "standard_example",
    "standard_example_base",
    "wasserstein_p",
    "aw_value",
    "aw_p",
    "av",
    "verify_bicausal",
    "bicausal_lp_oracle",
    "NoiseModel",
    "SmoothingScheme",
    "convolve_quantized",
    "modulus_omega",
    "extended_modulus_omega_bar",
    "g_recursion",
    "h_iteration",
    "BoundReport",
    "RateFit",
    "run_suite",
]
