"""Odd generalized Einstein metrics on 3-dimensional Lie groups.

Exact (rational, one quadratic surd) and float64 backends for the Dorfman
coefficients, Levi-Civita generalized connections, generalized Ricci tensors
and the Einstein residual system; canonical forms and identification of the
Lie algebras; an atlas of the classified families; a multistart solver.
"""
from __future__ import annotations

from .atlas import (FAMILY_IDS, FamilyConstraintError, LieLabel, expected_label, find_families,
                    generate_family, identify, identify_nonunimodular, identify_unimodular,
                    membership, sample_params)
from .canon import (L1, L2, L3, L5, bracket_from_L, bracket_nonunimodular, canonical_tag,
                    ce_differential, extract_L, gauge_reduce, nonunimodular_params, wedge)
from .connection import DivergenceOperator, GeneralizedConnection, levi_civita
from .curvature import curvature_tensor, ricci_closed_form, ricci_from_curvature, ricci_split_EH
from .dorfman import (DorfmanTensor, MetricLieAlgebra, TwistingData, algebra_from_brackets,
                      check_skew, dorfman_coefficients)
from .einstein import EinsteinResidual, InvalidSceneError, Scene, einstein_residual, is_einstein
from .frame import FrameSignature, ScalarProduct, build_frame
from .numeric import Surd
from .sceneio import emit_scene, parse_scene
from .solver import Ansatz, SolveReport, residual_fn, solve

__version__ = "0.1.0"
