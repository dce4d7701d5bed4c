"""Exact certification and experiments for orthogonal splittings of L_1^{2k} generated by sign matrices."""
from __future__ import annotations

from .certifier import (Certificate, SubmatrixSelector, anderson_constant, certify_split, criterion_value,
                        delta_p, split_constant, verify_certificate)
from .exact import QuadValue, bareiss_det, maximal_minors, quad_abs_cmp, quad_arith
from .matrices import (SignMatrix, SplitSystem, apply_row, build_split, lp_norm, random_sign_matrix,
                       walsh_bad_vector, walsh_matrix)
from .oracle import DistortionReport, mc_ascent, ratio_at, section_oracle

__version__ = "0.1.0"
