"""Strengthening machinery: envelopes, cycle disjunctions, bound tightening."""
from .bilinear import BilinearSystem, cycle_bilinearize, mccormick, mccormick_interval
from .disjunction import (Cut, CutPool, DisjunctionProgram, build_disjunction, rank_one_point, separate,
                          separate_cut)
from .envelopes import ArctanEnvelope, arctan_envelopes
from .tightening import (TighteningReport, TightenResult, fix_binaries, neighborhood, tighten_all,
                         tighten_bounds)

__all__ = [
    "ArctanEnvelope", "BilinearSystem", "Cut", "CutPool", "DisjunctionProgram", "arctan_envelopes",
    "build_disjunction", "cycle_bilinearize", "mccormick", "mccormick_interval", "rank_one_point",
    "separate", "separate_cut", "TighteningReport", "TightenResult", "fix_binaries", "neighborhood",
    "tighten_all", "tighten_bounds",
]
