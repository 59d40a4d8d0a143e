"""Factorization algorithms."""

from .conditional import (alternate, codes, solve_u_blockwise, solve_u_given_v,
                          solve_v_given_u, weighted_loss)
from .factorization import Factorization, GroupPartition
from .frobenius import frobenius_coreset_solver
from .gf2 import gf2_bicriteria_solver
from .kbmf import kbmf, kbmf_plus
from .lp import lp_bicriteria_solver
from .oracle import brute_force_bmf

__all__ = [
    "Factorization", "GroupPartition", "alternate", "codes", "solve_u_blockwise",
    "solve_u_given_v", "solve_v_given_u", "weighted_loss", "kbmf", "kbmf_plus",
    "brute_force_bmf", "frobenius_coreset_solver", "gf2_bicriteria_solver",
    "lp_bicriteria_solver",
]
