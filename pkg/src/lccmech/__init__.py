"""lccmech: Hamiltonian dynamics on cosymplectic, LCC and LCS charts."""
from .calculus import Chart, KForm, LeeForm, SingularPoint, VectorField
from .dynamics import HamiltonianSystem, integrate
from .expr import Expr, parse
from .geometry import LCCStructure, LCSStructure, build_cosymplectic, build_lcc, build_lcs_cotangent, symplectize

__version__ = "0.1.0"

__all__ = [
    "Chart", "KForm", "LeeForm", "VectorField", "SingularPoint", "Expr", "parse",
    "LCCStructure", "LCSStructure", "build_cosymplectic", "build_lcc", "build_lcs_cotangent", "symplectize",
    "HamiltonianSystem", "integrate", "__version__",
]
