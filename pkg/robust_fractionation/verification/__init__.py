"""Certificate verification: continuum feasibility and the weak-duality sandwich."""
from .sip_check import Certificate, FeasReport, certificate_from_solution, check_sip
from .primal_oracle import SandwichReport, primal_oracle, sandwich_check

__all__ = [
    "Certificate",
    "FeasReport",
    "certificate_from_solution",
    "check_sip",
    "SandwichReport",
    "primal_oracle",
    "sandwich_check",
]
