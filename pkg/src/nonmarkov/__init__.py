"""Non-Markovianity of qubit decoherence channels: first-principles
computation of the trace-distance and entanglement measures, tomography
feature datasets, and an epsilon-SVR that estimates the measure from
expectation values at one or two fixed times."""

__version__ = "0.1.0"

from .channels import (  # noqa: F401
    AmplitudeDamping,
    DrivenAmplitudeDamping,
    PhaseDamping,
    TimeGrid,
)
from .measures import n_entanglement, n_trace_distance  # noqa: F401
