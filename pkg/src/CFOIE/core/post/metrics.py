from dataclasses import asdict, dataclass, field
import numpy as np


@dataclass
class ErrorReport:
    """
    e_F: max over targets of |F~ - F| / |F|
    e_divF: max over targets of |div F~| / |F~|
    q: surface charge per component (electric runs only)
    """
    e_F: float = float("nan")
    e_divF: float = float("nan")
    q: list = field(default_factory=list)
    iterations: int = 0
    N: int = 0
    h: float = float("nan")
    p: int = 0
    e_field_corrected: float = float("nan")

    @property
    def q_max(self):
        return float(np.max(np.abs(self.q))) if len(self.q) else float("nan")

    def to_dict(self):
        out = asdict(self)
        out["q"] = [complex(v) for v in self.q]
        out["q_max"] = self.q_max
        return out


def relative_field_error(computed, reference):
    """Pointwise |F~ - F| / |F| over targets, (T,); fields are (3, T)."""
    return np.linalg.norm(computed - reference, axis=0) / np.linalg.norm(reference, axis=0)


def relative_divergence(div, computed):
    return np.abs(div) / np.linalg.norm(computed, axis=0)


def error_measures(computed, div, grid, iterations=0, reference=None, q=None, corrected=None):
    """Max-over-targets error measures; e_F (and its corrected variant) need a reference field."""
    report = ErrorReport(
        e_divF=float(relative_divergence(div, computed).max()),
        q=list(q) if q is not None else [],
        iterations=int(iterations),
        N=int(grid.size),
        h=float(grid.h),
        p=int(grid.order),
    )
    if reference is not None:
        report.e_F = float(relative_field_error(computed, reference).max())
        if corrected is not None:
            report.e_field_corrected = float(relative_field_error(corrected, reference).max())
    return report
