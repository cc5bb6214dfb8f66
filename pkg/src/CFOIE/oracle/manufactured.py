"""Reference fields for the manufactured dipole problems."""
from CFOIE.core.incident.sources import DipoleSource, dipole_field_at


def dipole_reference(src: DipoleSource, targets):
    """
    Exact scattered (E, H) for a dipole placed inside the scatterer: the negated
    dipole field, which is radiating and cancels the incident field everywhere
    outside, on any geometry that encloses the source.
    """
    E, H = dipole_field_at(src, targets)
    return -E, -H
