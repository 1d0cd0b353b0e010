"""Sheared wind profile and trim-dependent aerodynamic coefficients.

Pure functions over immutable parameter records; everything is smooth in its
inputs (on the clamped domain) so the derivative engine can differentiate
through them.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad


@dataclass(frozen=True)
class WindProfile:
    """Power-law wind shear.

    Attributes:
        w_ref: wind speed at the reference height [m/s].
        h_ref: reference height [m].
        shear_exp: dimensionless power-law exponent (0 = uniform wind).
        h_floor: minimum evaluation height [m]; lower heights are clamped.
    """

    w_ref: float = 10.0
    h_ref: float = 100.0
    shear_exp: float = 0.14
    h_floor: float = 1.0

    def __post_init__(self):
        if self.w_ref <= 0.0:
            raise ValueError("reference wind speed must be positive")
        if self.h_ref <= 0.0:
            raise ValueError("reference height must be positive")
        if self.shear_exp < 0.0:
            raise ValueError("shear exponent must be >= 0")
        if self.h_floor <= 0.0:
            raise ValueError("height floor must be positive")

    def replace_ref(self, w_ref):
        return WindProfile(float(w_ref), self.h_ref, self.shear_exp, self.h_floor)


@dataclass(frozen=True)
class AeroTrimMap:
    """Affine lift map in normalized trim plus a quadratic drag polar.

    Trim 0 is the depowered setting (minimum lift), trim 1 fully powered.
    """

    cl_min: float = 0.3
    cl_max: float = 1.0
    cd0: float = 0.04
    k_induced: float = 0.06

    def __post_init__(self):
        if not 0.0 < self.cl_min < self.cl_max:
            raise ValueError("need 0 < cl_min < cl_max")
        if self.cd0 <= 0.0:
            raise ValueError("zero-lift drag must be positive")
        if self.k_induced < 0.0:
            raise ValueError("induced-drag factor must be >= 0")


def wind_speed(profile: WindProfile, h):
    """Wind speed at height h [m], clamped to the profile's height floor.

    Total and smooth in h: below the floor the profile is frozen at its
    floor value through a narrow C1 blend.
    """
    blend = 0.5 * profile.h_floor
    h_eff = ad.smooth_max(h, profile.h_floor, blend)
    return profile.w_ref * (h_eff / profile.h_ref) ** profile.shear_exp


def aero_coeffs(amap: AeroTrimMap, trim):
    """Lift, drag, glide ratio and resultant-force coefficient at a trim setting.

    Extrapolates smoothly outside [0, 1] so solver iterates slightly past the
    box stay differentiable; bounds elsewhere keep solutions inside.

    Returns:
        (c_lift, c_drag, glide, c_resultant)
    """
    c_lift = amap.cl_min + trim * (amap.cl_max - amap.cl_min)
    c_drag = amap.cd0 + amap.k_induced * c_lift * c_lift
    glide = c_lift / c_drag
    c_res = ad.sqrt(c_lift * c_lift + c_drag * c_drag)
    return c_lift, c_drag, glide, c_res


def force_factor(amap: AeroTrimMap, trim):
    """Dimensionless tether-force factor c_R * (1 + E^2) at a trim setting."""
    _, _, glide, c_res = aero_coeffs(amap, trim)
    return c_res * (1.0 + glide * glide)
