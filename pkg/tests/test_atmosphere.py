import numpy as np
import pytest

from kitecycle.atmosphere import (AeroTrimMap, WindProfile, aero_coeffs,
                                  force_factor, wind_speed)


class TestWindProfile:
    def test_reference_height_returns_reference_speed(self):
        prof = WindProfile(w_ref=10.0, h_ref=100.0, shear_exp=0.14)
        assert wind_speed(prof, 100.0) == pytest.approx(10.0, abs=1e-12)

    def test_zero_exponent_is_uniform(self):
        prof = WindProfile(w_ref=10.0, h_ref=100.0, shear_exp=0.0)
        assert wind_speed(prof, 37.0) == pytest.approx(10.0, abs=1e-12)

    def test_power_law_at_double_height(self):
        # oracle: 10 * 2**0.14 evaluated independently
        prof = WindProfile(w_ref=10.0, h_ref=100.0, shear_exp=0.14)
        assert wind_speed(prof, 200.0) == pytest.approx(11.019051158766107, rel=1e-12)

    def test_clamps_below_floor(self):
        prof = WindProfile(w_ref=10.0, h_ref=100.0, shear_exp=0.14, h_floor=2.0)
        # deep below the floor the profile is frozen at the floor value
        v_clamped = 10.0 * (2.0 / 100.0) ** 0.14
        assert wind_speed(prof, -50.0) == pytest.approx(v_clamped, rel=1e-12)
        assert wind_speed(prof, 0.0) == pytest.approx(v_clamped, rel=1e-12)
        # above the blend region the power law is exact
        assert wind_speed(prof, 4.0) == pytest.approx(10.0 * 0.04 ** 0.14, rel=1e-12)

    def test_nondecreasing_in_height(self):
        prof = WindProfile()
        h = np.linspace(0.5, 800.0, 200)
        v = wind_speed(prof, h)
        assert np.all(np.diff(v) >= -1e-12)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            WindProfile(w_ref=-1.0)
        with pytest.raises(ValueError):
            WindProfile(shear_exp=-0.1)
        with pytest.raises(ValueError):
            WindProfile(h_floor=0.0)


class TestAeroTrimMap:
    def test_full_trim_values(self):
        amap = AeroTrimMap()
        cl, cd, glide, cr = aero_coeffs(amap, 1.0)
        assert cl == pytest.approx(1.0)
        assert cd == pytest.approx(0.10)
        assert glide == pytest.approx(10.0)
        assert cr == pytest.approx(np.sqrt(1.01), rel=1e-12)

    def test_zero_trim_values(self):
        amap = AeroTrimMap()
        cl, cd, glide, cr = aero_coeffs(amap, 0.0)
        assert cl == pytest.approx(0.3)
        assert cd == pytest.approx(0.0454, rel=1e-12)
        assert glide == pytest.approx(6.607929515418501, rel=1e-12)

    def test_pure_drag_glide_ratio(self):
        amap = AeroTrimMap(cl_min=0.3, cl_max=1.0, cd0=0.1, k_induced=0.0)
        _, _, glide, _ = aero_coeffs(amap, 1.0)
        assert glide == pytest.approx(10.0, abs=1e-14)

    def test_lift_strictly_increasing(self):
        amap = AeroTrimMap()
        trims = np.linspace(0.0, 1.0, 101)
        cl, _, _, cr = aero_coeffs(amap, trims)
        assert np.all(np.diff(cl) > 0.0)
        assert np.all(np.diff(cr) > 0.0)

    def test_force_modulation_range(self):
        # pulling-force factor swings by more than 3x over the trim range
        amap = AeroTrimMap()
        ratio = force_factor(amap, 1.0) / force_factor(amap, 0.0)
        assert ratio == pytest.approx(7.489953166380535, rel=1e-9)
        assert ratio > 3.0

    def test_glide_ratio_finite_positive_on_box(self):
        amap = AeroTrimMap()
        trims = np.linspace(0.0, 1.0, 50)
        _, _, glide, _ = aero_coeffs(amap, trims)
        assert np.all(np.isfinite(glide)) and np.all(glide > 0.0)

    def test_invalid_maps_rejected(self):
        with pytest.raises(ValueError):
            AeroTrimMap(cl_min=1.0, cl_max=0.5)
        with pytest.raises(ValueError):
            AeroTrimMap(cd0=0.0)
