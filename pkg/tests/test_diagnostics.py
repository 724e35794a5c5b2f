import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgspectral.diagnostics import (decay_envelope_check, dissipation_integral, dissipation_series, fit_growth_rate,
                                    kappa_sweep_compare, write_json)
from mgspectral.evolve import SimState, run, single_mode
from mgspectral.multiplier import PhysicalParams
from mgspectral.series import NormSeries, read_series_csv, write_series_csv
from mgspectral.spectral import Grid, gradient_norm, random_smooth, spectral_l2

T20 = np.linspace(0.0, 2.0, 41)
VOL_HALF = (2 * math.pi) ** 3 / 2  # ||sin x3||_2^2


class TestFit:
    def test_exact_exponential(self):
        assert fit_growth_rate(NormSeries(T20, np.exp(0.4 * T20))) == pytest.approx(0.4, abs=1e-14)

    def test_constant(self):
        assert fit_growth_rate(NormSeries(T20, np.full_like(T20, 3.0))) == pytest.approx(0.0, abs=1e-15)

    def test_perturbed(self):
        t = np.linspace(0, 5, 200)
        v = np.exp(0.4 * t) * (1 + 0.01 * np.sin(10 * t))
        rate, r2 = fit_growth_rate(NormSeries(t, v), return_r2=True)
        assert abs(rate - 0.4) <= 0.01 and r2 > 0.999

    def test_window(self):
        v = np.where(T20 < 1, np.exp(T20), np.e * np.exp(-2 * (T20 - 1)))
        assert fit_growth_rate(NormSeries(T20, v), (1.0, 2.0)) == pytest.approx(-2.0, abs=1e-13)

    @given(rate=st.floats(-3, 3), scale=st.floats(1e-6, 1e6))
    def test_scale_invariant(self, rate, scale):
        v = np.exp(rate * T20)
        a = fit_growth_rate(NormSeries(T20, v))
        b = fit_growth_rate(NormSeries(T20, scale * v))
        assert a == pytest.approx(rate, abs=1e-12)
        assert b == pytest.approx(a, abs=1e-12)

    def test_rejects_few_samples(self):
        with pytest.raises(ValueError):
            fit_growth_rate(NormSeries(T20[:7], np.ones(7)))

    def test_rejects_zero_values(self):
        v = np.ones_like(T20)
        v[5] = 0.0
        with pytest.raises(ValueError):
            fit_growth_rate(NormSeries(T20, v))


class TestSeries:
    def test_rejects_negative_and_unordered(self):
        with pytest.raises(ValueError):
            NormSeries([0, 1], [1, -1])
        with pytest.raises(ValueError):
            NormSeries([0, 0], [1, 1])
        with pytest.raises(ValueError):
            NormSeries([0, 1, 2], [1, 1])

    def test_csv_round_trip(self, tmp_path):
        a = NormSeries(T20, np.exp(-T20) / 3, label="L2")
        b = NormSeries(T20, np.sqrt(T20), label="H1")
        path = tmp_path / "s.csv"
        write_series_csv(path, [a, b])
        raw = path.read_bytes()
        assert raw.startswith(b"t,norm_L2,norm_H1\r\n")
        back = read_series_csv(path)
        assert [s.label for s in back] == ["L2", "H1"]
        assert np.array_equal(back[0].values, a.values) and np.array_equal(back[1].times, T20)


def single_mode_dissipation(ek, T, n):
    g = Grid.cube(8)
    samples = []
    run(SimState(0.0, single_mode(g, (0, 0, 1)), PhysicalParams(eps_kappa=ek)), T, T / (n - 1),
        observers=[lambda t, th: samples.append((t, gradient_norm(th, 2) ** 2))])
    t, g2 = np.array(samples).T
    return dissipation_series(t, g2, ek)


class TestDissipation:
    @pytest.mark.parametrize("ek", [1e-1, 1e-2, 1e-3, 1e-4])
    def test_single_mode_closed_form(self, ek):
        got = dissipation_integral(single_mode_dissipation(ek, 1.0, 256), 1.0)
        want = VOL_HALF * (1 - math.exp(-2 * ek)) / 2
        assert got == pytest.approx(want, rel=1e-6)

    def test_zero(self):
        t = np.linspace(0, 1, 100)
        assert dissipation_integral(NormSeries(t, np.zeros(100))) == 0.0

    def test_additive_and_nonnegative(self):
        s = single_mode_dissipation(0.1, 1.0, 257)
        whole = dissipation_integral(s, 1.0)
        left = dissipation_integral(s, 0.5, 0.0)
        right = dissipation_integral(s, 1.0, 0.5)
        assert whole == pytest.approx(left + right, rel=1e-14)
        assert min(whole, left, right) >= 0

    def test_needs_dense_sampling(self):
        with pytest.raises(ValueError):
            dissipation_integral(NormSeries(np.linspace(0, 1, 20), np.ones(20)))


class TestSweep:
    def test_single_mode_closed_form(self):
        g = Grid.cube(8)
        kappas = [1e-1, 1e-2, 1e-3, 1e-4]
        table = kappa_sweep_compare(single_mode(g, (0, 0, 1)), PhysicalParams(), kappas, 1.0, [0.5, 1.0], 1 / 128)
        assert table.monotone and not table.notes
        norm0 = math.sqrt(VOL_HALF)
        for r in table.rows:
            assert r.distance == pytest.approx((1 - math.exp(-r.eps_kappa * r.t)) * norm0, rel=1e-12)
        d = table.dissipation_by_kappa()
        vals = [d[k] for k in kappas]
        assert all(a > b > 0 for a, b in zip(vals, vals[1:]))

    def test_zero_kappa_against_itself(self):
        g = Grid.cube(8)
        table = kappa_sweep_compare(random_smooth(g, 1, kmax=2), PhysicalParams(), [0.0], 0.5, [0.5], 1 / 128)
        assert table.rows[0].distance == 0.0

    def test_generic_field_monotone(self, grid16):
        kappas = [1e-1, 1e-2, 1e-3]
        table = kappa_sweep_compare(random_smooth(grid16, 2), PhysicalParams(), kappas, 0.5, [0.5], 0.5 / 64)
        dist = {r.eps_kappa: r.distance for r in table.rows}
        assert dist[1e-3] < dist[1e-2] < dist[1e-1]
        assert table.monotone

    def test_sample_times_must_align(self, grid16):
        with pytest.raises(ValueError):
            kappa_sweep_compare(random_smooth(grid16, 2), PhysicalParams(), [0.1], 0.5, [0.3333], 0.5 / 64)

    def test_rejects_negative_kappa(self, grid16):
        with pytest.raises(ValueError):
            kappa_sweep_compare(random_smooth(grid16, 2), PhysicalParams(), [-0.1], 0.5, [0.5], 0.5 / 64)

    def test_json(self, tmp_path):
        g = Grid.cube(8)
        table = kappa_sweep_compare(single_mode(g, (0, 0, 1)), PhysicalParams(), [0.1], 0.5, [0.5], 0.5 / 64)
        write_json(tmp_path / "s.json", table.to_json())
        import json
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["monotone"] is True and len(data["rows"]) == 1


class TestEnvelope:
    t = np.geomspace(0.01, 100, 200)

    def test_exact_power(self):
        r = decay_envelope_check(NormSeries(self.t, self.t**-0.5), -0.5)
        assert r.bound == pytest.approx(1.0, rel=1e-12) and r.monotone_tail

    def test_exponential_decay(self):
        r = decay_envelope_check(NormSeries(self.t, np.exp(-self.t)), -0.5)
        assert math.isfinite(r.bound) and r.monotone_tail

    def test_slow_decay_is_flagged(self):
        r = decay_envelope_check(NormSeries(self.t, self.t**-0.25), -0.5)
        assert not r.monotone_tail

    def test_needs_a_decade(self):
        with pytest.raises(ValueError):
            decay_envelope_check(NormSeries(np.linspace(1, 5, 20), np.ones(20)), -0.5)

    def test_skips_t_zero(self):
        t = np.append(0.0, self.t)
        r = decay_envelope_check(NormSeries(t, np.append(5.0, self.t**-0.5)), -0.5)
        assert r.bound == pytest.approx(1.0, rel=1e-12)

    def test_simulated_run(self, grid16):
        from mgspectral.spectral import NormSpec
        s, p = 0.5, 4
        res = run(SimState(0.0, random_smooth(grid16, 3), PhysicalParams(eps_kappa=0.1)), 60.0, 0.05,
                  track={"w": NormSpec(s, p)}, sample_every=4)
        series = res.get("w")
        # the tail opens after the diffusive time 1 / eps_kappa
        r = decay_envelope_check(series, -(s / 2 + 0.5 - 1.5 / p), tail_start=10.0)
        assert math.isfinite(r.bound) and r.monotone_tail
