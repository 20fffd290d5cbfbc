import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from croplink.errors import EmptyDatasetError
from croplink.height import (
    ClientSite,
    MastConstraints,
    compare_fixed,
    gain_vs_fixed,
    height_profile,
    objective,
    optimal_height_multi,
    optimal_height_single,
)

from oracles import brute_force_height


class TestMastConstraints:
    def test_grid_endpoints(self):
        grid = MastConstraints(0.5, 30.0, 0.25).grid()
        assert grid[0] == 0.5 and grid[-1] == 30.0
        assert len(grid) == 119

    def test_last_point_clamped(self):
        grid = MastConstraints(1.0, 10.0, 0.7).grid()
        assert grid[-1] == 10.0
        assert np.all(np.diff(grid) > 0)

    @pytest.mark.parametrize("args", [(5, 5, 0.1), (-1, 5, 0.1), (1, 5, 0), (1, 5, 4.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            MastConstraints(*args)


class TestProfile:
    def test_no_crops_best_at_bottom(self, table1, mast):
        prof = height_profile(table1, ClientSite(39, 0.0), mast)
        assert prof[0][1] >= prof[-1][1]
        assert max(prof, key=lambda p: p[1])[0] == mast.h_min

    def test_crops_interior_maximum(self, table1, mast):
        prof = height_profile(table1, ClientSite(39, 1.0), mast)
        values = [v for _, v in prof]
        k = int(np.argmax(values))
        assert 0 < k < len(values) - 1
        assert values[k] > values[0] and values[k] > values[-1]

    def test_single_step_gives_two_points(self, table1):
        prof = height_profile(table1, ClientSite(39, 1.0), MastConstraints(1.0, 30.0, 29.0))
        assert [h for h, _ in prof] == [1.0, 30.0]


class TestSingleClient:
    def test_no_crop_optimum_at_ground(self, table1):
        decision = optimal_height_single(table1, ClientSite(39, 0.0), MastConstraints(0.0, 30.0))
        assert decision.h_star == 0.0

    @pytest.mark.parametrize("d", [20, 39, 60])
    def test_matches_brute_force(self, table1, mast, d):
        h_bf, v_bf = brute_force_height(tuple(table1.as_array()), [(d, 1.0, 1.0)], mast.h_min, mast.h_max)
        decision = optimal_height_single(table1, ClientSite(d, 1.0), mast)
        assert abs(decision.h_star - h_bf) <= 1e-3
        assert decision.predicted_rsrp >= v_bf - 1e-9

    def test_frozen_optimum_d39(self, table1, mast):
        # brute force at 1 mm: 10.098 m, -90.19276 dBm
        decision = optimal_height_single(table1, ClientSite(39, 1.0), mast)
        assert decision.h_star == pytest.approx(10.098, abs=1e-3)
        assert decision.predicted_rsrp == pytest.approx(-90.19276, abs=1e-5)

    def test_farther_clients_want_taller_masts(self, table1, mast):
        near = optimal_height_single(table1, ClientSite(20, 1.0), mast).h_star
        far = optimal_height_single(table1, ClientSite(60, 1.0), mast).h_star
        assert far >= near

    def test_distance_trend(self, table1, mast):
        hs = [optimal_height_single(table1, ClientSite(d, 1.0), mast).h_star for d in (20, 30, 40, 50, 60)]
        assert hs == sorted(hs)

    def test_argmin_avoided_with_crops(self, table1):
        decision = optimal_height_single(table1, ClientSite(39, 1.0), MastConstraints(0.0, 30.0))
        assert decision.h_star > 1.0
        assert decision.predicted_rsrp > decision.profile[0][1]

    @settings(max_examples=40, deadline=None)
    @given(st.floats(2.0, 200.0), st.floats(0.0, 3.0), st.floats(0.0, 5.0), st.floats(6.0, 40.0))
    def test_feasible_and_dominant(self, table1, d, hc, h_min, h_max):
        mast = MastConstraints(h_min, h_max, (h_max - h_min) / 40)
        decision = optimal_height_single(table1, ClientSite(d, hc), mast)
        assert mast.h_min <= decision.h_star <= mast.h_max
        assert all(decision.predicted_rsrp >= v for _, v in decision.profile)


class TestMultiClient:
    def test_single_client_reduction(self, table1, mast):
        c = ClientSite(45, 1.0)
        a = optimal_height_multi(table1, [c], mast)
        b = optimal_height_single(table1, c, mast)
        assert (a.h_star, a.predicted_rsrp) == (b.h_star, b.predicted_rsrp)

    def test_duplicate_clients(self, table1, mast):
        c = ClientSite(45, 1.0)
        assert optimal_height_multi(table1, [c, c], mast).h_star == optimal_height_single(table1, c, mast).h_star

    def test_empty(self, table1, mast):
        with pytest.raises(EmptyDatasetError):
            optimal_height_multi(table1, [], mast)

    def test_matches_brute_force(self, table1, mast):
        clients = [ClientSite(25, 1.0), ClientSite(55, 1.5, 2.0)]
        h_bf, _ = brute_force_height(
            tuple(table1.as_array()), [(c.d, c.h_c, c.weight) for c in clients], mast.h_min, mast.h_max
        )
        assert optimal_height_multi(table1, clients, mast).h_star == pytest.approx(h_bf, abs=1e-3)

    def test_ten_clients_gain_non_negative(self, table1, mast):
        clients = [ClientSite(d, 1.0) for d in np.linspace(20, 120, 10)]
        assert gain_vs_fixed(table1, clients, 5.0, mast) >= 0

    @pytest.mark.parametrize("kind", ["min", "linear"])
    def test_alternative_objectives(self, table1, mast, kind):
        clients = [ClientSite(20, 1.0), ClientSite(60, 1.0)]
        decision = optimal_height_multi(table1, clients, mast, kind=kind)
        assert mast.h_min <= decision.h_star <= mast.h_max
        vals = objective(table1, clients, [decision.h_star, 5.0], kind)
        assert vals[0] >= vals[1]

    def test_unknown_objective(self, table1, mast):
        with pytest.raises(ValueError):
            objective(table1, [ClientSite(20)], [5.0], kind="median")


class TestGainVsFixed:
    def test_zero_at_optimum(self, table1, mast):
        c = [ClientSite(39, 1.0)]
        h = optimal_height_multi(table1, c, mast).h_star
        assert gain_vs_fixed(table1, c, h, mast) == 0.0

    def test_zero_without_crops_at_floor(self, table1):
        assert gain_vs_fixed(table1, [ClientSite(30, 0.0)], 0.0, MastConstraints(0.0, 30.0)) == 0.0

    def test_outside_mast(self, table1, mast):
        with pytest.raises(ValueError):
            gain_vs_fixed(table1, [ClientSite(30, 1.0)], 31.0, mast)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(5, 150), st.floats(0, 2.5)), min_size=1, max_size=6),
           st.integers(0, 118))
    def test_dominance_on_grid(self, table1, sites, k):
        mast = MastConstraints(0.5, 30.0, 0.25)
        fixed = float(mast.grid()[k])
        clients = [ClientSite(d, hc) for d, hc in sites]
        decision, fixed_v, gain = compare_fixed(table1, clients, fixed, mast)
        assert gain >= 0
        assert gain == decision.predicted_rsrp - fixed_v
