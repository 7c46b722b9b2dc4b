import warnings
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import PLANTED_SPECTRUM
from flowdmd import dmd, linalg
from flowdmd import evaluation as ev
from flowdmd.errors import (
    ArgumentError,
    DegenerateDataError,
    FormatError,
    InsufficientDataError,
    ModeOverflowError,
    RankTruncationWarning,
)


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def iterate(op, x0, steps):
    cols = [np.asarray(x0, dtype=float)]
    for _ in range(steps - 1):
        cols.append(op @ cols[-1])
    return np.column_stack(cols)


class TestFit:
    def test_constant_snapshots(self):
        c = np.array([3.0, -1.0, 2.0])
        model = dmd.fit(np.tile(c[:, None], 5), 1)
        assert model.r == 1
        assert abs(model.discrete_eigs[0] - 1) <= 1e-10
        assert abs(model.cont_eigs[0]) <= 1e-10
        for t in (0, 1, 7.5, 40):
            np.testing.assert_allclose(dmd.predict(model, t), c, rtol=1e-10)

    def test_rotation_eigenvalues(self):
        th = np.pi / 8
        data = iterate(rotation(th), [1.0, 0.3], 10)
        model = dmd.fit(data, 2)
        oracle = np.linalg.eigvals(rotation(th))
        assert oracles.match_multiset(model.discrete_eigs, oracle) <= 1e-10
        assert oracles.match_multiset(oracle, [np.exp(1j * th), np.exp(-1j * th)]) <= 1e-14

    def test_planted_recovery(self, planted):
        data = ev.generate_planted(planted, 30)
        model = dmd.fit(data, 6)
        assert oracles.match_multiset(model.discrete_eigs, PLANTED_SPECTRUM) <= 1e-8

    def test_eigs_sorted_by_magnitude(self, planted):
        model = dmd.fit(ev.generate_planted(planted, 30), 6)
        mags = np.abs(model.discrete_eigs)
        assert np.all(np.diff(mags) <= 1e-12)

    def test_continuous_eigs_use_principal_log(self, planted):
        model = dmd.fit(ev.generate_planted(planted, 30), 6, dt=2.0)
        np.testing.assert_allclose(np.exp(model.cont_eigs * 2.0), model.discrete_eigs, atol=1e-13)
        assert np.all(np.abs(model.cont_eigs.imag * 2.0) <= np.pi)

    def test_negative_real_eigenvalue_branch(self):
        omega = dmd.continuous_eigs([complex(-0.5, -0.0), -0.5 + 0j], 1.0)
        np.testing.assert_allclose(omega.imag, [np.pi, np.pi])

    def test_snapshot_matrix_metadata(self):
        from flowdmd.ingest import PlaceIndex, SnapshotMatrix
        data = np.abs(np.random.default_rng(0).standard_normal((4, 6)))
        labels = tuple(date.fromordinal(date(2019, 1, 7).toordinal() + 7 * t) for t in range(6))
        model = dmd.fit(SnapshotMatrix(data, labels, PlaceIndex(("a", "b"))), 2)
        assert model.t0_label == date(2019, 1, 7)
        assert model.places == ("a", "b")

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            dmd.fit(np.ones((3, 1)), 1)

    @pytest.mark.parametrize("rank", [0, 3])
    def test_rank_bounds(self, rank):
        with pytest.raises(ArgumentError):
            dmd.fit(np.random.default_rng(0).random((4, 3)), rank)

    def test_bad_dt(self):
        with pytest.raises(ArgumentError):
            dmd.fit(np.ones((2, 3)), 1, dt=0)

    def test_all_zero(self):
        with pytest.raises(DegenerateDataError):
            dmd.fit(np.zeros((4, 5)), 2)

    def test_rank_truncation_warns(self):
        data = iterate(0.9 * np.eye(3), [1.0, 2.0, 3.0], 6)
        with pytest.warns(RankTruncationWarning):
            model = dmd.fit(data, 3)
        assert model.requested_rank == 3 and model.svd_rank == 1 and model.truncated

    def test_zero_eigenvalues_dropped(self):
        # the second direction is annihilated after one step
        model = dmd.fit(iterate(np.diag([0.5, 0.0]), [1.0, 1.0], 4), 2)
        assert model.dropped_modes == 1 and model.r == 1
        assert model.discrete_eigs[0] == pytest.approx(0.5, abs=1e-12)


class TestModeConsistency:
    def test_reduced_operator_eigenpairs(self):
        rng = np.random.default_rng(17)
        data = rng.standard_normal((30, 12))
        model = dmd.fit(data, 5)
        x, xp = data[:, :-1], data[:, 1:]
        f = linalg.reduced_svd(x, 5)
        a_tilde = f.u.T @ xp @ f.v / f.sigma
        # U^T Phi = A~ W = W Lambda, so W is recoverable from the modes
        w = (f.u.T @ model.modes) / model.discrete_eigs
        lam = model.discrete_eigs
        assert np.max(np.abs(a_tilde @ w - w * lam)) <= 1e-8 * np.max(np.abs(w))
        np.testing.assert_allclose(xp @ f.v / f.sigma @ w, model.modes, atol=1e-10)


class TestPredict:
    def test_initial_condition(self, planted):
        data = ev.generate_planted(planted, 30)
        model = dmd.fit(data, 6)
        np.testing.assert_allclose(dmd.predict(model, 0), data[:, 0],
                                   rtol=0, atol=1e-8 * np.abs(data[:, 0]).max())

    def test_single_decaying_mode(self):
        op = 0.5 * np.eye(2)
        x1 = np.array([1.0, 1.0])
        oracle = op @ (op @ x1)
        model = dmd.fit(iterate(op, x1, 4), 1)
        np.testing.assert_allclose(oracle, [0.25, 0.25])
        np.testing.assert_allclose(dmd.predict(model, 2), oracle, rtol=1e-12)

    def test_residual_reported(self, planted):
        model = dmd.fit(ev.generate_planted(planted, 30), 6)
        values, resid = dmd.predict(model, 3.0, return_residual=True)
        assert values.dtype == float and resid <= 1e-10

    def test_not_clamped(self):
        data = iterate(np.array([[0.0, -1.0], [1.0, 0.0]]), [1.0, 0.0], 5)
        model = dmd.fit(data, 2)
        assert dmd.predict(model, 2).min() < -0.5

    @pytest.mark.parametrize("t", [np.nan, np.inf, -1.0])
    def test_bad_time(self, t):
        model = dmd.fit(iterate(0.5 * np.eye(2), [1.0, 1.0], 3), 1)
        with pytest.raises(ArgumentError):
            dmd.predict(model, t)

    def test_overflow_names_mode(self):
        model = dmd.fit(iterate(np.diag([2.0, 0.5]), [1.0, 1.0], 6), 2)
        with pytest.raises(ModeOverflowError) as info:
            dmd.predict(model, 2000)
        assert info.value.mode == 0
        assert "mode 0" in str(info.value)

    def test_training_snapshots_reproduced(self, planted):
        data = ev.generate_planted(planted, 30)
        model = dmd.fit(data, 6)
        for j in range(30):
            err = np.linalg.norm(dmd.predict(model, j * model.dt) - data[:, j])
            assert err <= 1e-6 * np.linalg.norm(data[:, j])


class TestReconstruct:
    def test_one_week(self, planted):
        model = dmd.fit(ev.generate_planted(planted, 30), 6)
        rec = dmd.reconstruct(model, 1)
        assert rec.shape == (64, 1)
        np.testing.assert_allclose(rec[:, 0], dmd.predict(model, 0), rtol=1e-14)

    def test_constant(self):
        model = dmd.fit(np.tile([[2.0], [5.0]], 5), 1)
        rec = dmd.reconstruct(model, 4)
        np.testing.assert_allclose(rec, np.tile([[2.0], [5.0]], 4), rtol=1e-10)

    def test_planted_training_error(self, planted):
        data = ev.generate_planted(planted, 30)
        rec = dmd.reconstruct(dmd.fit(data, 6), 30)
        assert np.linalg.norm(rec - data) <= 1e-6 * np.linalg.norm(data)

    def test_columns_match_predict(self, planted):
        model = dmd.fit(ev.generate_planted(planted, 30), 6, dt=0.5)
        rec = dmd.reconstruct(model, 5)
        for j in range(5):
            np.testing.assert_allclose(rec[:, j], dmd.predict(model, j * 0.5), rtol=1e-12)

    def test_invalid(self):
        model = dmd.fit(np.tile([[2.0], [5.0]], 3), 1)
        with pytest.raises(ArgumentError):
            dmd.reconstruct(model, 0)


class TestSpectrum:
    def test_orthogonal_columns(self):
        x = np.zeros((5, 4))
        x[0, 0], x[1, 1], x[2, 2] = 3, 2, 1
        x[:, 3] = 7.0  # last snapshot is not part of X
        np.testing.assert_allclose(dmd.spectrum(x).values, [3, 2, 1], atol=1e-15)

    def test_rank_one(self):
        v = np.arange(1.0, 7.0)
        data = np.outer(v, [1, 2, 3, 4, 5])
        s = dmd.spectrum(data).values
        assert s.size == 4 and s[0] > 0
        assert np.all(s[1:] <= 1e-12 * s[0])

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            dmd.spectrum(np.ones((3, 1)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_projection_error_monotone_in_rank(self, seed):
        x = np.random.default_rng(seed).standard_normal((12, 9))
        errs = []
        for r in range(1, 10):
            u = linalg.reduced_svd(x, r).u
            errs.append(np.linalg.norm(x - u @ (u.T @ x)))
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path, planted):
        from flowdmd.ingest import PlaceIndex, SnapshotMatrix
        data = ev.generate_planted(planted, 30)
        labels = tuple(date.fromordinal(date(2019, 1, 7).toordinal() + 7 * t) for t in range(30))
        snap = SnapshotMatrix(data, labels, PlaceIndex(tuple(f"{i:02d}" for i in range(8))))
        model = dmd.fit(snap, 6, dt=1.0)
        path = tmp_path / "m.fdmd"
        dmd.save_model(model, path)
        back = dmd.load_model(path)
        for name in ("modes", "discrete_eigs", "cont_eigs", "amplitudes"):
            assert getattr(back, name).tobytes() == getattr(model, name).tobytes()
        assert (back.n, back.r, back.dt, back.t0_label, back.places) == \
            (model.n, model.r, model.dt, model.t0_label, model.places)
        assert (back.requested_rank, back.svd_rank, back.dropped_modes) == (6, 6, 0)
        raw = path.read_bytes()
        assert raw[:8] == b"FLOWDMD\x00" and int.from_bytes(raw[8:12], "little") == 1

    def test_rejects_other_files(self, tmp_path):
        bad = tmp_path / "bad.fdmd"
        bad.write_bytes(b"NOTAMODEL" + bytes(40))
        with pytest.raises(FormatError):
            dmd.load_model(bad)

    def test_rejects_truncated(self, tmp_path):
        model = dmd.fit(np.tile([[2.0], [5.0]], 3), 1)
        path = tmp_path / "m.fdmd"
        dmd.save_model(model, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            dmd.load_model(path)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.integers(4, 30))
def test_conjugate_closure_random(seed, rank, m):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(rank, 40))
    data = rng.standard_normal((n, m))
    rank = min(rank, n, m - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankTruncationWarning)
        model = dmd.fit(data, rank)
    assert oracles.match_multiset(model.discrete_eigs.conj(), model.discrete_eigs) <= 1e-10
