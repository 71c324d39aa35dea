import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from dataloader import (RawSeries, SplitSpec, apply_scaler, count_windows, fit_scaler, ingest_csv, make_windows,
                        random_walk_series, scale_splits, split, split_lengths)
from errors import ConfigError, DataError


def write(tmp_path, text, name='data.csv'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def series(values, source='mem'):
    values = np.asarray(values, dtype=float)
    return RawSeries(values, [f'c{i}' for i in range(values.shape[1])], source)


class TestIngest:
    def test_zeros_without_header(self, tmp_path):
        s = ingest_csv(write(tmp_path, '0,0\n0,0\n0,0\n'))
        assert (len(s), s.m) == (3, 2)
        assert not s.values.any()
        assert s.channels == ['ch0', 'ch1']

    def test_header_and_timestamp(self, tmp_path):
        text = 'date,usd,eur\n2020-01-01,1.0,2.0\n2020-01-02,1.5,2.5\n'
        s = ingest_csv(write(tmp_path, text))
        assert s.channels == ['usd', 'eur']
        np.testing.assert_array_equal(s.values, [[1.0, 2.0], [1.5, 2.5]])

    def test_timestamp_without_header(self, tmp_path):
        s = ingest_csv(write(tmp_path, '2020-01-01 00:00,1,2\n2020-01-01 01:00,3,4\n'))
        assert s.m == 2

    def test_flags_override_detection(self, tmp_path):
        path = write(tmp_path, '1,2\n3,4\n')
        assert len(ingest_csv(path, header='yes')) == 1
        s = ingest_csv(path, timestamp='yes')
        np.testing.assert_array_equal(s.values, [[2.0], [4.0]])

    def test_unparseable_cell_names_row_and_column(self, tmp_path):
        path = write(tmp_path, 'a,b\n1,2\n3,oops\n')
        with pytest.raises(DataError, match='row 3, column 2'):
            ingest_csv(path)

    def test_missing_values_forward_then_back_filled(self, tmp_path):
        s = ingest_csv(write(tmp_path, 'a,b\n,1\n2,\n,3\n'))
        np.testing.assert_array_equal(s.values, [[2, 1], [2, 1], [2, 3]])

    def test_missing_policy_error(self, tmp_path):
        with pytest.raises(DataError, match='missing value'):
            ingest_csv(write(tmp_path, 'a,b\n1,2\n,3\n'), missing='error')

    def test_empty_column_cannot_be_filled(self, tmp_path):
        with pytest.raises(DataError, match='no values'):
            ingest_csv(write(tmp_path, 'a,b\n1,\n2,\n'))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(write(tmp_path, ''))

    def test_invalid_utf8_is_a_data_error(self, tmp_path):
        path = tmp_path / 'latin.csv'
        path.write_bytes(b'a,b\n1,2\n3,\xff\n')
        with pytest.raises(DataError, match='UTF-8'):
            ingest_csv(str(path))

    def test_min_length(self, tmp_path):
        with pytest.raises(DataError, match='need at least 10'):
            ingest_csv(write(tmp_path, '1\n2\n'), min_length=10)

    def test_exchange_rate_layout(self, tmp_path):
        rows = [','.join(f'{0.5 + 0.01 * (r + c):.4f}' for c in range(8)) for r in range(20)]
        s = ingest_csv(write(tmp_path, '\n'.join(rows) + '\n'))
        assert s.m == 8
        assert len(s) == 20


class TestSplit:
    def test_default_lengths(self):
        assert split_lengths(100, SplitSpec()) == (70, 10, 20)

    def test_fractions_validated(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.1, 0.1)
        with pytest.raises(ConfigError):
            SplitSpec(0.9, 0.2, -0.1)

    def test_segments_concatenate_to_original(self, rng):
        s = series(rng.standard_normal((100, 3)))
        parts = split(s, SplitSpec(), window=4, horizon=1)
        assert [len(p) for p in parts] == [70, 10, 20]
        np.testing.assert_array_equal(np.concatenate([p.values for p in parts]), s.values)

    def test_too_short(self):
        with pytest.raises(DataError, match='too short|need window'):
            split(series(np.zeros((10, 1))), SplitSpec(), window=96, horizon=1)


class TestScaler:
    def test_constant_channel_scales_to_zero(self):
        s = series(np.full((5, 1), 3.0))
        np.testing.assert_array_equal(apply_scaler(fit_scaler(s), s).values, np.zeros((5, 1)))

    def test_long_constant_channel_scales_to_zero(self):
        values = np.column_stack([np.full(1000, 4.2), np.linspace(0, 1, 1000)])
        state = fit_scaler(series(values))
        scaled = apply_scaler(state, series(values)).values
        np.testing.assert_array_equal(scaled[:, 0], np.zeros(1000))
        assert np.abs(scaled[:, 1]).max() > 1
        np.testing.assert_allclose(state.inverse_transform(scaled)[:, 0], 4.2, atol=1e-12)

    def test_simple_channel(self):
        s = series([[0.0], [2.0]])
        state = fit_scaler(s)
        assert state.mean[0] == 1.0
        assert state.std[0] == 1.0
        np.testing.assert_array_equal(apply_scaler(state, s).values[:, 0], [-1.0, 1.0])

    def test_inverse_transform(self, rng):
        x = rng.standard_normal((50, 4)) * 10 + 3
        state = fit_scaler(series(x))
        np.testing.assert_allclose(state.inverse_transform(state.transform(x)), x, atol=1e-9)

    @given(st.integers(1, 40), st.integers(1, 4), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.integers(0, 2 ** 16))
    @hsettings(max_examples=50, deadline=None)
    def test_round_trip_property(self, rows, m, shift, spread, seed):
        x = np.random.default_rng(seed).standard_normal((rows, m)) * spread + shift
        state = fit_scaler(series(x))
        assert (state.std >= 1e-8).all()
        np.testing.assert_allclose(state.inverse_transform(state.transform(x)), x, atol=1e-9, rtol=1e-12)

    def test_train_policy_uses_only_train_statistics(self, rng):
        s = series(rng.standard_normal((100, 2)))
        parts = split(s, SplitSpec(), window=4, horizon=1)
        altered = series(np.concatenate([parts[0].values, parts[1].values + 100, parts[2].values * 5]))
        _, state = scale_splits(split(s, SplitSpec(), 4, 1), 'train')
        _, altered_state = scale_splits(split(altered, SplitSpec(), 4, 1), 'train')
        np.testing.assert_array_equal(state.mean, altered_state.mean)
        np.testing.assert_array_equal(state.std, altered_state.std)

    def test_per_split_policy(self, rng):
        s = series(rng.standard_normal((100, 2)) + np.arange(100)[:, None])
        scaled, _ = scale_splits(split(s, SplitSpec(), 4, 1), 'per-split')
        for part in scaled:
            np.testing.assert_allclose(part.values.mean(axis=0), 0, atol=1e-9)

    def test_channel_mismatch(self):
        with pytest.raises(DataError):
            apply_scaler(fit_scaler(series(np.zeros((3, 2)))), series(np.zeros((3, 3))))


class TestWindows:
    def test_window_count(self):
        assert count_windows(100, 96, 1) == 4
        batches = list(make_windows(series(np.zeros((100, 1))), 96, 1, 16))
        assert len(batches) == 1
        assert batches[0].inputs.shape == (4, 96, 1)

    def test_batch_count_and_coverage(self, rng):
        s = series(rng.standard_normal((60, 2)))
        batches = list(make_windows(s, 8, 2, 16, shuffle=True, seed=3, epoch=1))
        n = count_windows(60, 8, 2)
        assert len(batches) == -(-n // 16)
        starts = np.concatenate([b.starts for b in batches])
        assert sorted(starts.tolist()) == list(range(n))

    def test_single_step_target_index(self):
        values = np.arange(120, dtype=float)[:, None]
        batch = next(make_windows(series(values), 96, 3, 16))
        # window rows 0..95, target row 95 + 3
        assert batch.inputs[0, -1, 0] == 95
        assert batch.targets[0, 0] == 98
        assert batch.targets.shape == (16, 1)

    def test_multi_step_targets(self):
        values = np.arange(30, dtype=float)[:, None]
        batch = next(make_windows(series(values), 5, 3, 4, mode='multi-step'))
        assert batch.targets.shape == (4, 3, 1)
        np.testing.assert_array_equal(batch.targets[1, :, 0], [6, 7, 8])

    @given(st.integers(2, 60), st.integers(1, 10), st.integers(1, 5), st.integers(1, 20), st.integers(0, 99))
    @hsettings(max_examples=60, deadline=None)
    def test_coverage_property(self, extra, window, horizon, batch, epoch):
        s = series(np.zeros((window + horizon + extra, 1)))
        batches = make_windows(s, window, horizon, batch, shuffle=True, epoch=epoch)
        starts = np.concatenate([b.starts for b in batches])
        assert sorted(starts.tolist()) == list(range(extra + 1))

    def test_eval_order_preserved(self, rng):
        s = series(rng.standard_normal((40, 1)))
        starts = np.concatenate([b.starts for b in make_windows(s, 5, 1, 7)])
        assert starts.tolist() == list(range(35))

    def test_shuffle_is_seeded(self, rng):
        s = series(rng.standard_normal((80, 2)))
        first = [b.starts.tolist() for b in make_windows(s, 6, 1, 8, shuffle=True, seed=9, epoch=2)]
        second = [b.starts.tolist() for b in make_windows(s, 6, 1, 8, shuffle=True, seed=9, epoch=2)]
        other = [b.starts.tolist() for b in make_windows(s, 6, 1, 8, shuffle=True, seed=9, epoch=3)]
        assert first == second
        assert first != other

    def test_windows_are_consecutive_rows(self, rng):
        s = series(rng.standard_normal((30, 3)))
        for batch in make_windows(s, 6, 1, 5, shuffle=True, seed=1):
            for k, start in enumerate(batch.starts):
                np.testing.assert_array_equal(batch.inputs[k], s.values[start:start + 6])

    def test_too_short_segment(self):
        with pytest.raises(DataError):
            next(make_windows(series(np.zeros((5, 1))), 5, 1, 4))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            next(make_windows(series(np.zeros((10, 1))), 5, 1, 4, mode='sideways'))


def test_random_walk_is_seeded():
    a, b = random_walk_series(50, 3, seed=4), random_walk_series(50, 3, seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.shape == (50, 3)
