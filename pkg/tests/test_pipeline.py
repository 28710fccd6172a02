import io
import json
import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from loraprop.errors import InvalidDataError
from loraprop.pipeline import (
    IsolationForestConfig,
    SplitSpec,
    audit_derived_columns,
    average_path_length,
    daily_distribution,
    dedup_retransmissions,
    filter_sf,
    fit_isolation_forest,
    flag_anomalies,
    ingest,
    isolation_forest,
    kfold,
    run_pipeline,
    split,
    standardize,
    write_records_csv,
)
from loraprop.records import CSV_COLUMNS

from helpers import make_record, record_keys

HEADER = ",".join(CSV_COLUMNS)
GOOD_ROW = (
    "2024-01-01 00:00:00,dev0,550.0,38.0,2.0,323.0,21.0,-75.0,8.0,7,868.1,"
    "0,0,0.046336,10.0,0,0,92.26,-83.0,-75.7"
)


def csv_source(*rows):
    return io.StringIO("\n".join([HEADER, *rows]) + "\n")


class TestIngest:
    def test_well_formed_row_accepted_verbatim(self):
        result = ingest(csv_source(GOOD_ROW))
        assert result.rows_read == 1
        assert not result.rejections
        record = result.records[0]
        assert record.device_id == "dev0"
        assert record.time == datetime(2024, 1, 1, 0, 0, 0)
        assert record.co2_ppm == 550.0
        assert record.sf == 7
        assert record.exp_pl_db == 92.26

    def test_missing_value_rejected(self):
        row = GOOD_ROW.replace("550.0", "")
        result = ingest(csv_source(row))
        assert not result.records
        assert result.rejections[0].reason == "missing-value"
        assert result.rejections[0].line == 1

    def test_non_finite_rejected(self):
        for token in ("nan", "inf", "-inf", "NaN"):
            result = ingest(csv_source(GOOD_ROW.replace("550.0", token)))
            assert not result.records
            assert result.rejections[0].reason == "non-finite"

    def test_unparseable_token_rejected(self):
        result = ingest(csv_source(GOOD_ROW.replace("-75.0,8.0", "oops,8.0")))
        assert result.rejections[0].reason == "bad-rssi"

    def test_bad_timestamp_rejected(self):
        result = ingest(csv_source(GOOD_ROW.replace("2024-01-01 00:00:00", "yesterday")))
        assert result.rejections[0].reason == "bad-time"

    def test_out_of_range_sf_rejected(self):
        result = ingest(csv_source(GOOD_ROW.replace(",7,868.1", ",6,868.1")))
        assert result.rejections[0].reason == "sf out of range 7..12"

    def test_wrong_field_count_rejected(self):
        result = ingest(csv_source(GOOD_ROW + ",extra"))
        assert result.rejections[0].reason == "wrong-field-count"

    def test_malformed_header(self):
        with pytest.raises(InvalidDataError, match="malformed header"):
            ingest(io.StringIO("a,b,c\n1,2,3\n"))

    def test_mixed_good_and_bad_rows(self):
        bad = GOOD_ROW.replace("38.0", "")
        result = ingest(csv_source(GOOD_ROW, bad, GOOD_ROW))
        assert len(result.records) == 2
        assert len(result.rejections) == 1
        assert result.rejections[0].line == 2
        assert result.rejection_rate == pytest.approx(1 / 3)

    def test_reads_from_path(self, small_synth_csv, small_synth):
        result = ingest(small_synth_csv)
        assert len(result.records) == len(small_synth.records)
        assert not result.rejections

    def test_round_trip_preserves_records(self, tmp_path, small_synth):
        path = tmp_path / "round.csv"
        write_records_csv(small_synth.records, path)
        again = ingest(path).records
        assert again == small_synth.records


class TestDerivedAudit:
    def test_consistent_synthetic_data_passes(self, small_synth):
        assert audit_derived_columns(small_synth.records) == []

    def test_corrupted_column_flagged(self, caplog):
        bad = make_record(esp_dbm=0.0)
        violations = audit_derived_columns([bad])
        assert any(v.column == "esp" for v in violations)


class TestDedup:
    def base(self, seconds, f_count, device="dev0"):
        return make_record(
            time=datetime(2024, 1, 1) + timedelta(seconds=seconds),
            device_id=device,
            f_count=f_count,
        )

    def test_repeat_within_window_dropped(self):
        first = self.base(0.0, 10)
        repeat = self.base(1.5, 10)
        assert dedup_retransmissions([first, repeat]) == [first]

    def test_repeat_outside_window_kept(self):
        first = self.base(0.0, 10)
        late = self.base(3.0, 10)
        assert dedup_retransmissions([first, late]) == [first, late]

    def test_interleaved_devices_kept(self):
        a = self.base(0.0, 10, "devA")
        b = self.base(0.5, 10, "devB")
        c = self.base(1.0, 10, "devC")
        assert dedup_retransmissions([a, b, c]) == [a, b, c]

    def test_keeps_first_of_run(self):
        first = self.base(0.0, 10)
        second = self.base(1.0, 10)
        third = self.base(1.9, 10)
        assert dedup_retransmissions([first, second, third]) == [first]

    def test_anchor_advances_when_window_expires(self):
        first = self.base(0.0, 10)
        late = self.base(2.5, 10)       # outside window: kept, becomes anchor
        tail = self.base(3.5, 10)       # within window of the new anchor
        assert dedup_retransmissions([first, late, tail]) == [first, late]

    def test_counter_change_resets(self):
        first = self.base(0.0, 10)
        nxt = self.base(1.0, 11)
        assert dedup_retransmissions([first, nxt]) == [first, nxt]

    def test_input_order_invariance(self, small_synth):
        forward = dedup_retransmissions(small_synth.records)
        backward = dedup_retransmissions(list(reversed(small_synth.records)))
        assert forward == backward

    def test_idempotent(self, small_synth):
        once = dedup_retransmissions(small_synth.records)
        twice = dedup_retransmissions(once)
        assert once == twice

    def test_drops_exactly_the_constructed_duplicates(self, small_synth):
        kept = dedup_retransmissions(small_synth.records)
        assert record_keys(kept) == record_keys(small_synth.clean)


class TestFilterSf:
    def test_excluded_removed(self):
        records = [make_record(sf=sf) for sf in (7, 11, 12)]
        kept = filter_sf(records)
        assert [r.sf for r in kept] == [7]

    def test_empty_exclusion_is_identity(self):
        records = [make_record(sf=sf) for sf in (7, 11, 12)]
        assert filter_sf(records, excluded=frozenset()) == records

    def test_idempotent(self, small_synth):
        once = filter_sf(small_synth.records)
        assert filter_sf(once) == once


class TestStandardize:
    def test_zero_mean_unit_spread(self, small_synth):
        scaled, scaler = standardize(small_synth.clean)
        np.testing.assert_allclose(scaled.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(scaled.std(axis=0), 1.0, atol=1e-9)

    def test_shift_invariance(self):
        records = [make_record(co2_ppm=500.0 + i * 10) for i in range(10)]
        shifted = [make_record(co2_ppm=600.0 + i * 10) for i in range(10)]
        a, _ = standardize(records, features=("co2",))
        b, _ = standardize(shifted, features=("co2",))
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_stored_transform_matches_batch(self, small_synth):
        scaled, scaler = standardize(small_synth.clean)
        from loraprop.pipeline import feature_matrix

        raw = feature_matrix(small_synth.clean)
        np.testing.assert_allclose(scaler.transform(raw), scaled, atol=1e-12)

    def test_zero_variance_feature_rejected(self):
        records = [make_record(co2_ppm=500.0, f_count=i) for i in range(5)]
        with pytest.raises(InvalidDataError, match="zero-variance"):
            standardize(records, features=("co2",))

    def test_too_few_records(self):
        with pytest.raises(InvalidDataError):
            standardize([make_record()])


class TestIsolationForest:
    def toy_matrix(self):
        rng = np.random.default_rng(0)
        cluster = rng.normal(0.0, 0.1, size=(40, 2))
        outlier = np.array([[10.0, 10.0]])  # 10 sigma in cluster units, x100
        return np.vstack([cluster, outlier])

    def test_far_point_flagged_with_exact_count(self):
        matrix = self.toy_matrix()
        config = IsolationForestConfig(
            n_trees=2, subsample_size=41, contamination=1 / 41, seed=12
        )
        result = isolation_forest(matrix, config)
        assert result.flags.sum() == 1
        assert result.flags[-1]

    def test_brute_force_path_length_oracle(self):
        """Recompute every score by walking the two trees by hand."""
        matrix = self.toy_matrix()
        config = IsolationForestConfig(
            n_trees=2, subsample_size=41, contamination=1 / 41, seed=12
        )
        model = fit_isolation_forest(matrix, config)

        def c(n):
            # canonical unsuccessful-search depth, written out independently
            if n <= 1:
                return 0.0
            if n == 2:
                return 1.0
            return 2.0 * (math.log(n - 1) + 0.5772156649015329) - 2.0 * (n - 1) / n

        def walk(node, x):
            depth = 0
            while not node.is_leaf:
                node = node.left if x[node.feature] < node.threshold else node.right
                depth += 1
            return depth + c(node.size)

        expected = []
        for x in matrix:
            mean_depth = np.mean([walk(root, x) for root in model.trees])
            expected.append(2.0 ** (-mean_depth / c(model.subsample_size)))
        np.testing.assert_allclose(model.scores(matrix), expected, atol=1e-12)
        assert int(np.argmax(model.scores(matrix))) == len(matrix) - 1

    def test_exact_quantile_count(self):
        rng = np.random.default_rng(5)
        matrix = rng.normal(size=(300, 3))
        result = isolation_forest(matrix, IsolationForestConfig(contamination=0.01))
        assert result.flags.sum() == round(0.01 * 300)

    def test_fraction_matches_contamination_within_one_over_n(self):
        rng = np.random.default_rng(6)
        for n in (97, 200, 1001):
            matrix = rng.normal(size=(n, 2))
            result = isolation_forest(matrix, IsolationForestConfig(contamination=0.05))
            assert abs(result.flags.sum() / n - 0.05) <= 1.0 / n

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(7)
        matrix = rng.normal(size=(500, 4))
        config = IsolationForestConfig(seed=42)
        a = isolation_forest(matrix, config)
        b = isolation_forest(matrix, config)
        np.testing.assert_array_equal(a.flags, b.flags)
        np.testing.assert_array_equal(a.scores, b.scores)

    def test_average_path_length_values(self):
        assert average_path_length(1) == 0.0
        assert average_path_length(2) == 1.0
        # c(256) from the standard formula
        expected = 2.0 * (math.log(255) + 0.5772156649015329) - 2.0 * 255 / 256
        assert average_path_length(256) == pytest.approx(expected, rel=1e-12)

    def test_per_device_flag_counts(self, small_synth):
        clean = small_synth.clean
        config = IsolationForestConfig(contamination=0.05, seed=42)
        flags = flag_anomalies(clean, config)
        for device in {r.device_id for r in clean}:
            n_dev = sum(1 for r in clean if r.device_id == device)
            flagged = sum(
                1 for r, f in zip(clean, flags) if f and r.device_id == device
            )
            assert flagged == round(0.05 * n_dev)


class TestSplit:
    def test_sizes(self, small_synth):
        records = small_synth.clean[:1000] if len(small_synth.clean) >= 1000 else small_synth.clean
        train, test = split(records, SplitSpec(test_fraction=0.2, seed=1))
        assert len(test) == round(0.2 * len(records))
        assert len(train) + len(test) == len(records)

    def test_same_seed_same_partition(self, small_synth):
        spec = SplitSpec(seed=11)
        a = split(small_synth.clean, spec)
        b = split(small_synth.clean, spec)
        assert a == b

    def test_different_seed_differs(self, small_synth):
        a = split(small_synth.clean, SplitSpec(seed=1))
        b = split(small_synth.clean, SplitSpec(seed=2))
        assert a != b

    def test_partition_is_exact(self, small_synth):
        train, test = split(small_synth.clean, SplitSpec(seed=3))
        assert record_keys(train) | record_keys(test) == record_keys(small_synth.clean)
        assert not (record_keys(train) & record_keys(test))

    def test_daily_distribution_sums_to_100(self, small_synth):
        shares = daily_distribution(small_synth.clean)
        assert sum(shares.values()) == pytest.approx(100.0)

    def test_train_daily_share_tracks_population(self, small_synth):
        train, _ = split(small_synth.clean, SplitSpec(seed=5))
        all_shares = daily_distribution(small_synth.clean)
        train_shares = daily_distribution(train)
        for day, share in all_shares.items():
            assert abs(train_shares.get(day, 0.0) - share) < 2.0


class TestKfold:
    def test_equal_validation_sizes(self):
        records = [make_record(f_count=i) for i in range(10)]
        folds = kfold(records, folds=5, seed=0)
        assert all(len(val) == 2 for _, val in folds)

    def test_cover_and_disjoint(self):
        records = [make_record(f_count=i) for i in range(23)]
        folds = kfold(records, folds=5, seed=1)
        seen = np.concatenate([val for _, val in folds])
        assert sorted(seen.tolist()) == list(range(23))
        sizes = [len(val) for _, val in folds]
        assert max(sizes) - min(sizes) <= 1
        for train, val in folds:
            assert not set(train.tolist()) & set(val.tolist())
            assert len(train) + len(val) == 23

    def test_too_few_records(self):
        with pytest.raises(InvalidDataError):
            kfold([make_record()], folds=5, seed=0)


class TestRunPipeline:
    def test_counts_and_duplicate_removal(self, small_synth, small_synth_csv, tmp_path):
        result = run_pipeline(small_synth_csv, tmp_path / "out", seed=42, contamination=0.05)
        counts = result.manifest["counts"]
        assert counts["rows_read"] == len(small_synth.records)
        assert counts["rejected"] == 0
        assert counts["after_dedup"] == len(small_synth.clean)
        expected_sf = len(filter_sf(small_synth.clean))
        assert counts["after_sf_filter"] == expected_sf
        flagged = counts["anomalies_flagged"]
        assert counts["clean"] == expected_sf - flagged
        assert counts["train"] + counts["test"] == counts["clean"]

    def test_outputs_reingestable_and_manifest_valid(self, small_synth_csv, tmp_path):
        out = tmp_path / "out"
        result = run_pipeline(small_synth_csv, out, seed=42, contamination=0.05)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["counts"]["clean"] == len(ingest(out / "cleaned.csv").records)
        assert manifest["counts"]["train"] == len(ingest(out / "train.csv").records)
        for device, info in manifest["per_device"].items():
            assert 0.0 < info["pdr"] <= 1.0

    def test_byte_identical_reruns(self, small_synth_csv, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        run_pipeline(small_synth_csv, out_a, seed=42, contamination=0.05)
        run_pipeline(small_synth_csv, out_b, seed=42, contamination=0.05)
        for name in ("cleaned.csv", "train.csv", "test.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
