import json
import warnings

import numpy as np
import pytest

from conftest import small_dataset
from mvlme.diagnostics import SUMMARY_COLUMNS, summarize
from mvlme.io import (BIAS_COLUMNS, GROUP_REPORT_COLUMNS, REPLICATE_COLUMNS, DataFileError,
                      HashMismatchWarning, fmt, load_long_csv, read_chain_csv, read_chains,
                      read_table, write_bias_table, write_chains, write_long_csv,
                      write_replicate_summaries, write_summary)
from mvlme.sampler import ChainDraws
from mvlme.simulation import BiasTable

HEADER = "id,time,y1,y2,x,g,site\n"


def write(tmp_path, body, header=HEADER):
    p = tmp_path / "d.csv"
    p.write_text(header + body, encoding="utf-8")
    return p


def load(p, **kw):
    args = dict(outcomes=("y1", "y2"), covariates=("x",), categorical={"g": ["a", "b", "c"]})
    args.update(kw)
    return load_long_csv(p, **args)


class TestLoadCsv:
    def test_sorted_and_expanded(self, tmp_path):
        p = write(tmp_path, "b,2,1,,0,a,n\nb,1,2,3,0,a,n\na,5,4,5,1,c,s\n")
        d = load(p, group_column="site")
        assert [s.id for s in d.subjects] == ["a", "b"]
        np.testing.assert_array_equal(d.subjects[1].times, [1, 2])
        assert np.isnan(d.subjects[1].outcomes[1, 1])
        assert d.covariate_names == ("x", "g[b]", "g[c]")
        np.testing.assert_array_equal(d.subjects[0].covariates[0], [1, 0, 1])
        assert d.subjects[0].attrs["site"] == "s"

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "a,1,2,3\n", header="id,time,y1,y2\n")
        with pytest.raises(DataFileError, match=r"missing required column.*'x'"):
            load(p)

    def test_non_numeric_names_line(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,0,a,n\na,2,oops,3,0,a,n\n")
        with pytest.raises(DataFileError, match="line 3: non-numeric value 'oops'"):
            load(p)

    def test_all_outcomes_missing_names_line(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,0,a,n\na,2,,,0,a,n\n")
        with pytest.raises(DataFileError, match="line 3: every outcome is missing"):
            load(p)

    def test_duplicate_id_time(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,0,a,n\nb,1,2,3,0,a,n\na,1.0,5,6,0,a,n\n")
        with pytest.raises(DataFileError, match=r"line \d: duplicate \(id, time\) = \(a, 1.0\)"):
            load(p)

    def test_unknown_level(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,0,z,n\n")
        with pytest.raises(DataFileError, match="line 2: level 'z'"):
            load(p)

    def test_empty_covariate(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,,a,n\n")
        with pytest.raises(DataFileError, match="empty value in column 'x'"):
            load(p)

    def test_group_varies_within_subject(self, tmp_path):
        p = write(tmp_path, "a,1,2,3,0,a,n\na,2,2,3,0,a,s\n")
        with pytest.raises(DataFileError, match="varies"):
            load(p, group_column="site")

    def test_time_outside_range(self, tmp_path):
        p = write(tmp_path, "a,130,2,3,0,a,n\n")
        with pytest.raises(DataFileError):
            load(p)

    def test_round_trip(self, tmp_path):
        data = small_dataset()
        path = tmp_path / "rt.csv"
        write_long_csv(data, path)
        back = load_long_csv(path, ("y1", "y2"), ("x1",))
        for a, b in zip(data.subjects, back.subjects):
            assert a.id == b.id
            assert a.times.tobytes() == b.times.tobytes()
            np.testing.assert_array_equal(a.outcomes, b.outcomes)


def chains_fixture(rng):
    names = ("beta.y1.intercept", "alpha", "sigma.y1")
    meta = {"config_hash": "abc", "seed": 7, "chain_index": 0}
    return [ChainDraws(names, rng.normal(size=(50, 3)) * 10 ** rng.uniform(-8, 8, 3), dict(meta, chain_index=k))
            for k in range(2)]


class TestChains:
    def test_bit_exact_round_trip(self, tmp_path):
        chains = chains_fixture(np.random.default_rng(0))
        write_chains(chains, tmp_path)
        back = read_chains(tmp_path, config_hash="abc")
        for a, b in zip(chains, back):
            assert a.names == b.names
            assert a.draws.tobytes() == b.draws.tobytes()
            assert b.meta["chain_index"] == a.meta["chain_index"]
        manifest = json.loads((tmp_path / "chains.json").read_text())
        assert manifest["config_hash"] == "abc" and manifest["seed"] == 7

    def test_config_hash_mismatch_warns(self, tmp_path):
        write_chains(chains_fixture(np.random.default_rng(1)), tmp_path)
        with pytest.warns(HashMismatchWarning, match="does not match"):
            read_chains(tmp_path, config_hash="zzz")

    def test_tampered_file_warns(self, tmp_path):
        write_chains(chains_fixture(np.random.default_rng(2)), tmp_path)
        p = tmp_path / "chain_1.csv"
        p.write_text(p.read_text().replace("\n", "\n0,0,0\n", 1))
        with pytest.warns(HashMismatchWarning, match="checksum"):
            chains = read_chains(tmp_path)
        assert chains[1].n_draws == 51

    def test_without_manifest(self, tmp_path):
        write_chains(chains_fixture(np.random.default_rng(3)), tmp_path)
        (tmp_path / "chains.json").unlink()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert len(read_chains(tmp_path)) == 2

    def test_ragged_line(self, tmp_path):
        p = tmp_path / "chain_0.csv"
        p.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataFileError, match="line 3 has 1 fields, expected 2"):
            read_chain_csv(p)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataFileError, match="no chain files"):
            read_chains(tmp_path)


class TestReports:
    def test_summary_schema(self, tmp_path):
        chains = chains_fixture(np.random.default_rng(4))
        write_summary(summarize(chains), tmp_path / "s.csv")
        df = read_table(tmp_path / "s.csv", SUMMARY_COLUMNS)
        assert list(df["parameter"]) == list(chains[0].names)

    def test_bias_and_replicate_schemas(self, tmp_path):
        table = BiasTable()
        table.add("auc", "assoc_only", 0, {"alpha": -10.0}, None)
        write_bias_table(table, tmp_path / "b.csv")
        write_replicate_summaries(table, tmp_path / "r.csv")
        assert read_table(tmp_path / "b.csv", BIAS_COLUMNS)["n_failed"].tolist() == [1]
        assert read_table(tmp_path / "r.csv", REPLICATE_COLUMNS)["status"].tolist() == ["failed"]

    def test_header_mismatch(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(DataFileError, match="header"):
            read_table(tmp_path / "x.csv", GROUP_REPORT_COLUMNS)

    @pytest.mark.parametrize("x", [0.1, 1 / 3, 1e-300, -2.5e17, 123456789.123456789])
    def test_float_text_round_trips(self, x):
        assert float(fmt(x)) == x and float(fmt(x, True)) == x

    def test_fmt_special_values(self):
        assert fmt(None) == "" and fmt(True) == "true" and fmt(np.int64(3)) == "3"
        assert fmt(0.1) == "0.1"
