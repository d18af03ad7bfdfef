"""CSV round trips and error reporting."""
import numpy as np
import pytest

from blocknngp.dataio import (DataError, load_csv, parse_config_file,
                              read_draws_csv, write_config_file,
                              write_dataset_csv, write_draws_csv, write_json,
                              read_json)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        coords = rng.uniform(0, 1, size=(40, 2))
        covs = rng.standard_normal((40, 2))
        y = rng.standard_normal(40)
        y[35:] = np.nan
        p = tmp_path / "d.csv"
        write_dataset_csv(p, coords, covs, y, ["elev", "slope"])
        ds = load_csv(p)
        assert ds.n == 35
        np.testing.assert_array_equal(ds.locs.coords, coords[:35])
        np.testing.assert_array_equal(ds.covariates, covs[:35])
        np.testing.assert_array_equal(ds.y, y[:35])
        np.testing.assert_array_equal(ds.pred_coords, coords[35:])
        np.testing.assert_array_equal(ds.pred_covariates, covs[35:])
        assert ds.covariate_names == ["elev", "slope"]
        assert ds.design().shape == (35, 3)
        assert np.all(ds.design()[:, 0] == 1.0)
        assert ds.pred_design().shape == (5, 3)

    def test_missing_column(self, tmp_path):
        p = _write(tmp_path, "x,y,value\n0,0,1\n")
        with pytest.raises(DataError, match="missing required column 'response'"):
            load_csv(p)

    def test_malformed_value_reports_line(self, tmp_path):
        p = _write(tmp_path, "x,y,response\n0.1,0.2,1.0\n0.3,oops,2.0\n")
        with pytest.raises(DataError, match="line 3: malformed y value 'oops'"):
            load_csv(p)

    def test_field_count_mismatch(self, tmp_path):
        p = _write(tmp_path, "x,y,response\n0.1,0.2\n")
        with pytest.raises(DataError, match="line 2: expected 3 fields, got 2"):
            load_csv(p)

    def test_duplicate_locations_report_both_lines(self, tmp_path):
        p = _write(tmp_path,
                   "x,y,response\n0.1,0.2,1.0\n0.5,0.5,2.0\n0.1,0.2,3.0\n")
        with pytest.raises(DataError, match="duplicate location at lines 2 and 4"):
            load_csv(p)

    def test_empty_file(self, tmp_path):
        p = _write(tmp_path, "")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(p)
        p = _write(tmp_path, "x,y,response\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(p)

    def test_all_rows_prediction_only(self, tmp_path):
        p = _write(tmp_path, "x,y,response\n0.1,0.2,\n0.3,0.4,\n")
        with pytest.raises(DataError, match="no rows with a response value"):
            load_csv(p)

    def test_blank_lines_skipped(self, tmp_path):
        p = _write(tmp_path, "x,y,response\n0.1,0.2,1.0\n\n0.3,0.4,2.0\n")
        ds = load_csv(p)
        assert ds.n == 2

    def test_column_order_free(self, tmp_path):
        p = _write(tmp_path, "response,elev,x,y\n1.5,7.0,0.1,0.2\n")
        ds = load_csv(p)
        assert ds.y[0] == 1.5
        assert ds.covariates[0, 0] == 7.0
        assert ds.covariate_names == ["elev"]


class TestDraws:
    def test_round_trip(self, tmp_path):
        from blocknngp.inference import PosteriorSamples
        rng = np.random.default_rng(1)
        beta = rng.standard_normal((2, 5, 3))
        theta = np.abs(rng.standard_normal((2, 5, 3))) + 0.1
        samples = PosteriorSamples(
            beta=beta, theta=theta, w_mean=np.zeros(1), w_var=np.zeros(1),
            fitted_mean=np.zeros(1), w_draws=np.zeros((1, 1)),
            w_draw_theta=np.zeros((1, 3)), w_draw_beta=np.zeros((1, 3)),
            accept_rate=np.array([0.2, 0.3]), elapsed={}, n_draws=10,
            loglik={})
        p = tmp_path / "draws.csv"
        write_draws_csv(p, samples)
        b2, t2 = read_draws_csv(p)
        np.testing.assert_array_equal(b2, beta)
        np.testing.assert_array_equal(t2, theta)

    def test_empty_draws_error(self, tmp_path):
        p = _write(tmp_path, "iter,chain,beta_0,sigma2,phi,tau2\n",
                   name="draws.csv")
        with pytest.raises(DataError, match="no draws"):
            read_draws_csv(p)


class TestConfig:
    def test_parse_and_write(self, tmp_path):
        p = tmp_path / "run.cfg"
        write_config_file(p, {"m": 16, "kernel": "exponential", "nb": 2})
        got = parse_config_file(p)
        assert got == {"m": "16", "kernel": "exponential", "nb": "2"}

    def test_comments_and_blanks(self, tmp_path):
        p = _write(tmp_path,
                   "# run settings\nm = 16  # blocks\n\nnb=2\n", name="c.cfg")
        assert parse_config_file(p) == {"m": "16", "nb": "2"}

    def test_bad_line_number(self, tmp_path):
        p = _write(tmp_path, "m = 16\nnot a pair\n", name="c.cfg")
        with pytest.raises(DataError, match="config line 2"):
            parse_config_file(p)

    def test_json_round_trip(self, tmp_path):
        p = tmp_path / "s.json"
        obj = {"rmse": 0.25, "params": {"phi": [1.0, 2.0]}}
        write_json(p, obj)
        assert read_json(p) == obj
