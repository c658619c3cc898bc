from pathlib import Path

import pytest
import yaml

import mvlme
from mvlme.config import ConfigError, config_from_dict, dump_config, parse_config

EXAMPLE = Path(mvlme.__file__).parent / "example" / "config.yaml"


def minimal(**extra):
    raw = {"outcomes": [{"name": "y1"}, {"name": "y2"}]}
    raw.update(extra)
    return raw


def test_bundled_example_parses():
    cfg = parse_config(EXAMPLE)
    assert cfg.spec.outcome_names == ("fev1", "depindex")
    assert cfg.spec.association.window_d == 5
    assert cfg.data.categorical == {"genotype": ("other", "het", "hom")}
    assert cfg.report.min_n == 120


def test_round_trip_through_yaml():
    cfg = parse_config(EXAMPLE)
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg


def test_no_association_defaults_to_correlated_effects():
    cfg = config_from_dict(minimal())
    assert not cfg.spec.association.active
    assert cfg.spec.re_cross_outcome_correlation


def test_association_defaults_to_independent_blocks():
    cfg = config_from_dict(minimal(association={"kind": "value", "source": "y2", "target": "y1"}))
    assert not cfg.spec.re_cross_outcome_correlation


@pytest.mark.parametrize("raw, match", [
    (minimal(extra=1), "unknown key"),
    (minimal(mcmc={"n_iters": 5}), "unknown key"),
    ({"outcomes": []}, "at least one outcome"),
    ({"outcomes": [{"fixed": ["intercept"]}]}, "needs a name"),
    (minimal(association={"kind": "auc", "source": "y2", "target": "y9"}), "not a modelled"),
    (minimal(priors={"beta_prior_variance": -1}), "positive"),
    (minimal(re_cross_outcome_correlation="yes"), "true or false"),
    (minimal(report={"scale": 0}), "scale"),
])
def test_invalid_configs(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("outcomes: [\n")
    with pytest.raises(ConfigError):
        parse_config(p)
