import json

import pytest

from slowenv.config import SUBCOMMANDS, CliConfig, parse_config
from slowenv.core import (
    SEED_ENV_VAR,
    MalformedConfigError,
    MissingConfigError,
    OutOfRangeError,
    UnknownKeyError,
    resolve_seed,
)
from slowenv.noise import PiecewiseConstant, WhiteNoise
from slowenv.propagator import Scheme

LYAPUNOV = {
    "subcommand": "lyapunov",
    "noise": {"kind": "piecewise", "m": 4, "law": "rademacher", "sigma": 1.0},
    "tau": 0.5,
    "n": 64,
    "n_periods": 200,
    "seed": 42,
}


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def write(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document) if name.endswith(".json") else document, encoding="utf-8")
    return path


def test_parse_minimal_lyapunov_config(tmp_path):
    cfg = parse_config(write(tmp_path, LYAPUNOV))
    assert cfg.subcommand == "lyapunov"
    assert isinstance(cfg.noise, PiecewiseConstant)
    assert cfg.n_grid == 64
    assert cfg.scheme == Scheme.STRANG
    assert cfg.burn_in == "auto"

    rc = cfg.run_config()
    assert rc.tau == 0.5
    assert rc.seed == 42
    assert rc.grid.n == 64


def test_yaml_config(tmp_path):
    text = "subcommand: sync\nnoise:\n  kind: zero\ntau: 0.1\nn_grid: 32\nseed: 3\nbatch_count: null\n"
    cfg = parse_config(write(tmp_path, text, "sync.yaml"))
    assert cfg.subcommand == "sync"
    assert cfg.n_grid == 32
    assert cfg.batch_count is None


def test_missing_file(tmp_path):
    with pytest.raises(MissingConfigError) as info:
        parse_config(tmp_path / "nope.json")
    assert info.value.exit_code == 2


def test_malformed_documents(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(MalformedConfigError) as info:
        parse_config(bad)
    assert info.value.exit_code == 3

    with pytest.raises(MalformedConfigError):
        parse_config(write(tmp_path, [1, 2, 3]))


def test_unknown_key(tmp_path):
    with pytest.raises(UnknownKeyError) as info:
        parse_config(write(tmp_path, {**LYAPUNOV, "n_perods": 10}))
    assert info.value.exit_code == 4
    assert "n_perods" in str(info.value)


def test_unknown_noise_key(tmp_path):
    noise = {**LYAPUNOV["noise"], "colour": "pink"}
    with pytest.raises(UnknownKeyError):
        parse_config(write(tmp_path, {**LYAPUNOV, "noise": noise}))


@pytest.mark.parametrize(
    "update",
    [
        {"tau": -1.0},
        {"kappa": 0.0},
        {"n": 1},
        {"n_periods": 50},
        {"n_outer": 10},
        {"subcommand": "bogus"},
        {"tau": None},
        {"noise": None},
        {"subcommand": "bounds", "n_samples": 10},
    ],
)
def test_out_of_range_values(tmp_path, update):
    document = {k: v for k, v in {**LYAPUNOV, **update}.items() if v is not None}
    with pytest.raises(OutOfRangeError) as info:
        parse_config(write(tmp_path, document))
    assert info.value.exit_code == 5


def test_bounds_sample_count_is_checked_up_front(tmp_path):
    bounds = parse_config(write(tmp_path, {**LYAPUNOV, "subcommand": "bounds", "n_samples": 30}))
    assert bounds.n_samples == 30
    spectrum = parse_config(write(tmp_path, {**LYAPUNOV, "subcommand": "spectrum", "n_samples": 10}))
    assert spectrum.n_samples == 10


def test_sweep_taus_must_be_sorted(tmp_path):
    document = {**LYAPUNOV, "subcommand": "sweep", "taus": [0.5, 0.1]}
    with pytest.raises(OutOfRangeError):
        parse_config(write(tmp_path, document))


def test_seed_priority(tmp_path, monkeypatch):
    no_seed = {k: v for k, v in LYAPUNOV.items() if k != "seed"}
    with pytest.raises(OutOfRangeError):
        parse_config(write(tmp_path, no_seed))

    monkeypatch.setenv(SEED_ENV_VAR, "99")
    assert parse_config(write(tmp_path, no_seed)).seed == 99
    assert parse_config(write(tmp_path, LYAPUNOV)).seed == 42
    assert parse_config(write(tmp_path, LYAPUNOV), {"seed": 5}).seed == 5


def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    with pytest.raises(OutOfRangeError):
        resolve_seed()
    monkeypatch.setenv(SEED_ENV_VAR, " ")
    assert resolve_seed() is None


def test_overrides_skip_none(tmp_path):
    cfg = parse_config(write(tmp_path, LYAPUNOV), {"tau": None, "n": 128, "scheme": "eigen", "log_level": "info"})
    assert cfg.tau == 0.5
    assert cfg.n_grid == 128
    assert cfg.scheme == Scheme.EIGEN
    assert cfg.log_level == "INFO"


def test_chaos_const_needs_no_seed_or_noise():
    cfg = CliConfig(subcommand="chaos-const", tau=0.01)
    assert cfg.seed is None
    assert isinstance(cfg.resolved_noise, WhiteNoise)
    with pytest.raises(ValueError):
        CliConfig(subcommand="chaos-const")


def test_validate_defaults_its_tau():
    cfg = CliConfig(subcommand="validate", seed=1)
    assert cfg.resolved_tau == 0.1
    assert cfg.resolved_noise is None


def test_canonical_ignores_delivery_keys(tmp_path):
    a = parse_config(write(tmp_path, LYAPUNOV))
    b = parse_config(write(tmp_path, LYAPUNOV), {"output_path": "x.csv", "workers": 4, "log_level": "DEBUG"})
    assert a.canonical() == b.canonical()
    c = parse_config(write(tmp_path, LYAPUNOV), {"tau": 0.25})
    assert a.canonical() != c.canonical()


def test_every_subcommand_is_listed():
    assert len(SUBCOMMANDS) == 11
    assert "chaos-const" in SUBCOMMANDS
