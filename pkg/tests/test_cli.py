import hashlib

import pytest

from porodyn.cli import main
from porodyn.config import PRESETS, parse_config, parse_text
from porodyn.errors import ParseError, ValidationError

SMALL = """
[model]
kind = "biofilm"
a = 1.0
b = 1.0

[grid]
n = 32
L = 2.0

[time]
T = 0.125
eps = 0.015625

[initial]
kind = "bump"
amplitude = 0.6

[verify]
suites = ["contraction", "chi"]
trials = 3

[regularity]
sigma_x = [0.5]
levels = 2

[kinetic]
k = 4
bins = 16

[sweep]
ks = [3, 4, 5]
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def digest(folder):
    h = hashlib.sha256()
    for f in sorted(folder.rglob("*")):
        if f.is_file():
            h.update(f.relative_to(folder).as_posix().encode())
            h.update(f.read_bytes())
    return h.hexdigest()


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    cfg = parse_config(name)
    assert cfg.build_grid().n >= 4
    cfg.build_initial(cfg.build_grid())


def test_validation_collects_all_violations():
    with pytest.raises(ValidationError) as err:
        parse_text("[model]\nkind='biofilm'\na=0.5\nb=-1\n[grid]\nn=100\n[bogus]\nx=1\n")
    text = str(err.value)
    assert "model.a = 0.5 violates a ≥ 1" in text
    assert "model.b" in text and "grid.n = 100" in text and "unknown section [bogus]" in text
    assert len(err.value.violations) == 4


def test_parse_error_location():
    with pytest.raises(ParseError) as err:
        parse_text("[model]\nkind = \n")
    assert err.value.line == 2


def test_solve_is_deterministic(small, tmp_path):
    assert main(["solve", "--config", str(small), "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", "--config", str(small), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "solve" / "manifest.csv").exists()
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_verify_exit_status_and_seed(small, tmp_path):
    assert main(["verify", "--config", str(small), "--seed", "5", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "verify" / "results.csv").read_text()
    assert "5000 5001 5002" in text
    assert (tmp_path / "verify" / "junit.xml").exists()
    assert main(["verify", "--config", str(small), "--seed", "5", "--out", str(tmp_path / "again")]) == 0
    assert digest(tmp_path / "verify") == digest(tmp_path / "again" / "verify")
    assert main(["verify", "--config", str(small), "--suite", "energy", "--out", str(tmp_path / "e")]) == 0


def test_regularity_kinetic_sweep(small, tmp_path):
    assert main(["regularity", "--config", str(small), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "regularity" / "regularity.json").exists()
    assert main(["kinetic", "--config", str(small), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "kinetic" / "residuals.csv").exists()
    assert main(["sweep", "--config", str(small), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "sweep" / "trotter_kato.csv").read_text().splitlines()) == 4
    assert main(["sweep", "--config", str(small), "--param", "grid.n", "--values", "16,32",
                 "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "sweep" / "grid.n=16" / "solve" / "manifest.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[grid]\nn = 100\n")
    assert main(["solve", "--config", str(p)]) == 2
    assert "power of two" in capsys.readouterr().err
