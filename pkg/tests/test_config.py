import pytest

from platelab.config import ConfigError, parse_config, parse_config_text


def test_minimal_eig_config_fills_defaults():
    cfg = parse_config_text('experiment = "eig"\n')
    assert cfg.experiment == "eig"
    assert cfg.seed == 0
    assert cfg["eig"]["n_modes"] == 10
    assert cfg["grid"]["bc"] == "clamped"
    assert cfg.output_file == "eig.csv"
    assert len(cfg.sha256) == 64


def test_hash_tracks_the_text():
    a = parse_config_text('experiment = "eig"\n')
    b = parse_config_text('experiment = "eig"\nseed = 0\n')
    assert a.sha256 != b.sha256


def test_duplicate_key_is_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text('experiment = "eig"\nseed = 1\nseed = 2\n')


def test_unknown_key_names_path_and_line():
    text = 'experiment = "eig"\n[eig]\nn_modes = 4\nbogus = 1\n'
    with pytest.raises(ConfigError, match=r"eig\.bogus: unknown key \(line 4\)"):
        parse_config_text(text)


def test_box_outside_domain_is_rejected():
    text = 'experiment = "specineq"\n[region]\nboxes = [[[0.5, 1.5]]]\n'
    with pytest.raises(ConfigError, match=r"region\.boxes.*exceeds the domain.*\(line 3\)"):
        parse_config_text(text)


@pytest.mark.parametrize("text, key", [
    ('experiment = "nope"\n', "experiment"),
    ('experiment = "eig"\n[eig]\ntol = -1e-4\n', "eig.tol"),
    ('experiment = "eig"\n[eig]\nn_modes = "ten"\n', "eig.n_modes"),
    ('experiment = "eig"\n[grid]\nbc = "free"\n', "grid.bc"),
    ('experiment = "eig"\n[grid]\nlengths = [1.0, 1.0]\n', "grid.lengths"),
    ('experiment = "eig"\n[region]\nboxes = [[[0.3, 0.1]]]\n', "region.boxes"),
    ('experiment = "eig"\n[region]\nboxes = [[0.3]]\n', "region.boxes"),
    ('experiment = "quasimode"\n[quasimode]\ntaus = [20.0, 40.0, 30.0, 160.0]\n', "quasimode.taus"),
    ('experiment = "eig"\nthreads = 0\n', "threads"),
    ('experiment = "eig"\n[symbols]\ninject_negative_td = 1\n', "symbols.inject_negative_td"),
    ('experiment = "eig"\neig = 3\n', "eig"),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config_text(text)


def test_integers_promote_to_floats():
    cfg = parse_config_text('experiment = "control"\n[control]\nhorizon = 2\n')
    assert cfg["control"]["horizon"] == 2.0 and isinstance(cfg["control"]["horizon"], float)


def test_two_dimensional_grid():
    cfg = parse_config_text('experiment = "eig"\n[grid]\nlengths = [1.0, 2.0]\nn = [20, 30]\n'
                            '[region]\nboxes = [[[0.0, 0.2], [0.0, 2.0]]]\n')
    assert cfg["grid"]["n"] == [20, 30]


def test_syntax_error_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("experiment = \n")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.toml")
