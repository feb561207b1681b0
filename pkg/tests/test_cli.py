import pytest

from platelab.cli import THREAD_ENV, UsageError, main, resolve_threads


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


EIG = 'experiment = "eig"\n[grid]\nn = [100]\n'


def _body(path):
    return path.read_text()


def test_eig_run_writes_ten_rows(tmp_path):
    cfg = _write(tmp_path, EIG)
    assert main(["eig", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out" / "eig.csv"
    lines = out.read_text().splitlines()
    rows = [ln for ln in lines if not ln.startswith("#")]
    assert rows[0] == "j,mu,residual,laplacian_defect"
    assert len(rows) == 11
    assert any(ln.startswith("# config_sha256 ") for ln in lines)
    assert (tmp_path / "out" / "eig.csv.timing").exists()


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, 'experiment = "symbols"\n[symbols]\nn_samples = 200\n')
    main(["symbols", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["symbols", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"])
    a = (tmp_path / "a" / "symbols.csv").read_bytes()
    b = (tmp_path / "b" / "symbols.csv").read_bytes()
    assert a == b
    assert b"# seed 5" in a


def test_injected_violation_exits_nonzero_with_witness(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiment = "symbols"\n[symbols]\nn_samples = 100\ninject_negative_td = true\n')
    assert main(["symbols", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "precondition_t_d" in err and "witness" in err
    assert "VIOLATION symbol_lab: precondition_t_d" in (tmp_path / "symbols.csv").read_text()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main([]) == 2
    assert main(["eig", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2
    bad = _write(tmp_path, 'experiment = "eig"\n[eig]\nwhat = 1\n')
    assert main(["eig", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "eig.what: unknown key" in capsys.readouterr().err
    mismatch = _write(tmp_path, EIG, "m.toml")
    assert main(["control", "--config", mismatch, "--out", str(tmp_path)]) == 2


def test_module_error_exits_1_with_module_name(tmp_path, capsys):
    # too few grid points for the discretization
    cfg = _write(tmp_path, 'experiment = "eig"\n[grid]\nn = [3]\n')
    assert main(["eig", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "eigensolve:" in capsys.readouterr().err


def test_thread_precedence(monkeypatch):
    monkeypatch.delenv(THREAD_ENV, raising=False)
    assert resolve_threads(None, 3) == 3
    assert resolve_threads(2, 3) == 2
    monkeypatch.setenv(THREAD_ENV, "4")
    assert resolve_threads(2, 3) == 4
    monkeypatch.setenv(THREAD_ENV, "many")
    with pytest.raises(UsageError):
        resolve_threads(None, 1)
    monkeypatch.setenv(THREAD_ENV, "0")
    with pytest.raises(UsageError):
        resolve_threads(None, 1)


def test_bad_thread_env_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv(THREAD_ENV, "x")
    cfg = _write(tmp_path, EIG)
    assert main(["eig", "--config", cfg, "--out", str(tmp_path)]) == 2
