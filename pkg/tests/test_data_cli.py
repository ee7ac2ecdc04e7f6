import numpy as np
import pytest

from pointdeconv import cli, config, report
from pointdeconv.data import (DataError, denormalize, load_cloud,
                              load_directory, load_pcf1, load_xyz, normalize,
                              save_pcf1, save_xyz, synth_corpus)


# ------------------------------------------------------------------ formats
def test_xyz_round_trip_bit_exact(tmp_path, rng):
    cloud = rng.normal(size=(17, 3))
    path = tmp_path / "a.xyz"
    save_xyz(path, cloud)
    assert np.array_equal(load_xyz(path), cloud)


def test_xyz_reports_malformed_line(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("0 0 0\n1 2\n3 4 5\n")
    with pytest.raises(DataError, match="line 2"):
        load_xyz(path)


def test_xyz_reports_non_numeric(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("0 0 0\n1 2 x\n")
    with pytest.raises(DataError, match="line 2"):
        load_xyz(path)


def test_xyz_rejects_empty(tmp_path):
    path = tmp_path / "empty.xyz"
    path.write_text("\n\n")
    with pytest.raises(DataError):
        load_xyz(path)


def test_pcf1_round_trip(tmp_path, rng):
    # float32 payload: round-trip through float32 must be exact
    cloud = rng.normal(size=(9, 3)).astype(np.float32).astype(np.float64)
    path = tmp_path / "a.pcf"
    save_pcf1(path, cloud)
    assert np.array_equal(load_pcf1(path), cloud)


def test_pcf1_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pcf"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DataError, match="magic"):
        load_pcf1(path)


def test_pcf1_rejects_truncation(tmp_path, rng):
    path = tmp_path / "a.pcf"
    save_pcf1(path, rng.normal(size=(5, 3)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError, match="truncated"):
        load_pcf1(path)


def test_load_cloud_dispatches_on_suffix(tmp_path, rng):
    cloud = rng.normal(size=(4, 3)).astype(np.float32).astype(np.float64)
    save_xyz(tmp_path / "a.xyz", cloud)
    save_pcf1(tmp_path / "a.pcf", cloud)
    assert np.array_equal(load_cloud(tmp_path / "a.xyz"), cloud)
    assert np.array_equal(load_cloud(tmp_path / "a.pcf"), cloud)


def test_load_directory_sorted_and_filtered(tmp_path, rng):
    for name in ("b.xyz", "a.xyz", "c.pcf"):
        if name.endswith(".xyz"):
            save_xyz(tmp_path / name, rng.normal(size=(3, 3)))
        else:
            save_pcf1(tmp_path / name, rng.normal(size=(3, 3)))
    (tmp_path / "notes.txt").write_text("ignore me")
    corpus = load_directory(tmp_path)
    assert corpus.names == ["a.xyz", "b.xyz", "c.pcf"]


def test_load_directory_rejects_empty(tmp_path):
    with pytest.raises(DataError):
        load_directory(tmp_path)


# -------------------------------------------------------------- normalization
def test_normalize_unit_ball_and_round_trip(rng):
    cloud = rng.normal(size=(30, 3)) * 5 + 2
    normed, rec = normalize(cloud)
    assert np.linalg.norm(normed, axis=1).max() <= 1.0 + 1e-12
    assert np.allclose(normed.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(denormalize(normed, rec), cloud, atol=1e-9)


def test_normalize_degenerate_cloud():
    cloud = np.tile([[3.0, 4.0, 5.0]], (6, 1))
    normed, rec = normalize(cloud)
    assert np.array_equal(normed, np.zeros((6, 3)))
    assert rec.scale == 1.0


# ------------------------------------------------------------ synthetic data
def test_synth_sphere_unit_norm():
    corpus = synth_corpus("sphere", 3, 50, seed=0)
    for cloud in corpus.clouds:
        assert np.allclose(np.linalg.norm(cloud, axis=1), 1.0, atol=1e-12)


def test_synth_plane_flat():
    corpus = synth_corpus("plane", 2, 40, seed=0)
    for cloud in corpus.clouds:
        assert np.all(cloud[:, 2] == 0.0)
        assert np.all(np.abs(cloud[:, :2]) <= 1.0)


def test_synth_two_clusters_bimodal():
    corpus = synth_corpus("two-clusters", 2, 100, seed=0)
    for cloud in corpus.clouds:
        left = cloud[cloud[:, 0] < 0]
        right = cloud[cloud[:, 0] >= 0]
        assert len(left) == len(right) == 50
        assert left[:, 0].mean() < -0.4
        assert right[:, 0].mean() > 0.4


def test_synth_reproducible():
    a = synth_corpus("sphere", 2, 10, seed=3)
    b = synth_corpus("sphere", 2, 10, seed=3)
    for ca, cb in zip(a.clouds, b.clouds):
        assert np.array_equal(ca, cb)


def test_synth_unknown_kind_rejected():
    with pytest.raises(DataError):
        synth_corpus("torus", 1, 10, seed=0)


# -------------------------------------------------------------------- config
def test_config_round_trip():
    cfg = config.toy_config(lam=0.25, non_saturating=False)
    assert config.parse(config.serialize(cfg)) == cfg


def test_config_unknown_key_rejected():
    with pytest.raises(config.ConfigError, match="unknown config key"):
        config.parse("not_a_key = 3\n")
    with pytest.raises(config.ConfigError):
        config.Config(not_a_key=3)


def test_config_bad_value_names_line():
    with pytest.raises(config.ConfigError, match="line 2"):
        config.parse("lam = 0.1\nbatch_size = many\n")


def test_config_validation_rejects_non_doubling_stages():
    with pytest.raises(config.ConfigError, match="double"):
        config.toy_config(stage_points=(32, 65))


def test_config_comments_and_blank_lines_ok():
    cfg = config.parse("# comment\n\nlam = 0.5\n")
    assert cfg.lam == 0.5


def test_config_file_round_trip(tmp_path):
    cfg = config.toy_config(seed=9)
    config.save(tmp_path / "c.cfg", cfg)
    assert config.load(tmp_path / "c.cfg") == cfg


# ----------------------------------------------------------------------- CLI
def _micro_cfg_file(tmp_path, name="micro.cfg", **overrides):
    base = dict(latent_dim=4, seed_points=4, seed_width=2,
                stage_points=(8, 16), stage_widths=(4, 8),
                k=3, head_widths=(6,), disc_widths=((4,), (4,)),
                scorer_hidden=4, spl_centroids=4, spl_k=3,
                batch_size=2, lr=1e-3, iterations=2,
                checkpoint_every=0, data_count=3, seed=1)
    base.update(overrides)
    path = tmp_path / name
    config.save(path, config.Config(**base))
    return path


def test_cli_synth_writes_corpus(tmp_path):
    out = tmp_path / "corpus"
    rc = cli.main(["synth", "--kind", "sphere", "--count", "4",
                   "--points", "16", "--seed", "0", "--out", str(out)])
    assert rc == 0
    files = sorted(out.glob("*.xyz"))
    assert len(files) == 4
    assert load_xyz(files[0]).shape == (16, 3)


def test_cli_evaluate_identical_dirs(tmp_path):
    out = tmp_path / "corpus"
    cli.main(["synth", "--kind", "sphere", "--count", "4",
              "--points", "12", "--out", str(out)])
    report_path = tmp_path / "report.txt"
    rc = cli.main(["evaluate", "--generated", str(out),
                   "--reference", str(out), "--report", str(report_path)])
    assert rc == 0
    values = report.read_report(report_path)
    assert values["jsd"] == 0.0
    assert values["mmd_cd"] == 0.0
    assert values["cov_cd"] == 1.0
    assert values["nna_cd"] == 0.0
    assert (tmp_path / "report_metrics.png").exists()
    assert (tmp_path / "report_clouds.png").exists()


def test_cli_evaluate_metric_subset_no_figures(tmp_path):
    out = tmp_path / "corpus"
    cli.main(["synth", "--kind", "plane", "--count", "3",
              "--points", "10", "--out", str(out)])
    report_path = tmp_path / "subset.txt"
    rc = cli.main(["evaluate", "--generated", str(out), "--reference", str(out),
                   "--metrics", "jsd,mmd_cd", "--report", str(report_path),
                   "--no-figures"])
    assert rc == 0
    values = report.read_report(report_path)
    assert values["jsd"] == 0.0
    assert np.isnan(values["mmd_emd"])  # not requested
    assert not (tmp_path / "subset_metrics.png").exists()


def test_cli_train_then_generate(tmp_path):
    cfg_path = _micro_cfg_file(tmp_path)
    run_dir = tmp_path / "run"
    rc = cli.main(["train", "--config", str(cfg_path), "--out", str(run_dir)])
    assert rc == 0
    assert (run_dir / "loss_log.txt").exists()
    assert (run_dir / "final.ckpt").exists()
    assert (run_dir / "loss_curves.png").exists()

    gen_dir = tmp_path / "samples"
    rc = cli.main(["generate", "--checkpoint", str(run_dir / "final.ckpt"),
                   "--count", "3", "--out", str(gen_dir)])
    assert rc == 0
    assert len(list(gen_dir.glob("sample_*_r8.xyz"))) == 3
    assert len(list(gen_dir.glob("sample_*_r16.xyz"))) == 3
    assert load_xyz(gen_dir / "sample_00000_r16.xyz").shape == (16, 3)


def test_cli_generate_resolution_filter(tmp_path):
    cfg_path = _micro_cfg_file(tmp_path, iterations=1)
    run_dir = tmp_path / "run"
    cli.main(["train", "--config", str(cfg_path), "--out", str(run_dir)])
    gen_dir = tmp_path / "only16"
    rc = cli.main(["generate", "--checkpoint", str(run_dir / "final.ckpt"),
                   "--count", "2", "--resolution", "16", "--out", str(gen_dir)])
    assert rc == 0
    assert len(list(gen_dir.glob("*.xyz"))) == 2
    rc = cli.main(["generate", "--checkpoint", str(run_dir / "final.ckpt"),
                   "--count", "1", "--resolution", "999", "--out", str(gen_dir)])
    assert rc == 1  # not a configured resolution


def test_cli_usage_errors_exit_one(tmp_path, capsys):
    assert cli.main(["train"]) == 1                     # missing --config
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["evaluate", "--generated", str(tmp_path / "nope"),
                     "--reference", str(tmp_path / "nope"),
                     "--report", str(tmp_path / "r.txt")]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def test_cli_bad_config_exit_one(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("stage_points = 32,65\n")
    assert cli.main(["train", "--config", str(bad), "--out",
                     str(tmp_path / "run")]) == 1


def test_cli_runtime_failure_exit_two(tmp_path):
    cfg_path = _micro_cfg_file(tmp_path, iterations=1)
    run_dir = tmp_path / "run"
    cli.main(["train", "--config", str(cfg_path), "--out", str(run_dir)])
    other_cfg = _micro_cfg_file(tmp_path, name="other.cfg", lr=5e-3,
                                iterations=2)
    assert cli.main(["train", "--config", str(other_cfg),
                     "--out", str(run_dir),
                     "--resume", str(run_dir / "final.ckpt")]) == 2
