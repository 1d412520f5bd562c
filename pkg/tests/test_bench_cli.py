import numpy as np
import pytest

from stvs.bench import (BenchReport, bench_conv3d, bench_padding, bench_shuffle,
                        naive_cyclic_conv3d, naive_shuffle, rel_err)
from stvs.cli import run
from stvs.media import read_image, write_gray, write_rgb
from stvs.nn_ops import Conv3dWeights
from stvs.temporal import (PaddingPolicy, TemporalBlock, temporal_shuffle,
                           tm_conv3d_layer)


def _identity_conv3d(c):
    k = np.zeros((c, c, 3, 3, 3), dtype=np.float32)
    for i in range(c):
        k[i, i, 1, 1, 1] = 1.0
    return Conv3dWeights(k, np.zeros(c, np.float32))


class TestNaiveOracles:
    def test_identity_kernel_gives_input(self):
        rng = np.random.default_rng(70)
        block = TemporalBlock(rng.standard_normal((3, 2, 4, 4)).astype(np.float32))
        out = naive_cyclic_conv3d(block, _identity_conv3d(2), PaddingPolicy.CYCLIC_ALL)
        assert rel_err(out.data, block.data) <= 1e-7

    def test_zero_pad_scalar_hand_sum(self):
        block = TemporalBlock(np.array([1, 2, 3], dtype=np.float32).reshape(3, 1, 1, 1))
        w = Conv3dWeights(np.ones((1, 1, 3, 1, 1), np.float32), np.zeros(1, np.float32))
        out = naive_cyclic_conv3d(block, w, PaddingPolicy.ZERO_PAD)
        assert out.data.reshape(3).tolist() == [3.0, 6.0, 5.0]

    def test_equals_fast_path_random(self):
        rng = np.random.default_rng(71)
        for policy in PaddingPolicy:
            for layer in (1, 2):
                c = int(rng.integers(1, 8))
                block = TemporalBlock(rng.standard_normal((3, c, 6, 6)).astype(np.float32))
                w = Conv3dWeights(
                    (rng.standard_normal((c, c, 3, 3, 3)) * 0.3).astype(np.float32),
                    rng.standard_normal(c).astype(np.float32))
                fast = tm_conv3d_layer(block, w, policy, layer_index=layer)
                naive = naive_cyclic_conv3d(block, w, policy, layer_index=layer)
                assert rel_err(fast.data, naive.data) <= 1e-6

    def test_naive_shuffle_matches_fast_bit_exact(self):
        rng = np.random.default_rng(72)
        block = TemporalBlock(rng.standard_normal((3, 32, 8, 8)).astype(np.float32))
        assert np.array_equal(naive_shuffle(block).data, temporal_shuffle(block).data)

    def test_naive_shuffle_c2_fixture(self):
        block = TemporalBlock(np.arange(6, dtype=np.float32).reshape(3, 2, 1, 1))
        assert naive_shuffle(block).data.reshape(6).tolist() == [0.0, 3.0, 1.0, 4.0, 2.0, 5.0]

    def test_naive_shuffle_uniform_unchanged(self):
        block = TemporalBlock(np.full((3, 5, 2, 2), 2.5, dtype=np.float32))
        assert np.array_equal(naive_shuffle(block).data, block.data)


class TestBenchHarness:
    def test_report_requires_30_trials(self):
        with pytest.raises(ValueError):
            BenchReport(op="x", shape="s", trials=10, fast_ns=1.0, naive_ns=2.0,
                        equivalence_max_rel_err=0.0)

    def test_bench_padding_small(self):
        rep = bench_padding(c=8, h=16, w=16, trials=30)
        assert rep.equivalence_max_rel_err <= 1e-6
        assert rep.fast_ns > 0 and rep.naive_ns > 0
        assert rep.speedup > 1.0
        assert any("reference" in line for line in rep.lines())

    def test_bench_shuffle_small(self):
        rep = bench_shuffle(c=8, h=16, w=16, trials=30)
        assert rep.equivalence_max_rel_err == 0.0
        assert rep.copy_ns is not None and rep.copy_ns > 0

    def test_bench_conv3d_small(self):
        rep = bench_conv3d(c=4, h=8, w=8, trials=30)
        assert rep.equivalence_max_rel_err <= 1e-6

    def test_bench_forward_tiny_config(self):
        from stvs.bench import bench_forward
        from stvs.network import NetworkConfig
        cfg = NetworkConfig(input_size=16, encoder_channels=(4, 4, 4, 4, 4),
                            tm_channels=4, attention_channels=4)
        rep = bench_forward(cfg, trials=30)
        assert rep.equivalence_max_rel_err == 0.0  # repeat runs are bit-identical
        assert "predictions/s" in rep.reference_note


class TestCli:
    def test_usage_errors_exit_2(self):
        assert run([]) == 2
        assert run(["bench"]) == 2
        assert run(["bench", "--op", "cyclic-pad", "--shape", "banana"]) == 2
        assert run(["infer", "--frames", "x", "--out", "y"]) == 2  # no weights source

    def test_gradcheck_cli(self):
        assert run(["gradcheck", "--op", "shuffle", "--seed", "1"]) == 0
        assert run(["gradcheck", "--op", "unknown-op"]) == 1

    def test_bench_shuffle_cli(self, tmp_path, capsys):
        out_csv = tmp_path / "bench.csv"
        code = run(["bench", "--op", "shuffle", "--shape", "8x16x16",
                    "--trials", "30", "--out", str(out_csv)])
        assert code == 0
        captured = capsys.readouterr().out
        assert "equivalence" in captured
        assert out_csv.exists()
        assert (tmp_path / "bench.png").exists()

    def test_train_toy_cli(self, tmp_path, capsys):
        out_csv = tmp_path / "curve.csv"
        code = run(["train-toy", "--seed", "2", "--steps", "5", "--out", str(out_csv)])
        assert code == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 6
        assert (tmp_path / "curve.png").exists()

    def test_infer_and_eval_end_to_end(self, tmp_path, capsys):
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        rng = np.random.default_rng(73)
        for k in range(4):
            img = (np.round(rng.random((3, 8, 8)) * 255) / 255).astype(np.float32)
            write_rgb(frames_dir / f"{k:04d}.ppm", img)
        out_dir = tmp_path / "sal"
        code = run(["infer", "--init-seed", "5", "--toy",
                    "--frames", str(frames_dir), "--out", str(out_dir), "--all-stages"])
        assert code == 0
        outputs = sorted(p.name for p in out_dir.glob("*.pgm"))
        assert outputs == ["0001.pgm", "0002.pgm"]
        img = read_image(out_dir / "0001.pgm")
        assert img.shape == (1, 64, 64)
        for d in range(1, 6):
            stage = out_dir / f"stage_{d}" / "0001.pgm"
            assert stage.exists()
            assert read_image(stage).shape == (1, 64, 64)

        # self-eval: predictions against themselves score perfectly
        gt_dir = tmp_path / "gt"
        gt_dir.mkdir()
        for p in out_dir.glob("*.pgm"):
            binary = (read_image(p) >= 0.5).astype(np.float32)
            write_gray(gt_dir / p.name, binary)
            write_gray(out_dir / p.name, binary)  # overwrite with binarized map
        report_csv = tmp_path / "report.csv"
        code = run(["eval", "--pred", str(out_dir), "--gt", str(gt_dir),
                    "--out", str(report_csv)])
        assert code == 0
        table = capsys.readouterr().out
        assert "overall" in table
        body = report_csv.read_text()
        overall = [line for line in body.splitlines() if line.startswith("overall")][0]
        _, fm, sm, m = overall.split(",")
        assert float(fm) == pytest.approx(1.0, abs=1e-6)
        assert float(sm) == pytest.approx(1.0, abs=1e-6)
        assert float(m) == pytest.approx(0.0, abs=1e-6)
        assert (tmp_path / "report.png").exists()

    def test_eval_missing_dir_exit_1(self, tmp_path):
        assert run(["eval", "--pred", str(tmp_path / "nope"), "--gt", str(tmp_path / "nope2"),
                    "--out", str(tmp_path / "r.csv")]) == 1

    def test_infer_with_config_file(self, tmp_path):
        from stvs.network import NetworkConfig
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(NetworkConfig.toy(shuffle_enabled=False).to_json())
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        rng = np.random.default_rng(74)
        for k in range(3):
            img = (np.round(rng.random((3, 8, 8)) * 255) / 255).astype(np.float32)
            write_rgb(frames_dir / f"{k}.ppm", img)
        out_dir = tmp_path / "out"
        code = run(["infer", "--init-seed", "1", "--config", str(cfg_path),
                    "--frames", str(frames_dir), "--out", str(out_dir)])
        assert code == 0
        assert read_image(out_dir / "1.pgm").shape == (1, 64, 64)

    def test_selftest_cli_passes(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
