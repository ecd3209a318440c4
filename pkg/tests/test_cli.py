import json

import numpy as np
import pytest

from topoguard import (
    default_whs_spec,
    key_voxels,
    read_float_field,
    read_label_volume,
    read_mask,
    read_prob_volume,
    report,
    score_gradient,
    total_loss,
)
from topoguard.cli import main
from topoguard.volume import DEFAULT_WHS_TABLE


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def nested(tmp_path, capsys):
    path = tmp_path / "nested.tgvol"
    code, _, _ = run(capsys, "synth", "nested-spheres", "-o", str(path), "--seed", "1")
    assert code == 0
    return path


@pytest.fixture
def punched(tmp_path, capsys):
    path = tmp_path / "punched.tgvol"
    code, _, _ = run(capsys, "synth", "punched-shell", "-o", str(path), "--seed", "1")
    assert code == 0
    return path


class TestValidate:
    def test_satisfied_phantom_exits_zero(self, capsys, nested):
        code, out, _ = run(capsys, "validate", str(nested))
        assert code == 0
        assert "0 violating voxels" in out
        assert "status: valid" in out

    def test_punched_phantom_exits_one(self, capsys, punched):
        code, out, _ = run(capsys, "validate", str(punched))
        assert code == 1
        assert "contain LV Myo" in out
        assert "status: INVALID" in out

    def test_json_lines_parse(self, capsys, punched):
        code, out, _ = run(capsys, "validate", str(punched), "--format", "json-lines")
        assert code == 1
        records = [json.loads(line) for line in out.strip().splitlines()]
        assert records[-1]["valid"] is False
        assert records[0]["constraint"] == "contain LV Myo"
        assert records[0]["count"] > 0

    def test_missing_constraint_file_exits_three(self, capsys, nested, tmp_path):
        code, _, err = run(capsys, "validate", str(nested),
                           "--constraints", str(tmp_path / "nope.txt"))
        assert code == 3
        assert "error" in err

    def test_missing_volume_exits_three(self, capsys, tmp_path):
        code, _, _ = run(capsys, "validate", str(tmp_path / "absent.tgvol"))
        assert code == 3

    def test_garbage_volume_exits_three(self, capsys, tmp_path):
        path = tmp_path / "junk.tgvol"
        path.write_bytes(b"BOGUS garbage bytes".ljust(64, b"\x00"))
        code, _, err = run(capsys, "validate", str(path))
        assert code == 3
        assert "magic" in err

    def test_unknown_flag_exits_two(self, capsys, nested):
        with pytest.raises(SystemExit) as e:
            main(["validate", str(nested), "--frobnicate"])
        assert e.value.code == 2


class TestKeymask:
    def test_mask_matches_library(self, capsys, punched, tmp_path):
        out_path = tmp_path / "n.tgvol"
        code, _, _ = run(capsys, "keymask", str(punched), "-o", str(out_path))
        assert code == 0  # violations found but keymask still succeeds
        mask = read_mask(out_path)
        labels = read_label_volume(punched)
        want = key_voxels(labels, default_whs_spec())
        assert np.array_equal(mask.data, want.data)
        assert mask.spacing == labels.spacing

    def test_count_matches_validate_total(self, capsys, punched, tmp_path):
        out_path = tmp_path / "n.tgvol"
        run(capsys, "keymask", str(punched), "-o", str(out_path))
        code, out, _ = run(capsys, "validate", str(punched), "--format", "json-lines")
        total = json.loads(out.strip().splitlines()[-1])["total_key_voxels"]
        assert read_mask(out_path).count == total

    def test_satisfied_phantom_all_false(self, capsys, nested, tmp_path):
        out_path = tmp_path / "n.tgvol"
        run(capsys, "keymask", str(nested), "-o", str(out_path))
        assert read_mask(out_path).count == 0


class TestLoss:
    def soften_files(self, capsys, tmp_path, kind, seed="1"):
        gt = tmp_path / f"{kind}-gt.tgvol"
        probs = tmp_path / f"{kind}-p.tgvol"
        assert run(capsys, "synth", kind, "-o", str(gt), "--seed", seed)[0] == 0
        assert run(capsys, "synth", kind, "-o", str(probs), "--seed", seed,
                   "--soften", "0.25", "--channels", "8")[0] == 0
        return probs, gt

    def test_default_lambda_in_output(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "nested-spheres")
        code, out, _ = run(capsys, "loss", str(probs), str(gt))
        assert code == 0
        rec = json.loads(out)
        assert rec["lambda"] == 1e-6
        assert rec["l_tp"] == 0.0

    def test_lambda_zero_sum_identity(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "punched-shell")
        code, out, _ = run(capsys, "loss", str(probs), str(gt), "--lambda", "0")
        rec = json.loads(out)
        assert rec["l_total"] == pytest.approx(rec["l_ce"] + rec["l_dice"], rel=1e-12)

    def test_matches_library_call(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "punched-shell")
        code, out, _ = run(capsys, "loss", str(probs), str(gt))
        rec = json.loads(out)
        b, _ = total_loss(read_prob_volume(probs), read_label_volume(gt),
                          default_whs_spec())
        assert rec["l_total"] == b.l_total
        assert rec["key_voxel_count"] == b.key_voxel_count

    def test_gradient_output(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "punched-shell")
        grad_path = tmp_path / "grad.tgvol"
        code, _, _ = run(capsys, "loss", str(probs), str(gt),
                         "--grad-out", str(grad_path))
        assert code == 0
        p = read_prob_volume(probs)
        g = read_label_volume(gt)
        field, spacing = read_float_field(grad_path)
        assert field.shape == p.data.shape
        _, want = total_loss(p, g, default_whs_spec())
        assert np.array_equal(field, want.astype(np.float32))

    def test_score_space_gradient_output(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "punched-shell")
        grad_path = tmp_path / "grad.tgvol"
        run(capsys, "loss", str(probs), str(gt), "--grad-out", str(grad_path),
            "--grad-space", "score")
        p = read_prob_volume(probs)
        g = read_label_volume(gt)
        _, grad = total_loss(p, g, default_whs_spec())
        want = score_gradient(grad, p).astype(np.float32)
        field, _ = read_float_field(grad_path)
        assert np.array_equal(field, want)

    def test_negative_lambda_is_usage_error(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "nested-spheres")
        code, _, err = run(capsys, "loss", str(probs), str(gt), "--lambda", "-1")
        assert code == 2
        assert "usage error" in err

    def test_labels_where_probs_expected(self, capsys, tmp_path):
        probs, gt = self.soften_files(capsys, tmp_path, "nested-spheres")
        code, _, err = run(capsys, "loss", str(gt), str(gt))
        assert code == 3
        assert "expected a likelihood volume" in err


class TestMetrics:
    def test_identical_volumes(self, capsys, nested, tmp_path):
        csv_path = tmp_path / "m.csv"
        code, _, _ = run(capsys, "metrics", str(nested), str(nested),
                         "--csv", str(csv_path))
        assert code == 0
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "class,dice,jaccard,sd_mm,hd_mm"
        assert "ALL,1.0,1.0,0.0,0.0" in lines

    def test_stdout_when_no_csv_flag(self, capsys, nested):
        code, out, _ = run(capsys, "metrics", str(nested), str(nested))
        assert code == 0
        assert out.startswith("class,dice,jaccard,sd_mm,hd_mm")

    def test_shifted_single_voxel_distance(self, capsys, tmp_path):
        from topoguard import LabelVolume, write_volume

        a = np.zeros((1, 1, 5), dtype=np.uint8)
        a[0, 0, 0] = 1
        b = np.zeros((1, 1, 5), dtype=np.uint8)
        b[0, 0, 4] = 1
        pa, pb = tmp_path / "a.tgvol", tmp_path / "b.tgvol"
        write_volume(pa, LabelVolume(a))
        write_volume(pb, LabelVolume(b))
        code, out, _ = run(capsys, "metrics", str(pa), str(pb))
        myo_row = [l for l in out.splitlines() if l.startswith("Myo,")][0]
        assert myo_row == "Myo,0.0,0.0,4.0,4.0"

    def test_matches_library_report_exactly(self, capsys, tmp_path):
        from topoguard import LabelVolume, write_volume

        rng = np.random.default_rng(55)
        pred = LabelVolume(rng.integers(0, 8, size=(8, 8, 8), dtype=np.uint8))
        gt = LabelVolume(rng.integers(0, 8, size=(8, 8, 8), dtype=np.uint8))
        pa, pb = tmp_path / "p.tgvol", tmp_path / "g.tgvol"
        write_volume(pa, pred)
        write_volume(pb, gt)
        code, out, _ = run(capsys, "metrics", str(pa), str(pb))
        assert out == report(pred, gt, DEFAULT_WHS_TABLE).to_csv()

    def test_grid_mismatch_exits_three(self, capsys, tmp_path):
        from topoguard import LabelVolume, write_volume

        pa, pb = tmp_path / "a.tgvol", tmp_path / "b.tgvol"
        write_volume(pa, LabelVolume(np.zeros((2, 2, 2), dtype=np.uint8)))
        write_volume(pb, LabelVolume(np.zeros((3, 3, 3), dtype=np.uint8)))
        code, _, err = run(capsys, "metrics", str(pa), str(pb))
        assert code == 3


class TestSynth:
    def test_all_kinds_produce_readable_volumes(self, capsys, tmp_path):
        for kind in ("nested-spheres", "punched-shell", "separated-blobs", "random"):
            path = tmp_path / f"{kind}.tgvol"
            code, _, _ = run(capsys, "synth", kind, "-o", str(path))
            assert code == 0
            read_label_volume(path)

    def test_deterministic_output(self, capsys, tmp_path):
        a, b = tmp_path / "a.tgvol", tmp_path / "b.tgvol"
        run(capsys, "synth", "random", "-o", str(a), "--seed", "9")
        run(capsys, "synth", "random", "-o", str(b), "--seed", "9")
        assert a.read_bytes() == b.read_bytes()

    def test_bad_radii_usage_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "synth", "nested-spheres", "-o",
                           str(tmp_path / "x.tgvol"), "--outer-radius", "99")
        assert code == 2
        assert "usage error" in err

    def test_soften_emits_probabilities(self, capsys, tmp_path):
        path = tmp_path / "p.tgvol"
        code, _, _ = run(capsys, "synth", "nested-spheres", "-o", str(path),
                         "--soften", "0.25", "--channels", "8")
        assert code == 0
        p = read_prob_volume(path)
        assert p.channels == 8
