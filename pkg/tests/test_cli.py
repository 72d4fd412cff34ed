# tests/test_cli.py
import json

import pytest

from cli import main
from herding.records import read_jsonl


@pytest.fixture
def env_file(tmp_path):
    """An empty .env so the repository settings never leak into a test"""
    path = tmp_path / "test.env"
    path.write_text("", encoding="utf-8")
    return str(path)


@pytest.fixture
def instance_path(tmp_path, env_file):
    path = tmp_path / "grid.json"
    code = main(["--env-file", env_file, "generate", "--kind", "grid_semantic", "--width", "3", "--height", "3",
                 "--labels", "3", "--noise", "0.8", "--seed", "5", "--out", str(path)])
    assert code == 0
    return path


def read_labelings(path):
    with open(path, encoding="utf-8") as handle:
        return [record["labeling"] for record in read_jsonl(handle)]


class TestGenerate:
    """herdcrf generate"""

    def test_writes_instance_and_manifest(self, instance_path):
        """The instance document and its manifest land next to each other"""
        document = json.loads(instance_path.read_text(encoding="utf-8"))
        assert len(document["nodes"]) == 9
        assert document["labels"] == 3
        manifest = json.loads((instance_path.parent / "grid.json.manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"][:2] == ["herdcrf", "--env-file"]

    def test_stdout(self, env_file, capsys):
        """'-' writes the document to standard output"""
        assert main(["--env-file", env_file, "generate", "--width", "2", "--height", "2", "--labels", "2"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert len(document["nodes"]) == 4

    def test_invalid_fraction(self, env_file, tmp_path, capsys):
        """An observed fraction outside (0, 1] is a validation error"""
        code = main(["--env-file", env_file, "generate", "--kind", "grid_interactive", "--width", "2",
                     "--height", "2", "--labels", "2", "--observed-fraction", "1.5",
                     "--out", str(tmp_path / "x.json")])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestSample:
    """herdcrf sample"""

    def test_herding_unary(self, env_file, instance_path, tmp_path):
        """M lines with 1-based indices"""
        out = tmp_path / "h.jsonl"
        code = main(["--env-file", env_file, "sample", "--instance", str(instance_path), "--method", "herding",
                     "--moments", "unary", "--eta-u", "0.5", "-M", "5", "--inference", "elimination",
                     "--out", str(out)])
        assert code == 0
        with open(out, encoding="utf-8") as handle:
            records = read_jsonl(handle)
        assert [r["m"] for r in records] == [1, 2, 3, 4, 5]
        assert all(len(r["labeling"]) == 9 for r in records)

    def test_lambda_zero_repeats_map(self, env_file, instance_path, tmp_path):
        """divMbest with lambda = 0 returns the MAP labeling every time"""
        out = tmp_path / "d.jsonl"
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "--method", "divmbest",
                     "--lambda", "0", "-M", "4", "--inference", "elimination", "--out", str(out)]) == 0
        labelings = read_labelings(out)
        assert all(labeling == labelings[0] for labeling in labelings)

    def test_zero_moments_match_divmbest(self, env_file, instance_path, tmp_path):
        """Herding with zero moments and eta_p = 0 reproduces divMbest"""
        div = tmp_path / "div.jsonl"
        herd = tmp_path / "herd.jsonl"
        common = ["-M", "8", "--inference", "elimination"]
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "--method", "divmbest",
                     "--lambda", "1.5", "--out", str(div)] + common) == 0
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "--method", "herding",
                     "--moments", "zero", "--eta-u", "1.5", "--eta-p", "0", "--out", str(herd)] + common) == 0
        assert read_labelings(div) == read_labelings(herd)

    def test_stdout_has_only_data(self, env_file, instance_path, capsys):
        """Every stdout line is a JSON record"""
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "-M", "3",
                     "--inference", "elimination"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert all(json.loads(line)["m"] for line in lines)

    def test_invalid_json(self, env_file, tmp_path, capsys):
        """Unreadable instances exit with 1"""
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        assert main(["--env-file", env_file, "sample", "--instance", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_file(self, env_file, tmp_path):
        """A missing instance is a parse error"""
        assert main(["--env-file", env_file, "sample", "--instance", str(tmp_path / "none.json")]) == 1

    def test_capacity_guard(self, env_file, tmp_path, capsys):
        """Brute force on an 8x8 grid exceeds the enumeration limit"""
        path = tmp_path / "big.json"
        assert main(["--env-file", env_file, "generate", "--width", "8", "--height", "8", "--labels", "4",
                     "--out", str(path)]) == 0
        assert main(["--env-file", env_file, "sample", "--instance", str(path), "--inference", "bruteforce",
                     "-M", "1"]) == 3
        assert "CapacityError" in capsys.readouterr().err

    def test_negative_rate(self, env_file, instance_path):
        """Negative rates are validation errors"""
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path),
                     "--moments", "unary", "--eta-u", "-1"]) == 2

    def test_zero_samples(self, env_file, instance_path, capsys):
        """-M 0 is rejected instead of falling back to the configured count"""
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "-M", "0"]) == 2
        assert capsys.readouterr().out == ""

    def test_divmbest_rejects_moments(self, env_file, instance_path):
        """divmbest with a nonzero moment source is a validation error"""
        assert main(["--env-file", env_file, "sample", "--instance", str(instance_path), "--method", "divmbest",
                     "--moments", "unary", "-M", "2"]) == 2

    def test_non_numeric_scores(self, env_file, tmp_path, capsys):
        """Non-numeric unary scores are a malformed file"""
        bad = tmp_path / "scores.json"
        bad.write_text(json.dumps({
            "labels": 3,
            "nodes": [{"id": 0, "unary_scores": ["a", 0.1, 0.2]}, {"id": 1, "unary_scores": [0.3, 0.3, 0.4]}],
            "edges": [{"i": 0, "j": 1}],
        }), encoding="utf-8")
        assert main(["--env-file", env_file, "sample", "--instance", str(bad), "-M", "1"]) == 1
        assert "error:" in capsys.readouterr().err


class TestConvergence:
    """herdcrf convergence"""

    def test_sampled_moments(self, env_file, instance_path, capsys):
        """Moments from random labelings lie in the polytope"""
        code = main(["--env-file", env_file, "convergence", "--instance", str(instance_path),
                     "--moments-source", "samples:3:0", "--eta-u", "1", "--eta-p", "1", "-M", "32",
                     "--inference", "elimination", "--envelope-start", "4"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["in_polytope"]
        assert len(payload["trace"]) == 32
        assert payload["attractor_residual"] == pytest.approx(0.0, abs=1e-12)
        assert {"envelope", "fit", "first_exact_hit", "moments_source"} <= set(payload)

    def test_bad_source(self, env_file, instance_path):
        """Unknown moment sources are validation errors"""
        assert main(["--env-file", env_file, "convergence", "--instance", str(instance_path),
                     "--moments-source", "samples:x"]) == 2


class TestExperiment:
    """herdcrf experiment"""

    def _suite(self, tmp_path, document):
        path = tmp_path / "s.suite"
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    def test_runs_suite(self, env_file, tmp_path):
        """A small suite writes its three output files"""
        suite = self._suite(tmp_path, {
            "name": "mini", "m_max": 2,
            "instances": {"generator": {"kind": "grid_semantic", "count": 1, "width": 2, "height": 2,
                                        "labels": 2, "seed": 3}},
            "methods": [{"name": "divmbest", "moments": "zero", "lambda": 1.0}],
        })
        out_dir = tmp_path / "out"
        assert main(["--env-file", env_file, "experiment", "--suite", suite, "--out-dir", str(out_dir),
                     "--inference", "bruteforce", "--threads", "2"]) == 0
        assert {p.name for p in out_dir.iterdir()} == {"curves.csv", "summary.json", "manifest.json"}

    def test_all_runs_failed(self, env_file, tmp_path, capsys):
        """Every run failing exits with 4"""
        suite = self._suite(tmp_path, {
            "name": "doomed", "m_max": 2,
            "instances": {"generator": {"kind": "grid_interactive", "count": 1, "width": 2, "height": 2,
                                        "labels": 2, "seed": 3}},
            "methods": [{"name": "herding", "moments": "unary", "eta_u": 1.0}],
        })
        code = main(["--env-file", env_file, "experiment", "--suite", suite, "--out-dir", str(tmp_path / "o"),
                     "--inference", "elimination"])
        assert code == 4
        assert "runs failed" in capsys.readouterr().err

    def test_bad_thread_count(self, env_file, tmp_path):
        """threads < 1 is rejected"""
        suite = self._suite(tmp_path, {"instances": {"generator": {}}, "methods": [{"name": "divmbest", "lambda": 1}]})
        assert main(["--env-file", env_file, "experiment", "--suite", suite, "--threads", "0"]) == 2
