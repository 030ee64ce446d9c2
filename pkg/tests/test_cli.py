import uvicorn
from click.testing import CliRunner

from modelforge.cli import main

from fixtures import library_repo


def run_with_stub(monkeypatch, args, env=None):
    captured = {}

    def fake_run(app, **kwargs):
        captured["app"] = app
        captured.update(kwargs)

    monkeypatch.setattr(uvicorn, "run", fake_run)
    result = CliRunner().invoke(main, args, env=env)
    return result, captured


class TestServeCommand:
    def test_help_lists_commands(self):
        result = CliRunner().invoke(main, ["--help"])
        assert result.exit_code == 0
        assert "serve" in result.output

    def test_defaults(self, tmp_path, monkeypatch):
        library_repo(tmp_path)
        result, captured = run_with_stub(monkeypatch, ["serve", "--repo-dir", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert captured["port"] == 8080
        assert captured["host"] == "0.0.0.0"
        service = captured["app"].state.service
        assert service.base_path == "/api/v1"
        assert service.watch_enabled is True
        assert service.state.generation == 1

    def test_options_override(self, tmp_path, monkeypatch):
        library_repo(tmp_path)
        result, captured = run_with_stub(
            monkeypatch,
            [
                "serve",
                "--repo-dir", str(tmp_path),
                "--port", "9001",
                "--base-path", "/custom",
                "--no-watch",
                "--debounce-ms", "50",
            ],
        )
        assert result.exit_code == 0, result.output
        assert captured["port"] == 9001
        service = captured["app"].state.service
        assert service.base_path == "/custom"
        assert service.watch_enabled is False
        assert service.watcher.debounce == 0.05

    def test_environment_variables(self, tmp_path, monkeypatch):
        library_repo(tmp_path)
        result, captured = run_with_stub(
            monkeypatch,
            ["serve"],
            env={
                "MODELFORGE_REPO_DIR": str(tmp_path),
                "MODELFORGE_PORT": "9002",
                "MODELFORGE_LOG_LEVEL": "warning",
            },
        )
        assert result.exit_code == 0, result.output
        assert captured["port"] == 9002
        assert captured["log_level"] == "warning"

    def test_repo_dir_is_required(self, monkeypatch):
        result, _ = run_with_stub(monkeypatch, ["serve"], env={"MODELFORGE_REPO_DIR": ""})
        assert result.exit_code != 0
        assert "repo-dir" in result.output

    def test_repo_dir_must_exist(self, tmp_path, monkeypatch):
        result, _ = run_with_stub(
            monkeypatch, ["serve", "--repo-dir", str(tmp_path / "nope")]
        )
        assert result.exit_code != 0

    def test_bad_log_level(self, tmp_path, monkeypatch):
        library_repo(tmp_path)
        result, _ = run_with_stub(
            monkeypatch,
            ["serve", "--repo-dir", str(tmp_path), "--log-level", "loud"],
        )
        assert result.exit_code != 0
