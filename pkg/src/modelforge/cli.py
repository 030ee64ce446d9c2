"""Command line entry point.

Every option can also come from the environment with the MODELFORGE_ prefix,
e.g. MODELFORGE_REPO_DIR or MODELFORGE_PORT.
"""

from __future__ import annotations

import logging

import click

from .server import ModelService, create_app

LOG_LEVELS = ["debug", "info", "warning", "error"]


@click.group()
def main():
    """Serve models conforming to arbitrary metamodels over a REST API."""


@main.command()
@click.option(
    "--repo-dir",
    required=True,
    envvar="MODELFORGE_REPO_DIR",
    type=click.Path(exists=True, file_okay=False),
    help="Directory holding one subdirectory per package.",
)
@click.option(
    "--port",
    default=8080,
    show_default=True,
    envvar="MODELFORGE_PORT",
    type=int,
    help="TCP port to listen on.",
)
@click.option(
    "--base-path",
    default="/api/v1",
    show_default=True,
    envvar="MODELFORGE_BASE_PATH",
    help="Prefix under which every endpoint is served.",
)
@click.option(
    "--watch/--no-watch",
    default=True,
    show_default=True,
    envvar="MODELFORGE_WATCH",
    help="React to metamodel file changes while running.",
)
@click.option(
    "--debounce-ms",
    default=200,
    show_default=True,
    envvar="MODELFORGE_DEBOUNCE_MS",
    type=int,
    help="Quiet period before a file change is applied.",
)
@click.option(
    "--log-level",
    default="info",
    show_default=True,
    envvar="MODELFORGE_LOG_LEVEL",
    type=click.Choice(LOG_LEVELS),
    help="Verbosity of the service logs.",
)
def serve(repo_dir, port, base_path, watch, debounce_ms, log_level):
    """Start the API server for one repository directory."""
    import uvicorn

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    service = ModelService(
        repo_dir, base_path=base_path, watch=watch, debounce_ms=debounce_ms
    )
    app = create_app(service)
    uvicorn.run(app, host="0.0.0.0", port=port, log_level=log_level)


if __name__ == "__main__":
    main()
