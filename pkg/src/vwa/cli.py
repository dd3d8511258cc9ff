"""`vwa` command line: a thin client of the evaluation service.

By default requests run against an in-process service instance (no
network); `--server http://host:port` targets a remote one.  Exit codes:
0 success, 1 verification mismatch, 2 input error.
"""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click
import httpx

from . import __version__

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2


def _setup_logging():
    level = os.environ.get("VWA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    from .service import create_app

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

        return TestClient(create_app())


def _read_file(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        click.echo(f"error: no such file: {path}", err=True)
        sys.exit(EXIT_INPUT)
    return p.read_text()


def _post(client, endpoint, payload):
    resp = client.post(endpoint, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(EXIT_INPUT)
    return resp.json()


def _write_report(report_json: dict, out_path: str | None, csv_text: str | None,
                  csv_path: str | None):
    from .reports import report_to_json

    text = report_to_json(report_json)
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)
    if csv_text and csv_path:
        Path(csv_path).write_text(csv_text)


@click.group()
@click.version_option(__version__)
def main():
    """Vectorwise CNN accelerator model: analyze, verify, run."""
    _setup_logging()


@main.command()
@click.argument("model_path")
@click.option("--policy", type=click.Choice(["fixed8", "fixed4", "adaptive"]),
              default="adaptive", show_default=True)
@click.option("--clock-mhz", default=500, show_default=True)
@click.option("--tile-cols", type=int, default=None, help="Override the tile width hint.")
@click.option("--out", "out_path", default=None, help="Report file (default stdout).")
@click.option("--csv", "csv_path", default=None, help="Also write a per-layer CSV table.")
@click.option("--server", default=None, help="Remote service URL (default in-process).")
def analyze(model_path, policy, clock_mhz, tile_cols, out_path, csv_path, server):
    """Analytical evaluation: cycles, utilization, DRAM traffic, energy."""
    payload = {
        "model_text": _read_file(model_path),
        "policy": policy,
        "clock_mhz": clock_mhz,
        "tile_cols": tile_cols,
        "want_csv": csv_path is not None,
    }
    with _client(server) as client:
        data = _post(client, "/analyze", payload)
    _write_report(data["report"], out_path, data.get("csv"), csv_path)
    util = data["report"]["totals"]["overall_utilization"]
    click.echo(f"overall utilization: {util:.4f}", err=True)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("model_path")
@click.option("--seed", default=42, show_default=True)
@click.option("--max-dims", default=16, show_default=True,
              help="Clip layer H/W to this for desk-scale verification.")
@click.option("--policy", type=click.Choice(["fixed8", "fixed4", "adaptive"]),
              default="adaptive", show_default=True)
@click.option("--out", "out_path", default=None)
@click.option("--server", default=None)
def verify(model_path, seed, max_dims, policy, out_path, server):
    """Run every layer through the dataflow against the oracle."""
    payload = {"model_text": _read_file(model_path), "seed": seed,
               "max_dims": max_dims, "policy": policy}
    with _client(server) as client:
        data = _post(client, "/verify", payload)
    _write_report(data["report"], out_path, None, None)
    for r in data["report"]["verification"]:
        line = f"{r['layer']}: {r['status']}"
        if r["status"] != "pass":
            m = r["first_mismatch"]
            line += f" at {m['coord']} got={m['got']} expected={m['expected']}"
        click.echo(line, err=True)
    sys.exit(EXIT_OK if data["all_passed"] else EXIT_MISMATCH)


@main.command()
@click.argument("model_path")
@click.option("--input", "input_path", required=True, help="Input tensor file.")
@click.option("--weights-dir", default=None,
              help="Directory with <layer>.w.txt / <layer>.b.txt tensors.")
@click.option("--seed", type=int, default=None,
              help="Generate missing weights from this seed.")
@click.option("--policy", type=click.Choice(["fixed8", "fixed4", "adaptive"]),
              default="adaptive", show_default=True)
@click.option("--clock-mhz", default=500, show_default=True)
@click.option("--out-tensor", default=None, help="Output tensor file (default stdout).")
@click.option("--out", "out_path", default=None, help="Report file.")
@click.option("--server", default=None)
def run(model_path, input_path, weights_dir, seed, policy, clock_mhz,
        out_tensor, out_path, server):
    """End-to-end functional inference through the simulated dataflow."""
    if weights_dir is None and seed is None:
        click.echo("error: provide --weights-dir or --seed", err=True)
        sys.exit(EXIT_INPUT)
    weights, biases = {}, {}
    if weights_dir:
        wd = Path(weights_dir)
        if not wd.is_dir():
            click.echo(f"error: no such directory: {weights_dir}", err=True)
            sys.exit(EXIT_INPUT)
        for f in sorted(wd.glob("*.w.txt")):
            weights[f.name[: -len(".w.txt")]] = f.read_text()
        for f in sorted(wd.glob("*.b.txt")):
            biases[f.name[: -len(".b.txt")]] = f.read_text()
    payload = {
        "model_text": _read_file(model_path),
        "input_tensor": _read_file(input_path),
        "weights": weights,
        "biases": biases,
        "seed": seed,
        "policy": policy,
        "clock_mhz": clock_mhz,
    }
    with _client(server) as client:
        data = _post(client, "/run", payload)
    if out_tensor:
        Path(out_tensor).write_text(data["output_tensor"])
    else:
        click.echo(data["output_tensor"], nl=False)
    if out_path:
        _write_report(data["report"], out_path, None, None)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Start the evaluation service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
