"""Round-trip timing of the upload/download scenario.

Shape: one user uploads a batch of items and downloads what friends share
with them, repeated N times; mean and standard deviation per operation.
Absolute numbers are entirely network-dependent and are not acceptance
targets.
"""

from __future__ import annotations

import secrets
import statistics
import time
from dataclasses import dataclass
from typing import Callable

from .datatypes import make_bdaddr_binding
from .model import AppIdentity, SocialIdentity
from .protocol import OK, Envelope, Method, appdata_to_wire


@dataclass
class BenchRow:
    operation: str
    runs: int
    mean: float
    stddev: float


class BenchError(RuntimeError):
    pass


def summarize(operation: str, samples: list[float]) -> BenchRow:
    mean = statistics.fmean(samples)
    stddev = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return BenchRow(operation=operation, runs=len(samples), mean=mean, stddev=stddev)


def run_scenario(
    transport,
    token: str,
    peershare_id: str,
    owner: SocialIdentity,
    runs: int = 30,
    items_up: int = 1,
    timer: Callable[[], float] = time.perf_counter,
) -> list[BenchRow]:
    """Time `runs` iterations of upload-then-download against a live server.

    Each run uploads fresh device-specific items (removed again afterwards,
    untimed, so the download size stays constant across runs).
    """
    creator = AppIdentity("bench", "peershare-bench:0")
    upload_times: list[float] = []
    download_times: list[float] = []
    for run in range(runs):
        items = [
            make_bdaddr_binding(
                value=secrets.token_bytes(16),
                device_id=f"bench-{run}-{i}",
                owner=owner,
                creator=creator,
            )
            for i in range(items_up)
        ]
        body = {"items": [appdata_to_wire(item) for item in items]}
        start = timer()
        response = transport.send(
            Envelope(method=Method.UPLOAD, token=token, peershare_id=peershare_id, body=body)
        )
        upload_times.append(timer() - start)
        if response.get("status") != OK:
            raise BenchError(f"upload failed: {response}")
        object_ids = response["object_ids"]

        start = timer()
        response = transport.send(
            Envelope(method=Method.DOWNLOAD, token=token, peershare_id=peershare_id, body={})
        )
        download_times.append(timer() - start)
        if response.get("status") != OK:
            raise BenchError(f"download failed: {response}")

        response = transport.send(
            Envelope(
                method=Method.DELETE,
                token=token,
                peershare_id=peershare_id,
                body={"object_ids": object_ids},
            )
        )
        if response.get("status") != OK:
            raise BenchError(f"cleanup delete failed: {response}")
    return [summarize("upload", upload_times), summarize("download", download_times)]


def format_table(rows: list[BenchRow]) -> str:
    lines = [f"{'operation':<12}{'runs':>6}{'mean (s)':>12}{'stddev (s)':>12}"]
    for row in rows:
        lines.append(f"{row.operation:<12}{row.runs:>6}{row.mean:>12.4f}{row.stddev:>12.4f}")
    return "\n".join(lines)
