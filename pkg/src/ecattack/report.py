"""Report persistence and figure data.

Every number written out goes through ``num`` (6 significant digits, '.'
decimal point) so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .campaign import EC_DDOS, F_AP, CampaignReport, PhaseTrace

TRACE_HEADER = ("t", "joules", "received_pps", "associated")
FIGURES = ("fig5", "fig6", "fig7", "fig8", "fig9", "table1", "table2")


class FigureError(RuntimeError):
    pass


def num(x: Any) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".6g")
    return "none" if x is None else str(x)


def _round(obj: Any) -> Any:
    if isinstance(obj, float):
        return float(format(obj, ".6g"))
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def report_json(report: CampaignReport) -> str:
    return json.dumps(_round(report.as_dict()), indent=2, allow_nan=False) + "\n"


def _csv(header: Sequence[str], rows, comment: str = "") -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([num(v) for v in row])
    return buf.getvalue()


def trace_csv(trace: PhaseTrace) -> str:
    rows = [(s.t, s.joules, s.received_pps, s.associated) for s in trace.samples]
    return _csv(TRACE_HEADER, rows)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_report(report: CampaignReport, out_dir, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    out = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(_write(out / "campaign_report.json", report_json(report)))
    if "csv" in formats:
        for tr in report.traces:
            written.append(_write(out / "traces" / f"{tr.name}.csv", trace_csv(tr)))
    return written


# --- figures -----------------------------------------------------------------


@dataclass
class FigureData:
    figure_id: str
    description: str
    columns: tuple[str, ...]
    rows: list[tuple]

    def __post_init__(self) -> None:
        if self.figure_id not in FIGURES:
            raise FigureError(f"unknown figure {self.figure_id!r}")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise FigureError(f"{self.figure_id}: row length {len(row)} != {len(self.columns)} columns")

    def to_csv(self) -> str:
        return _csv(self.columns, self.rows, f"{self.figure_id}: {self.description}; columns: {','.join(self.columns)}")


def _devices_of(report: CampaignReport, device_class: str) -> list[str]:
    return [d for d, info in report.devices.items() if info["profile"] == device_class]


def _ecddos_figure(report: CampaignReport, fig: str, device_class: str) -> FigureData:
    devs = _devices_of(report, device_class)
    rows = []
    for tr in report.traces:
        if tr.phase == "ecddos" and tr.device in devs:
            rows.extend((tr.name, t, j, r) for t, j, r, _ in tr.rows())
    if not rows:
        raise FigureError(f"{fig} needs an ecddos phase for a {device_class} device; none in report")
    return FigureData(fig, f"{device_class} energy under EC-DDoS", ("attack", "t_s", "joules", "received_pps"), rows)


def figure_data(report: CampaignReport, fig: str) -> FigureData:
    if fig == "fig5":
        rows = [(a.device, a.trace.name if a.trace else a.kind, a.e1, a.e2)
                for a in report.attacks if report.baseline.get(a.device)]
        if not rows:
            raise FigureError("fig5 needs baseline and attack phases; attack phase missing")
        return FigureData(fig, "mean energy before (e1) and during (e2) each attack",
                          ("device", "attack", "e1_j_per_s", "e2_j_per_s"), rows)
    if fig == "fig6":
        return _ecddos_figure(report, fig, "raspberry_pi")
    if fig == "fig7":
        return _ecddos_figure(report, fig, "arduino")
    if fig == "fig8":
        rows = []
        for dev, rec in report.fap.items():
            if rec.trace is None or rec.connected_at is None:
                continue
            rows.extend((dev, t, j, a) for t, j, _, a in rec.trace.rows())
        if not rows:
            raise FigureError("fig8 needs a completed fap phase; fap phase missing")
        return FigureData(fig, "energy across the fake-AP takeover", ("device", "t_s", "joules", "associated"), rows)
    if fig == "fig9":
        if not report.attribution:
            raise FigureError("fig9 needs the attribution phase; attribution missing")
        rows = []
        for dev, split in report.attribution.items():
            split = split or {}
            rows.append((dev, split.get(EC_DDOS, 0.0), split.get(F_AP, 0.0)))
        return FigureData(fig, "share of above-baseline energy per attack source",
                          ("device", "ecddos_fraction", "fap_fraction"), rows)
    if fig == "table1":
        ports = report.scan.get("ports") or []
        if not ports:
            raise FigureError("table1 needs the scan phase; scan missing")
        states = ("open", "closed", "filtered", "open_filtered")
        rows = [(p["device"], p["protocol"], *(p["counts"][s] for s in states)) for p in ports]
        return FigureData(fig, "port scan states", ("device", "protocol", *states), rows)
    if fig == "table2":
        if not report.sd_grid:
            raise FigureError("table2 needs the threshold phase; sd grid missing")
        rows = [(dev, proto, per.get("NP"), per.get("HP"))
                for dev, grid in report.sd_grid.items() for proto, per in grid.items()]
        return FigureData(fig, "survival duration in minutes at the threshold rate",
                          ("device", "protocol", "np_minutes", "hp_minutes"), rows)
    raise FigureError(f"unknown figure {fig!r}; choose from {FIGURES}")


def emit_figure_data(report: CampaignReport, fig: str, out_dir) -> Path:
    data = figure_data(report, fig)
    return _write(Path(out_dir) / "figures" / f"{fig}.csv", data.to_csv())


def read_strict_csv(text: str) -> tuple[list[str], list[list[str]]]:
    """Parse our CSV dialect, rejecting anything loose: CR characters, ragged
    rows, or numbers that float() will not take. Leading '#' lines are
    comments."""
    if "\r" in text:
        raise ValueError("CR line endings are not allowed")
    if not text.endswith("\n"):
        raise ValueError("file must end with LF")
    lines = text.split("\n")[:-1]
    while lines and lines[0].startswith("#"):
        lines.pop(0)
    reader = csv.reader(lines, strict=True)
    header = next(reader)
    rows = []
    for row in reader:
        if len(row) != len(header):
            raise ValueError(f"ragged row: {row}")
        rows.append(row)
    return header, rows
