"""Machine-readable reports: inequality rows, certificates, run manifests.

The report format is one record per verified inequality:

    name <TAB> lhs <TAB> rhs <TAB> margin <TAB> PASS|FAIL <TAB> note

Rows are exact statements about computed quantities; a failing certificate
is returned as a value with its failing rows listed, never as an exception.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class Row:
    """One verified inequality lhs <= rhs (or a margin > 0 statement)."""

    name: str
    lhs: float
    rhs: float
    passed: bool
    note: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def render(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return (f"{self.name}\t{self.lhs:.12g}\t{self.rhs:.12g}\t"
                f"{self.margin:.12g}\t{state}\t{self.note}")


def leq_row(name: str, lhs: float, rhs: float, note: str = "",
            strict: bool = False) -> Row:
    ok = lhs < rhs if strict else lhs <= rhs
    return Row(name, float(lhs), float(rhs), bool(ok), note)


def info_row(name: str, lhs: float, rhs: float, note: str) -> Row:
    """A recorded, never-enforced quantity (always passes)."""
    return Row(name, float(lhs), float(rhs), True, note or "recorded only")


def render_rows(rows, header: str = "") -> str:
    lines = []
    if header:
        lines.append(f"# {header}")
    lines.append("name\tlhs\trhs\tmargin\tstatus\tnote")
    lines.extend(r.render() for r in rows)
    return "\n".join(lines) + "\n"


def render_params(params: dict) -> str:
    return "\n".join(f"{k} = {v}" for k, v in params.items()) + "\n"


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs.

    Reports themselves carry no timestamps, so replaying a manifest with
    the same inputs reproduces them byte for byte; the wall-clock lives
    only here.
    """

    command: str
    parameters: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    settings_digest: str = ""
    tool_version: str = "0.1.0"
    wall_clock: str = field(
        default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S"))

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def render(self) -> str:
        lines = [f"command = {self.command}",
                 f"tool_version = {self.tool_version}",
                 f"wall_clock = {self.wall_clock}",
                 f"settings = {self.settings_digest}"]
        for k, v in sorted(self.parameters.items()):
            lines.append(f"param.{k} = {v}")
        for out in self.outputs:
            lines.append(f"output = {out}")
        return "\n".join(lines) + "\n"

    def write(self, directory) -> Path:
        path = Path(directory) / "run.manifest"
        path.write_text(self.render())
        return path
