"""Uniform pass/fail report returned by every check_* operation."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Finding:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


@dataclass
class CheckReport:
    check: str
    passed: bool
    findings: list[Finding] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def add(self, where: str, message: str) -> None:
        self.passed = False
        self.findings.append(Finding(where, message))

    def summary(self) -> str:
        head = f"{self.check}: {'pass' if self.passed else 'FAIL'}"
        lines = [head] + [f"  {f}" for f in self.findings]
        return "\n".join(lines)
