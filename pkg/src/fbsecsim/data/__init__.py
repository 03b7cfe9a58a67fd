"""Shipped scenario and ruleset files."""

import os

_HERE = os.path.dirname(os.path.abspath(__file__))


def scenario_path(name: str) -> str:
    if not name.endswith(".scenario"):
        name += ".scenario"
    return os.path.join(_HERE, "scenarios", name)


def rules_path(name: str) -> str:
    if not name.endswith(".rules"):
        name += ".rules"
    return os.path.join(_HERE, "rules", name)


def list_scenarios() -> list[str]:
    d = os.path.join(_HERE, "scenarios")
    return sorted(f[:-len(".scenario")] for f in os.listdir(d) if f.endswith(".scenario"))
