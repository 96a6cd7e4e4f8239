"""Deterministic report files and figures.

CSV cells are written with shortest round-trip float formatting and JSON with
sorted keys, so identical configurations and seeds reproduce byte-identical
delimited output.  Each summary carries a SHA-256 of the canonical config and
a git-style blob hash of every emitted CSV.  Figures are rendered next to the
delimited output; they are a view of the same data, never the contract.
"""

from __future__ import annotations

import hashlib
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "format_cell",
    "write_csv",
    "write_json",
    "config_sha256",
    "git_blob_sha1",
    "contract_figure",
    "sweep_figure",
    "plan_figure",
    "dual_figure",
]


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    payload = ("\n".join(lines) + "\n").encode()
    with open(path, "wb") as fh:
        fh.write(payload)
    return payload


def write_json(path, obj) -> bytes:
    payload = (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()
    with open(path, "wb") as fh:
        fh.write(payload)
    return payload


def config_sha256(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(canonical).hexdigest()


def git_blob_sha1(payload: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def contract_figure(result, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(
        result.times, result.mean_cost, yerr=3.0 * result.stderr,
        marker="o", ms=3, lw=1.2, capsize=2, label="mean coupled cost (3 s.e.)",
    )
    ax.plot(result.times, result.exact_ot, marker="s", ms=3, lw=1.2, label="exact transport cost")
    ax.axhline(result.initial_cost, color="gray", lw=0.8, ls=":", label="initial transport cost")
    ax.set_xlabel("time")
    ax.set_ylabel("cost")
    ax.set_title(f"{result.model_name}: coupled cost vs exact transport")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def sweep_figure(rows, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels = [r.model_name for r in rows]
    worst = [r.worst_margin for r in rows]
    colors = ["tab:blue" if r.passed else "tab:red" for r in rows]
    ax.bar(range(len(rows)), worst, color=colors)
    ax.axhline(-1e-10, color="k", lw=0.8, ls="--")
    ax.set_xticks(range(len(rows)), labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("worst margin")
    ax.set_title("inequality sweeps: worst margin per model")
    _save(fig, path)


def plan_figure(plan, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    src = plan.src_atoms[plan.src_idx][:, 0]
    dst = plan.dst_atoms[plan.dst_idx][:, 0]
    widths = 4.0 * plan.mass / plan.mass.max()
    for x, y, w in zip(src, dst, widths):
        ax.plot([x, y], [0.0, 1.0], color="tab:blue", lw=max(w, 0.2), alpha=0.6)
    ax.plot(plan.src_atoms[:, 0], np.zeros(len(plan.src_atoms)), "k.", ms=4)
    ax.plot(plan.dst_atoms[:, 0], np.ones(len(plan.dst_atoms)), "k.", ms=4)
    ax.set_yticks([0, 1], ["source", "target"])
    ax.set_xlabel("first coordinate")
    ax.set_title(f"optimal plan, cost {plan.cost:.6g}")
    _save(fig, path)


def dual_figure(result, path):
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.6))
    axes[0].plot(result.t_grid, result.psi0, lw=1.2)
    axes[0].set_xlabel("time")
    axes[0].set_ylabel("boundary trace")
    axes[0].set_title("dual boundary trace")
    cc = result.crosscheck
    axes[1].bar([0, 1], [cc.lhs, cc.rhs], color=["tab:blue", "tab:orange"])
    axes[1].errorbar([0], [cc.lhs], yerr=[3.0 * cc.mc_stderr], color="k", capsize=3)
    axes[1].set_xticks([0, 1], ["simulated", "dual solver"])
    axes[1].set_title(f"duality cross-check (|diff| tol {cc.tolerance:.2e})")
    _save(fig, path)
