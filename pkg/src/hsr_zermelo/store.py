"""Run-directory layout and pipeline snapshots.

    <run>/config.txt                   flat key = value snapshot
    <run>/metrics.jsonl                one IterationReport per line
    <run>/summary.json                 written when the run finishes
    <run>/checkpoints/iter_NNNN/       refutation.ckpt [+ proposal.ckpt] after iteration NNNN
    <run>/checkpoints/iter_NNNN/state.json, buffers.npz
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

import numpy as np

from .game import Player, Role
from .network import PolicyValueNet
from .pipeline import PROPOSAL, REFUTATION, Pipeline, TrainingExample

EXPORT_COLUMNS = ["iteration", "new_P_correct", "new_OP_correct", "old_P_correct",
                  "old_OP_correct", "mean_states", "coverage_ratio"]


def checkpoint_dirs(run_dir) -> List[Path]:
    root = Path(run_dir) / "checkpoints"
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("iter_"))


def save_agent(directory, refutation_net: PolicyValueNet,
               proposal_net: Optional[PolicyValueNet]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    refutation_net.save(directory / "refutation.ckpt")
    if proposal_net is not None:
        proposal_net.save(directory / "proposal.ckpt")


def load_agent(directory):
    directory = Path(directory)
    ref_path = directory / "refutation.ckpt"
    if not ref_path.is_file():
        raise FileNotFoundError(f"no refutation.ckpt in {directory}")
    ref = PolicyValueNet.load(ref_path)
    prop_path = directory / "proposal.ckpt"
    prop = PolicyValueNet.load(prop_path) if prop_path.is_file() else None
    return ref, prop


def _buffer_arrays(pipe: Pipeline, phase: str) -> dict:
    out = {}
    for i, chunk in enumerate(pipe.buffers[phase].chunks()):
        size = len(chunk)
        pi = np.zeros((size, pipe.gcfg.p_size))
        for j, ex in enumerate(chunk):
            pi[j, :len(ex.pi)] = ex.pi
        out[f"{phase}.{i}.features"] = np.array([ex.features for ex in chunk]).reshape(size, 5)
        out[f"{phase}.{i}.role"] = np.array([ex.role is Role.OP for ex in chunk], dtype=np.int8)
        out[f"{phase}.{i}.mover"] = np.array([int(ex.mover) for ex in chunk], dtype=np.int8)
        out[f"{phase}.{i}.pi"] = pi
        out[f"{phase}.{i}.z"] = np.array([ex.z for ex in chunk])
    return out


def save_pipeline(pipe: Pipeline, run_dir) -> Path:
    """Snapshot after ``pipe.iteration - 1`` completed."""
    d = Path(run_dir) / "checkpoints" / f"iter_{pipe.iteration - 1:04d}"
    save_agent(d, pipe.refutation_net, pipe.proposal_net)
    arrays = {}
    chunk_counts = {}
    for phase in (REFUTATION, PROPOSAL):
        arrays.update(_buffer_arrays(pipe, phase))
        chunk_counts[phase] = len(pipe.buffers[phase].chunks())
    np.savez(d / "buffers.npz", **arrays)
    state = {"iteration": pipe.iteration, "rng": pipe.rng.bit_generator.state,
             "chunks": chunk_counts}
    (d / "state.json").write_text(json.dumps(state))
    return d


def restore_pipeline(pipe: Pipeline, directory) -> None:
    directory = Path(directory)
    state = json.loads((directory / "state.json").read_text())
    pipe.refutation_net, pipe.proposal_net = load_agent(directory)
    pipe.iteration = state["iteration"]
    pipe.rng.bit_generator.state = state["rng"]
    with np.load(directory / "buffers.npz") as data:
        for phase in (REFUTATION, PROPOSAL):
            buf = pipe.buffers[phase]
            buf._chunks.clear()
            for i in range(state["chunks"][phase]):
                feats = data[f"{phase}.{i}.features"]
                roles = data[f"{phase}.{i}.role"]
                movers = data[f"{phase}.{i}.mover"]
                pis = data[f"{phase}.{i}.pi"]
                zs = data[f"{phase}.{i}.z"]
                chunk = []
                for j in range(len(zs)):
                    role = Role.OP if roles[j] else Role.P
                    pi = pis[j, :2] if role is Role.OP else pis[j]
                    chunk.append(TrainingExample(feats[j], phase, role, pi.copy(),
                                                 Player(int(movers[j])), float(zs[j])))
                buf.add_iteration(chunk)


def read_metrics(run_dir) -> List[dict]:
    path = Path(run_dir) / "metrics.jsonl"
    if not path.is_file():
        raise FileNotFoundError(f"no metrics.jsonl in {run_dir}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: corrupt metrics line") from exc
    return rows


def export_csv(rows: List[dict]) -> str:
    def fmt(v):
        return "" if v is None else str(v)

    lines = [",".join(EXPORT_COLUMNS)]
    for row in rows:
        missing = [c for c in EXPORT_COLUMNS if c not in row]
        if missing:
            raise ValueError(f"metrics row lacks fields {missing}")
        lines.append(",".join(fmt(row[c]) for c in EXPORT_COLUMNS))
    return "\n".join(lines) + "\n"
