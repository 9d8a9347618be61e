"""Container and on-disk layout for a set of synthetic survey datasets.

A release holds m synthesized (y*, w* raw, w* smoothed) columns over the
original, unsynthesized design (partial synthesis: field/gender/stratum are
shared with the confidential input bit for bit), plus the privacy account.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import SurveyDataset, load_csv
from .riskweights import PrivacyAccount


@dataclass
class SyntheticRelease:
    mechanism: str
    base: SurveyDataset
    y: np.ndarray            # m x n synthesized outcomes
    w: np.ndarray            # m x n synthesized raw weights
    w_smoothed: np.ndarray   # m x n model-smoothed weights
    seed: int
    draw_indices: list
    account: PrivacyAccount | None = None

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def n(self):
        return self.y.shape[1]

    def dataset(self, ell, weights="smoothed"):
        """The ell-th synthetic dataset as a SurveyDataset sharing the base design."""
        w = self.w_smoothed[ell] if weights == "smoothed" else self.w[ell]
        return self.base.replace(y=self.y[ell], w=w, pi=np.minimum(1.0, 1.0 / w))

    def save(self, outdir):
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for ell in range(self.m):
            path = outdir / f"synthetic_{ell + 1}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["y", "field", "gender", "weight", "weight_smoothed"])
                for i in range(self.n):
                    writer.writerow([
                        repr(float(self.y[ell, i])),
                        self.base.field_levels[self.base.field_idx[i]],
                        self.base.gender_levels[self.base.gender_idx[i]],
                        repr(float(self.w[ell, i])),
                        repr(float(self.w_smoothed[ell, i])),
                    ])
            files.append(path.name)
        meta = {
            "mechanism": self.mechanism,
            "m": self.m,
            "n": self.n,
            "seed": self.seed,
            "draw_indices": [int(i) for i in self.draw_indices],
            "files": files,
        }
        if self.account is not None:
            meta["privacy_account"] = {
                "delta_alpha": self.account.delta_alpha,
                "m": self.account.m,
                "epsilon": self.account.epsilon,
            }
            with open(outdir / "privacy_account.json", "w", encoding="utf-8") as fh:
                json.dump(meta["privacy_account"], fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(outdir / "release.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_release(indir):
    with open(indir / "release.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    ys, ws, wss = [], [], []
    base = None
    for name in meta["files"]:
        ds = load_csv(indir / name)
        smoothed = _read_column(indir / name, "weight_smoothed")
        if base is None:
            base = ds
        ys.append(ds.y)
        ws.append(ds.w)
        wss.append(smoothed)
    account = None
    if "privacy_account" in meta:
        acc = meta["privacy_account"]
        account = PrivacyAccount(delta_alpha=acc["delta_alpha"], m=acc["m"],
                                 epsilon=acc["epsilon"])
    return SyntheticRelease(
        mechanism=meta["mechanism"], base=base,
        y=np.vstack(ys), w=np.vstack(ws), w_smoothed=np.vstack(wss),
        seed=meta["seed"], draw_indices=meta["draw_indices"], account=account,
    )


def _read_column(path, column):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return np.array([float(row[column]) for row in reader])
