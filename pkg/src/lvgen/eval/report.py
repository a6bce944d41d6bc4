"""Evaluation report: one value object, serializations, rendered figures."""

from dataclasses import asdict, dataclass, field
import json
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .clinical import CLINICAL_METRICS


@dataclass
class MetricReport:
    """Everything one evaluation run produced, ready to serialize."""

    cov: float
    mmd_strict: float
    mmd_mm: float
    one_nna_pct: float
    clinical: dict
    counts: dict
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.cov <= 1.0:
            raise ValidationError(f"cov must lie in [0, 1], got {self.cov}")
        if not 0.0 <= self.one_nna_pct <= 100.0:
            raise ValidationError(f"1-NNA must lie in [0, 100], got {self.one_nna_pct}")
        if self.mmd_strict < 0.0 or self.mmd_mm < 0.0:
            raise ValidationError("mmd must be nonnegative")
        for key in ("n_generated", "n_reference"):
            if key not in self.counts:
                raise ValidationError(f"counts must record {key}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))

    def to_text(self) -> str:
        """Aligned two-block table: clinical scores, then cloud metrics."""
        lines = [
            f"{'clinical score':<22}{'generated':>18}{'reference':>18}{'rel. error':>12}",
        ]
        for name in CLINICAL_METRICS:
            row = self.clinical.get(name)
            if row is None:
                continue
            gen = f"{row['gen_mean']:.2f} ± {row['gen_std']:.2f}"
            ref = f"{row['ref_mean']:.2f} ± {row['ref_std']:.2f}"
            lines.append(f"{name:<22}{gen:>18}{ref:>18}"
                         f"{100.0 * row['relative_error']:>11.2f}%")
        lines.append("")
        lines.append(f"{'cloud metric':<22}{'value':>18}")
        lines.append(f"{'COV':<22}{self.cov:>18.4f}")
        lines.append(f"{'MMD (squared sum)':<22}{self.mmd_strict:>18.4f}")
        lines.append(f"{'MMD (mm)':<22}{self.mmd_mm:>18.4f}")
        lines.append(f"{'1-NNA (%)':<22}{self.one_nna_pct:>18.2f}")
        lines.append("")
        lines.append(f"sets: {self.counts['n_generated']} generated vs "
                     f"{self.counts['n_reference']} reference, "
                     f"{self.counts.get('points_per_cloud', '?')} points per cloud")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Flat delimited form: section,metric,field,value."""
        rows = ["section,metric,field,value"]
        for name in CLINICAL_METRICS:
            row = self.clinical.get(name)
            if row is None:
                continue
            for key, val in row.items():
                rows.append(f"clinical,{name},{key},{val!r}")
        for key in ("cov", "mmd_strict", "mmd_mm", "one_nna_pct"):
            rows.append(f"cloud,{key},value,{getattr(self, key)!r}")
        for key, val in sorted(self.counts.items()):
            rows.append(f"counts,{key},value,{val}")
        for key, val in sorted(self.seeds.items()):
            rows.append(f"seeds,{key},value,{val}")
        return "\n".join(rows) + "\n"


def render_figures(report: MetricReport, gen_values: dict, ref_values: dict,
                   outdir) -> list:
    """Write the evaluation figures and return their paths.

    gen_values and ref_values are per-metric arrays of clinical scores, as
    produced by clinical_values.
    """
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, axes = plt.subplots(1, len(CLINICAL_METRICS), figsize=(10, 4))
    for axis, name in zip(np.atleast_1d(axes), CLINICAL_METRICS):
        gv = np.asarray(gen_values[name], dtype=np.float64)
        rv = np.asarray(ref_values[name], dtype=np.float64)
        bins = np.histogram_bin_edges(np.concatenate([gv, rv]), bins="auto")
        axis.hist(rv, bins=bins, alpha=0.55, label="reference", color="#4878cf")
        axis.hist(gv, bins=bins, alpha=0.55, label="generated", color="#d65f5f")
        axis.axvline(rv.mean(), color="#4878cf", lw=1.2, ls="--")
        axis.axvline(gv.mean(), color="#d65f5f", lw=1.2, ls="--")
        axis.set_xlabel(name)
        axis.set_ylabel("meshes")
        axis.legend(frameon=False)
    fig.tight_layout()
    p = outdir / "clinical_distributions.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, axis = plt.subplots(figsize=(5, 4))
    axis.bar(["COV", "1-NNA"], [100.0 * report.cov, report.one_nna_pct],
             color=["#6acc65", "#956cb4"], width=0.5)
    axis.axhline(50.0, color="0.4", lw=1.0, ls=":")
    axis.set_ylabel("percent")
    axis.set_ylim(0, 105)
    axis.set_title(f"MMD {report.mmd_strict:.1f} (squared sum), "
                   f"{report.mmd_mm:.2f} mm", fontsize=10)
    fig.tight_layout()
    p = outdir / "generative_metrics.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths
