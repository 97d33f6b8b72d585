"""Figure rendering for scenario reports.

Each scenario CSV has a matching PNG rendered next to it; rows whose
status is not "ok" are skipped.  Rendering is file-only (Agg backend),
so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import Scenario

__all__ = ["render_figures"]

_STYLE = {
    "rzf": dict(color="tab:blue", marker="o"),
    "rka": dict(color="tab:orange", marker="s"),
    "swor_rka": dict(color="tab:green", marker="^"),
    "swor_rka_iid": dict(color="tab:red", marker="v"),
}


def _ok(rows: list[dict]) -> list[dict]:
    return [r for r in rows if r.get("status") == "ok"]


def _series(rows: list[dict], key: str) -> dict:
    grouped: dict = {}
    for row in rows:
        grouped.setdefault(row[key], []).append(row)
    return grouped


def _new_axes(xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.4)
    return fig, ax


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(scenario: Scenario, rows: list[dict], out_dir: str | Path) -> list[Path]:
    """Render the scenario's figure(s); returns the written paths."""
    out_dir = Path(out_dir)
    rows = _ok(rows)
    if not rows:
        return []
    path = out_dir / f"{scenario.value}.png"

    if scenario is Scenario.SE_VS_SNR:
        fig, ax = _new_axes("SNR [dB]", "Average sum SE [bit/s/Hz]")
        for method, pts in _series(rows, "method").items():
            pts = sorted(pts, key=lambda r: r["snr_db"])
            ax.plot([p["snr_db"] for p in pts], [p["se_total"] for p in pts],
                    label=method, **_STYLE.get(method, {}))
        ax.legend()
        return [_save(fig, path)]

    if scenario is Scenario.BER_VS_SNR:
        fig, ax = _new_axes("SNR [dB]", "BER")
        for (method, tau), pts in _series(
                [dict(r, _key=(r["method"], r["tau"])) for r in rows], "_key").items():
            pts = sorted((p for p in pts if p["ber"] and p["ber"] > 0),
                         key=lambda r: r["snr_db"])
            if not pts:
                continue
            style = dict(_STYLE.get(method, {}))
            style["linestyle"] = "-" if tau == 0 else "--"
            ax.semilogy([p["snr_db"] for p in pts], [p["ber"] for p in pts],
                        label=f"{method} (tau={tau})", **style)
        ax.legend()
        return [_save(fig, path)]

    if scenario is Scenario.NMSE_VS_ITER:
        fig, ax = _new_axes("Iterations", "NMSE")
        for method, pts in _series(rows, "method").items():
            pts = sorted((p for p in pts if p["nmse"] > 0), key=lambda r: r["t"])
            style = dict(_STYLE.get(method, {}))
            style.pop("marker", None)
            ax.semilogy([p["t"] for p in pts], [p["nmse"] for p in pts],
                        label=method, **style)
        ax.legend()
        return [_save(fig, path)]

    if scenario in (Scenario.COMPLEXITY_VS_USERS, Scenario.COMPLEXITY_VS_ANTENNAS):
        axis = "K" if scenario is Scenario.COMPLEXITY_VS_USERS else "M"
        label = "Users per subarray" if axis == "K" else "Antennas per subarray"
        fig, ax = _new_axes(label, "Complex operations")
        for scheme, pts in _series(rows, "scheme").items():
            pts = sorted(pts, key=lambda r: r[axis])
            ax.semilogy([p[axis] for p in pts], [p["ops"] for p in pts],
                        label=scheme, **_STYLE.get(scheme, {}))
        ax.legend()
        return [_save(fig, path)]

    # complexity table: grouped bars per scheme
    fig, ax = _new_axes("Scheme", "Complex operations")
    schemes = [r["scheme"] for r in rows]
    ops = [r["ops"] for r in rows]
    colors = [_STYLE.get(s, {}).get("color") for s in schemes]
    ax.bar(schemes, ops, color=colors)
    return [_save(fig, path)]
