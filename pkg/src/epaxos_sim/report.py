"""Message-timeline figure for a trace.

One horizontal lane per replica, one column per schedule step. A dot marks the
replica acting at each step; every message becomes an arrow from the step that
sent it to the step that delivered or consumed it, colored by message type.
Messages still in flight when the trace ends trail off as dashed stubs, and a
delivery the receiver dropped as stale is crossed out at its endpoint.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.lines import Line2D

from .protocol import Message
from .simulator import Trace

_MESSAGE_COLORS = {
    "PreAccept": "tab:blue",
    "PreAcceptReply": "tab:cyan",
    "Prepare": "tab:red",
    "PrepareReply": "tab:orange",
    "Accept": "tab:green",
    "AcceptReply": "tab:olive",
    "Commit": "tab:purple",
}

_ACTOR_STYLE = dict(marker="o", color="black", markersize=5, zorder=5, linestyle="none")


@dataclass(frozen=True, slots=True)
class _Arrow:
    send_step: int | None  # None when the message predates the trace
    end_step: int | None  # None when the message is still in flight at the end
    message: Message
    dropped: bool


def _collect_arrows(trace: Trace) -> list[_Arrow]:
    """Pair each sent message with the step that took it off the wire.

    Identical messages are matched first-sent-first-consumed; the pairing only
    feeds the drawing, so that choice is cosmetic.
    """
    pending: dict[Message, deque[int]] = {}
    arrows: list[_Arrow] = []

    def close(msg: Message, step_index: int, dropped: bool) -> None:
        sends = pending.get(msg)
        start = sends.popleft() if sends else None
        arrows.append(_Arrow(start, step_index, msg, dropped))

    for step in trace.steps:
        if step.delivered is not None:
            dropped = any(ev.endswith("dropped") for ev in step.events)
            close(step.delivered, step.index, dropped)
        for msg in step.consumed:
            close(msg, step.index, dropped=False)
        for msg in step.sent:
            pending.setdefault(msg, deque()).append(step.index)
    for msg, sends in pending.items():
        for start in sends:
            arrows.append(_Arrow(start, None, msg, dropped=False))
    return arrows


def render_timeline(trace: Trace, path: str | Path, title: str | None = None) -> Path:
    """Draw the trace as a replica-lane timeline and save it to `path`.

    The format follows the file extension (png, pdf, svg, ...). Returns the
    path actually written. Safe without a display; nothing touches pyplot.
    """
    path = Path(path)
    replicas = sorted(trace.final_world.replicas)
    lane = {rid: len(replicas) - 1 - i for i, rid in enumerate(replicas)}
    steps = trace.steps
    first = steps[0].index if steps else 1
    last = steps[-1].index if steps else 1
    margin = 0.8

    fig = Figure(figsize=(max(7.0, 0.5 * (last - first + 1) + 2.5),
                          1.1 * len(replicas) + 1.8))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()

    for rid, y in lane.items():
        ax.axhline(y, color="0.85", linewidth=1, zorder=1)
    for step in steps:
        ax.axvline(step.index, color="0.93", linewidth=0.8, zorder=0)
        ax.plot([step.index], [lane[step.entry.actor]], **_ACTOR_STYLE)

    seen_types: set[str] = set()
    any_dropped = False
    any_unfinished = False
    for arrow in _collect_arrows(trace):
        msg = arrow.message
        color = _MESSAGE_COLORS.get(type(msg).__name__, "tab:gray")
        seen_types.add(type(msg).__name__)
        x0 = arrow.send_step if arrow.send_step is not None else first - margin
        x1 = arrow.end_step if arrow.end_step is not None else last + margin
        y0, y1 = lane[msg.src], lane[msg.dst]
        unfinished = arrow.end_step is None
        any_unfinished |= unfinished
        rad = -0.45 if y0 == y1 else 0.15
        ax.annotate(
            "", xy=(x1, y1), xytext=(x0, y0), zorder=3,
            arrowprops=dict(
                arrowstyle="-|>" if not unfinished else "-",
                color=color,
                alpha=0.45 if unfinished else 0.9,
                linestyle="--" if unfinished else "-",
                linewidth=1.3,
                shrinkA=4, shrinkB=4,
                connectionstyle=f"arc3,rad={rad}",
            ))
        if arrow.dropped:
            any_dropped = True
            ax.plot([x1], [y1], marker="x", color="crimson", markersize=9,
                    markeredgewidth=2, zorder=6, linestyle="none")

    ax.set_yticks([lane[rid] for rid in replicas])
    ax.set_yticklabels(replicas)
    ax.set_xticks([s.index for s in steps])
    ax.set_xticklabels([f"{s.index} {s.entry.action}" for s in steps],
                       rotation=90, fontsize=7)
    ax.set_xlim(first - margin - 0.2, last + margin + 0.2)
    ax.set_ylim(-0.6, len(replicas) - 0.4)
    ax.set_xlabel("schedule step")
    ax.set_title(title or f"{trace.mode.value} mode, {len(steps)} steps")

    handles = [Line2D([], [], color=_MESSAGE_COLORS[name], linewidth=2, label=name)
               for name in _MESSAGE_COLORS if name in seen_types]
    if any_unfinished:
        handles.append(Line2D([], [], color="gray", linewidth=1.3, linestyle="--",
                              label="in flight at end"))
    if any_dropped:
        handles.append(Line2D([], [], marker="x", color="crimson", markersize=8,
                              markeredgewidth=2, linestyle="none",
                              label="dropped as stale"))
    handles.append(Line2D([], [], label="acting replica", **_ACTOR_STYLE))
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.02),
              fontsize=8, frameon=False)

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    return path
