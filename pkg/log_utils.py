"""Simple structured logging for LumenDA runs."""
import json
import os
from datetime import datetime, timezone


class RunLogger:
    """Tracks per-stage results and provides structured console output."""

    def __init__(self, name="LumenDA", quiet=False):
        self.name = name
        self.quiet = quiet
        self._ok = 0
        self._fail = 0
        self._frames = 0

    def _emit(self, msg):
        if not self.quiet:
            print(msg, flush=True)

    @staticmethod
    def _ts():
        return datetime.now(timezone.utc).strftime("%H:%M:%S")

    def ok(self, subject, detail=""):
        """Log a successful operation."""
        self._ok += 1
        msg = f"[{self._ts()}] [OK] {subject}"
        if detail:
            msg += f" — {detail}"
        self._emit(msg)

    def fail(self, subject, error=""):
        """Log a failed operation."""
        self._fail += 1
        msg = f"[{self._ts()}] [FAIL] {subject}"
        if error:
            msg += f" — {error}"
        self._emit(msg)

    def warn(self, subject, message):
        """Log a warning."""
        self._emit(f"[{self._ts()}] [WARN] {subject} — {message}")

    def info(self, message):
        """Log an info message."""
        self._emit(f"[{self._ts()}] {message}")

    def add_frames(self, count):
        """Track processed frame count."""
        self._frames += count

    def summary(self):
        """Print final summary line."""
        total = self._ok + self._fail
        self._emit(f"\n=== {self._ok}/{total} stages succeeded, {self._fail} failed, {self._frames} frames ===")
        return self._ok, self._fail, self._frames


class TrainLog:
    """Append-only JSON-lines training log (one object per step or epoch)."""

    def __init__(self, path):
        self.path = path
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    def _append(self, record):
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    def step(self, phase, epoch, step, l_d, l_adv, l_total, gamma, grl_lambda):
        self._append({
            "kind": "step",
            "phase": phase,
            "epoch": epoch,
            "step": step,
            "l_d": l_d,
            "l_adv": l_adv,
            "l_total": l_total,
            "gamma": gamma,
            "grl_lambda": grl_lambda,
        })

    def epoch(self, phase, epoch, **metrics):
        record = {"kind": "epoch", "phase": phase, "epoch": epoch}
        record.update(metrics)
        self._append(record)

    def read(self):
        """Return all records, oldest first."""
        if not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def truncate_after(self, phase, epoch):
        """Drop records of `phase` logged after `epoch` (used when resuming)."""
        kept = [
            r for r in self.read()
            if r.get("phase") != phase or r.get("epoch", 0) <= epoch
        ]
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            for record in kept:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        os.replace(tmp, self.path)
