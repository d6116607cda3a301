"""Pose metrics: MPJPE, Procrustes-aligned MPJPE, PCK and AUC."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

PCK_RADIUS_MM = 150.0
AUC_THRESHOLDS_MM = np.arange(5.0, 150.0 + 1e-9, 5.0)  # 30 thresholds

# Human3.6M actions in the usual table order, with their column abbreviations.
H36M_ACTIONS = [
    ("Directions", "Dir."), ("Discussion", "Disc."), ("Eating", "Eat."), ("Greeting", "Greet."),
    ("Phoning", "Phone."), ("Photo", "Photo."), ("Posing", "Pose."), ("Purchases", "Purch."),
    ("Sitting", "Sit."), ("SittingDown", "SitD."), ("Smoking", "Smoke."), ("Waiting", "Wait."),
    ("WalkDog", "WalkD."), ("Walking", "Walk."), ("WalkTogether", "WalkT."),
]


class DegenerateReferenceError(ValueError):
    pass


def svd3(m, tol: float = 1e-15, max_sweeps: int = 60):
    """SVD of a 3x3 matrix by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, vt)`` with ``s`` non-negative and descending and
    ``u @ diag(s) @ vt == m``. Rank-deficient inputs get ``u`` completed to an
    orthonormal basis.
    """
    a = np.array(m, dtype=np.float64).reshape(3, 3)
    v = np.eye(3)
    for _ in range(max_sweeps):
        rotated = False
        for i, j in ((0, 1), (0, 2), (1, 2)):
            alpha = a[:, i] @ a[:, i]
            beta = a[:, j] @ a[:, j]
            gamma = a[:, i] @ a[:, j]
            if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                continue
            rotated = True
            zeta = (beta - alpha) / (2.0 * gamma)
            t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ai, aj = a[:, i].copy(), a[:, j].copy()
            a[:, i], a[:, j] = c * ai - s * aj, s * ai + c * aj
            vi, vj = v[:, i].copy(), v[:, j].copy()
            v[:, i], v[:, j] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    sv = np.linalg.norm(a, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, a, v = sv[order], a[:, order], v[:, order]
    u = np.zeros((3, 3))
    cutoff = max(sv[0], 1e-300) * 1e-13
    rank = int(np.sum(sv > cutoff))
    for k in range(rank):
        u[:, k] = a[:, k] / sv[k]
    if rank < 3:
        _complete_basis(u, rank)
    return u, sv, v.T


def _complete_basis(u: np.ndarray, rank: int) -> None:
    if rank == 0:
        u[:] = np.eye(3)
        return
    if rank == 1:
        e = np.eye(3)[np.argmin(np.abs(u[:, 0]))]
        w = e - (e @ u[:, 0]) * u[:, 0]
        u[:, 1] = w / np.linalg.norm(w)
    u[:, 2] = np.cross(u[:, 0], u[:, 1])


def procrustes_align(pred, gt) -> np.ndarray:
    """Best similarity transform (rotation, scale, translation) of ``pred`` onto ``gt``.

    Reflections are excluded.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    x, y = pred - mu_p, gt - mu_g
    if np.sum(y * y) == 0.0:
        raise DegenerateReferenceError("degenerate reference: all ground-truth points coincide")
    nx = np.sum(x * x)
    if nx == 0.0:
        return np.broadcast_to(mu_g, gt.shape).copy()
    u, s, vt = svd3(x.T @ y)
    d = np.ones(3)
    if np.linalg.det(vt.T @ u.T) < 0:
        d[2] = -1.0
    r = vt.T @ np.diag(d) @ u.T
    scale = float(np.sum(s * d)) / nx
    return scale * x @ r.T + mu_g


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    return pred, gt


def joint_errors(pred, gt) -> np.ndarray:
    pred, gt = _check(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe_metric(pred, gt) -> float:
    return float(joint_errors(pred, gt).mean())


def p_mpjpe_metric(pred, gt) -> float:
    pred, gt = _check(pred, gt)
    aligned = np.stack([procrustes_align(p, g) for p, g in zip(pred, gt)])
    return mpjpe_metric(aligned, gt)


def pck_metric(pred, gt, radius: float = PCK_RADIUS_MM) -> float:
    return float(np.mean(joint_errors(pred, gt) <= radius) * 100.0)


def auc_metric(pred, gt, thresholds=AUC_THRESHOLDS_MM) -> float:
    err = joint_errors(pred, gt)
    return float(np.mean([np.mean(err <= t) * 100.0 for t in thresholds]))


@dataclass
class MetricReport:
    mpjpe_mm: float
    p_mpjpe_mm: float
    pck_percent: float
    auc_percent: float
    count: int = 0
    per_action: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self) -> str:
        """Plain-text table: one row per metric, one column per action plus Avg."""
        cols = []
        known = dict(H36M_ACTIONS)
        for name, abbr in H36M_ACTIONS:
            if name in self.per_action:
                cols.append((abbr, self.per_action[name]))
        for name in sorted(self.per_action):
            if name not in known:
                cols.append((name, self.per_action[name]))
        cols.append(("Avg.", self.to_dict()))
        width = max(7, *(len(c) + 1 for c, _ in cols))
        lines = ["Metric".ljust(14) + "".join(c.rjust(width) for c, _ in cols)]
        for label, key in (("MPJPE(mm)", "mpjpe_mm"), ("P-MPJPE(mm)", "p_mpjpe_mm"),
                           ("PCK(%)", "pck_percent"), ("AUC(%)", "auc_percent")):
            lines.append(label.ljust(14) + "".join(f"{r[key]:.1f}".rjust(width) for _, r in cols))
        return "\n".join(lines)


def evaluate(pred, gt, actions=None) -> MetricReport:
    pred, gt = _check(pred, gt)

    def four(p, g):
        return dict(mpjpe_mm=mpjpe_metric(p, g), p_mpjpe_mm=p_mpjpe_metric(p, g),
                    pck_percent=pck_metric(p, g), auc_percent=auc_metric(p, g))

    report = MetricReport(**four(pred, gt), count=len(pred))
    if actions is not None and any(a is not None for a in actions):
        labels = np.array([a if a is not None else "" for a in actions])
        for name in sorted(set(labels) - {""}):
            sel = labels == name
            report.per_action[name] = four(pred[sel], gt[sel])
    return report
