"""Minimal SVG plots: agreement line plots and the 2-D prediction scatter."""

import os

import numpy as np

# ---------------- CONSTANTS ----------------
CANVAS = {
    "WIDTH": 640,
    "HEIGHT": 480,
    "MARGIN": 56,
    "POINT_R": 2.5,
    "MARKER_R": 7,
}

PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
]


def rgb(color):
    return "rgb(%d,%d,%d)" % color


def color_for(j):
    return PALETTE[j % len(PALETTE)]


def _span(lo, hi):
    if hi - lo < 1e-12:
        pad = max(abs(hi), 1.0) * 0.5
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class Canvas:
    """Accumulates SVG elements in data coordinates."""

    def __init__(self, x_range, y_range, title=""):
        self.x_lo, self.x_hi = _span(*x_range)
        self.y_lo, self.y_hi = _span(*y_range)
        self.title = title
        self.elements = []

    # ---------------- PROJECTION ----------------
    def to_px(self, x, y):
        w, h, m = CANVAS["WIDTH"], CANVAS["HEIGHT"], CANVAS["MARGIN"]
        px = m + (x - self.x_lo) / (self.x_hi - self.x_lo) * (w - 2 * m)
        # SVG y grows downwards
        py = h - m - (y - self.y_lo) / (self.y_hi - self.y_lo) * (h - 2 * m)
        return px, py

    # ---------------- PRIMITIVES ----------------
    def polyline(self, xs, ys, color, width=2):
        pts = " ".join("%.2f,%.2f" % self.to_px(x, y) for x, y in zip(xs, ys))
        self.elements.append(
            f'<polyline points="{pts}" fill="none" stroke="{rgb(color)}" stroke-width="{width}"/>')

    def circle(self, x, y, r, color, filled=True):
        px, py = self.to_px(x, y)
        fill = rgb(color) if filled else "none"
        self.elements.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" fill="{fill}" stroke="{rgb(color)}"/>')

    def star(self, x, y, color):
        px, py = self.to_px(x, y)
        r = CANVAS["MARKER_R"]
        pts = []
        for k in range(10):
            rad = r if k % 2 == 0 else r * 0.45
            ang = np.pi / 2 + k * np.pi / 5
            pts.append("%.2f,%.2f" % (px + rad * np.cos(ang), py - rad * np.sin(ang)))
        self.elements.append(
            f'<polygon points="{" ".join(pts)}" fill="{rgb(color)}" stroke="black" stroke-width="0.8"/>')

    def text(self, x_px, y_px, label, size=12, anchor="start"):
        self.elements.append(
            f'<text x="{x_px:.2f}" y="{y_px:.2f}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{label}</text>')

    def axes(self, x_label, y_label):
        w, h, m = CANVAS["WIDTH"], CANVAS["HEIGHT"], CANVAS["MARGIN"]
        self.elements.append(
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
            f'fill="none" stroke="black"/>')
        self.text(w / 2, h - m / 3, x_label, anchor="middle")
        self.text(m / 4, m - 10, y_label)
        self.text(m, h - m + 16, "%.3g" % self.x_lo, size=10, anchor="middle")
        self.text(w - m, h - m + 16, "%.3g" % self.x_hi, size=10, anchor="middle")
        self.text(m - 6, h - m, "%.3g" % self.y_lo, size=10, anchor="end")
        self.text(m - 6, m + 4, "%.3g" % self.y_hi, size=10, anchor="end")

    def legend(self, labels):
        w, m = CANVAS["WIDTH"], CANVAS["MARGIN"]
        for k, (label, color) in enumerate(labels):
            y = m + 14 + 16 * k
            self.elements.append(
                f'<line x1="{w - m - 110}" y1="{y - 4}" x2="{w - m - 90}" y2="{y - 4}" '
                f'stroke="{rgb(color)}" stroke-width="3"/>')
            self.text(w - m - 84, y, label, size=11)

    def render(self):
        w, h = CANVAS["WIDTH"], CANVAS["HEIGHT"]
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
                f'viewBox="0 0 {w} {h}">')
        title = []
        if self.title:
            title = [f'<text x="{w / 2:.2f}" y="24" font-size="15" font-family="sans-serif" '
                     f'text-anchor="middle">{self.title}</text>']
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>']
                         + title + self.elements + ["</svg>"]) + "\n"


# ---------------- PLOTS ----------------
def agreement_plot(series, title="agreement per iteration"):
    """Total agreement on top, one line per capsule below."""
    total = np.asarray(series["total_agreement"])
    per_capsule = np.asarray(series["agreement"])
    iters = np.arange(len(total))
    y_hi = float(max(total.max(initial=0.0), per_capsule.max(initial=0.0)))
    canvas = Canvas((0.0, float(max(len(total) - 1, 1))), (0.0, y_hi), title)
    canvas.axes("iteration r", "agreement")
    canvas.polyline(iters, total, (0, 0, 160), width=3)
    labels = [("total", (0, 0, 160))]
    for j in range(per_capsule.shape[1]):
        canvas.polyline(iters, per_capsule[:, j], color_for(j + 1), width=1.5)
        if j < 8:
            labels.append((f"capsule {j + 1}", color_for(j + 1)))
    canvas.legend(labels)
    return canvas.render()


def distribution_plot(scatter, final_positions, title="predictions and final outputs"):
    """Prediction clouds tagged by capsule, with a star at each final v_j."""
    final_positions = np.asarray(final_positions)
    xs = [p[1] for p in scatter] + list(final_positions[:, 0])
    ys = [p[2] for p in scatter] + list(final_positions[:, 1])
    lim = max(1.0, float(np.max(np.abs(xs))), float(np.max(np.abs(ys))))
    canvas = Canvas((-lim, lim), (-lim, lim), title)
    canvas.axes("x", "y")
    unit = np.linspace(0.0, 2.0 * np.pi, 97)
    canvas.polyline(np.cos(unit), np.sin(unit), (200, 200, 200), width=1)
    for j, x, y in scatter:
        canvas.circle(x, y, CANVAS["POINT_R"], color_for(j), filled=(j == 0))
    for j, (x, y) in enumerate(final_positions):
        canvas.star(x, y, color_for(j))
    canvas.legend([(f"capsule {j + 1}", color_for(j)) for j in range(min(len(final_positions), 8))])
    return canvas.render()


def write_svg(text, path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
