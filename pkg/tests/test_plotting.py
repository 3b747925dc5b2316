import numpy as np
from PIL import Image

from finemanip.models.losses import gaussian_affordance_target
from finemanip.plotting import PANEL, plot_affordance_heatmap, project, render_affordance
from finemanip.sim import load_task, render_point_cloud, reset_task


def scene_cloud():
    pts, _ = render_point_cloud(reset_task(load_task("slide-drawer-open"), 0), 1024)
    return pts


def test_uniform_scores_uniform_color():
    pts = scene_cloud()
    img = render_affordance(pts, np.full(len(pts), 0.3), contact_index=5, mark_contact=False).astype(int)
    flat = img.reshape(-1, 3)
    assert (flat.max(axis=0) - flat.min(axis=0)).max() <= 1


def test_brightest_pixel_at_contact():
    pts = scene_cloud()
    k = int(np.argmax(pts[:, 2]))
    scores = gaussian_affordance_target(pts, pts[k], 0.02)
    img = render_affordance(pts, scores, contact_index=k, mark_contact=False).astype(int)
    for panel, view in ((img[:, :PANEL], "top"), (img[:, PANEL:], "front")):
        bright = panel.sum(axis=-1)
        rows, cols = np.nonzero(bright == bright.max())
        col, row = project(pts[k : k + 1], view)[0]
        assert np.hypot(cols - col, rows - row).max() <= 2.0


def test_png_deterministic(tmp_path):
    pts = scene_cloud()
    scores = np.random.default_rng(0).random(len(pts))
    a = plot_affordance_heatmap(pts, scores, tmp_path / "a.png", contact_index=3)
    b = plot_affordance_heatmap(pts, scores, tmp_path / "b.png", contact_index=3)
    assert a.read_bytes() == b.read_bytes()
    with Image.open(a) as im:
        assert im.size == (2 * PANEL, PANEL)


def test_projection_corners():
    lo, hi = np.array([-0.4, -0.4, 0.0]), np.array([0.4, 0.4, 0.5])
    px = project(np.stack([lo, hi]), "top")
    np.testing.assert_allclose(px, [[0, PANEL - 1], [PANEL - 1, 0]])
    px = project(np.stack([lo, hi]), "front")
    np.testing.assert_allclose(px, [[0, PANEL - 1], [PANEL - 1, 0]])
