# render.py: PNG snapshots (OpenCV drawing + Pillow saving) and minimal SVG contour output
import logging
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from grid_fields import IndicatorField, ScalarField, contour_extract

log = logging.getLogger(__name__)

MIN_SIDE = 512
CONTOUR_BGR = (255, 255, 255)
ORACLE_BGR = (0, 0, 255)
TEXT_BGR = (255, 255, 0)


# ----------------- Helpers -----------------
def _plane(field):
    """2-D value array of a field (middle slice in 3-D), y pointing up."""
    if isinstance(field, IndicatorField):
        values, dom = field.mask.astype(float), field.domain
    elif isinstance(field, ScalarField):
        values, dom = field.values, field.domain
    else:
        raise TypeError(f"cannot render {type(field).__name__}")
    if values.ndim == 3:
        values = values[:, :, values.shape[2] // 2]
    # axis 0 is x, axis 1 is y: image rows run along -y
    return np.flipud(values.T), dom


def _scale(dom):
    nx, ny = dom.cells[0], dom.cells[1]
    return max(1, int(np.ceil(MIN_SIDE / max(nx, ny))))


def _to_pixels(poly, dom, k):
    """World coordinates -> (col, row) pixel coordinates of the upscaled image."""
    x0, y0 = dom.origin[0], dom.origin[1]
    sx, sy = dom.spacing[0], dom.spacing[1]
    ny = dom.cells[1]
    col = (poly[:, 0] - x0) / sx * k
    row = (ny - (poly[:, 1] - y0) / sy) * k
    return np.round(np.stack([col, row], axis=1)).astype(np.int32)


def field_image(field, colormap=cv2.COLORMAP_VIRIDIS):
    """Colour-mapped BGR image of a scalar or indicator field, upscaled with nearest neighbours."""
    values, dom = _plane(field)
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    gray = np.round(scaled * 255).astype(np.uint8)
    img = cv2.applyColorMap(gray, colormap)
    k = _scale(dom)
    return cv2.resize(img, (img.shape[1] * k, img.shape[0] * k), interpolation=cv2.INTER_NEAREST)


def draw_contours(img, e, colour=CONTOUR_BGR, thickness=2):
    """Draw the member/non-member boundary of a set on top of an image from field_image."""
    e2 = e.mid_slice()
    k = _scale(e2.domain)
    for poly in contour_extract(e2):
        pts = _to_pixels(poly, e2.domain, k)
        cv2.polylines(img, [pts.reshape(-1, 1, 2)], True, colour, thickness)
    return img


def draw_polygon(img, vertices, dom, colour=ORACLE_BGR, thickness=1):
    if len(vertices) >= 2:
        pts = _to_pixels(np.asarray(vertices, dtype=float), dom, _scale(dom))
        cv2.polylines(img, [pts.reshape(-1, 1, 2)], True, colour, thickness)
    return img


def label(img, text):
    cv2.putText(img, text, (10, 24), cv2.FONT_HERSHEY_SIMPLEX, 0.6, TEXT_BGR, 1, cv2.LINE_AA)
    return img


def save_png(img, path):
    """OpenCV images are BGR; Pillow wants RGB."""
    rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    Image.fromarray(rgb).save(path)
    log.info("wrote %s", path)
    return Path(path)


def snapshot(field, path, contour_of=None, oracle_polygon=None, caption=None):
    """Field image with optional set contour, oracle outline and caption, saved as PNG."""
    img = field_image(field)
    dom = field.domain if not isinstance(field, IndicatorField) else field.mid_slice().domain
    if contour_of is not None:
        draw_contours(img, contour_of)
    if oracle_polygon is not None:
        draw_polygon(img, oracle_polygon, dom)
    if caption:
        label(img, caption)
    return save_png(img, path)


# ----------------- SVG -----------------
def _path_d(poly):
    head = f"M {poly[0, 0]:.6g} {poly[0, 1]:.6g}"
    rest = " ".join(f"L {x:.6g} {y:.6g}" for x, y in poly[1:])
    return f"{head} {rest} Z"


def svg_document(polylines, box, title="", stroke="black", extra=()):
    """SVG text with one closed path per polyline; `box` = (xmin, ymin, xmax, ymax) in world units.

    The y axis is flipped with a group transform so world coordinates are written unchanged.
    """
    xmin, ymin, xmax, ymax = box
    w, h = xmax - xmin, ymax - ymin
    width = 1.0e-3 * max(w, h) * 2
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{xmin:.6g} {-ymax:.6g} {w:.6g} {h:.6g}">',
    ]
    if title:
        lines.append(f"  <title>{title}</title>")
    lines.append('  <g transform="scale(1,-1)">')
    for poly in polylines:
        if len(poly) >= 2:
            lines.append(f'    <path d="{_path_d(np.asarray(poly))}" fill="none" stroke="{stroke}" stroke-width="{width:.4g}"/>')
    for poly, colour in extra:
        if len(poly) >= 2:
            lines.append(f'    <path d="{_path_d(np.asarray(poly))}" fill="none" stroke="{colour}" stroke-width="{width:.4g}"/>')
    lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(polylines, path, box, title="", extra=()):
    Path(path).write_text(svg_document(polylines, box, title=title, extra=extra))
    log.info("wrote %s", path)
    return Path(path)


def domain_box(dom):
    return (dom.origin[0], dom.origin[1], dom.origin[0] + dom.extent[0], dom.origin[1] + dom.extent[1])


def write_set_svg(e, path, title="", oracle_polygon=None):
    """Contours of a set (middle slice in 3-D), optionally with an oracle polygon in red."""
    e2 = e.mid_slice()
    extra = [(oracle_polygon, "red")] if oracle_polygon is not None else ()
    return write_svg(contour_extract(e2), path, domain_box(e2.domain), title=title, extra=extra)
