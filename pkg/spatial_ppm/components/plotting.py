"""
Static and interactive heatmaps of pixel images
"""
import logging

import matplotlib
matplotlib.use('Agg')  # Use Agg backend to prevent GUI issues
import matplotlib.pyplot as plt
import numpy as np
import plotly.graph_objects as go
from matplotlib import colors

from spatial_ppm.exceptions import InputError
from spatial_ppm.models.raster import quantile_threshold

_logger = logging.getLogger(__name__)

SCALES = ('linear', 'quantile')


def color_breaks(img, scale='linear', classes=8):
    """
    Breakpoints of the color scale

    Parameters
    ----------
    img : PixelImage
    scale : str, optional
        'linear' for equal steps between the extremes, 'quantile' for empirical quantiles
    classes : int, optional
        Number of color classes, by default 8

    Returns
    -------
    list of float
        classes + 1 breakpoints; empty when the image has no defined cell
    """
    if scale not in SCALES:
        raise InputError(f"Color scale must be one of {SCALES}, got {scale!r}")
    if classes < 1:
        raise InputError(f"Need at least one color class, got {classes}")
    if img.defined_count == 0:
        return []
    if scale == 'quantile':
        return [quantile_threshold(img, k / classes) for k in range(classes + 1)]
    values = img.values[img.defined]
    return np.linspace(values.min(), values.max(), classes + 1).tolist()


def to_rgba(img, palette='viridis', scale='linear', classes=8):
    """
    RGBA array of an image, north row first, transparent where no value is defined

    Returns
    -------
    tuple
        Array of shape (ny, nx, 4) and the breakpoints of the color scale
    """
    try:
        cmap = plt.get_cmap(palette)
    except ValueError as exc:
        raise InputError(f"Unknown palette {palette!r}") from exc
    breaks = color_breaks(img, scale, classes)
    rgba = np.zeros(img.mask.shape + (4,))
    defined = img.defined
    if breaks:
        values = img.values[defined]
        edges = np.unique(breaks)
        if len(edges) < 2:
            rgba[defined] = cmap(0.0)
        elif scale == 'quantile':
            norm = colors.BoundaryNorm(edges, cmap.N, clip=True)
            rgba[defined] = cmap(norm(values))
        else:
            norm = colors.Normalize(vmin=edges[0], vmax=edges[-1], clip=True)
            rgba[defined] = cmap(norm(values))
    rgba[~defined, 3] = 0.0
    return rgba[::-1], breaks


def render_png(img, path, palette='viridis', scale='linear', classes=8):
    """
    Write a heatmap with one pixel per cell

    Returns
    -------
    dict
        Legend: palette, scale and breakpoints
    """
    rgba, breaks = to_rgba(img, palette, scale, classes)
    plt.imsave(path, rgba)
    _logger.debug("Rendered %dx%d heatmap to %s", img.nx, img.ny, path)
    return {'palette': palette, 'scale': scale, 'breaks': breaks, 'nx': img.nx, 'ny': img.ny}


def render_html(img, path, title='', palette='Viridis'):
    """
    Write an interactive plotly heatmap of an image

    Parameters
    ----------
    img : PixelImage
    path : str
        HTML output file
    title : str, optional
    palette : str, optional
        Plotly color scale name
    """
    xs, ys = img.cell_centers()
    z = np.where(img.defined, img.values, np.nan)
    fig = go.Figure(data=go.Heatmap(
        x=xs,
        y=ys,
        z=z,
        colorscale=palette,
        hoverongaps=False,
    ))
    fig.update_layout(
        title=title,
        xaxis_title="x (km)",
        yaxis_title="y (km)",
        yaxis=dict(scaleanchor='x', scaleratio=1),
        template='plotly_white',
    )
    fig.write_html(path, include_plotlyjs='cdn')
    return path
