"""
Scaling charts for `bench`: per-node EXP and broadcast bytes against n,
good case next to bad case.
"""
import logging
import os

import plotly.graph_objects as go
from plotly.subplots import make_subplots

logger = logging.getLogger(__name__)


def scaling_figure(rows):
    """rows: dicts with case, n, exp_per_node, broadcast_bytes"""
    fig = make_subplots(rows=1, cols=2, subplot_titles=('Per-node EXP', 'Broadcast payload (KB)'))
    for case in sorted({row['case'] for row in rows}):
        points = sorted((row for row in rows if row['case'] == case), key=lambda row: row['n'])
        ns = [row['n'] for row in points]
        fig.add_trace(go.Scatter(x=ns, y=[row['exp_per_node'] for row in points],
                                 mode='lines+markers', name=f'{case} EXP'), row=1, col=1)
        fig.add_trace(go.Scatter(x=ns, y=[row['broadcast_bytes'] / 1024 for row in points],
                                 mode='lines+markers', name=f'{case} bytes'), row=1, col=2)
    fig.update_xaxes(title_text='n')
    fig.update_layout(title='Any-Trust DKG cost', template='plotly_white')
    return fig


def write_chart(rows, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    scaling_figure(rows).write_html(path, include_plotlyjs='cdn')
    logger.info(f'chart written to {path}')
    return path
